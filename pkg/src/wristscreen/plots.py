"""Figure rendering for the study commands: bar charts with SD error bars."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


def save_arm_study_plot(frame: pd.DataFrame, path) -> None:
    """Grouped bars: one cluster per task, one bar per arm setting."""
    tasks = list(dict.fromkeys(frame["task"]))
    settings = list(dict.fromkeys(frame["setting"]))
    width = 0.8 / max(len(settings), 1)
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(tasks), 4.0))
    x = np.arange(len(tasks))
    for k, setting in enumerate(settings):
        sub = frame[frame["setting"] == setting].set_index("task")
        means = [sub.loc[t, "mean"] for t in tasks]
        sds = [sub.loc[t, "sd"] for t in tasks]
        ax.bar(x + (k - (len(settings) - 1) / 2) * width, means, width,
               yerr=sds, capsize=3, label=setting)
    ax.set_xticks(x)
    ax.set_xticklabels(tasks, rotation=15)
    ax.set_ylabel("balanced accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(title="arm", fontsize=8)
    ax.set_title("Recording-arm comparison")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_selection_plot(frame: pd.DataFrame, task: str, path) -> None:
    """Score per greedy step; bars labeled with the group added/removed."""
    fig, ax = plt.subplots(figsize=(1.8 + 0.55 * len(frame), 4.0))
    x = np.arange(len(frame))
    direction = frame["direction"].iloc[0] if len(frame) else ""
    sign = "+" if direction == "forward" else "-"
    labels = [
        "all" if g is None or (isinstance(g, float) and np.isnan(g)) else f"{sign}{int(g)}"
        for g in frame["group"]
    ]
    ax.bar(x, frame["mean"], 0.7, yerr=frame["sd"], capsize=3, color="tab:blue")
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_xlabel("group added/removed per step")
    ax.set_ylabel("balanced accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"{direction} selection, {task}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_report_plot(frame: pd.DataFrame, path) -> None:
    """Summary table as grouped bars: tasks on x, one bar per input setting."""
    tasks = list(frame.index)
    settings = list(frame.columns.get_level_values(0).unique()) if isinstance(
        frame.columns, pd.MultiIndex
    ) else list(frame.columns)
    width = 0.8 / max(len(settings), 1)
    fig, ax = plt.subplots(figsize=(2.4 + 1.8 * len(tasks), 4.0))
    x = np.arange(len(tasks))
    for k, setting in enumerate(settings):
        means = [frame.loc[t, (setting, "mean")] for t in tasks] if isinstance(
            frame.columns, pd.MultiIndex
        ) else [frame.loc[t, setting] for t in tasks]
        sds = [frame.loc[t, (setting, "sd")] for t in tasks] if isinstance(
            frame.columns, pd.MultiIndex
        ) else [0.0] * len(tasks)
        ax.bar(x + (k - (len(settings) - 1) / 2) * width, means, width,
               yerr=sds, capsize=3, label=setting)
    ax.set_xticks(x)
    ax.set_xticklabels(tasks, rotation=15)
    ax.set_ylabel("balanced accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    ax.set_title("Input-reduction summary")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
