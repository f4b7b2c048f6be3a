"""Repeated stratified cross-validation with per-fold grid search.

Every score in the pipeline comes from here: 3x repeated 5-fold stratified
CV, hyperparameters chosen per training fold by an inner 3-fold grid search
(scaler refit inside every split so held-out rows never leak), balanced
accuracy as the metric, and population SD over the 15 fold scores.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .common import derive_seed, ordered_classes
from .features import FeatureMatrix, apply_scaler, fit_scaler
from .svm import SvmConfig, kernel_matrix, resolve_gamma, squared_distances, train_multiclass

INNER_FOLDS = 3

TASK_NAMES = ("pd-vs-hc", "pddd-vs-hc", "pd-vs-dd", "pd-vs-dd-vs-hc")

# The three binary comparisons, as summarized by the report command.
BINARY_TASK_NAMES = ("pd-vs-hc", "pddd-vs-hc", "pd-vs-dd")


def task_rows(labels, task: str) -> tuple[np.ndarray, list]:
    """Row indices and (possibly merged) labels for one classification task."""
    labels = list(labels)
    if task == "pd-vs-hc":
        keep = [i for i, lab in enumerate(labels) if lab in ("PD", "HC")]
        mapped = [labels[i] for i in keep]
    elif task == "pddd-vs-hc":
        keep = list(range(len(labels)))
        mapped = ["PD+DD" if labels[i] in ("PD", "DD") else labels[i] for i in keep]
    elif task == "pd-vs-dd":
        keep = [i for i, lab in enumerate(labels) if lab in ("PD", "DD")]
        mapped = [labels[i] for i in keep]
    elif task == "pd-vs-dd-vs-hc":
        keep = list(range(len(labels)))
        mapped = [labels[i] for i in keep]
    else:
        raise ValueError(f"unknown task {task!r}; expected one of {TASK_NAMES}")
    return np.asarray(keep, dtype=np.intp), mapped


@dataclass(frozen=True)
class CvPlan:
    n_folds: int = 5
    n_repeats: int = 3
    master_seed: int = 0

    def to_dict(self) -> dict:
        return {
            "n_folds": self.n_folds,
            "n_repeats": self.n_repeats,
            "master_seed": self.master_seed,
        }


@dataclass(frozen=True)
class GridSpec:
    """Hyperparameter grid; cell order (C-major, as listed) breaks score ties."""

    c_values: tuple = (0.1, 1.0, 10.0, 100.0, 1000.0)
    gamma_values: tuple = (1e-6, 1e-5, 1e-4, "scale", 1e-3)

    def cells(self) -> list[tuple]:
        return [(c, g) for c in self.c_values for g in self.gamma_values]

    def to_dict(self) -> dict:
        return {"c_values": list(self.c_values), "gamma_values": list(self.gamma_values)}


def stratified_folds(labels, k: int, seed: int) -> list[np.ndarray]:
    """k disjoint index sets; within each class members are shuffled and dealt
    round-robin, so per-class fold counts differ by at most one.

    Classes smaller than k are permitted; they are simply absent from some
    folds.
    """
    labels = np.asarray(list(labels), dtype=object)
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if labels.size < k:
        raise ValueError(f"cannot split {labels.size} rows into {k} folds")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in ordered_classes(labels):
        members = rng.permutation(np.flatnonzero(labels == cls))
        for f in range(k):
            folds[f].extend(members[f::k].tolist())
    return [np.asarray(sorted(f), dtype=np.intp) for f in folds]


def balanced_accuracy(y_true, y_pred) -> float:
    """Unweighted mean of per-class recall over the classes present in y_true."""
    y_true, y_pred = list(y_true), list(y_pred)
    if not y_true:
        raise ValueError("y_true is empty")
    if len(y_true) != len(y_pred):
        raise ValueError(f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted")
    recalls = []
    for cls in ordered_classes(y_true):
        hits = sum(1 for t, p in zip(y_true, y_pred) if t == cls and p == cls)
        total = sum(1 for t in y_true if t == cls)
        recalls.append(hits / total)
    return sum(recalls) / len(recalls)


def _kernel_precursor(A: np.ndarray, B: np.ndarray, kind: str) -> np.ndarray:
    """Gamma-independent part of the kernel: squared distances (rbf) or dot products."""
    return A @ B.T if kind == "linear" else squared_distances(A, B)


def _kernel_from_precursor(D: np.ndarray, kind: str, gamma: float) -> np.ndarray:
    return D if kind == "linear" else np.exp(-gamma * D)


def grid_search(
    X_train: np.ndarray,
    y_train,
    grid: GridSpec,
    seed: int,
    config: SvmConfig = SvmConfig(),
    scaler_scope: str = "fold",
) -> tuple[float, float | str]:
    """Pick (C, gamma) by inner 3-fold stratified CV on mean balanced accuracy.

    With scaler_scope='fold' the z-scaler is refit on every inner training
    split; 'full' assumes X_train is already scaled. Ties go to the earlier
    grid cell.
    """
    y_train = list(y_train)
    folds = stratified_folds(y_train, INNER_FOLDS, seed)
    y_arr = np.asarray(y_train, dtype=object)
    kind = config.kernel.kind

    prepared = []
    for f, val_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(y_train), dtype=np.intp), val_idx)
        if scaler_scope == "fold":
            params = fit_scaler(X_train, train_idx)
            Xt = apply_scaler(params, X_train[train_idx])
            Xv = apply_scaler(params, X_train[val_idx])
        else:
            Xt, Xv = X_train[train_idx], X_train[val_idx]
        gamma_scale = (
            resolve_gamma("scale", Xt)
            if kind == "rbf" and "scale" in grid.gamma_values
            else None
        )
        prepared.append(
            (
                y_arr[train_idx].tolist(),
                y_arr[val_idx].tolist(),
                _kernel_precursor(Xt, Xt, kind),
                _kernel_precursor(Xv, Xt, kind),
                gamma_scale,
            )
        )

    best_cell = None
    best_score = -np.inf
    for c_value, gamma in grid.cells():
        scores = []
        for y_tr, y_val, D_tr, D_val, gamma_scale in prepared:
            g = gamma_scale if gamma == "scale" else gamma
            cell_config = replace(
                config,
                C=c_value,
                kernel=replace(config.kernel, gamma=g if kind == "rbf" else config.kernel.gamma),
            )
            model = train_multiclass(
                None, y_tr, cell_config, gram=_kernel_from_precursor(D_tr, kind, g)
            )
            pred = model.predict(gram=_kernel_from_precursor(D_val, kind, g))
            scores.append(balanced_accuracy(y_val, pred))
        mean_score = sum(scores) / len(scores)
        if mean_score > best_score:
            best_score = mean_score
            best_cell = (c_value, gamma)
    return best_cell


@dataclass
class FoldScore:
    repeat: int
    fold: int
    balanced_accuracy: float
    c_value: float
    gamma: float | str
    resolved_gamma: float
    n_unconverged: int

    def to_dict(self) -> dict:
        return {
            "repeat": self.repeat,
            "fold": self.fold,
            "balanced_accuracy": self.balanced_accuracy,
            "converged": self.n_unconverged == 0,
            "n_unconverged": self.n_unconverged,
        }


@dataclass
class CvReport:
    """All fold scores for one classification task plus their aggregates."""

    task: str
    plan: CvPlan
    scaler_scope: str
    grid_scope: str
    folds: list
    mean: float
    sd: float

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "plan": self.plan.to_dict(),
            "scaler_scope": self.scaler_scope,
            "grid_scope": self.grid_scope,
            "per_fold": [f.to_dict() for f in self.folds],
            "grid_choices": [
                {
                    "repeat": f.repeat,
                    "fold": f.fold,
                    "C": f.c_value,
                    "gamma": f.gamma,
                    "resolved_gamma": f.resolved_gamma,
                }
                for f in self.folds
            ],
            "mean": self.mean,
            "sd": self.sd,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "CvReport":
        folds = []
        for rec, choice in zip(obj["per_fold"], obj["grid_choices"]):
            folds.append(
                FoldScore(
                    repeat=rec["repeat"],
                    fold=rec["fold"],
                    balanced_accuracy=rec["balanced_accuracy"],
                    c_value=choice["C"],
                    gamma=choice["gamma"],
                    resolved_gamma=choice["resolved_gamma"],
                    n_unconverged=rec["n_unconverged"],
                )
            )
        return cls(
            task=obj["task"],
            plan=CvPlan(**obj["plan"]),
            scaler_scope=obj["scaler_scope"],
            grid_scope=obj["grid_scope"],
            folds=folds,
            mean=obj["mean"],
            sd=obj["sd"],
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "repeat": [f.repeat for f in self.folds],
                "fold": [f.fold for f in self.folds],
                "balanced_accuracy": [f.balanced_accuracy for f in self.folds],
                "C": [f.c_value for f in self.folds],
                "gamma": [f.gamma for f in self.folds],
                "resolved_gamma": [f.resolved_gamma for f in self.folds],
                "converged": [f.n_unconverged == 0 for f in self.folds],
            }
        )


def _aggregate(task, plan, scaler_scope, grid_scope, folds) -> CvReport:
    folds = sorted(folds, key=lambda f: (f.repeat, f.fold))
    scores = np.asarray([f.balanced_accuracy for f in folds])
    return CvReport(
        task=task,
        plan=plan,
        scaler_scope=scaler_scope,
        grid_scope=grid_scope,
        folds=folds,
        mean=float(scores.mean()),
        sd=float(scores.std()),
    )


def _nested_fold_worker(payload) -> FoldScore:
    (X, y, train, test, config, grid, scaler_scope, inner_seed, repeat, fold) = payload
    y_arr = np.asarray(y, dtype=object)
    c_value, gamma = grid_search(X[train], y_arr[train].tolist(), grid, inner_seed, config,
                                 scaler_scope)
    kind = config.kernel.kind
    if scaler_scope == "fold":
        params = fit_scaler(X, train)
        Xt, Xe = apply_scaler(params, X[train]), apply_scaler(params, X[test])
    else:
        Xt, Xe = X[train], X[test]
    resolved = resolve_gamma(gamma, Xt) if kind == "rbf" else 0.0
    fold_config = replace(
        config,
        C=c_value,
        kernel=replace(config.kernel, gamma=resolved if kind == "rbf" else config.kernel.gamma),
    )
    model = train_multiclass(
        None, y_arr[train].tolist(), fold_config, gram=kernel_matrix(Xt, Xt, kind, resolved)
    )
    pred = model.predict(gram=kernel_matrix(Xe, Xt, kind, resolved))
    return FoldScore(
        repeat=repeat,
        fold=fold,
        balanced_accuracy=balanced_accuracy(y_arr[test].tolist(), pred),
        c_value=c_value,
        gamma=gamma,
        resolved_gamma=resolved,
        n_unconverged=model.n_unconverged,
    )


def _all_cells_fold_worker(payload):
    """Score every grid cell on one outer fold (non-nested grid scope)."""
    (X, y, train, test, config, grid, scaler_scope, repeat, fold) = payload
    y_arr = np.asarray(y, dtype=object)
    kind = config.kernel.kind
    if scaler_scope == "fold":
        params = fit_scaler(X, train)
        Xt, Xe = apply_scaler(params, X[train]), apply_scaler(params, X[test])
    else:
        Xt, Xe = X[train], X[test]
    D_tr = _kernel_precursor(Xt, Xt, kind)
    D_te = _kernel_precursor(Xe, Xt, kind)
    gamma_scale = (
        resolve_gamma("scale", Xt)
        if kind == "rbf" and "scale" in grid.gamma_values
        else None
    )
    results = []
    for c_value, gamma in grid.cells():
        g = gamma_scale if gamma == "scale" else gamma
        cell_config = replace(
            config,
            C=c_value,
            kernel=replace(config.kernel, gamma=g if kind == "rbf" else config.kernel.gamma),
        )
        model = train_multiclass(
            None, y_arr[train].tolist(), cell_config,
            gram=_kernel_from_precursor(D_tr, kind, g),
        )
        pred = model.predict(gram=_kernel_from_precursor(D_te, kind, g))
        results.append(
            (
                balanced_accuracy(y_arr[test].tolist(), pred),
                g if kind == "rbf" else 0.0,
                model.n_unconverged,
            )
        )
    return repeat, fold, results


def _map_jobs(worker, payloads, jobs: int):
    if jobs <= 1 or len(payloads) <= 1:
        return [worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, payloads))


def run_cv(
    matrix: FeatureMatrix,
    task: str,
    plan: CvPlan,
    grid: GridSpec,
    *,
    columns=None,
    config: SvmConfig = SvmConfig(),
    scaler_scope: str = "fold",
    grid_scope: str = "nested",
    jobs: int = 1,
) -> CvReport:
    """Score one classification task under the repeated-CV protocol.

    columns optionally restricts the feature set (group/arm studies). With
    grid_scope='nested' each training fold runs its own inner grid search;
    'outer' scores every cell on the outer folds and keeps the best cell's
    scores (the optimistic, non-nested variant).
    """
    if scaler_scope not in ("fold", "full"):
        raise ValueError(f"unknown scaler scope {scaler_scope!r}")
    if grid_scope not in ("nested", "outer"):
        raise ValueError(f"unknown grid scope {grid_scope!r}")
    rows, y = task_rows(matrix.labels, task)
    X = matrix.X[rows]
    if columns is not None:
        X = X[:, np.asarray(columns, dtype=np.intp)]
    counts = {c: y.count(c) for c in ordered_classes(y)}
    if len(counts) < 2:
        raise ValueError(f"task {task}: need at least two classes, got {counts}")
    too_small = {c: n for c, n in counts.items() if n < plan.n_folds}
    if too_small:
        raise ValueError(
            f"task {task}: stratification infeasible, classes smaller than "
            f"{plan.n_folds} folds: {too_small}"
        )
    if scaler_scope == "full":
        X = apply_scaler(fit_scaler(X), X)

    splits = []
    for repeat in range(plan.n_repeats):
        folds = stratified_folds(y, plan.n_folds, derive_seed(plan.master_seed, "folds", repeat))
        all_idx = np.arange(len(y), dtype=np.intp)
        for fold, test in enumerate(folds):
            splits.append((repeat, fold, np.setdiff1d(all_idx, test), test))

    if grid_scope == "nested":
        payloads = [
            (
                X, y, train, test, config, grid, scaler_scope,
                derive_seed(plan.master_seed, "grid", repeat, fold), repeat, fold,
            )
            for repeat, fold, train, test in splits
        ]
        folds = _map_jobs(_nested_fold_worker, payloads, jobs)
        return _aggregate(task, plan, scaler_scope, grid_scope, folds)

    payloads = [
        (X, y, train, test, config, grid, scaler_scope, repeat, fold)
        for repeat, fold, train, test in splits
    ]
    per_fold = _map_jobs(_all_cells_fold_worker, payloads, jobs)
    per_fold.sort(key=lambda item: (item[0], item[1]))
    cells = grid.cells()
    cell_means = [
        sum(results[k][0] for _, _, results in per_fold) / len(per_fold)
        for k in range(len(cells))
    ]
    best = max(range(len(cells)), key=lambda k: (cell_means[k], -k))
    c_value, gamma = cells[best]
    folds = [
        FoldScore(
            repeat=repeat,
            fold=fold,
            balanced_accuracy=results[best][0],
            c_value=c_value,
            gamma=gamma,
            resolved_gamma=results[best][1],
            n_unconverged=results[best][2],
        )
        for repeat, fold, results in per_fold
    ]
    return _aggregate(task, plan, scaler_scope, grid_scope, folds)
