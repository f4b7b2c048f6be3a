"""Soft-margin kernel SVM trained by sequential minimal optimization.

The binary solver maximizes the weighted dual

    W(a) = sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t.  0 <= a_i <= C * w_class(i),   sum_i a_i y_i = 0

using deterministic maximal-violating-pair working-set selection, so runs
are bit-reproducible. Multiclass is one-vs-one with majority voting.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .common import ordered_classes, write_json, read_json

# Full Gram matrices are cached below this row count; above it kernel rows
# are recomputed on the fly to keep memory bounded.
GRAM_CACHE_MAX = 4096

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class KernelConfig:
    kind: str = "rbf"  # "rbf" or "linear"
    gamma: float | str = "scale"  # positive number, or "scale"

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.gamma != "scale" and not (
            isinstance(self.gamma, (int, float)) and self.gamma > 0
        ):
            raise ValueError(f"gamma must be positive or 'scale', got {self.gamma!r}")


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    kernel: KernelConfig = field(default_factory=KernelConfig)
    class_weight_mode: str = "balanced"  # "balanced" or "none"
    tolerance: float = 1e-3  # KKT convergence tolerance
    max_iter_factor: int = 100  # iteration cap = factor * n_samples

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.class_weight_mode not in ("balanced", "none"):
            raise ValueError(f"unknown class_weight_mode {self.class_weight_mode!r}")


def resolve_gamma(gamma, X: np.ndarray) -> float:
    """Concrete RBF width: numbers pass through, 'scale' derives from the data.

    scale = 1 / (n_features * mean per-column population variance of X).
    """
    if gamma != "scale":
        return float(gamma)
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        raise ValueError("cannot resolve gamma='scale' on an empty matrix")
    mean_var = float(X.var(axis=0).mean())
    if mean_var == 0.0:
        raise ValueError("cannot resolve gamma='scale': training rows have zero variance")
    return 1.0 / (X.shape[1] * mean_var)


def class_weights(labels) -> dict:
    """Balanced weights: n_total / (n_classes * n_class), per class present."""
    labels = list(labels)
    if not labels:
        raise ValueError("cannot compute class weights for an empty label list")
    classes = ordered_classes(labels)
    counts = {c: labels.count(c) for c in classes}
    total = len(labels)
    return {c: total / (len(classes) * counts[c]) for c in classes}


def squared_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    sq_a = np.einsum("ij,ij->i", A, A)
    sq_b = np.einsum("ij,ij->i", B, B)
    d = sq_a[:, None] + sq_b[None, :] - 2.0 * (A @ B.T)
    np.maximum(d, 0.0, out=d)
    if A is B:
        np.fill_diagonal(d, 0.0)  # self-distance exactly zero, so K(x, x) == 1
    return d


def kernel_matrix(A: np.ndarray, B: np.ndarray, kind: str, gamma: float) -> np.ndarray:
    if kind == "linear":
        return A @ B.T
    return np.exp(-gamma * squared_distances(A, B))


@numba.njit(cache=True)
def _smo_gram(K, y, c_up, tol, max_iter):  # pragma: no cover - exercised via wrapper
    """SMO on a precomputed Gram matrix; returns (alpha, bias, converged, iters).

    Each iteration picks the maximal KKT-violating pair: i maximizing
    y_t - u_t over the set whose multiplier may move up along y, j minimizing
    it over the set that may move down. Convergence when the gap <= tol; the
    bias is the midpoint of the final bounds.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    u = np.zeros(n)  # decision values without bias
    it = 0
    converged = False
    m_val = 0.0
    big_m = 0.0
    while True:
        m_val = -np.inf
        big_m = np.inf
        i = -1
        j = -1
        for t in range(n):
            crit = y[t] - u[t]
            if (y[t] > 0.0 and alpha[t] < c_up[t]) or (y[t] < 0.0 and alpha[t] > 0.0):
                if crit > m_val:
                    m_val = crit
                    i = t
            if (y[t] < 0.0 and alpha[t] < c_up[t]) or (y[t] > 0.0 and alpha[t] > 0.0):
                if crit < big_m:
                    big_m = crit
                    j = t
        if i < 0 or j < 0 or m_val - big_m <= tol:
            converged = True
            break
        if it >= max_iter:
            break

        s = y[i] * y[j]
        if s < 0.0:
            lo = max(0.0, alpha[j] - alpha[i])
            hi = min(c_up[j], c_up[i] + alpha[j] - alpha[i])
        else:
            lo = max(0.0, alpha[i] + alpha[j] - c_up[i])
            hi = min(c_up[j], alpha[i] + alpha[j])
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta < 1e-12:
            eta = 1e-12  # flat direction: the step below lands on the right bound
        # E_i - E_j = (u_i - y_i) - (u_j - y_j), negative for the selected pair
        a_j = alpha[j] + y[j] * ((u[i] - y[i]) - (u[j] - y[j])) / eta
        if a_j < lo:
            a_j = lo
        elif a_j > hi:
            a_j = hi
        if a_j < 1e-10 * c_up[j]:
            a_j = 0.0
        elif a_j > (1.0 - 1e-10) * c_up[j]:
            a_j = c_up[j]
        a_i = alpha[i] + s * (alpha[j] - a_j)
        # Snap either multiplier that lands at (numerically) a box edge, keeping
        # the pair consistent with the equality constraint; re-snap a_j after a
        # rewrite so ulp residue cannot wedge it a hair inside its bound.
        if a_i < 1e-10 * c_up[i]:
            a_i = 0.0
            a_j = alpha[j] + s * alpha[i]
        elif a_i > (1.0 - 1e-10) * c_up[i]:
            a_i = c_up[i]
            a_j = alpha[j] + s * (alpha[i] - c_up[i])
        if a_j < 1e-10 * c_up[j]:
            a_j = 0.0
        elif a_j > (1.0 - 1e-10) * c_up[j]:
            a_j = c_up[j]
        d_j = a_j - alpha[j]
        if d_j == 0.0:
            break  # no representable progress on the most violating pair
        d_i = a_i - alpha[i]
        for t in range(n):
            u[t] += d_i * y[i] * K[i, t] + d_j * y[j] * K[j, t]
        alpha[i] = a_i
        alpha[j] = a_j
        it += 1
    bias = 0.5 * (m_val + big_m)
    return alpha, bias, converged, it


def _smo_dynamic(X, y, c_up, kind, gamma, tol, max_iter):
    """SMO computing kernel rows on demand; used above GRAM_CACHE_MAX rows."""
    n = y.shape[0]
    alpha = np.zeros(n)
    u = np.zeros(n)
    sq = np.einsum("ij,ij->i", X, X) if kind == "rbf" else None

    def row(t):
        if kind == "linear":
            return X @ X[t]
        d = sq + sq[t] - 2.0 * (X @ X[t])
        np.maximum(d, 0.0, out=d)
        return np.exp(-gamma * d)

    it = 0
    converged = False
    m_val = big_m = 0.0
    while True:
        crit = y - u
        up = ((y > 0) & (alpha < c_up)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < c_up)) | ((y > 0) & (alpha > 0))
        m_val = crit[up].max() if up.any() else -np.inf
        big_m = crit[low].min() if low.any() else np.inf
        if not np.isfinite(m_val) or not np.isfinite(big_m) or m_val - big_m <= tol:
            converged = True
            break
        if it >= max_iter:
            break
        i = int(np.flatnonzero(up & (crit == m_val))[0])
        j = int(np.flatnonzero(low & (crit == big_m))[0])

        k_i, k_j = row(i), row(j)
        s = y[i] * y[j]
        if s < 0.0:
            lo, hi = max(0.0, alpha[j] - alpha[i]), min(c_up[j], c_up[i] + alpha[j] - alpha[i])
        else:
            lo, hi = max(0.0, alpha[i] + alpha[j] - c_up[i]), min(c_up[j], alpha[i] + alpha[j])
        eta = max(k_i[i] + k_j[j] - 2.0 * k_i[j], 1e-12)
        a_j = float(np.clip(alpha[j] + y[j] * ((u[i] - y[i]) - (u[j] - y[j])) / eta, lo, hi))
        if a_j < 1e-10 * c_up[j]:
            a_j = 0.0
        elif a_j > (1.0 - 1e-10) * c_up[j]:
            a_j = c_up[j]
        a_i = alpha[i] + s * (alpha[j] - a_j)
        if a_i < 1e-10 * c_up[i]:
            a_i = 0.0
            a_j = alpha[j] + s * alpha[i]
        elif a_i > (1.0 - 1e-10) * c_up[i]:
            a_i = c_up[i]
            a_j = alpha[j] + s * (alpha[i] - c_up[i])
        if a_j < 1e-10 * c_up[j]:
            a_j = 0.0
        elif a_j > (1.0 - 1e-10) * c_up[j]:
            a_j = c_up[j]
        d_j = a_j - alpha[j]
        if d_j == 0.0:
            break
        u += (a_i - alpha[i]) * y[i] * k_i + d_j * y[j] * k_j
        alpha[i], alpha[j] = a_i, a_j
        it += 1
    return alpha, 0.5 * (m_val + big_m), converged, it


@dataclass
class BinarySvm:
    """Solution of one binary subproblem (labels coded +1/-1)."""

    alpha: np.ndarray  # full multiplier vector over the training rows
    bias: float
    gamma: float
    kind: str
    converged: bool
    iterations: int
    sv_index: np.ndarray  # rows with alpha > 0
    dual_coef: np.ndarray  # alpha_i * y_i at the support vectors
    sv_vectors: np.ndarray | None = None  # stored when trained from raw rows

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        if self.sv_vectors is None:
            raise ValueError("model was trained from a precomputed kernel; pass one to predict")
        return kernel_matrix(np.asarray(X, float), self.sv_vectors, self.kind, self.gamma) @ (
            self.dual_coef
        ) + self.bias

    def decision_from_kernel(self, K_test: np.ndarray) -> np.ndarray:
        """K_test: kernel of test rows against the full binary training set."""
        return K_test[:, self.sv_index] @ self.dual_coef + self.bias


def train_binary(
    X: np.ndarray | None,
    y,
    config: SvmConfig = SvmConfig(),
    *,
    sample_c: np.ndarray | None = None,
    gram: np.ndarray | None = None,
) -> BinarySvm:
    """Solve one weighted binary problem. y must contain both +1 and -1.

    Either raw rows X or a precomputed Gram matrix can be supplied; with a
    Gram matrix the kernel width must already be numeric.
    """
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise ValueError("binary training requires labels -1 and +1, both present")
    n = y.shape[0]
    if sample_c is None:
        if config.class_weight_mode == "balanced":
            w = class_weights(["pos" if v > 0 else "neg" for v in y])
            sample_c = config.C * np.where(y > 0, w["pos"], w["neg"])
        else:
            sample_c = np.full(n, config.C)
    sample_c = np.asarray(sample_c, dtype=np.float64)

    if gram is None:
        if X is None:
            raise ValueError("need either raw rows or a precomputed Gram matrix")
        X = np.asarray(X, dtype=np.float64)
        if not np.isfinite(X).all():
            raise ValueError("non-finite training rows")
        gamma = resolve_gamma(config.kernel.gamma, X) if config.kernel.kind == "rbf" else 0.0
        if n > GRAM_CACHE_MAX:
            alpha, bias, converged, iters = _smo_dynamic(
                X, y, sample_c, config.kernel.kind, gamma,
                config.tolerance, config.max_iter_factor * n,
            )
        else:
            gram = kernel_matrix(X, X, config.kernel.kind, gamma)
    else:
        if not isinstance(config.kernel.gamma, (int, float)) and config.kernel.kind == "rbf":
            raise ValueError("precomputed-kernel training needs a numeric gamma")
        gamma = float(config.kernel.gamma) if config.kernel.kind == "rbf" else 0.0

    if gram is not None:
        if not np.isfinite(gram).all():
            raise ValueError("non-finite kernel values")
        alpha, bias, converged, iters = _smo_gram(
            np.ascontiguousarray(gram, dtype=np.float64), y, sample_c,
            config.tolerance, config.max_iter_factor * n,
        )

    sv = np.flatnonzero(alpha > 0.0)
    return BinarySvm(
        alpha=alpha,
        bias=float(bias),
        gamma=gamma,
        kind=config.kernel.kind,
        converged=bool(converged),
        iterations=int(iters),
        sv_index=sv,
        dual_coef=alpha[sv] * y[sv],
        sv_vectors=None if X is None else np.array(X[sv]),
    )


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    """Value of the dual objective at alpha."""
    v = alpha * y
    return float(alpha.sum() - 0.5 * v @ K @ v)


@dataclass
class PairModel:
    pos_label: str
    neg_label: str
    train_indices: np.ndarray  # rows of the full training set used by this pair
    binary: BinarySvm


@dataclass
class TrainedSvm:
    """One-vs-one multiclass model: one binary SVM per unordered class pair."""

    classes: tuple
    pairs: list
    config: SvmConfig
    gamma: float

    @property
    def converged(self) -> bool:
        return all(p.binary.converged for p in self.pairs)

    @property
    def n_unconverged(self) -> int:
        return sum(not p.binary.converged for p in self.pairs)

    def pair_decisions(self, X=None, *, gram=None) -> np.ndarray:
        """Decision values per (row, pair); gram is test rows x full training set."""
        if (X is None) == (gram is None):
            raise ValueError("pass exactly one of raw rows or a precomputed kernel")
        cols = []
        for pair in self.pairs:
            if gram is not None:
                k = gram[:, pair.train_indices]
                cols.append(pair.binary.decision_from_kernel(k))
            else:
                cols.append(pair.binary.decision_function(X))
        return np.column_stack(cols)

    def predict(self, X=None, *, gram=None) -> list:
        """Majority vote over pairs; ties fall back to summed decision values,
        then to class order."""
        decisions = self.pair_decisions(X, gram=gram)
        n = decisions.shape[0]
        index = {c: k for k, c in enumerate(self.classes)}
        votes = np.zeros((n, len(self.classes)))
        scores = np.zeros((n, len(self.classes)))
        for col, pair in enumerate(self.pairs):
            d = decisions[:, col]
            p, q = index[pair.pos_label], index[pair.neg_label]
            win_pos = d > 0
            votes[win_pos, p] += 1
            votes[~win_pos, q] += 1
            scores[:, p] += d
            scores[:, q] -= d
        out = []
        for r in range(n):
            best = max(
                range(len(self.classes)),
                key=lambda k: (votes[r, k], scores[r, k], -k),
            )
            out.append(self.classes[best])
        return out


def train_multiclass(
    X: np.ndarray | None,
    labels,
    config: SvmConfig = SvmConfig(),
    *,
    gram: np.ndarray | None = None,
) -> TrainedSvm:
    """Train one binary model per class pair (classes in canonical order)."""
    labels = list(labels)
    classes = ordered_classes(labels)
    if len(classes) < 2:
        raise ValueError(f"need at least two classes, got {classes}")
    if config.class_weight_mode == "balanced":
        weights = class_weights(labels)
    else:
        weights = {c: 1.0 for c in classes}

    if X is not None:
        X = np.asarray(X, dtype=np.float64)
    if config.kernel.kind == "rbf":
        if isinstance(config.kernel.gamma, (int, float)):
            gamma = float(config.kernel.gamma)
        elif X is not None:
            gamma = resolve_gamma(config.kernel.gamma, X)
        else:
            raise ValueError("precomputed-kernel training needs a numeric gamma")
    else:
        gamma = 0.0
    resolved = replace(config, kernel=replace(config.kernel, gamma=gamma)) if (
        config.kernel.kind == "rbf"
    ) else config

    label_arr = np.asarray(labels, dtype=object)
    pairs = []
    for a_pos, a in enumerate(classes):
        for b in classes[a_pos + 1 :]:
            idx = np.flatnonzero((label_arr == a) | (label_arr == b))
            y = np.where(label_arr[idx] == a, 1.0, -1.0)
            c_up = resolved.C * np.where(
                label_arr[idx] == a, weights[a], weights[b]
            ).astype(np.float64)
            binary = train_binary(
                None if X is None else X[idx],
                y,
                resolved,
                sample_c=c_up,
                gram=None if gram is None else np.ascontiguousarray(gram[np.ix_(idx, idx)]),
            )
            pairs.append(PairModel(a, b, idx, binary))
    return TrainedSvm(classes=tuple(classes), pairs=pairs, config=resolved, gamma=gamma)


def predict(model: TrainedSvm, X=None, *, gram=None) -> list:
    return model.predict(X, gram=gram)


def model_to_dict(model: TrainedSvm) -> dict:
    pairs = []
    for pair in model.pairs:
        if pair.binary.sv_vectors is None:
            raise ValueError("only models trained from raw rows can be serialized")
        pairs.append(
            {
                "pos_label": pair.pos_label,
                "neg_label": pair.neg_label,
                "bias": pair.binary.bias,
                "converged": pair.binary.converged,
                "dual_coef": pair.binary.dual_coef.tolist(),
                "support_vectors": pair.binary.sv_vectors.tolist(),
            }
        )
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "classes": list(model.classes),
        "kernel": {"kind": model.config.kernel.kind, "gamma": model.gamma},
        "C": model.config.C,
        "class_weight_mode": model.config.class_weight_mode,
        "pairs": pairs,
    }


def model_from_dict(obj: dict) -> TrainedSvm:
    if obj.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {obj.get('format_version')!r}")
    kind = obj["kernel"]["kind"]
    gamma = float(obj["kernel"]["gamma"]) if kind == "rbf" else 0.0
    config = SvmConfig(
        C=obj["C"],
        kernel=KernelConfig(kind=kind, gamma=gamma if kind == "rbf" else "scale"),
        class_weight_mode=obj["class_weight_mode"],
    )
    pairs = []
    for p in obj["pairs"]:
        coef = np.asarray(p["dual_coef"], dtype=np.float64)
        binary = BinarySvm(
            alpha=np.abs(coef),
            bias=float(p["bias"]),
            gamma=gamma,
            kind=kind,
            converged=bool(p["converged"]),
            iterations=0,
            sv_index=np.arange(coef.size),
            dual_coef=coef,
            sv_vectors=np.asarray(p["support_vectors"], dtype=np.float64),
        )
        pairs.append(PairModel(p["pos_label"], p["neg_label"], np.arange(coef.size), binary))
    return TrainedSvm(classes=tuple(obj["classes"]), pairs=pairs, config=config, gamma=gamma)


def save_model(model: TrainedSvm, path) -> None:
    write_json(path, model_to_dict(model))


def load_model(path) -> TrainedSvm:
    return model_from_dict(read_json(path))
