"""Isolation forest from first principles.

Trees partition a random subsample of size psi with uniform axis-aligned
splits down to depth ceil(log2(psi)); anomalies isolate in short paths.  A
sample's score is 2^(-E[h]/c(psi)) where E[h] is its mean path length over
the forest (leaf depth plus the expected remaining path c(leaf size)) and
c(m) = 2*H(m-1) - 2*(m-1)/m uses exact harmonic sums, so c(2) = 1.
Traversal runs in the kernel backend over flattened node arrays.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..kernels import get_kernels
from .tabular import TabularView

NORMAL = "Normal"
ATTACK = "Attack"


def avg_path_length(m: int) -> float:
    """Expected unsuccessful-search path length in a tree of m samples."""
    if m <= 1:
        return 0.0
    harmonic = sum(1.0 / i for i in range(1, m))
    return 2.0 * harmonic - 2.0 * (m - 1) / m


@dataclass
class IsolationForestModel:
    """Forest flattened into parallel node arrays (leaf iff left == -1)."""

    feature: np.ndarray    # (M,) split feature per node (-1 at leaves)
    threshold: np.ndarray  # (M,) split value
    left: np.ndarray       # (M,) child index, -1 marks a leaf
    right: np.ndarray      # (M,)
    adjust: np.ndarray     # (M,) c(leaf sample count); 0 at internal nodes
    roots: np.ndarray      # (t,) root index per tree
    psi: int


class _Builder:
    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.adjust: list[float] = []

    def leaf(self, size: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.adjust.append(avg_path_length(size))
        return len(self.feature) - 1

    def node(self, f: int, thr: float, li: int, ri: int) -> int:
        self.feature.append(f)
        self.threshold.append(thr)
        self.left.append(li)
        self.right.append(ri)
        self.adjust.append(0.0)
        return len(self.feature) - 1


def _grow(b: _Builder, rows: np.ndarray, depth: int, limit: int, rng) -> int:
    m = rows.shape[0]
    if depth >= limit or m <= 1:
        return b.leaf(m)
    lo = rows.min(axis=0)
    hi = rows.max(axis=0)
    usable = np.flatnonzero(hi > lo)
    if usable.size == 0:
        return b.leaf(m)
    f = int(rng.choice(usable))
    thr = float(rng.uniform(lo[f], hi[f]))
    mask = rows[:, f] < thr
    if mask.all() or not mask.any():
        return b.leaf(m)
    li = _grow(b, rows[mask], depth + 1, limit, rng)
    ri = _grow(b, rows[~mask], depth + 1, limit, rng)
    return b.node(f, thr, li, ri)


def _as_matrix(view) -> np.ndarray:
    if isinstance(view, TabularView):
        return view.matrix
    return np.asarray(view, dtype=np.float64)


def fit_iforest(fit_data, t: int = 100, psi: int = 256, seed: int = 0) -> IsolationForestModel:
    """Grow ``t`` trees over random subsamples of ``psi`` rows."""
    X = _as_matrix(fit_data)
    n = X.shape[0]
    if n == 0:
        raise ValueError("fit_iforest: empty fit data")
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    if psi > n:
        warnings.warn(f"subsample size {psi} exceeds {n} rows; clamping to {n}", RuntimeWarning)
        psi = n
    if psi < 2:
        raise ValueError(f"subsample size must be >= 2, got {psi}")
    limit = math.ceil(math.log2(psi))
    rng = np.random.default_rng(seed)
    b = _Builder()
    roots = []
    for _ in range(t):
        sub = X[rng.choice(n, size=psi, replace=False)]
        roots.append(_grow(b, sub, 0, limit, rng))
    return IsolationForestModel(
        feature=np.asarray(b.feature, dtype=np.int64),
        threshold=np.asarray(b.threshold, dtype=np.float64),
        left=np.asarray(b.left, dtype=np.int64),
        right=np.asarray(b.right, dtype=np.int64),
        adjust=np.asarray(b.adjust, dtype=np.float64),
        roots=np.asarray(roots, dtype=np.int64),
        psi=psi,
    )


def iforest_paths(model: IsolationForestModel, score_data) -> np.ndarray:
    """Mean path length per row (depth plus leaf-size adjustment)."""
    X = np.ascontiguousarray(_as_matrix(score_data))
    K = get_kernels()
    return K.ifor_paths(
        X, model.feature, model.threshold, model.left, model.right, model.adjust, model.roots
    )


def iforest_scores(model: IsolationForestModel, score_data) -> np.ndarray:
    """Anomaly scores in (0,1); higher = easier to isolate."""
    paths = iforest_paths(model, score_data)
    return np.power(2.0, -paths / avg_path_length(model.psi))


def isolation_forest(
    fit_data, score_data, t: int = 100, psi: int = 256, contamination: float = 0.05, seed: int = 0
):
    """Fit, score, and cut the top ``contamination`` fraction as Attack.

    Returns ``(scores, labels)``; the cut is the (1 - contamination)
    quantile of the scores, exceeded strictly.
    """
    if not 0.0 < contamination <= 0.5:
        raise ValueError(f"contamination must lie in (0, 0.5], got {contamination}")
    model = fit_iforest(fit_data, t=t, psi=psi, seed=seed)
    scores = iforest_scores(model, score_data)
    cut = np.quantile(scores, 1.0 - contamination)
    labels = [ATTACK if s > cut else NORMAL for s in scores]
    return scores, labels
