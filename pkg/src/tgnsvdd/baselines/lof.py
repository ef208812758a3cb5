"""Local outlier factor from first principles.

Classic construction: a point's k-distance is the distance to its k-th
nearest reference point; reachability distance to a neighbor o is
max(k-distance(o), d(p, o)); local reachability density is the inverse mean
reachability over the k nearest neighbors (with a 1e-10 additive guard so
exact duplicates stay finite); the LOF score is the mean neighbor density
divided by the point's own density.  Scores near 1 mean inlier, larger means
more anomalous.

Two modes: ``outlier`` scores the test rows against the test set itself
(self excluded), ``novelty`` scores test rows against a clean training set
(train-internal densities exclude self).  Ties in neighbor selection break
by row index; exactly k neighbors are used.
"""

from __future__ import annotations

import numpy as np

from .tabular import TabularView

_EPS = 1e-10
_BLOCK = 256


def _as_matrix(view) -> np.ndarray:
    if isinstance(view, TabularView):
        return view.matrix
    return np.asarray(view, dtype=np.float64)


def _pairwise(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Euclidean distances, computed in row blocks to bound memory."""
    out = np.empty((A.shape[0], B.shape[0]))
    for i in range(0, A.shape[0], _BLOCK):
        blk = A[i : i + _BLOCK]
        out[i : i + _BLOCK] = np.sqrt(((blk[:, None, :] - B[None, :, :]) ** 2).sum(axis=2))
    return out

def _neighborhood(dist: np.ndarray, k: int):
    """Indices of the k nearest columns per row and the k-th distance."""
    nn = np.argsort(dist, axis=1, kind="stable")[:, :k]
    rows = np.arange(dist.shape[0])[:, None]
    return nn, dist[rows, nn]


def lof_scores(train, test, k: int = 20, mode: str = "novelty") -> np.ndarray:
    """Per-row LOF of ``test`` (higher = more anomalous).

    ``mode="novelty"`` scores test rows among ``train`` rows (requires more
    than k train rows); ``mode="outlier"`` ignores ``train`` and scores test
    rows within the test set.
    """
    if mode not in ("novelty", "outlier"):
        raise ValueError(f"mode must be 'novelty' or 'outlier', got {mode!r}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    X = _as_matrix(test)

    if mode == "outlier":
        if k >= X.shape[0]:
            raise ValueError(f"k={k} needs more than k reference rows, got {X.shape[0]}")
        D = _pairwise(X, X)
        np.fill_diagonal(D, np.inf)
        nn, knn_d = _neighborhood(D, k)
        kdist = knn_d[:, -1]
        reach = np.maximum(kdist[nn], knn_d)
        lrd = 1.0 / (reach.mean(axis=1) + _EPS)
        return lrd[nn].mean(axis=1) / lrd

    if train is None:
        raise ValueError("novelty mode requires a training view")
    R = _as_matrix(train)
    if k >= R.shape[0]:
        raise ValueError(f"k={k} needs more than k reference rows, got {R.shape[0]}")
    Drr = _pairwise(R, R)
    np.fill_diagonal(Drr, np.inf)
    nn_r, knn_r = _neighborhood(Drr, k)
    kdist_r = knn_r[:, -1]
    reach_r = np.maximum(kdist_r[nn_r], knn_r)
    lrd_r = 1.0 / (reach_r.mean(axis=1) + _EPS)

    Dxr = _pairwise(X, R)
    nn, knn_d = _neighborhood(Dxr, k)
    reach = np.maximum(kdist_r[nn], knn_d)
    lrd_x = 1.0 / (reach.mean(axis=1) + _EPS)
    return lrd_r[nn].mean(axis=1) / lrd_x
