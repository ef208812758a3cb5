"""Pure-numpy reference implementations of the hot kernels.

The compiled backend (``_cyext``) implements the same four functions with
identical signatures and return conventions; either module can serve as the
active backend.  Matrix products go through numpy/BLAS in both backends --
the compiled variant only fuses the elementwise and traversal loops.

Conventions shared with the compiled backend:

* GRU gates are ordered reset, update, candidate along the ``3H`` axis and
  weights use the ``(3H, in)`` layout, so ``x @ w_ih.T + b_ih`` produces the
  stacked input-side pre-activations.
* ``gather_neighbors`` reads a CSR temporal adjacency whose per-node slices
  are sorted by event time, returns the up-to-``n`` most recent events
  strictly before the query time (most recent first), and pads with id -1,
  time 0, event -1, mask 0.
* ``ifor_paths`` walks flat-array forests: a node is a leaf iff
  ``left == -1``; samples go left when ``x[feature] < threshold``; the
  returned value is the mean over trees of (edge depth + per-leaf
  ``adjust``), where ``adjust`` carries the expected remaining path length
  of the leaf's sample count.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def gru_forward(x, h, w_ih, w_hh, b_ih, b_hh):
    """One GRU step for a batch.  Returns ``(h_new, cache)``."""
    H = h.shape[1]
    gi = x @ w_ih.T + b_ih
    gh = h @ w_hh.T + b_hh
    r = _sigmoid(gi[:, :H] + gh[:, :H])
    z = _sigmoid(gi[:, H : 2 * H] + gh[:, H : 2 * H])
    gh_n = np.ascontiguousarray(gh[:, 2 * H :])  # cache stays backend-portable
    n = np.tanh(gi[:, 2 * H :] + r * gh_n)
    h_new = (1.0 - z) * n + z * h
    return h_new, (x, h, r, z, n, gh_n)


def gru_backward(cache, w_ih, w_hh, g):
    """Gradients of one GRU step w.r.t. inputs, state, and weights."""
    x, h, r, z, n, gh_n = cache
    dn = g * (1.0 - z)
    dz = g * (h - n)
    dh = g * z
    da_n = dn * (1.0 - n * n)
    dr = da_n * gh_n
    dgh_n = da_n * r
    da_z = dz * z * (1.0 - z)
    da_r = dr * r * (1.0 - r)
    dgi = np.concatenate([da_r, da_z, da_n], axis=1)
    dgh = np.concatenate([da_r, da_z, dgh_n], axis=1)
    dx = dgi @ w_ih
    dh = dh + dgh @ w_hh
    dw_ih = dgi.T @ x
    dw_hh = dgh.T @ h
    db_ih = dgi.sum(axis=0)
    db_hh = dgh.sum(axis=0)
    return dx, dh, dw_ih, dw_hh, db_ih, db_hh


def gather_neighbors(ptr, nbr, time, eidx, nodes, t_query, n):
    """Most recent up-to-``n`` temporal neighbors strictly before each query.

    ``ptr``/``nbr``/``time``/``eidx`` form a CSR adjacency (per-node slices
    time-sorted ascending).  Returns ``(ids, times, events, mask)`` arrays of
    shape ``(len(nodes), n)``; row order is most-recent-first.
    """
    B = len(nodes)
    out_ids = np.full((B, n), -1, dtype=np.int64)
    out_times = np.zeros((B, n), dtype=np.float64)
    out_eidx = np.full((B, n), -1, dtype=np.int64)
    mask = np.zeros((B, n), dtype=np.float64)
    for i in range(B):
        node = nodes[i]
        lo, hi = ptr[node], ptr[node + 1]
        cut = lo + np.searchsorted(time[lo:hi], t_query[i], side="left")
        k = min(n, cut - lo)
        if k <= 0:
            continue
        sel = slice(cut - 1, cut - 1 - k, -1) if cut - 1 - k >= 0 else slice(cut - 1, None, -1)
        out_ids[i, :k] = nbr[sel]
        out_times[i, :k] = time[sel]
        out_eidx[i, :k] = eidx[sel]
        mask[i, :k] = 1.0
    return out_ids, out_times, out_eidx, mask


def ifor_paths(x, feature, threshold, left, right, adjust, roots):
    """Mean per-tree path length for each sample of ``x``.

    The forest is flattened: ``roots[k]`` indexes tree ``k``'s root and
    ``left``/``right`` hold absolute child indices (-1 left marks a leaf).
    """
    n_samples = x.shape[0]
    total = np.zeros(n_samples, dtype=np.float64)
    for i in range(n_samples):
        row = x[i]
        acc = 0.0
        for root in roots:
            node = root
            depth = 0
            while left[node] != -1:
                node = left[node] if row[feature[node]] < threshold[node] else right[node]
                depth += 1
            acc += depth + adjust[node]
        total[i] = acc
    return total / len(roots)
