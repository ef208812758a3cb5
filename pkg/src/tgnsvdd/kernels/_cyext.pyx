# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Mirrors ``pyref`` function-for-function: GRU forward/backward (BLAS matmuls
via numpy, fused C loops for the gates), CSR temporal-neighbor gathering
(binary search per query), and isolation-forest path traversal.  See the
``pyref`` docstring for the shared conventions.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport tanh as c_tanh

cnp.import_array()

BACKEND = "compiled"


cdef inline double c_sigmoid(double v) noexcept nogil:
    return 0.5 * (c_tanh(0.5 * v) + 1.0)


def gru_forward(x, h, w_ih, w_hh, b_ih, b_hh):
    """One GRU step for a batch.  Returns ``(h_new, cache)``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gi = np.dot(x, w_ih.T) + b_ih
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gh = np.dot(h, w_hh.T) + b_hh
    cdef Py_ssize_t B = gi.shape[0]
    cdef Py_ssize_t H = gi.shape[1] // 3
    cdef cnp.ndarray[cnp.float64_t, ndim=2] h_in = np.ascontiguousarray(h)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] r = np.empty((B, H))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] z = np.empty((B, H))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] n = np.empty((B, H))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gh_n = np.empty((B, H))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] h_new = np.empty((B, H))
    cdef double[:, ::1] gi_v = gi, gh_v = gh, h_v = h_in
    cdef double[:, ::1] r_v = r, z_v = z, n_v = n, gh_n_v = gh_n, out_v = h_new
    cdef Py_ssize_t i, j
    cdef double rv, zv, nv
    with nogil:
        for i in range(B):
            for j in range(H):
                rv = c_sigmoid(gi_v[i, j] + gh_v[i, j])
                zv = c_sigmoid(gi_v[i, H + j] + gh_v[i, H + j])
                gh_n_v[i, j] = gh_v[i, 2 * H + j]
                nv = c_tanh(gi_v[i, 2 * H + j] + rv * gh_v[i, 2 * H + j])
                r_v[i, j] = rv
                z_v[i, j] = zv
                n_v[i, j] = nv
                out_v[i, j] = (1.0 - zv) * nv + zv * h_v[i, j]
    return h_new, (x, h_in, r, z, n, gh_n)


def gru_backward(cache, w_ih, w_hh, g):
    """Gradients of one GRU step w.r.t. inputs, state, and weights."""
    x, h, r, z, n, gh_n = cache
    cdef Py_ssize_t B = g.shape[0]
    cdef Py_ssize_t H = g.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dgi = np.empty((B, 3 * H))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dgh = np.empty((B, 3 * H))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dh_gate = np.empty((B, H))
    cdef double[:, ::1] g_v = np.ascontiguousarray(g)
    cdef double[:, ::1] h_v = h, r_v = r, z_v = z, n_v = n, gh_n_v = gh_n
    cdef double[:, ::1] dgi_v = dgi, dgh_v = dgh, dh_v = dh_gate
    cdef Py_ssize_t i, j
    cdef double gv, dn, dz, da_n, dr, da_z, da_r
    with nogil:
        for i in range(B):
            for j in range(H):
                gv = g_v[i, j]
                dn = gv * (1.0 - z_v[i, j])
                dz = gv * (h_v[i, j] - n_v[i, j])
                dh_v[i, j] = gv * z_v[i, j]
                da_n = dn * (1.0 - n_v[i, j] * n_v[i, j])
                dr = da_n * gh_n_v[i, j]
                da_z = dz * z_v[i, j] * (1.0 - z_v[i, j])
                da_r = dr * r_v[i, j] * (1.0 - r_v[i, j])
                dgi_v[i, j] = da_r
                dgi_v[i, H + j] = da_z
                dgi_v[i, 2 * H + j] = da_n
                dgh_v[i, j] = da_r
                dgh_v[i, H + j] = da_z
                dgh_v[i, 2 * H + j] = da_n * r_v[i, j]
    dx = np.dot(dgi, w_ih)
    dh = dh_gate + np.dot(dgh, w_hh)
    dw_ih = np.dot(dgi.T, x)
    dw_hh = np.dot(dgh.T, h)
    db_ih = dgi.sum(axis=0)
    db_hh = dgh.sum(axis=0)
    return dx, dh, dw_ih, dw_hh, db_ih, db_hh


def gather_neighbors(ptr, nbr, time, eidx, nodes, t_query, n):
    """Most recent up-to-``n`` temporal neighbors strictly before each query."""
    cdef Py_ssize_t B = len(nodes)
    cdef Py_ssize_t width = n
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out_ids = np.full((B, width), -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_times = np.zeros((B, width))
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out_eidx = np.full((B, width), -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] mask = np.zeros((B, width))
    cdef cnp.int64_t[::1] ptr_v = np.ascontiguousarray(ptr, dtype=np.int64)
    cdef cnp.int64_t[::1] nbr_v = np.ascontiguousarray(nbr, dtype=np.int64)
    cdef double[::1] time_v = np.ascontiguousarray(time, dtype=np.float64)
    cdef cnp.int64_t[::1] eidx_v = np.ascontiguousarray(eidx, dtype=np.int64)
    cdef cnp.int64_t[::1] nodes_v = np.ascontiguousarray(nodes, dtype=np.int64)
    cdef double[::1] tq_v = np.ascontiguousarray(t_query, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] ids_v = out_ids, ev_v = out_eidx
    cdef double[:, ::1] times_v = out_times, mask_v = mask
    cdef Py_ssize_t i, k, lo, hi, mid, cut, src
    cdef double t
    with nogil:
        for i in range(B):
            lo = ptr_v[nodes_v[i]]
            hi = ptr_v[nodes_v[i] + 1]
            t = tq_v[i]
            # first index with time >= t  (strictly-before cut)
            cut = hi
            while lo < cut:
                mid = (lo + cut) // 2
                if time_v[mid] < t:
                    lo = mid + 1
                else:
                    cut = mid
            for k in range(width):
                src = cut - 1 - k
                if src < ptr_v[nodes_v[i]]:
                    break
                ids_v[i, k] = nbr_v[src]
                times_v[i, k] = time_v[src]
                ev_v[i, k] = eidx_v[src]
                mask_v[i, k] = 1.0
    return out_ids, out_times, out_eidx, mask


def ifor_paths(x, feature, threshold, left, right, adjust, roots):
    """Mean per-tree path length for each sample of ``x``."""
    cdef double[:, ::1] x_v = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.int64_t[::1] feat_v = np.ascontiguousarray(feature, dtype=np.int64)
    cdef double[::1] thr_v = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef cnp.int64_t[::1] left_v = np.ascontiguousarray(left, dtype=np.int64)
    cdef cnp.int64_t[::1] right_v = np.ascontiguousarray(right, dtype=np.int64)
    cdef double[::1] adj_v = np.ascontiguousarray(adjust, dtype=np.float64)
    cdef cnp.int64_t[::1] roots_v = np.ascontiguousarray(roots, dtype=np.int64)
    cdef Py_ssize_t n_samples = x_v.shape[0]
    cdef Py_ssize_t n_trees = roots_v.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n_samples)
    cdef double[::1] out_v = out
    cdef Py_ssize_t i, k, node, depth
    cdef double acc
    with nogil:
        for i in range(n_samples):
            acc = 0.0
            for k in range(n_trees):
                node = roots_v[k]
                depth = 0
                while left_v[node] != -1:
                    if x_v[i, feat_v[node]] < thr_v[node]:
                        node = left_v[node]
                    else:
                        node = right_v[node]
                    depth += 1
                acc += depth + adj_v[node]
            out_v[i] = acc / n_trees
    return out
