# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Exact greedy split search over presorted feature columns.

One pass per feature scans rows in ascending feature order and keeps running
gradient/hessian sums for every open node at the current tree level, so a
whole level costs O(n_features * n_rows).
"""
import numpy as np

from libc.math cimport INFINITY


def best_splits(
    const int[:, ::1] order,
    const double[:, ::1] xsorted,
    const double[::1] grad,
    const double[::1] hess,
    const int[::1] node_of_row,
    const double[::1] node_g,
    const double[::1] node_h,
    double reg_lambda,
    double gamma,
    double min_child_weight,
):
    cdef Py_ssize_t n_feat = order.shape[0]
    cdef Py_ssize_t n_rows = order.shape[1]
    cdef Py_ssize_t n_nodes = node_g.shape[0]
    cdef Py_ssize_t f, j, k
    cdef int r
    cdef double x, gl, hl, gr, hr, gain

    gain_out = np.full(n_nodes, -np.inf)
    feat_out = np.full(n_nodes, -1, dtype=np.int32)
    thr_out = np.zeros(n_nodes)
    cdef double[::1] best_gain = gain_out
    cdef int[::1] best_feat = feat_out
    cdef double[::1] best_thr = thr_out

    parent_arr = np.empty(n_nodes)
    acc_g_arr = np.empty(n_nodes)
    acc_h_arr = np.empty(n_nodes)
    last_arr = np.empty(n_nodes)
    seen_arr = np.empty(n_nodes, dtype=np.int8)
    cdef double[::1] parent = parent_arr
    cdef double[::1] acc_g = acc_g_arr
    cdef double[::1] acc_h = acc_h_arr
    cdef double[::1] last = last_arr
    cdef signed char[::1] seen = seen_arr

    for k in range(n_nodes):
        parent[k] = node_g[k] * node_g[k] / (node_h[k] + reg_lambda)

    with nogil:
        for f in range(n_feat):
            for k in range(n_nodes):
                acc_g[k] = 0.0
                acc_h[k] = 0.0
                seen[k] = 0
            for j in range(n_rows):
                r = order[f, j]
                k = node_of_row[r]
                if k < 0:
                    continue
                x = xsorted[f, j]
                if seen[k] and x > last[k]:
                    gl = acc_g[k]
                    hl = acc_h[k]
                    gr = node_g[k] - gl
                    hr = node_h[k] - hl
                    if hl >= min_child_weight and hr >= min_child_weight:
                        gain = 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent[k]) - gamma
                        if gain > best_gain[k]:
                            best_gain[k] = gain
                            best_feat[k] = <int>f
                            best_thr[k] = x
                acc_g[k] += grad[r]
                acc_h[k] += hess[r]
                last[k] = x
                seen[k] = 1

    return gain_out, feat_out, thr_out
