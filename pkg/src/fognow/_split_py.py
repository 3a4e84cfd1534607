"""Numpy twin of the compiled split search.

Rows of every open node are gathered into contiguous blocks (a stable radix
sort of node ids over the presorted order), then each block is scanned with
a sequential cumulative sum. The additions happen in the same order as the
compiled loop, so both backends pick bit-identical splits.
"""
import numpy as np


def best_splits(order, xsorted, grad, hess, node_of_row, node_g, node_h,
                reg_lambda, gamma, min_child_weight):
    n_nodes = node_g.shape[0]
    gain_out = np.full(n_nodes, -np.inf)
    feat_out = np.full(n_nodes, -1, dtype=np.int32)
    thr_out = np.zeros(n_nodes)

    keys = node_of_row[order]
    if n_nodes < 2 ** 15 - 1:
        keys = keys.astype(np.int16)
    perm = np.argsort(keys, axis=1, kind="stable")
    counts = np.bincount(node_of_row[node_of_row >= 0], minlength=n_nodes)
    n_skip = int(np.count_nonzero(node_of_row < 0))
    grouped = np.take_along_axis(order, perm, axis=1)[:, n_skip:]
    xs_grouped = np.take_along_axis(xsorted, perm, axis=1)[:, n_skip:]

    start = 0
    for k in range(n_nodes):
        m = int(counts[k])
        stop = start + m
        if m < 2:
            start = stop
            continue
        rows = grouped[:, start:stop]
        xs = xs_grouped[:, start:stop]
        gl = np.cumsum(grad[rows], axis=1)[:, :-1]
        hl = np.cumsum(hess[rows], axis=1)[:, :-1]
        gr = node_g[k] - gl
        hr = node_h[k] - hl
        parent = node_g[k] * node_g[k] / (node_h[k] + reg_lambda)
        gain = 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent) - gamma
        valid = (xs[:, 1:] > xs[:, :-1]) & (hl >= min_child_weight) & (hr >= min_child_weight)
        gain = np.where(valid, gain, -np.inf)
        flat = int(np.argmax(gain))
        f, j = divmod(flat, gain.shape[1])
        if gain[f, j] > -np.inf:
            gain_out[k] = gain[f, j]
            feat_out[k] = f
            thr_out[k] = xs[f, j + 1]
        start = stop
    return gain_out, feat_out, thr_out
