"""Hot kernels for boosted-tree fitting: numba and pure-numpy twins.

Both paths implement the same exact greedy algorithm with the same
floating-point operation order, so fitted trees and predictions agree
bit for bit. Selection: the numba path is used when numba imports and
the environment variable STRATDTE_NO_NUMBA is unset; setting it to 1
(or true/yes) forces the numpy path. benchmarks/bench_kernels.py times
the two against each other.

Tree encoding: array (n_rounds, n_nodes, 3) for a full binary tree with
n_nodes = 2**(max_depth + 1) - 1; children of v are 2v+1 and 2v+2.
Column 0 is the split feature (-2 unused slot, -1 leaf), column 1 the
split threshold, column 2 the leaf value (mean residual, unscaled).
"""

import os

import numpy as np

ENV_FLAG = "STRATDTE_NO_NUMBA"

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba present in normal installs
    HAS_NUMBA = False

USING_NUMBA = HAS_NUMBA and os.environ.get(ENV_FLAG, "0").lower() not in (
    "1",
    "true",
    "yes",
)


def presort(x):
    """Per-feature stable argsort, shape (d, m), shared across fits."""
    m, d = x.shape
    order = np.empty((d, m), dtype=np.int64)
    for f in range(d):
        order[f] = np.argsort(x[:, f], kind="stable")
    return order


def _fit_loops(x, order, y, n_rounds, max_depth, nu, min_leaf):
    m, d = x.shape
    n_nodes = (1 << (max_depth + 1)) - 1
    trees = np.zeros((n_rounds, n_nodes, 3))
    order0 = order[0]
    # sequential sum; the numpy twin uses cumsum to match the order
    tot = 0.0
    for i in range(m):
        tot += y[i]
    base = tot / m
    fcur = np.full(m, base)
    r = np.zeros(m)
    node = np.zeros(m, np.int64)
    tot_cnt = np.zeros(n_nodes, np.int64)
    tot_sum = np.zeros(n_nodes)
    run_cnt = np.zeros(n_nodes, np.int64)
    run_sum = np.zeros(n_nodes)
    last_x = np.zeros(n_nodes)
    best_gain = np.zeros(n_nodes)
    best_feat = np.zeros(n_nodes, np.int64)
    best_thr = np.zeros(n_nodes)
    for t in range(n_rounds):
        for i in range(m):
            r[i] = y[i] - fcur[i]
            node[i] = 0
        for v in range(n_nodes):
            trees[t, v, 0] = -2.0
        for level in range(max_depth + 1):
            lo = (1 << level) - 1
            hi = (1 << (level + 1)) - 2
            for v in range(lo, hi + 1):
                tot_cnt[v] = 0
                tot_sum[v] = 0.0
            for k in range(m):
                i = order0[k]
                v = node[i]
                if lo <= v <= hi:
                    tot_cnt[v] += 1
                    tot_sum[v] += r[i]
            if level == max_depth:
                for v in range(lo, hi + 1):
                    if tot_cnt[v] > 0:
                        trees[t, v, 0] = -1.0
                        trees[t, v, 2] = tot_sum[v] / tot_cnt[v]
                continue
            for v in range(lo, hi + 1):
                if tot_cnt[v] > 0:
                    best_gain[v] = tot_sum[v] * tot_sum[v] / tot_cnt[v]
                best_feat[v] = -1
                best_thr[v] = 0.0
            for fidx in range(d):
                for v in range(lo, hi + 1):
                    run_cnt[v] = 0
                    run_sum[v] = 0.0
                    last_x[v] = 0.0
                for k in range(m):
                    i = order[fidx, k]
                    v = node[i]
                    if v < lo or v > hi:
                        continue
                    xv = x[i, fidx]
                    c = run_cnt[v]
                    if (
                        c >= min_leaf
                        and tot_cnt[v] - c >= min_leaf
                        and xv > last_x[v]
                    ):
                        sl = run_sum[v]
                        sr = tot_sum[v] - sl
                        g = sl * sl / c + sr * sr / (tot_cnt[v] - c)
                        if g > best_gain[v]:
                            best_gain[v] = g
                            best_feat[v] = fidx
                            best_thr[v] = 0.5 * (last_x[v] + xv)
                    run_cnt[v] = c + 1
                    run_sum[v] += r[i]
                    last_x[v] = xv
            for v in range(lo, hi + 1):
                if tot_cnt[v] == 0:
                    continue
                if best_feat[v] >= 0:
                    trees[t, v, 0] = best_feat[v]
                    trees[t, v, 1] = best_thr[v]
                else:
                    trees[t, v, 0] = -1.0
                    trees[t, v, 2] = tot_sum[v] / tot_cnt[v]
            for i in range(m):
                v = node[i]
                if lo <= v <= hi and trees[t, v, 0] >= 0.0:
                    fi = int(trees[t, v, 0])
                    if x[i, fi] <= trees[t, v, 1]:
                        node[i] = 2 * v + 1
                    else:
                        node[i] = 2 * v + 2
        for i in range(m):
            fcur[i] += nu * trees[t, node[i], 2]
    return base, trees


def _predict_loops(base, trees, nu, xq):
    nq = xq.shape[0]
    n_rounds = trees.shape[0]
    out = np.full(nq, base)
    for i in range(nq):
        acc = out[i]
        for t in range(n_rounds):
            v = 0
            while trees[t, v, 0] >= 0.0:
                fi = int(trees[t, v, 0])
                if xq[i, fi] <= trees[t, v, 1]:
                    v = 2 * v + 1
                else:
                    v = 2 * v + 2
            acc += nu * trees[t, v, 2]
        out[i] = acc
    return out


def boost_fit_numpy(x, order, y, n_rounds, max_depth, nu, min_leaf):
    """Vectorized twin of the loop kernel. Same splits, same bits."""
    m, d = x.shape
    n_nodes = (1 << (max_depth + 1)) - 1
    trees = np.zeros((n_rounds, n_nodes, 3))
    order0 = order[0]
    base = float(np.cumsum(y)[-1] / m)
    fcur = np.full(m, base)
    rows = np.arange(m)
    for t in range(n_rounds):
        r = y - fcur
        node = np.zeros(m, np.int64)
        tree = trees[t]
        tree[:, 0] = -2.0
        tree[:, 1] = 0.0
        tree[:, 2] = 0.0
        for level in range(max_depth + 1):
            lo = (1 << level) - 1
            hi = (1 << (level + 1)) - 2
            nperm0 = node[order0]
            in_level = (nperm0 >= lo) & (nperm0 <= hi)
            tot_cnt = np.zeros(n_nodes, np.int64)
            tot_sum = np.zeros(n_nodes)
            # add.at accumulates element by element in scan order
            np.add.at(tot_cnt, nperm0[in_level], 1)
            np.add.at(tot_sum, nperm0[in_level], r[order0][in_level])
            active = [v for v in range(lo, hi + 1) if tot_cnt[v] > 0]
            if level == max_depth:
                for v in active:
                    tree[v, 0] = -1.0
                    tree[v, 2] = tot_sum[v] / tot_cnt[v]
                continue
            for v in active:
                best_g = tot_sum[v] * tot_sum[v] / tot_cnt[v]
                best_f = -1
                best_t = 0.0
                mm = int(tot_cnt[v])
                if mm >= 2 * min_leaf:
                    for fidx in range(d):
                        perm = order[fidx]
                        sel = perm[node[perm] == v]
                        xs = x[sel, fidx]
                        cl = np.arange(1, mm, dtype=np.float64)
                        valid = (
                            (xs[1:] > xs[:-1])
                            & (cl >= min_leaf)
                            & (mm - cl >= min_leaf)
                        )
                        if not valid.any():
                            continue
                        sl = np.cumsum(r[sel])[:-1]
                        sr = tot_sum[v] - sl
                        gains = np.where(
                            valid, sl * sl / cl + sr * sr / (mm - cl), -np.inf
                        )
                        j = int(np.argmax(gains))
                        if gains[j] > best_g:
                            best_g = gains[j]
                            best_f = fidx
                            best_t = 0.5 * (xs[j] + xs[j + 1])
                if best_f >= 0:
                    tree[v, 0] = best_f
                    tree[v, 1] = best_t
                else:
                    tree[v, 0] = -1.0
                    tree[v, 2] = tot_sum[v] / tot_cnt[v]
            featf = tree[node, 0]
            splitting = (node >= lo) & (node <= hi) & (featf >= 0.0)
            fidx_arr = featf.astype(np.int64)
            fidx_arr[fidx_arr < 0] = 0
            goes_left = x[rows, fidx_arr] <= tree[node, 1]
            node = np.where(
                splitting, np.where(goes_left, 2 * node + 1, 2 * node + 2), node
            )
        fcur = fcur + nu * tree[node, 2]
    return base, trees


def boost_predict_numpy(base, trees, nu, xq):
    """Vectorized twin of the loop prediction kernel."""
    nq = xq.shape[0]
    n_rounds, n_nodes, _ = trees.shape
    max_depth = (n_nodes + 1).bit_length() - 2
    out = np.full(nq, base)
    rows = np.arange(nq)
    for t in range(n_rounds):
        tree = trees[t]
        v = np.zeros(nq, np.int64)
        for _ in range(max_depth):
            featf = tree[v, 0]
            is_split = featf >= 0.0
            fidx = featf.astype(np.int64)
            fidx[fidx < 0] = 0
            goes_left = xq[rows, fidx] <= tree[v, 1]
            v = np.where(is_split, np.where(goes_left, 2 * v + 1, 2 * v + 2), v)
        out += nu * tree[v, 2]
    return out


if HAS_NUMBA:
    boost_fit_numba = njit(cache=True)(_fit_loops)
    boost_predict_numba = njit(cache=True)(_predict_loops)
else:  # pragma: no cover
    boost_fit_numba = None
    boost_predict_numba = None

if USING_NUMBA:
    boost_fit = boost_fit_numba
    boost_predict = boost_predict_numba
else:
    boost_fit = boost_fit_numpy
    boost_predict = boost_predict_numpy
