"""Compiled CART kernels shared by the forest regressors and classifiers.

Trees are stored flat: every array is indexed by node id and ``left < 0``
marks a leaf.  Regression leaves hold the in-bag mean in ``value``;
classification leaves hold the majority class in ``value`` and the class
frequencies in ``dist``.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _node_is_pure(y, idx, start, end):
    first = y[idx[start]]
    for k in range(start + 1, end):
        if y[idx[k]] != first:
            return False
    return True


@njit(cache=True, nogil=True)
def build_tree(X, y, n_classes, mtry, min_leaf, seed):
    """Grow one tree on a bootstrap resample of the rows of ``X``.

    ``n_classes == 0`` selects regression (variance reduction), otherwise
    classification with the Gini criterion and ``y`` holding class codes.
    Returns the node arrays and the per-row in-bag counts.
    """
    np.random.seed(seed)
    n, d = X.shape

    counts = np.zeros(n, dtype=np.int64)
    idx = np.empty(n, dtype=np.int64)
    for k in range(n):
        j = np.random.randint(0, n)
        idx[k] = j
        counts[j] += 1

    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    n_out = max(n_classes, 1)
    dist = np.zeros((cap, n_out))

    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    top = 1
    n_nodes = 1

    features = np.arange(d)
    vals = np.empty(n)
    ys = np.empty(n)
    cls_left = np.zeros(n_out)
    cls_total = np.zeros(n_out)

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        m = end - start

        # leaf summary
        if n_classes == 0:
            s = 0.0
            for k in range(start, end):
                s += y[idx[k]]
            value[node] = s / m
        else:
            cls_total[:] = 0.0
            for k in range(start, end):
                cls_total[int(y[idx[k]])] += 1.0
            best_c = 0
            for c in range(n_classes):
                dist[node, c] = cls_total[c] / m
                if cls_total[c] > cls_total[best_c]:
                    best_c = c
            value[node] = best_c

        if m < 2 * min_leaf or _node_is_pure(y, idx, start, end):
            continue

        if n_classes == 0:
            tot = 0.0
            for k in range(start, end):
                tot += y[idx[k]]
            parent_score = tot * tot / m
        else:
            parent_score = 0.0
            for c in range(n_classes):
                parent_score += cls_total[c] * cls_total[c]
            parent_score /= m

        best_score = parent_score
        best_feat = -1
        best_thr = 0.0

        # visit features in random order until mtry non-constant ones are seen
        visited = 0
        remaining = d
        while remaining > 0 and visited < mtry:
            r = np.random.randint(0, remaining)
            f = features[r]
            features[r] = features[remaining - 1]
            features[remaining - 1] = f
            remaining -= 1

            for k in range(m):
                vals[k] = X[idx[start + k], f]
            order = np.argsort(vals[:m], kind="mergesort")
            if vals[order[0]] == vals[order[m - 1]]:
                continue
            visited += 1
            for k in range(m):
                ys[k] = y[idx[start + order[k]]]

            if n_classes == 0:
                left_sum = 0.0
                for i in range(1, m):
                    left_sum += ys[i - 1]
                    if i < min_leaf or m - i < min_leaf:
                        continue
                    a = vals[order[i - 1]]
                    b = vals[order[i]]
                    if a == b:
                        continue
                    right_sum = tot - left_sum
                    score = left_sum * left_sum / i + right_sum * right_sum / (m - i)
                    if score > best_score * (1.0 + 1e-12) + 1e-300:
                        best_score = score
                        best_feat = f
                        thr = 0.5 * (a + b)
                        best_thr = a if thr >= b else thr
            else:
                cls_left[:] = 0.0
                for i in range(1, m):
                    cls_left[int(ys[i - 1])] += 1.0
                    if i < min_leaf or m - i < min_leaf:
                        continue
                    a = vals[order[i - 1]]
                    b = vals[order[i]]
                    if a == b:
                        continue
                    sl = 0.0
                    sr = 0.0
                    for c in range(n_classes):
                        sl += cls_left[c] * cls_left[c]
                        rc = cls_total[c] - cls_left[c]
                        sr += rc * rc
                    score = sl / i + sr / (m - i)
                    if score > best_score * (1.0 + 1e-12) + 1e-300:
                        best_score = score
                        best_feat = f
                        thr = 0.5 * (a + b)
                        best_thr = a if thr >= b else thr

        if best_feat < 0:
            continue

        # partition idx[start:end] in place
        i = start
        j = end - 1
        while i <= j:
            if X[idx[i], best_feat] <= best_thr:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        mid = i

        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top] = n_nodes
        stack_start[top] = start
        stack_end[top] = mid
        top += 1
        stack_node[top] = n_nodes + 1
        stack_start[top] = mid
        stack_end[top] = end
        top += 1
        n_nodes += 2

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        dist[:n_nodes].copy(),
        counts,
    )


@njit(cache=True, nogil=True)
def apply_forest(X, roots, feature, threshold, left, right):
    """Leaf (absolute node id) reached by every row in every tree."""
    n = X.shape[0]
    T = roots.shape[0]
    out = np.empty((n, T), dtype=np.int64)
    for t in range(T):
        for i in range(n):
            node = roots[t]
            while left[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i, t] = node
    return out


@njit(cache=True, nogil=True)
def quantile_weights_query(leaves_query, leaf_members_ptr, leaf_members, leaf_weight,
                           mask, n_train):
    """Accumulate forest weights over training rows for every query row.

    ``leaf_members`` lists, per leaf node, the in-bag training rows (CSR via
    ``leaf_members_ptr``) with normalised weights in ``leaf_weight``.  Trees
    where ``mask[q, t]`` is False are skipped for query ``q``.
    """
    m, T = leaves_query.shape
    W = np.zeros((m, n_train))
    for q in range(m):
        used = 0
        for t in range(T):
            if not mask[q, t]:
                continue
            used += 1
            leaf = leaves_query[q, t]
            for k in range(leaf_members_ptr[leaf], leaf_members_ptr[leaf + 1]):
                W[q, leaf_members[k]] += leaf_weight[k]
        if used > 0:
            for i in range(n_train):
                W[q, i] /= used
    return W


@njit(cache=True, nogil=True)
def weighted_quantiles(W, y_sorted, order, probs):
    """Lower weighted quantiles ``inf{v : F(v) >= p}`` for each row of ``W``."""
    m = W.shape[0]
    n = y_sorted.shape[0]
    k = probs.shape[0]
    out = np.empty((m, k))
    for q in range(m):
        total = 0.0
        for i in range(n):
            total += W[q, order[i]]
        for j in range(k):
            target = probs[j] * total
            acc = 0.0
            res = y_sorted[n - 1]
            for i in range(n):
                acc += W[q, order[i]]
                if acc >= target * (1.0 - 1e-12) and W[q, order[i]] > 0.0:
                    res = y_sorted[i]
                    break
            out[q, j] = res
    return out
