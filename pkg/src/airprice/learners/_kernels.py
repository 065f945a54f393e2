"""Compiled CART kernels.

Trees are grown over presorted position lists: for every feature, ``order[f]``
holds sample positions sorted by that feature (with ``xs[f]`` / ``yv[f]``
carrying the matching values and targets), and each node owns the same
``[start, end)`` segment in every row. A split stably partitions all rows of
the segment, so no re-sorting happens below the root.

Gain is the per-sample impurity decrease. With node-centred sums it reduces to
``(S_l^2/n_l + S_r^2/n_r - S^2/n) / n`` for variance and
``(sum c_l^2/n_l + sum c_r^2/n_r - sum c^2/n) / n`` for Gini.
"""

import numpy as np
from numba import njit

# relative slack under which two gains count as tied
REL_TIE = 1e-9
# splits must beat this fraction of the parent impurity
MIN_GAIN_FRAC = 1e-12

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def _next_u64(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _randbelow(state, n):
    return np.int64(_next_u64(state) % np.uint64(n))


@njit(cache=True)
def _midpoint(a, b):
    t = 0.5 * (a + b)
    if t >= b or t < a:
        t = a
    return t


@njit(cache=True)
def _better(gain, best_gain, found):
    if not found:
        return gain > best_gain
    return gain > best_gain * (1.0 + REL_TIE)


@njit(cache=True)
def _reciprocals(m):
    inv = np.zeros(m + 1)
    for k in range(1, m + 1):
        inv[k] = 1.0 / k
    return inv


@njit(cache=True)
def _scan_regression(xs, yv, inv, f, start, end, mean, s_tot, msl,
                     best_gain, best_thr, best_feat, best_nleft, found):
    n = end - start
    base = s_tot * s_tot / n
    s_l = 0.0
    for i in range(start, end - 1):
        s_l += yv[f, i] - mean
        x_i = xs[f, i]
        x_next = xs[f, i + 1]
        if x_next <= x_i:
            continue
        n_l = i + 1 - start
        n_r = n - n_l
        if n_l < msl or n_r < msl:
            continue
        s_r = s_tot - s_l
        gain = (s_l * s_l * inv[n_l] + s_r * s_r * inv[n_r] - base) * inv[n]
        if _better(gain, best_gain, found):
            best_gain = gain
            best_thr = _midpoint(x_i, x_next)
            best_feat = f
            best_nleft = n_l
            found = True
    return best_gain, best_thr, best_feat, best_nleft, found


@njit(cache=True)
def _scan_classification(xs, yc, inv, f, start, end, parent_counts, sq_tot, msl,
                         left_counts, best_gain, best_thr, best_feat, best_nleft, found):
    n = end - start
    n_classes = parent_counts.shape[0]
    for c in range(n_classes):
        left_counts[c] = 0.0
    sq_l = 0.0
    sq_r = sq_tot
    base = sq_tot / n
    for i in range(start, end - 1):
        c = yc[f, i]
        cl = left_counts[c]
        cr = parent_counts[c] - cl
        sq_l += 2.0 * cl + 1.0
        sq_r -= 2.0 * cr - 1.0
        left_counts[c] = cl + 1.0
        x_i = xs[f, i]
        x_next = xs[f, i + 1]
        if x_next <= x_i:
            continue
        n_l = i + 1 - start
        n_r = n - n_l
        if n_l < msl or n_r < msl:
            continue
        gain = (sq_l * inv[n_l] + sq_r * inv[n_r] - base) * inv[n]
        if _better(gain, best_gain, found):
            best_gain = gain
            best_thr = _midpoint(x_i, x_next)
            best_feat = f
            best_nleft = n_l
            found = True
    return best_gain, best_thr, best_feat, best_nleft, found


@njit(cache=True)
def _node_stats_regression(yv, start, end):
    n = end - start
    total = 0.0
    lo = np.inf
    hi = -np.inf
    for i in range(start, end):
        v = yv[0, i]
        total += v
        if v < lo:
            lo = v
        if v > hi:
            hi = v
    mean = total / n
    s_tot = 0.0
    ss = 0.0
    for i in range(start, end):
        d = yv[0, i] - mean
        s_tot += d
        ss += d * d
    impurity = ss / n - (s_tot / n) ** 2
    if lo == hi:
        impurity = 0.0
    return mean, s_tot, max(impurity, 0.0)


@njit(cache=True)
def _node_stats_classification(yc, start, end, counts):
    for c in range(counts.shape[0]):
        counts[c] = 0.0
    for i in range(start, end):
        counts[yc[0, i]] += 1.0
    n = end - start
    sq = 0.0
    pure = False
    for c in range(counts.shape[0]):
        sq += counts[c] * counts[c]
        if counts[c] == n:
            pure = True
    impurity = 0.0 if pure else 1.0 - sq / (n * n)
    return sq, impurity


@njit(cache=True)
def _partition(order, xs, ys, goes_left, f, start, end, buf_o, buf_x, buf_y):
    """Stable partition of one feature's segment: left-goers first."""
    a = start
    b = 0
    for i in range(start, end):
        pos = order[f, i]
        x = xs[f, i]
        yy = ys[f, i]
        # branchless: write both sides, advance one cursor
        order[f, a] = pos
        xs[f, a] = x
        ys[f, a] = yy
        buf_o[b] = pos
        buf_x[b] = x
        buf_y[b] = yy
        g = np.int64(goes_left[pos])
        a += g
        b += 1 - g
    for i in range(b):
        order[f, a + i] = buf_o[i]
        xs[f, a + i] = buf_x[i]
        ys[f, a + i] = buf_y[i]


@njit(cache=True)
def _layout(X, y, yc, sorted_rows, counts):
    """Per-feature sorted copies (values, targets, positions) of the expanded sample."""
    n_rows, p = X.shape
    m = 0
    for r in range(n_rows):
        m += counts[r]
    pos_start = np.empty(n_rows, np.int64)
    k = 0
    for r in range(n_rows):
        pos_start[r] = k
        k += counts[r]
    pos_row = np.empty(m, np.int64)
    for r in range(n_rows):
        for c in range(counts[r]):
            pos_row[pos_start[r] + c] = r
    order = np.empty((p, m), np.int64)
    xs = np.empty((p, m))
    yv = np.empty((p, m))
    ycs = np.empty((p, m), np.int64)
    for f in range(p):
        k = 0
        for t in range(n_rows):
            r = sorted_rows[f, t]
            for c in range(counts[r]):
                order[f, k] = pos_start[r] + c
                xs[f, k] = X[r, f]
                yv[f, k] = y[r]
                ycs[f, k] = yc[r]
                k += 1
    return m, pos_row, order, xs, yv, ycs


@njit(cache=True)
def best_split_kernel(X, y, yc, n_classes, sorted_rows, features, msl):
    """Best split over ``features`` for the full sample (one node)."""
    n = X.shape[0]
    counts1 = np.ones(n, np.int64)
    m, pos_row, order, xs, yv, ycs = _layout(X, y, yc, sorted_rows, counts1)
    inv = _reciprocals(m)
    found = False
    best_thr = 0.0
    best_feat = -1
    best_nleft = 0
    if n_classes == 0:
        mean, s_tot, impurity = _node_stats_regression(yv, 0, n)
        best_gain = MIN_GAIN_FRAC * impurity
        if impurity > 0.0:
            for j in range(features.shape[0]):
                best_gain, best_thr, best_feat, best_nleft, found = _scan_regression(
                    xs, yv, inv, features[j], 0, n, mean, s_tot, msl,
                    best_gain, best_thr, best_feat, best_nleft, found)
    else:
        counts = np.zeros(n_classes)
        left = np.zeros(n_classes)
        sq, impurity = _node_stats_classification(ycs, 0, n, counts)
        best_gain = MIN_GAIN_FRAC * impurity
        if impurity > 0.0:
            for j in range(features.shape[0]):
                best_gain, best_thr, best_feat, best_nleft, found = _scan_classification(
                    xs, ycs, inv, features[j], 0, n, counts, sq, msl, left,
                    best_gain, best_thr, best_feat, best_nleft, found)
    return found, best_feat, best_thr, best_gain


@njit(cache=True)
def grow_tree(X, y, yc, n_classes, sorted_rows, counts, max_depth, min_samples_split,
              min_samples_leaf, m_features, seed):
    """Grow one CART tree on the rows of X weighted by integer ``counts``.

    ``sorted_rows[f]`` lists the rows of X in ascending order of feature f.
    Returns flat node arrays; ``left == -1`` marks a leaf.
    """
    p = X.shape[1]
    m, pos_row, order, xs, yv, ycs = _layout(X, y, yc, sorted_rows, counts)
    inv = _reciprocals(m)

    cap = max(2 * m - 1, 1)
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    n_samples = np.zeros(cap, np.int64)
    impurity_arr = np.zeros(cap)
    decrease = np.zeros(cap)
    value = np.zeros((cap, max(n_classes, 1)))

    state = np.empty(1, np.uint64)
    state[0] = seed
    perm = np.arange(p)
    subset = np.empty(m_features, np.int64)
    node_counts = np.zeros(max(n_classes, 1))
    left_counts = np.zeros(max(n_classes, 1))
    goes_left = np.zeros(m, np.bool_)
    buf_o = np.empty(m, np.int64)
    buf_x = np.empty(m)
    buf_y = np.empty(m)
    buf_c = np.empty(m, np.int64)

    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    stack_node = np.empty(cap, np.int64)
    stack_start[0] = 0
    stack_end[0] = m
    stack_depth[0] = 0
    stack_node[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        node = stack_node[top]
        n = end - start
        n_samples[node] = n

        if n_classes == 0:
            mean, s_tot, imp = _node_stats_regression(yv, start, end)
            value[node, 0] = mean
            sq = 0.0
        else:
            sq, imp = _node_stats_classification(ycs, start, end, node_counts)
            for c in range(n_classes):
                value[node, c] = node_counts[c]
            mean = 0.0
            s_tot = 0.0
        impurity_arr[node] = imp

        if ((max_depth >= 0 and depth >= max_depth) or n < min_samples_split
                or n < 2 * min_samples_leaf or imp <= 0.0):
            continue

        # fresh feature subset for this node, scanned in ascending index order
        for j in range(p):
            perm[j] = j
        for j in range(m_features):
            s = j + _randbelow(state, p - j)
            tmp = perm[j]
            perm[j] = perm[s]
            perm[s] = tmp
        # insertion sort; m_features is small
        for j in range(m_features):
            v = perm[j]
            t = j
            while t > 0 and subset[t - 1] > v:
                subset[t] = subset[t - 1]
                t -= 1
            subset[t] = v

        found = False
        best_gain = MIN_GAIN_FRAC * imp
        best_thr = 0.0
        best_feat = -1
        best_nleft = 0
        for j in range(m_features):
            f = subset[j]
            if n_classes == 0:
                best_gain, best_thr, best_feat, best_nleft, found = _scan_regression(
                    xs, yv, inv, f, start, end, mean, s_tot, min_samples_leaf,
                    best_gain, best_thr, best_feat, best_nleft, found)
            else:
                best_gain, best_thr, best_feat, best_nleft, found = _scan_classification(
                    xs, ycs, inv, f, start, end, node_counts, sq, min_samples_leaf,
                    left_counts, best_gain, best_thr, best_feat, best_nleft, found)
        if not found:
            continue

        for i in range(start, end):
            goes_left[order[best_feat, i]] = xs[best_feat, i] <= best_thr
        for f in range(p):
            if n_classes == 0:
                _partition(order, xs, yv, goes_left, f, start, end, buf_o, buf_x, buf_y)
            else:
                _partition(order, xs, ycs, goes_left, f, start, end, buf_o, buf_x, buf_c)
        mid = start + best_nleft

        feature[node] = best_feat
        threshold[node] = best_thr
        decrease[node] = n * best_gain
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        # right pushed first so the left subtree is expanded first
        stack_start[top] = mid
        stack_end[top] = end
        stack_depth[top] = depth + 1
        stack_node[top] = rid
        top += 1
        stack_start[top] = start
        stack_end[top] = mid
        stack_depth[top] = depth + 1
        stack_node[top] = lid
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), n_samples[:n_nodes].copy(),
            impurity_arr[:n_nodes].copy(), decrease[:n_nodes].copy())


@njit(cache=True)
def apply_tree(X, feature, threshold, left, right):
    """Leaf index reached by each row of X."""
    out = np.empty(X.shape[0], np.int64)
    for i in range(X.shape[0]):
        node = 0
        while left[node] != -1:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
