"""Compiled inner loops: tree routing, reward split scans, forest building.

Everything here is numba-jitted and operates on plain arrays. Callers own
all validation; kernels assume well-formed inputs. Trees are stored in
arena form: ``feature[node] < 0`` marks a leaf, otherwise ``threshold``,
``left`` and ``right`` describe the split (strict ``<`` goes left).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def route_to_leaf(X, feature, threshold, left, right):
    """Arena node id of the leaf each row of X is routed to (root at slot 0)."""
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True)
def best_split_scan(Xn, G, a_left, a_right, n_left, n_right, min_leaf):
    """Exact best (feature, threshold) for a node with fixed child subtrees.

    Rows sent left land in left-subtree leaf ``a_left[i]``, rows sent right
    in right-subtree leaf ``a_right[i]``; each leaf is re-solved to its
    best treatment (min column sum). A candidate is valid only when every
    leaf on both sides holds at least ``min_leaf`` rows. With
    ``n_left == n_right == 1`` this is the plain two-leaf split search.

    Returns (feature, threshold, cost); feature == -1 if no valid candidate.
    """
    m, p = Xn.shape
    T = G.shape[1]
    best_cost = np.inf
    best_feat = -1
    best_thr = 0.0
    left_sums = np.zeros((n_left, T))
    right_sums = np.zeros((n_right, T))
    left_counts = np.zeros(n_left, np.int64)
    right_counts = np.zeros(n_right, np.int64)
    left_min = np.zeros(n_left)
    right_min = np.zeros(n_right)
    for j in range(p):
        order = np.argsort(Xn[:, j])
        for l in range(n_left):
            left_counts[l] = 0
            left_min[l] = 0.0
            for t in range(T):
                left_sums[l, t] = 0.0
        for r in range(n_right):
            right_counts[r] = 0
            for t in range(T):
                right_sums[r, t] = 0.0
        for i in range(m):
            r = a_right[i]
            right_counts[r] += 1
            for t in range(T):
                right_sums[r, t] += G[i, t]
        total = 0.0
        invalid_left = 0
        for l in range(n_left):
            if left_counts[l] < min_leaf:
                invalid_left += 1
        invalid_right = 0
        for r in range(n_right):
            mn = np.inf
            for t in range(T):
                if right_sums[r, t] < mn:
                    mn = right_sums[r, t]
            right_min[r] = mn
            total += mn
            if right_counts[r] < min_leaf:
                invalid_right += 1
        for k in range(m - 1):
            i = order[k]
            l = a_left[i]
            r = a_right[i]
            total -= left_min[l] + right_min[r]
            mn = np.inf
            for t in range(T):
                left_sums[l, t] += G[i, t]
                if left_sums[l, t] < mn:
                    mn = left_sums[l, t]
            left_min[l] = mn
            mn = np.inf
            for t in range(T):
                right_sums[r, t] -= G[i, t]
                if right_sums[r, t] < mn:
                    mn = right_sums[r, t]
            right_min[r] = mn
            total += left_min[l] + right_min[r]
            left_counts[l] += 1
            if left_counts[l] == min_leaf:
                invalid_left -= 1
            right_counts[r] -= 1
            if right_counts[r] == min_leaf - 1:
                invalid_right += 1
            if invalid_left == 0 and invalid_right == 0:
                x_k = Xn[order[k], j]
                x_k1 = Xn[order[k + 1], j]
                if x_k < x_k1 and total < best_cost:
                    best_cost = total
                    best_feat = j
                    best_thr = 0.5 * (x_k + x_k1)
    return best_feat, best_thr, best_cost


@njit(cache=True)
def build_reg_tree(X, y, max_depth, min_leaf, mtry, bootstrap, seed):
    """Grow one variance-reduction CART on a bootstrap sample.

    Split candidates are midpoints between consecutive distinct values of
    each sampled feature; a node splits only if the best candidate strictly
    reduces the sum of squared errors.
    """
    np.random.seed(seed)
    n, p = X.shape
    idx = np.empty(n, np.int64)
    inbag = np.zeros(n, np.int64)
    if bootstrap:
        for i in range(n):
            r = np.random.randint(0, n)
            idx[i] = r
            inbag[r] += 1
    else:
        for i in range(n):
            idx[i] = i
            inbag[i] = 1
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    stack_node = np.empty(cap, np.int64)
    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    top = 1
    n_nodes = 1
    feat_buf = np.empty(p, np.int64)
    xv = np.empty(n)
    tmp = np.empty(n, np.int64)
    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        m = end - start
        s_tot = 0.0
        ss_tot = 0.0
        for k in range(start, end):
            v = y[idx[k]]
            s_tot += v
            ss_tot += v * v
        value[node] = s_tot / m
        if depth >= max_depth or m < 2 * min_leaf:
            continue
        parent_sse = ss_tot - s_tot * s_tot / m
        if parent_sse <= 0.0:
            continue
        for j in range(p):
            feat_buf[j] = j
        best_sse = parent_sse
        best_feat = -1
        best_thr = 0.0
        for c in range(mtry):
            swap_at = c + np.random.randint(0, p - c)
            fj = feat_buf[swap_at]
            feat_buf[swap_at] = feat_buf[c]
            feat_buf[c] = fj
            for k in range(m):
                xv[k] = X[idx[start + k], fj]
            order = np.argsort(xv[:m])
            s_left = 0.0
            ss_left = 0.0
            for k in range(m - 1):
                v = y[idx[start + order[k]]]
                s_left += v
                ss_left += v * v
                nl = k + 1
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                x_k = xv[order[k]]
                x_k1 = xv[order[k + 1]]
                if x_k < x_k1:
                    s_r = s_tot - s_left
                    sse = (ss_left - s_left * s_left / nl) + (ss_tot - ss_left - s_r * s_r / nr)
                    if sse < best_sse:
                        best_sse = sse
                        best_feat = fj
                        best_thr = 0.5 * (x_k + x_k1)
        if best_feat < 0:
            continue
        nl = 0
        for k in range(start, end):
            if X[idx[k], best_feat] < best_thr:
                tmp[nl] = idx[k]
                nl += 1
        nr = nl
        for k in range(start, end):
            if not (X[idx[k], best_feat] < best_thr):
                tmp[nr] = idx[k]
                nr += 1
        for k in range(m):
            idx[start + k] = tmp[k]
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid
        stack_node[top] = lid
        stack_start[top] = start
        stack_end[top] = start + nl
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = rid
        stack_start[top] = start + nl
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        inbag,
    )


@njit(cache=True)
def build_clf_tree(X, labels, K, max_depth, min_leaf, mtry, bootstrap, seed):
    """Grow one Gini CART; leaves store class-frequency vectors."""
    np.random.seed(seed)
    n, p = X.shape
    idx = np.empty(n, np.int64)
    inbag = np.zeros(n, np.int64)
    if bootstrap:
        for i in range(n):
            r = np.random.randint(0, n)
            idx[i] = r
            inbag[r] += 1
    else:
        for i in range(n):
            idx[i] = i
            inbag[i] = 1
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    probs = np.zeros((cap, K))
    stack_node = np.empty(cap, np.int64)
    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    top = 1
    n_nodes = 1
    feat_buf = np.empty(p, np.int64)
    xv = np.empty(n)
    tmp = np.empty(n, np.int64)
    counts = np.empty(K, np.int64)
    left_counts = np.empty(K, np.int64)
    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        m = end - start
        for c in range(K):
            counts[c] = 0
        for k in range(start, end):
            counts[labels[idx[k]]] += 1
        sq_tot = 0
        pure = False
        for c in range(K):
            probs[node, c] = counts[c] / m
            sq_tot += counts[c] * counts[c]
            if counts[c] == m:
                pure = True
        if pure or depth >= max_depth or m < 2 * min_leaf:
            continue
        for j in range(p):
            feat_buf[j] = j
        # maximizing sum-of-squares ratio is minimizing weighted Gini impurity
        best_q = sq_tot / m
        best_feat = -1
        best_thr = 0.0
        for c in range(mtry):
            swap_at = c + np.random.randint(0, p - c)
            fj = feat_buf[swap_at]
            feat_buf[swap_at] = feat_buf[c]
            feat_buf[c] = fj
            for k in range(m):
                xv[k] = X[idx[start + k], fj]
            order = np.argsort(xv[:m])
            for cc in range(K):
                left_counts[cc] = 0
            sq_left = 0
            sq_right = sq_tot
            for k in range(m - 1):
                lab = labels[idx[start + order[k]]]
                rc = counts[lab] - left_counts[lab]
                sq_left += 2 * left_counts[lab] + 1
                sq_right -= 2 * rc - 1
                left_counts[lab] += 1
                nl = k + 1
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                x_k = xv[order[k]]
                x_k1 = xv[order[k + 1]]
                if x_k < x_k1:
                    q = sq_left / nl + sq_right / nr
                    if q > best_q:
                        best_q = q
                        best_feat = fj
                        best_thr = 0.5 * (x_k + x_k1)
        if best_feat < 0:
            continue
        nl = 0
        for k in range(start, end):
            if X[idx[k], best_feat] < best_thr:
                tmp[nl] = idx[k]
                nl += 1
        nr = nl
        for k in range(start, end):
            if not (X[idx[k], best_feat] < best_thr):
                tmp[nr] = idx[k]
                nr += 1
        for k in range(m):
            idx[start + k] = tmp[k]
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid
        stack_node[top] = lid
        stack_start[top] = start
        stack_end[top] = start + nl
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = rid
        stack_start[top] = start + nl
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        probs[:n_nodes].copy(),
        inbag,
    )


@njit(cache=True)
def forest_predict_reg(X, feature, threshold, left, right, value, roots):
    n = X.shape[0]
    out = np.zeros(n)
    for s in range(roots.shape[0]):
        root = roots[s]
        for i in range(n):
            node = root
            while feature[node] >= 0:
                if X[i, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] += value[node]
    return out / roots.shape[0]


@njit(cache=True)
def forest_predict_clf(X, feature, threshold, left, right, probs, roots, K):
    n = X.shape[0]
    out = np.zeros((n, K))
    for s in range(roots.shape[0]):
        root = roots[s]
        for i in range(n):
            node = root
            while feature[node] >= 0:
                if X[i, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            for c in range(K):
                out[i, c] += probs[node, c]
    return out / roots.shape[0]


def warmup():
    """Force compilation of every kernel on tiny inputs (one-time JIT cost)."""
    X = np.array([[0.0, 1.0], [1.0, 0.0], [2.0, 1.0], [3.0, 0.0]])
    G = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    zeros = np.zeros(4, np.int64)
    best_split_scan(X, G, zeros, zeros, 1, 1, 1)
    y = np.array([0.0, 1.0, 0.0, 1.0])
    lab = np.array([0, 1, 0, 1], np.int64)
    f, t, l, r, v, _ = build_reg_tree(X, y, 2, 1, 2, True, 1)
    forest_predict_reg(X, f, t, l, r, v, np.zeros(1, np.int64))
    f, t, l, r, pr, _ = build_clf_tree(X, lab, 2, 2, 1, 2, True, 1)
    forest_predict_clf(X, f, t, l, r, pr, np.zeros(1, np.int64), 2)
    route_to_leaf(X, np.array([-1], np.int64), np.zeros(1), np.array([-1], np.int64), np.array([-1], np.int64))
