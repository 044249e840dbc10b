"""Primal network simplex for uncapacitated min-cost flow (numba kernel).

The spanning-tree basis is rooted at an extra node joined to every node by an
artificial arc.  Phase one is the usual big-M method.  Phase two clamps the
(now empty) artificial arcs to zero capacity and zero cost, recomputes the
potentials without the big-M offset and re-optimizes with a tight tolerance.  Pivoting uses block search
over arcs in a fixed order and the strongly-feasible leaving-arc rule, which
makes the result a deterministic function of the input.
"""
import numpy as np
from numba import njit

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
PIVOT_LIMIT = 3


@njit(cache=True)
def _attach(x, p, first_child, next_sib, prev_sib):
    f = first_child[p]
    next_sib[x] = f
    prev_sib[x] = -1
    if f != -1:
        prev_sib[f] = x
    first_child[p] = x


@njit(cache=True)
def _detach(x, p, first_child, next_sib, prev_sib):
    if prev_sib[x] != -1:
        next_sib[prev_sib[x]] = next_sib[x]
    else:
        first_child[p] = next_sib[x]
    if next_sib[x] != -1:
        prev_sib[next_sib[x]] = prev_sib[x]


@njit(cache=True)
def _recompute(top, cc, parent, pred, up, pi, first_child, next_sib, stack):
    """Set potentials in the subtree of ``top`` from its parent and tree arcs."""
    stack[0] = top
    sp = 1
    while sp > 0:
        sp -= 1
        x = stack[sp]
        p = parent[x]
        e = pred[x]
        if up[x]:
            pi[x] = pi[p] - cc[e]
        else:
            pi[x] = pi[p] + cc[e]
        ch = first_child[x]
        while ch != -1:
            stack[sp] = ch
            sp += 1
            ch = next_sib[ch]


@njit(cache=True)
def _shift(top, skip, sigma, pi, first_child, next_sib, stack):
    """Add ``sigma`` to every potential in the subtree of ``top`` except below ``skip``."""
    stack[0] = top
    sp = 1
    while sp > 0:
        sp -= 1
        x = stack[sp]
        pi[x] += sigma
        ch = first_child[x]
        while ch != -1:
            if ch != skip:
                stack[sp] = ch
                sp += 1
            ch = next_sib[ch]


@njit(cache=True)
def _run(n_real_arcs, root, s, t, cc, cap, flow, state, parent, pred, up, succ, pi,
         first_child, next_sib, prev_sib, eps, max_pivots, stack, path, old_pred, old_up, old_succ):
    E = n_real_arcs
    inf = np.inf
    block = min(max(int(8 * np.sqrt(E)), 10), max(E, 1))
    next_arc = 0
    pivots = 0
    while True:
        # entering arc: block search in fixed cyclic arc order
        enter = -1
        min_rc = 0.0
        cnt = 0
        e = next_arc
        for _ in range(E):
            if state[e] == 1:
                rc = cc[e] + pi[s[e]] - pi[t[e]]
                if rc < min_rc:
                    min_rc = rc
                    enter = e
            cnt += 1
            e += 1
            if e == E:
                e = 0
            if cnt == block:
                if min_rc < -eps:
                    break
                cnt = 0
        if enter == -1 or min_rc >= -eps:
            return pivots
        next_arc = e
        if pivots >= max_pivots:
            return -2
        pivots += 1

        first = s[enter]
        second = t[enter]
        u = first
        v = second
        while u != v:
            if succ[u] < succ[v]:
                u = parent[u]
            else:
                v = parent[v]
        join = u

        delta = inf
        u_out = -1
        result = 0
        u = first
        while u != join:
            a = pred[u]
            d = flow[a] if up[u] else cap[a] - flow[a]
            if d < delta:
                delta = d
                u_out = u
                result = 1
            u = parent[u]
        u = second
        while u != join:
            a = pred[u]
            d = cap[a] - flow[a] if up[u] else flow[a]
            if d <= delta:
                delta = d
                u_out = u
                result = 2
            u = parent[u]
        if result == 0:
            return -1

        if delta > 0:
            flow[enter] += delta
            u = first
            while u != join:
                a = pred[u]
                if up[u]:
                    flow[a] -= delta
                else:
                    flow[a] += delta
                u = parent[u]
            u = second
            while u != join:
                a = pred[u]
                if up[u]:
                    flow[a] += delta
                else:
                    flow[a] -= delta
                u = parent[u]

        if result == 1:
            u_in = first
            v_in = second
        else:
            u_in = second
            v_in = first

        # potentials: the moved subtree shifts uniformly
        if s[enter] == u_in:
            sigma = pi[v_in] - cc[enter] - pi[u_in]
        else:
            sigma = pi[v_in] + cc[enter] - pi[u_in]
        size = succ[u_out]
        if 2 * size <= succ[root]:
            _shift(u_out, -1, sigma, pi, first_child, next_sib, stack)
        else:
            _shift(root, u_out, -sigma, pi, first_child, next_sib, stack)

        # subtree sizes above the cut and above the new attachment point
        x = parent[u_out]
        while x != join:
            succ[x] -= size
            x = parent[x]
        x = v_in
        while x != join:
            succ[x] += size
            x = parent[x]

        plen = 0
        x = u_in
        while True:
            path[plen] = x
            old_pred[plen] = pred[x]
            old_up[plen] = up[x]
            old_succ[plen] = succ[x]
            plen += 1
            if x == u_out:
                break
            x = parent[x]
        for i in range(plen):
            _detach(path[i], parent[path[i]], first_child, next_sib, prev_sib)
        leaving = old_pred[plen - 1]
        parent[u_in] = v_in
        pred[u_in] = enter
        up[u_in] = s[enter] == u_in
        succ[u_in] = size
        for i in range(1, plen):
            parent[path[i]] = path[i - 1]
            pred[path[i]] = old_pred[i - 1]
            up[path[i]] = not old_up[i - 1]
            succ[path[i]] = size - old_succ[i - 1]
        for i in range(plen):
            _attach(path[i], parent[path[i]], first_child, next_sib, prev_sib)
        state[enter] = 0
        state[leaving] = 1


@njit(cache=True)
def network_simplex(n, src, dst, cost, supply, eps, feas_tol, max_pivots):
    """Solve ``min sum cost*flow`` s.t. out-flow minus in-flow equals ``supply``.

    Returns ``(flow, pi, status, pivots)`` with reduced costs
    ``cost[e] + pi[src[e]] - pi[dst[e]] >= -eps`` at optimality.
    """
    E = src.shape[0]
    A = E + n
    root = n
    s = np.empty(A, np.int64)
    t = np.empty(A, np.int64)
    cc = np.zeros(A)
    cap = np.full(A, np.inf)
    flow = np.zeros(A)
    state = np.ones(A, np.int8)
    parent = np.full(n + 1, -1, np.int64)
    pred = np.full(n + 1, -1, np.int64)
    up = np.zeros(n + 1, np.bool_)
    succ = np.ones(n + 1, np.int64)
    pi = np.zeros(n + 1)
    first_child = np.full(n + 1, -1, np.int64)
    next_sib = np.full(n + 1, -1, np.int64)
    prev_sib = np.full(n + 1, -1, np.int64)
    stack = np.empty(n + 1, np.int64)
    path = np.empty(n + 1, np.int64)
    old_pred = np.empty(n + 1, np.int64)
    old_up = np.empty(n + 1, np.bool_)
    old_succ = np.empty(n + 1, np.int64)
    succ[root] = n + 1

    big_m = (np.abs(cost).max() + 1.0) * (n + 1) if E > 0 else 1.0
    for e in range(E):
        s[e] = src[e]
        t[e] = dst[e]
        cc[e] = cost[e]
    for u in range(n - 1, -1, -1):
        e = E + u
        state[e] = 0
        parent[u] = root
        pred[u] = e
        if supply[u] >= 0:
            s[e] = u
            t[e] = root
            flow[e] = supply[u]
            up[u] = True
            pi[u] = 0.0
        else:
            s[e] = root
            t[e] = u
            flow[e] = -supply[u]
            cc[e] = big_m
            pi[u] = big_m
        _attach(u, root, first_child, next_sib, prev_sib)

    # phase one: big-M; rounding in potentials of size big_m needs a looser tolerance
    piv1 = _run(E, root, s, t, cc, cap, flow, state, parent, pred, up, succ, pi,
                first_child, next_sib, prev_sib, max(eps, 1e-13 * big_m), max_pivots, stack, path, old_pred, old_up, old_succ)
    if piv1 < 0:
        return flow[:E], pi[:n], PIVOT_LIMIT, 0
    for e in range(E, A):
        if flow[e] > feas_tol:
            return flow[:E], pi[:n], INFEASIBLE, piv1
        flow[e] = 0.0
        cap[e] = 0.0
        cc[e] = 0.0
    pi[root] = 0.0
    x = first_child[root]
    while x != -1:
        _recompute(x, cc, parent, pred, up, pi, first_child, next_sib, stack)
        x = next_sib[x]

    piv2 = _run(E, root, s, t, cc, cap, flow, state, parent, pred, up, succ, pi,
                first_child, next_sib, prev_sib, eps, max_pivots, stack, path, old_pred, old_up, old_succ)
    if piv2 == -1:
        return flow[:E], pi[:n], UNBOUNDED, piv1
    if piv2 < 0:
        return flow[:E], pi[:n], PIVOT_LIMIT, piv1
    return flow[:E], pi[:n], OPTIMAL, piv1 + piv2
