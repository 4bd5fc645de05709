"""Compiled inner loops for max-flow and discrete energy minimization.

Energies are minimized: ``E(y) = sum_i U[i, y_i] + sum_e P[e, y_i, y_j]``.
Flow networks store arcs in pairs; arc ``a ^ 1`` is the residual twin of
arc ``a``.
"""
import numpy as np
from numba import njit

_INF = np.inf


@njit(cache=True, nogil=True)
def energy(unary, pairwise, edges, labels):
    e = 0.0
    for i in range(unary.shape[0]):
        e += unary[i, labels[i]]
    for k in range(edges.shape[0]):
        e += pairwise[k, labels[edges[k, 0]], labels[edges[k, 1]]]
    return e


@njit(cache=True, nogil=True)
def _reach(n, start, adj, heads, cap, eps, root, reverse):
    # nodes reachable from root in the residual graph (or reaching root if reverse)
    seen = np.zeros(n, np.bool_)
    queue = np.empty(n, np.int64)
    seen[root] = True
    queue[0] = root
    qh, qt = 0, 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for k in range(start[u], start[u + 1]):
            a = adj[k]
            v = heads[a]
            r = cap[a ^ 1] if reverse else cap[a]
            if not seen[v] and r > eps:
                seen[v] = True
                queue[qt] = v
                qt += 1
    return seen


@njit(cache=True, nogil=True)
def max_flow(n, tails, heads, cap, s, t):
    """Dinic's algorithm.  ``cap`` is overwritten with residual capacities.

    Returns the flow value, the residual threshold used and the CSR
    adjacency ``(start, adj)`` for follow-up reachability queries.
    """
    m = tails.shape[0]
    start = np.zeros(n + 1, np.int64)
    for a in range(m):
        start[tails[a] + 1] += 1
    for i in range(n):
        start[i + 1] += start[i]
    fill = start[:n].copy()
    adj = np.empty(m, np.int64)
    for a in range(m):
        u = tails[a]
        adj[fill[u]] = a
        fill[u] += 1

    cmax = 0.0
    for a in range(m):
        if cap[a] > cmax:
            cmax = cap[a]
    eps = 1e-12 * cmax

    level = np.empty(n, np.int64)
    it = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    path = np.empty(n, np.int64)
    flow = 0.0
    while True:
        for i in range(n):
            level[i] = -1
        level[s] = 0
        queue[0] = s
        qh, qt = 0, 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            for k in range(start[u], start[u + 1]):
                a = adj[k]
                v = heads[a]
                if level[v] < 0 and cap[a] > eps:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[t] < 0:
            break
        for i in range(n):
            it[i] = start[i]
        while True:
            top = 0
            u = s
            pushed = 0.0
            while True:
                if u == t:
                    b = _INF
                    for q in range(top):
                        if cap[path[q]] < b:
                            b = cap[path[q]]
                    for q in range(top):
                        a = path[q]
                        cap[a] -= b
                        cap[a ^ 1] += b
                    pushed = b
                    break
                advanced = False
                while it[u] < start[u + 1]:
                    a = adj[it[u]]
                    v = heads[a]
                    if cap[a] > eps and level[v] == level[u] + 1:
                        path[top] = a
                        top += 1
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    if u == s:
                        break
                    level[u] = -1
                    top -= 1
                    u = tails[path[top]]
                    it[u] += 1
            if pushed <= 0.0:
                break
            flow += pushed
    return flow, eps, start, adj


@njit(cache=True, nogil=True)
def source_side(n, tails, heads, cap, s, t):
    flow, eps, start, adj = max_flow(n, tails, heads, cap, s, t)
    return flow, _reach(n, start, adj, heads, cap, eps, s, False)


@njit(cache=True, nogil=True)
def expansion_move(unary, pairwise, edges, labels, alpha):
    """Best keep-or-switch-to-alpha labeling under the (truncated) binary energy.

    Binary variable x_i = 1 means node i switches to ``alpha``.  Pairwise
    terms violating submodularity get their (1, 0) entry raised until
    ``E01 + E10 == E00 + E11``.  Nodes not forced to switch keep their label.
    """
    V = unary.shape[0]
    E = edges.shape[0]
    n = V + 2
    s = V
    t = V + 1
    m = 2 * (V + E)
    tails = np.empty(m, np.int64)
    heads = np.empty(m, np.int64)
    cap = np.zeros(m)
    coef = np.empty(V)
    for i in range(V):
        coef[i] = unary[i, alpha] - unary[i, labels[i]]
    for k in range(E):
        i = edges[k, 0]
        j = edges[k, 1]
        li = labels[i]
        lj = labels[j]
        A = pairwise[k, li, lj]
        B = pairwise[k, li, alpha]
        C = pairwise[k, alpha, lj]
        D = pairwise[k, alpha, alpha]
        w = B + C - A - D
        if w < 0.0:
            C = C - w
            w = 0.0
        coef[i] += C - A
        coef[j] += D - C
        a = 2 * (V + k)
        tails[a] = i
        heads[a] = j
        cap[a] = w
        tails[a + 1] = j
        heads[a + 1] = i
    for i in range(V):
        a = 2 * i
        if coef[i] > 0.0:
            tails[a] = s
            heads[a] = i
            cap[a] = coef[i]
        else:
            tails[a] = i
            heads[a] = t
            cap[a] = -coef[i]
        tails[a + 1] = heads[a]
        heads[a + 1] = tails[a]
    flow, eps, start, adj = max_flow(n, tails, heads, cap, s, t)
    # sink side = nodes that can still reach t: the smallest set of switches
    to_sink = _reach(n, start, adj, heads, cap, eps, t, True)
    out = labels.copy()
    for i in range(V):
        if to_sink[i]:
            out[i] = alpha
    return out


@njit(cache=True, nogil=True)
def alpha_expansion(unary, pairwise, edges, labels, max_sweeps, trace):
    """Sweeps of expansion moves in ascending label order.

    A move is accepted only if the true energy strictly decreases.  ``trace``
    receives the energy of the initial labeling and after every accepted
    move; the number of entries written is returned.
    """
    L = unary.shape[1]
    labels = labels.copy()
    cur = energy(unary, pairwise, edges, labels)
    trace[0] = cur
    nt = 1
    for _ in range(max_sweeps):
        improved = False
        for alpha in range(L):
            proposal = expansion_move(unary, pairwise, edges, labels, alpha)
            e_new = energy(unary, pairwise, edges, proposal)
            if e_new < cur:
                labels = proposal
                cur = e_new
                improved = True
                trace[nt] = cur
                nt += 1
        if not improved:
            break
    return labels, nt


@njit(cache=True, nogil=True)
def enumerate_min(unary, pairwise, edges):
    """Exhaustive minimizer; visits labelings in lexicographic order, first minimum wins."""
    V, L = unary.shape
    labels = np.zeros(V, np.int64)
    best = labels.copy()
    best_e = energy(unary, pairwise, edges, labels)
    while True:
        # increment the mixed-radix counter, last node least significant
        k = V - 1
        while k >= 0 and labels[k] == L - 1:
            labels[k] = 0
            k -= 1
        if k < 0:
            break
        labels[k] += 1
        e = energy(unary, pairwise, edges, labels)
        if e < best_e:
            best_e = e
            best[:] = labels
    return best


@njit(cache=True, nogil=True)
def icm(unary, pairwise, edges, labels, max_sweeps):
    V, L = unary.shape
    E = edges.shape[0]
    labels = labels.copy()
    # incidence lists
    deg = np.zeros(V + 1, np.int64)
    for k in range(E):
        deg[edges[k, 0] + 1] += 1
        deg[edges[k, 1] + 1] += 1
    for i in range(V):
        deg[i + 1] += deg[i]
    fill = deg[:V].copy()
    inc = np.empty(2 * E, np.int64)
    for k in range(E):
        for end in range(2):
            u = edges[k, end]
            inc[fill[u]] = k
            fill[u] += 1
    local = np.empty(L)
    for _ in range(max_sweeps):
        changed = False
        for i in range(V):
            for m in range(L):
                c = unary[i, m]
                for q in range(deg[i], deg[i + 1]):
                    k = inc[q]
                    if edges[k, 0] == i:
                        c += pairwise[k, m, labels[edges[k, 1]]]
                    else:
                        c += pairwise[k, labels[edges[k, 0]], m]
                local[m] = c
            best = labels[i]
            for m in range(L):
                if local[m] < local[best]:
                    best = m
            if best != labels[i]:
                labels[i] = best
                changed = True
        if not changed:
            break
    return labels
