"""Independent oracles for transport objectives.

Nothing here shares code with the solvers under test: the enumeration
oracle walks every basic feasible solution of the transportation
polytope by leaf elimination, the 1D oracle couples sorted quantiles,
and the cost oracle is a scalar loop.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

MAXN = 8  # supports up to 7 per side
MAXD = 2 * MAXN
MAXC = 2 * MAXN * MAXN


@njit(cache=True)
def _greedy_incumbent(cost, supply, demand):
    """Feasible upper bound: repeatedly ship on the cheapest live cell."""
    na = supply.shape[0]
    nb = demand.shape[0]
    s = supply.copy()
    d = demand.copy()
    live_r = np.ones(na, dtype=np.bool_)
    live_c = np.ones(nb, dtype=np.bool_)
    total = 0.0
    nr = na
    nc = nb
    while nr > 0 and nc > 0:
        bi = -1
        bj = -1
        bc = 1e300
        for i in range(na):
            if live_r[i]:
                for j in range(nb):
                    if live_c[j] and cost[i, j] < bc:
                        bc = cost[i, j]
                        bi = i
                        bj = j
        amt = s[bi] if s[bi] < d[bj] else d[bj]
        total += cost[bi, bj] * amt
        s[bi] -= amt
        d[bj] -= amt
        if s[bi] <= d[bj] and nr > 1:
            live_r[bi] = False
            nr -= 1
        else:
            live_c[bj] = False
            nc -= 1
    return total


@njit(cache=True)
def enum_min_transport_cost(cost, supply, demand):
    """Minimum objective over all vertices of the transportation polytope.

    Every basic feasible solution has a leaf (a row fully served by one
    column or vice versa); removing it leaves a basic solution of the
    reduced problem, so depth-first leaf elimination visits every vertex.
    Branches whose accumulated cost already meets the incumbent are cut,
    which is exact because ground costs are nonnegative.
    """
    na = supply.shape[0]
    nb = demand.shape[0]
    best = _greedy_incumbent(cost, supply, demand)

    sup_idx = np.empty((MAXD, MAXN), dtype=np.int64)
    sup_amt = np.empty((MAXD, MAXN), dtype=np.float64)
    dem_idx = np.empty((MAXD, MAXN), dtype=np.int64)
    dem_amt = np.empty((MAXD, MAXN), dtype=np.float64)
    ns = np.empty(MAXD, dtype=np.int64)
    nd = np.empty(MAXD, dtype=np.int64)
    acc = np.empty(MAXD, dtype=np.float64)
    cand_cost = np.empty((MAXD, MAXC), dtype=np.float64)
    cand_code = np.empty((MAXD, MAXC), dtype=np.int64)
    cand_n = np.empty(MAXD, dtype=np.int64)
    cand_pos = np.empty(MAXD, dtype=np.int64)

    for i in range(na):
        sup_idx[0, i] = i
        sup_amt[0, i] = supply[i]
    for j in range(nb):
        dem_idx[0, j] = j
        dem_amt[0, j] = demand[j]
    ns[0] = na
    nd[0] = nb
    acc[0] = 0.0
    cand_n[0] = -1
    lvl = 0
    while lvl >= 0:
        if cand_n[lvl] < 0:
            if acc[lvl] >= best:
                lvl -= 1
                continue
            if ns[lvl] == 1:
                tot = acc[lvl]
                i = sup_idx[lvl, 0]
                for jj in range(nd[lvl]):
                    tot += cost[i, dem_idx[lvl, jj]] * dem_amt[lvl, jj]
                if tot < best:
                    best = tot
                lvl -= 1
                continue
            if nd[lvl] == 1:
                tot = acc[lvl]
                j = dem_idx[lvl, 0]
                for ii in range(ns[lvl]):
                    tot += cost[sup_idx[lvl, ii], j] * sup_amt[lvl, ii]
                if tot < best:
                    best = tot
                lvl -= 1
                continue
            n = 0
            for ii in range(ns[lvl]):
                i = sup_idx[lvl, ii]
                si = sup_amt[lvl, ii]
                for jj in range(nd[lvl]):
                    j = dem_idx[lvl, jj]
                    dj = dem_amt[lvl, jj]
                    amt = si if si < dj else dj
                    c = cost[i, j] * amt
                    if si <= dj:
                        cand_cost[lvl, n] = c
                        cand_code[lvl, n] = (ii * MAXN + jj) * 2
                        n += 1
                    if dj <= si:
                        cand_cost[lvl, n] = c
                        cand_code[lvl, n] = (ii * MAXN + jj) * 2 + 1
                        n += 1
            # ascending immediate cost: good incumbents early, tighter cuts
            for x in range(1, n):
                ck = cand_cost[lvl, x]
                cd = cand_code[lvl, x]
                y = x - 1
                while y >= 0 and cand_cost[lvl, y] > ck:
                    cand_cost[lvl, y + 1] = cand_cost[lvl, y]
                    cand_code[lvl, y + 1] = cand_code[lvl, y]
                    y -= 1
                cand_cost[lvl, y + 1] = ck
                cand_code[lvl, y + 1] = cd
            cand_n[lvl] = n
            cand_pos[lvl] = 0
        p = cand_pos[lvl]
        if p >= cand_n[lvl] or acc[lvl] + cand_cost[lvl, p] >= best:
            lvl -= 1
            continue
        cand_pos[lvl] = p + 1
        code = cand_code[lvl, p]
        row_leaves = (code % 2) == 0
        jj = (code // 2) % MAXN
        ii = (code // 2) // MAXN
        nxt = lvl + 1
        si = sup_amt[lvl, ii]
        dj = dem_amt[lvl, jj]
        acc[nxt] = acc[lvl] + cand_cost[lvl, p]
        if row_leaves:
            k = 0
            for x in range(ns[lvl]):
                if x != ii:
                    sup_idx[nxt, k] = sup_idx[lvl, x]
                    sup_amt[nxt, k] = sup_amt[lvl, x]
                    k += 1
            ns[nxt] = k
            for x in range(nd[lvl]):
                dem_idx[nxt, x] = dem_idx[lvl, x]
                dem_amt[nxt, x] = dem_amt[lvl, x]
            dem_amt[nxt, jj] = dj - si
            nd[nxt] = nd[lvl]
        else:
            k = 0
            for x in range(nd[lvl]):
                if x != jj:
                    dem_idx[nxt, k] = dem_idx[lvl, x]
                    dem_amt[nxt, k] = dem_amt[lvl, x]
                    k += 1
            nd[nxt] = k
            for x in range(ns[lvl]):
                sup_idx[nxt, x] = sup_idx[lvl, x]
                sup_amt[nxt, x] = sup_amt[lvl, x]
            sup_amt[nxt, ii] = si - dj
            ns[nxt] = ns[lvl]
        cand_n[nxt] = -1
        lvl = nxt
    return best


def w1_1d_quantile(x, a, y, b) -> float:
    """Closed-form W1 on the line: couple sorted atoms by cumulative mass."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ix = np.argsort(x, kind="stable")
    iy = np.argsort(y, kind="stable")
    x, a = x[ix], a[ix] / a.sum()
    y, b = y[iy], b[iy] / b.sum()
    i = j = 0
    ra, rb = a[0], b[0]
    total = 0.0
    while True:
        m = ra if ra < rb else rb
        total += m * abs(x[i] - y[j])
        ra -= m
        rb -= m
        if ra <= 1e-18:
            i += 1
            if i == x.shape[0]:
                break
            ra = a[i]
        if rb <= 1e-18:
            j += 1
            if j == y.shape[0]:
                break
            rb = b[j]
    return total


def naive_euclidean_costs(X, Y) -> np.ndarray:
    """Scalar-loop reference for the cost matrix."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    C = np.zeros((X.shape[0], Y.shape[0]))
    for i in range(X.shape[0]):
        for j in range(Y.shape[0]):
            s = 0.0
            for d in range(X.shape[1]):
                s += (X[i, d] - Y[j, d]) ** 2
            C[i, j] = math.sqrt(s)
    return C


def scipy_transport_cost(cost, a, b) -> float:
    """Third opinion via an off-the-shelf LP solver."""
    from scipy.optimize import linprog

    na, nb = cost.shape
    A_eq = []
    for i in range(na):
        row = np.zeros(na * nb)
        row[i * nb:(i + 1) * nb] = 1
        A_eq.append(row)
    for j in range(nb):
        row = np.zeros(na * nb)
        row[j::nb] = 1
        A_eq.append(row)
    res = linprog(cost.ravel(), A_eq=np.array(A_eq),
                  b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun)
