"""Independent oracles used to freeze expected values.

These deliberately avoid the package's own solution paths: DC flows come
from a direct susceptance solve, dispatch cross-checks from a cvxpy model
solved with CVXOPT, storage schedules from exhaustive grid search, and
normal quantiles from bisection on the error function.
"""

import math

import numpy as np


def dc_flows(lines, n_buses, slack, injections):
    """Brute-force DC power flow: solve B*theta = P with theta[slack]=0."""
    B = np.zeros((n_buses, n_buses))
    for l in lines:
        b = l.susceptance
        B[l.from_bus, l.from_bus] += b
        B[l.to_bus, l.to_bus] += b
        B[l.from_bus, l.to_bus] -= b
        B[l.to_bus, l.from_bus] -= b
    keep = [i for i in range(n_buses) if i != slack]
    theta = np.zeros(n_buses)
    theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], np.asarray(injections)[keep])
    return np.array([l.susceptance * (theta[l.from_bus] - theta[l.to_bus]) for l in lines])


def normal_quantile_bisect(p, tol=1e-12):
    """Standard-normal quantile by bisection on the error function."""
    lo, hi = -40.0, 40.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if 0.5 * (1.0 + math.erf(mid / math.sqrt(2.0))) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cvxpy_oed(network, netload):
    """Independent multi-period dispatch formulation (objective cross-check).

    Returns (objective, lambda) solved with CVXOPT; the complementarity
    constraint is relaxed exactly as in the implementation under test.
    """
    import cvxpy as cp

    d = np.atleast_2d(np.asarray(netload, dtype=float))
    N, T = d.shape
    gens, stos, lines = network.generators, network.storages, network.lines
    G, S, L = len(gens), len(stos), len(lines)
    g = cp.Variable((G, T)) if G else None
    r = cp.Variable((G, T), nonneg=True) if G else None
    p = cp.Variable((S, T), nonneg=True) if S else None
    b = cp.Variable((S, T), nonneg=True) if S else None
    e = cp.Variable((S, T)) if S else None

    obj = 0
    cons = []
    for i, gen in enumerate(gens):
        if gen.cost.kind == "quadratic":
            obj += cp.sum(gen.cost.c2 * cp.square(g[i]) + gen.cost.c1 * g[i]) \
                + gen.cost.c0 * T
        else:
            c = cp.Variable(T)
            for k, s_k in enumerate(gen.cost.segment_slopes()):
                x_k, y_k = gen.cost.breakpoints[k]
                cons.append(c >= y_k + s_k * (g[i] - x_k))
            obj += cp.sum(c)
        cons += [g[i] >= gen.g_min, g[i] + r[i] <= gen.g_max]
        if T > 1:
            cons += [cp.diff(g[i]) <= gen.ramp_up, -cp.diff(g[i]) <= gen.ramp_down]
    for s, sto in enumerate(stos):
        obj += sto.marginal_cost * cp.sum(p[s] + b[s])
        cons += [p[s] <= sto.power, b[s] <= sto.power,
                 e[s] >= sto.e_min, e[s] <= sto.e_max]
        prev = cp.hstack([sto.e_initial, e[s][:-1]]) if T > 1 else sto.e_initial
        cons.append(e[s] == prev - p[s] / sto.efficiency + b[s] * sto.efficiency)

    supply = (cp.sum(g, axis=0) if G else 0) + (cp.sum(p - b, axis=0) if S else 0)
    bal = supply == d.sum(axis=0)
    cons.append(bal)
    if G:
        cons.append(cp.sum(r, axis=0) >= network.reserve_ratio * d.sum(axis=0))
    if L:
        pi = network.ptdf
        gen_bus = [gen.bus for gen in gens]
        sto_bus = [sto.bus for sto in stos]
        for l, line in enumerate(lines):
            flow = -pi[l] @ d
            for i in range(G):
                flow = flow + pi[l, gen_bus[i]] * g[i]
            for s in range(S):
                flow = flow + pi[l, sto_bus[s]] * (p[s] - b[s])
            cons += [flow <= line.capacity, flow >= -line.capacity]

    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver="CVXOPT")
    lam = np.asarray(bal.dual_value).reshape(-1)
    return prob.status, float(prob.value), lam


def exhaustive_storage_schedule(network, netload, grid_steps=81):
    """Best storage schedule by brute force for a single-storage system.

    Enumerates per-period net action on a grid (discharge negative SoC move,
    charge positive), dispatches generators analytically per period, and
    returns the minimal total cost.  Only supports one storage and gens on
    a single bus with quadratic or piecewise costs.
    """
    from itertools import product

    d = np.asarray(netload, dtype=float).sum(axis=0)
    T = d.size
    sto = network.storages[0]
    eta = sto.efficiency

    def gen_cost(load):
        # merit-order dispatch of the generator fleet for one period
        lo = sum(g.g_min for g in network.generators)
        hi = sum(g.g_max for g in network.generators)
        if load < lo - 1e-9 or load > hi + 1e-9:
            return None
        best = _fleet_cost(network.generators, load)
        return best

    actions = np.linspace(-sto.power, sto.power, grid_steps)  # >0 discharge
    best = np.inf
    for combo in product(actions, repeat=T):
        e = sto.e_initial
        cost = 0.0
        ok = True
        for t, a in enumerate(combo):
            p_t = max(a, 0.0)
            b_t = max(-a, 0.0)
            e = e - p_t / eta + b_t * eta
            if e < sto.e_min - 1e-9 or e > sto.e_max + 1e-9:
                ok = False
                break
            c = gen_cost(d[t] - p_t + b_t)
            if c is None:
                ok = False
                break
            cost += c + sto.marginal_cost * (p_t + b_t)
        if ok and cost < best:
            best = cost
    return best


def _fleet_cost(gens, load):
    """Exact single-period economic dispatch cost via convex water-filling."""
    import scipy.optimize as so

    if len(gens) == 1:
        return gens[0].cost.value(load)

    def marginal_at(lam):
        total = 0.0
        for g in gens:
            if g.cost.kind == "quadratic":
                if g.cost.c2 > 0:
                    q = (lam - g.cost.c1) / (2 * g.cost.c2)
                else:
                    q = g.g_max if lam >= g.cost.c1 else g.g_min
            else:
                q = g.g_min
                for k, s_k in enumerate(g.cost.segment_slopes()):
                    if lam >= s_k:
                        q = g.cost.breakpoints[k + 1][0]
                q = max(q, g.g_min)
            total += min(max(q, g.g_min), g.g_max)
        return total - load

    lam = so.brentq(marginal_at, -1e4, 1e6)
    cost = 0.0
    for g in gens:
        if g.cost.kind == "quadratic":
            if g.cost.c2 > 0:
                q = (lam - g.cost.c1) / (2 * g.cost.c2)
            else:
                q = g.g_max if lam >= g.cost.c1 else g.g_min
        else:
            q = g.g_min
            for k, s_k in enumerate(g.cost.segment_slopes()):
                if lam >= s_k:
                    q = g.cost.breakpoints[k + 1][0]
        q = min(max(q, g.g_min), g.g_max)
        cost += g.cost.value(q)
    return cost


def dp_enumeration(storage, prices, action_steps=201):
    """Exhaustive deterministic DP over a fine action grid (agent oracle)."""
    T = len(prices)
    K = 401
    grid = np.linspace(storage.e_min, storage.e_max, K)
    V = np.zeros((T + 1, K))
    eta = storage.efficiency
    M = storage.marginal_cost
    for t in range(T - 1, -1, -1):
        lam = prices[t]
        for k, e in enumerate(grid):
            cap_p = min(storage.power, (e - storage.e_min) * eta)
            cap_b = min(storage.power, (storage.e_max - e) / eta)
            best = -np.inf
            for a in np.linspace(-cap_b, cap_p, action_steps):
                p_t = max(a, 0.0)
                b_t = max(-a, 0.0)
                e2 = e - p_t / eta + b_t * eta
                val = lam * (p_t - b_t) - M * (p_t + b_t) \
                    + np.interp(e2, grid, V[t + 1])
                if val > best:
                    best = val
            V[t, k] = best
    return grid, V
