"""Convex economic-dispatch programs with full dual extraction.

Three problem kinds share one constraint skeleton:

- ``oed``: multi-period dispatch against a realized netload, equality power
  balance; the hindsight baseline,
- ``ced``: the chance-constrained variant, deterministically reformulated by
  shifting netload to its (1-eps) quantile ``mu + z*sigma`` (one-sided
  balance, tightened flow and reserve rows),
- ``sed``: single-period real-time dispatch clearing storage bids (scalar
  prices or stepwise curves).

The non-simultaneity of charge and discharge is *not* part of the convex
model; ``resolve_complementarity`` restores it afterwards, either by one
fix-and-resolve pass (relaxed) or by enumerating charge/discharge statuses
at desk scale (exact).

Dual sign bookkeeping follows shadow prices: for every right-hand side we
record d(objective)/d(rhs), then map onto the conventional non-negative
inequality multipliers.  The stored-energy dual ``theta`` is the marginal
value of one extra MWh in the reservoir at the end of a period, so it is
the negative of the SoC-recursion row's shadow price.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .grid import Network

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

COMPLEMENTARITY_TOL = 1e-8
EXACT_ENUM_BUDGET = 12  # max storage-periods for exact status enumeration


class DispatchError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# model assembly and solver shim
# ---------------------------------------------------------------------------

class LinearModel:
    """min x'*diag(q)*x + c'x + k  s.t.  A_eq x = b_eq, A_le x <= b_le, lb<=x<=ub."""

    def __init__(self):
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.c: list[float] = []
        self.q: list[float] = []
        self.const = 0.0
        self.eq_rows: list[tuple[np.ndarray, np.ndarray, float, str]] = []
        self.le_rows: list[tuple[np.ndarray, np.ndarray, float, str]] = []
        self._mats = None

    @property
    def n(self) -> int:
        return len(self.names)

    def add_vars(self, names: Sequence[str], lb=0.0, ub=np.inf, lin=0.0, quad=0.0) -> np.ndarray:
        k = len(names)
        start = self.n
        self.names.extend(names)
        self.lb.extend(np.broadcast_to(np.asarray(lb, dtype=float), (k,)).tolist())
        self.ub.extend(np.broadcast_to(np.asarray(ub, dtype=float), (k,)).tolist())
        self.c.extend(np.broadcast_to(np.asarray(lin, dtype=float), (k,)).tolist())
        self.q.extend(np.broadcast_to(np.asarray(quad, dtype=float), (k,)).tolist())
        return np.arange(start, start + k)

    def add_eq(self, idx, coef, rhs: float, name: str) -> int:
        self.eq_rows.append((np.asarray(idx, dtype=int), np.asarray(coef, dtype=float),
                             float(rhs), name))
        return len(self.eq_rows) - 1

    def add_le(self, idx, coef, rhs: float, name: str) -> int:
        self.le_rows.append((np.asarray(idx, dtype=int), np.asarray(coef, dtype=float),
                             float(rhs), name))
        return len(self.le_rows) - 1

    def with_bounds(self, ub_changes: dict[int, float]) -> "LinearModel":
        """Copy of the model with selected upper bounds overridden."""
        m = LinearModel.__new__(LinearModel)
        m.names = self.names
        m.lb = self.lb
        m.ub = list(self.ub)
        m.c = self.c
        m.q = self.q
        m.const = self.const
        m.eq_rows = self.eq_rows
        m.le_rows = self.le_rows
        m._mats = None
        for j, v in ub_changes.items():
            m.ub[j] = v
        return m

    def _stack(self, rows):
        if not rows:
            return sp.csr_matrix((0, self.n)), np.zeros(0)
        data = np.concatenate([r[1] for r in rows])
        cols = np.concatenate([r[0] for r in rows])
        rownum = np.concatenate([np.full(len(r[0]), i) for i, r in enumerate(rows)])
        A = sp.coo_matrix((data, (rownum, cols)), shape=(len(rows), self.n)).tocsr()
        return A, np.array([r[2] for r in rows])

    def matrices(self):
        if self._mats is None:
            A_eq, b_eq = self._stack(self.eq_rows)
            A_le, b_le = self._stack(self.le_rows)
            self._mats = {
                "A_eq": A_eq, "b_eq": b_eq, "A_le": A_le, "b_le": b_le,
                "lb": np.array(self.lb), "ub": np.array(self.ub),
                "c": np.array(self.c), "q": np.array(self.q), "const": self.const,
            }
        return self._mats


@dataclass
class RawResult:
    status: str
    x: np.ndarray
    objective: float
    eq_marg: np.ndarray     # d(obj)/d(b_eq)
    le_marg: np.ndarray     # d(obj)/d(b_le), <= 0
    lower_marg: np.ndarray  # d(obj)/d(lb), >= 0
    upper_marg: np.ndarray  # d(obj)/d(ub), <= 0


def _solve_scipy(mats) -> RawResult:
    bounds = np.column_stack([mats["lb"], mats["ub"]])
    res = linprog(
        c=mats["c"],
        A_ub=mats["A_le"] if mats["A_le"].shape[0] else None,
        b_ub=mats["b_le"] if mats["A_le"].shape[0] else None,
        A_eq=mats["A_eq"] if mats["A_eq"].shape[0] else None,
        b_eq=mats["b_eq"] if mats["A_eq"].shape[0] else None,
        bounds=bounds, method="highs")
    if res.status == 2:
        return _failed(INFEASIBLE, mats)
    if res.status == 3:
        return _failed(UNBOUNDED, mats)
    if res.status != 0:
        raise DispatchError(f"LP solver failed: {res.message}")
    x = np.asarray(res.x)
    obj = float(mats["c"] @ x + mats["const"])
    n_eq = mats["A_eq"].shape[0]
    n_le = mats["A_le"].shape[0]
    return RawResult(
        status=OPTIMAL, x=x, objective=obj,
        eq_marg=np.asarray(res.eqlin.marginals) if n_eq else np.zeros(0),
        le_marg=np.asarray(res.ineqlin.marginals) if n_le else np.zeros(0),
        lower_marg=np.asarray(res.lower.marginals),
        upper_marg=np.asarray(res.upper.marginals),
    )


def _solve_clarabel(mats) -> RawResult:
    import clarabel

    n = mats["c"].size
    blocks = [mats["A_eq"], mats["A_le"]]
    rhs = [mats["b_eq"], mats["b_le"]]
    ub_idx = np.where(np.isfinite(mats["ub"]))[0]
    lb_idx = np.where(np.isfinite(mats["lb"]))[0]
    eye = sp.identity(n, format="csr")
    blocks.append(eye[ub_idx])
    rhs.append(mats["ub"][ub_idx])
    blocks.append(-eye[lb_idx])
    rhs.append(-mats["lb"][lb_idx])

    A = sp.vstack(blocks, format="csc")
    b = np.concatenate(rhs)
    P = sp.diags(2.0 * mats["q"], format="csc")
    n_ineq = mats["b_le"].size + ub_idx.size + lb_idx.size
    cones = []
    if mats["b_eq"].size:
        cones.append(clarabel.ZeroConeT(mats["b_eq"].size))
    if n_ineq:
        cones.append(clarabel.NonnegativeConeT(n_ineq))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = 1e-10
    settings.tol_gap_rel = 1e-10
    settings.tol_feas = 1e-9
    sol = clarabel.DefaultSolver(P, mats["c"], A, b, cones, settings).solve()

    name = str(sol.status)
    if "PrimalInfeasible" in name:
        return _failed(INFEASIBLE, mats)
    if "DualInfeasible" in name:
        return _failed(UNBOUNDED, mats)
    if "Solved" not in name:  # Solved / AlmostSolved both carry usable iterates
        raise DispatchError(f"QP solver failed with status {name}")

    x = np.asarray(sol.x)
    z = np.asarray(sol.z)
    m_eq = mats["b_eq"].size
    m_le = mats["b_le"].size
    z_eq = z[:m_eq]
    z_le = z[m_eq:m_eq + m_le]
    z_ub = z[m_eq + m_le:m_eq + m_le + ub_idx.size]
    z_lb = z[m_eq + m_le + ub_idx.size:]
    lower = np.zeros(n)
    upper = np.zeros(n)
    lower[lb_idx] = z_lb
    upper[ub_idx] = -z_ub
    obj = float(x @ (mats["q"] * x) + mats["c"] @ x + mats["const"])
    return RawResult(status=OPTIMAL, x=x, objective=obj,
                     eq_marg=-z_eq, le_marg=-z_le, lower_marg=lower, upper_marg=upper)


def _failed(status: str, mats) -> RawResult:
    n = mats["c"].size
    zero = np.zeros(n)
    return RawResult(status=status, x=zero, objective=np.nan,
                     eq_marg=np.zeros(mats["b_eq"].size),
                     le_marg=np.zeros(mats["b_le"].size),
                     lower_marg=zero.copy(), upper_marg=zero.copy())


def solve_linear_model(model: LinearModel) -> RawResult:
    mats = model.matrices()
    if np.any(mats["q"] > 0):
        return _solve_clarabel(mats)
    return _solve_scipy(mats)


def _duality_gap(mats, raw: RawResult) -> float:
    """|primal - dual| objective with the dual value rebuilt from the
    recovered multipliers (quadratic terms minimized out in closed form)."""
    y_eq = -raw.eq_marg
    y_le = -raw.le_marg
    y_lb = raw.lower_marg
    y_ub = -raw.upper_marg
    w = mats["c"].copy()
    if y_eq.size:
        w += mats["A_eq"].T @ y_eq
    if y_le.size:
        w += mats["A_le"].T @ y_le
    w += y_ub - y_lb
    q = mats["q"]
    quad = q > 0
    dual = -float(np.sum(w[quad] ** 2 / (4.0 * q[quad]))) + mats["const"]
    dual -= float(y_eq @ mats["b_eq"]) if y_eq.size else 0.0
    dual -= float(y_le @ mats["b_le"]) if y_le.size else 0.0
    lb_fin = np.isfinite(mats["lb"])
    ub_fin = np.isfinite(mats["ub"])
    dual += float(np.sum(y_lb[lb_fin] * mats["lb"][lb_fin]))
    dual -= float(np.sum(y_ub[ub_fin] * mats["ub"][ub_fin]))
    return abs(raw.objective - dual)


def _complementarity_residual(mats, raw: RawResult) -> float:
    worst = 0.0
    if raw.le_marg.size:
        slack = mats["b_le"] - mats["A_le"] @ raw.x
        worst = max(worst, float(np.max(np.abs(raw.le_marg * slack))))
    lb_fin = np.isfinite(mats["lb"])
    ub_fin = np.isfinite(mats["ub"])
    if np.any(lb_fin):
        worst = max(worst, float(np.max(np.abs(
            raw.lower_marg[lb_fin] * (raw.x[lb_fin] - mats["lb"][lb_fin])))))
    if np.any(ub_fin):
        worst = max(worst, float(np.max(np.abs(
            raw.upper_marg[ub_fin] * (mats["ub"][ub_fin] - raw.x[ub_fin])))))
    return worst


# ---------------------------------------------------------------------------
# dispatch problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualBundle:
    """Named multipliers of the dispatch constraints, all inequality duals >= 0."""

    lambda_: np.ndarray    # energy balance, (T,)
    omega_lo: np.ndarray   # flow lower limits, (L,T)
    omega_hi: np.ndarray   # flow upper limits, (L,T)
    theta: np.ndarray      # SoC recursion (stored-energy value), (S,T)
    alpha_lo: np.ndarray   # charge bounds, (S,T)
    alpha_hi: np.ndarray
    beta_lo: np.ndarray    # discharge bounds, (S,T)
    beta_hi: np.ndarray
    iota_lo: np.ndarray    # SoC bounds, (S,T)
    iota_hi: np.ndarray
    nu_lo: np.ndarray      # generator output bounds, (G,T)
    nu_hi: np.ndarray
    kappa_lo: np.ndarray   # ramp limits, (G,T); column 0 is unconstrained
    kappa_hi: np.ndarray


@dataclass(frozen=True)
class DispatchSolution:
    status: str
    objective: float
    g: np.ndarray
    r: np.ndarray
    p: np.ndarray
    b: np.ndarray
    e: np.ndarray
    duals: Optional[DualBundle]
    lmp: Optional[np.ndarray]
    diagnostics: dict = field(default_factory=dict)


@dataclass
class DispatchProblem:
    """Assembled convex program plus the index bookkeeping to read it back."""

    kind: str
    network: Network
    horizon: int
    model: LinearModel
    idx: dict
    rows_eq: dict
    rows_le: dict
    meta: dict

    def with_upper_bounds(self, ub_changes: dict[int, float]) -> "DispatchProblem":
        return replace(self, model=self.model.with_bounds(ub_changes))


def _cost_terms(model: LinearModel, gen, names):
    """Variables and epigraph rows for one generator's cost over all periods."""
    if gen.cost.kind == "quadratic":
        g_idx = model.add_vars(names, lb=gen.g_min, ub=np.inf,
                               lin=gen.cost.c1, quad=gen.cost.c2)
        model.const += gen.cost.c0 * len(names)
        return g_idx, None
    g_idx = model.add_vars(names, lb=gen.g_min, ub=np.inf)
    cg_idx = model.add_vars([n.replace("g_", "cg_", 1) for n in names],
                            lb=-np.inf, ub=np.inf, lin=1.0)
    slopes = gen.cost.segment_slopes()
    for t in range(len(names)):
        for k, s in enumerate(slopes):
            x_k, y_k = gen.cost.breakpoints[k]
            # cg >= y_k + s*(g - x_k)
            model.add_le([g_idx[t], cg_idx[t]], [s, -1.0], s * x_k - y_k,
                         f"epi_{names[t]}_{k}")
    return g_idx, cg_idx


def _build_core(network: Network, T: int, mu: np.ndarray, sigma: np.ndarray,
                z: float, balance_eq: bool, storage_cost: bool) -> DispatchProblem:
    """Shared OED/CED skeleton.  ``mu`` is the (N,T) netload center; the CED
    shift enters through ``z`` (zero for OED, where mu is the realization)."""
    gens = network.generators
    stos = network.storages
    G, S, L = len(gens), len(stos), len(network.lines)
    pi = network.ptdf if L else np.zeros((0, network.n_buses))
    m = LinearModel()

    g_idx = np.zeros((G, T), dtype=int)
    cg_present = False
    for i, gen in enumerate(gens):
        gi, cgi = _cost_terms(m, gen, [f"g_{i}_{t}" for t in range(T)])
        g_idx[i] = gi
        cg_present = cg_present or cgi is not None
    r_idx = np.vstack([m.add_vars([f"r_{i}_{t}" for t in range(T)])
                       for i in range(G)]) if G else np.zeros((0, T), dtype=int)
    p_idx = np.vstack([m.add_vars([f"p_{s}_{t}" for t in range(T)],
                                  lb=0.0, ub=stos[s].power, lin=stos[s].marginal_cost if storage_cost else 0.0)
                       for s in range(S)]) if S else np.zeros((0, T), dtype=int)
    b_idx = np.vstack([m.add_vars([f"b_{s}_{t}" for t in range(T)],
                                  lb=0.0, ub=stos[s].power, lin=stos[s].marginal_cost if storage_cost else 0.0)
                       for s in range(S)]) if S else np.zeros((0, T), dtype=int)
    e_idx = np.vstack([m.add_vars([f"e_{s}_{t}" for t in range(T)],
                                  lb=stos[s].e_min, ub=stos[s].e_max)
                       for s in range(S)]) if S else np.zeros((0, T), dtype=int)

    d_total = mu.sum(axis=0) + z * sigma.sum(axis=0)  # effective system netload

    rows_eq: dict = {}
    rows_le: dict = {}
    balance = np.zeros(T, dtype=int)
    for t in range(T):
        idx = np.concatenate([g_idx[:, t], p_idx[:, t], b_idx[:, t]])
        coef = np.concatenate([np.ones(G), np.ones(S), -np.ones(S)])
        if balance_eq:
            balance[t] = m.add_eq(idx, coef, d_total[t], f"balance_{t}")
        else:
            balance[t] = m.add_le(idx, -coef, -d_total[t], f"balance_{t}")
    (rows_eq if balance_eq else rows_le)["balance"] = balance

    flow_hi = np.zeros((L, T), dtype=int)
    flow_lo = np.zeros((L, T), dtype=int)
    if L:
        gen_bus = np.array([g.bus for g in gens], dtype=int)
        sto_bus = np.array([s.bus for s in stos], dtype=int)
        for l, line in enumerate(network.lines):
            cg = pi[l, gen_bus] if G else np.zeros(0)
            cs = pi[l, sto_bus] if S else np.zeros(0)
            for t in range(T):
                shift = float(pi[l] @ mu[:, t])
                tight = z * float(pi[l] @ sigma[:, t])
                idx = np.concatenate([g_idx[:, t], p_idx[:, t], b_idx[:, t]])
                coef = np.concatenate([cg, cs, -cs])
                flow_hi[l, t] = m.add_le(idx, coef, line.capacity + shift - tight,
                                         f"flow_hi_{l}_{t}")
                flow_lo[l, t] = m.add_le(idx, -coef, line.capacity - shift - tight,
                                         f"flow_lo_{l}_{t}")
    rows_le["flow_hi"] = flow_hi
    rows_le["flow_lo"] = flow_lo

    gencap = np.zeros((G, T), dtype=int)
    for i, gen in enumerate(gens):
        for t in range(T):
            gencap[i, t] = m.add_le([g_idx[i, t], r_idx[i, t]], [1.0, 1.0],
                                    gen.g_max, f"gencap_{i}_{t}")
    rows_le["gencap"] = gencap

    reserve = np.zeros(T, dtype=int)
    for t in range(T):
        reserve[t] = m.add_le(r_idx[:, t], -np.ones(G),
                              -network.reserve_ratio * d_total[t], f"reserve_{t}")
    rows_le["reserve"] = reserve

    ramp_up = -np.ones((G, T), dtype=int)
    ramp_dn = -np.ones((G, T), dtype=int)
    for i, gen in enumerate(gens):
        for t in range(1, T):
            pair = [g_idx[i, t], g_idx[i, t - 1]]
            ramp_up[i, t] = m.add_le(pair, [1.0, -1.0], gen.ramp_up, f"ramp_up_{i}_{t}")
            ramp_dn[i, t] = m.add_le(pair, [-1.0, 1.0], gen.ramp_down, f"ramp_dn_{i}_{t}")
    rows_le["ramp_up"] = ramp_up
    rows_le["ramp_dn"] = ramp_dn

    soc = np.zeros((S, T), dtype=int)
    for s, sto in enumerate(stos):
        eta = sto.efficiency
        for t in range(T):
            if t == 0:
                soc[s, t] = m.add_eq([e_idx[s, 0], p_idx[s, 0], b_idx[s, 0]],
                                     [1.0, 1.0 / eta, -eta], sto.e_initial, f"soc_{s}_{t}")
            else:
                soc[s, t] = m.add_eq(
                    [e_idx[s, t], e_idx[s, t - 1], p_idx[s, t], b_idx[s, t]],
                    [1.0, -1.0, 1.0 / eta, -eta], 0.0, f"soc_{s}_{t}")
    rows_eq["soc"] = soc

    idx = {"g": g_idx, "r": r_idx, "p": p_idx, "b": b_idx, "e": e_idx}
    meta = {"balance_is_eq": balance_eq, "mu": mu, "sigma": sigma, "z": z,
            "complementarity": "relaxed", "has_pwl": cg_present}
    return DispatchProblem(kind="", network=network, horizon=T, model=m,
                           idx=idx, rows_eq=rows_eq, rows_le=rows_le, meta=meta)


def build_oed(network: Network, realized_netload, T: int | None = None,
              complementarity: str = "relaxed") -> DispatchProblem:
    """Multi-period dispatch against a known netload (equality balance)."""
    d = np.atleast_2d(np.asarray(realized_netload, dtype=float))
    if d.shape[0] != network.n_buses:
        raise DispatchError(f"netload has {d.shape[0]} rows for {network.n_buses} buses")
    if T is not None and d.shape[1] != T:
        raise DispatchError(f"netload horizon {d.shape[1]} != T={T}")
    prob = _build_core(network, d.shape[1], d, np.zeros_like(d), 0.0,
                       balance_eq=True, storage_cost=True)
    prob.kind = "oed"
    prob.meta["complementarity"] = complementarity
    prob.meta["netload"] = d
    return prob


def build_ced(network: Network, forecast, epsilon: float, model,
              T: int | None = None, complementarity: str = "relaxed") -> DispatchProblem:
    """Chance-constrained dispatch, deterministically reformulated: balance is
    one-sided (supply >= quantile netload), flow and reserve rows shift by
    z*sigma with z = F^-1(1-epsilon) of the uncertainty model."""
    from .uncertainty import inverse_cdf

    z = inverse_cdf(model, epsilon)
    mu = np.atleast_2d(np.asarray(forecast.mean, dtype=float))
    sigma = np.atleast_2d(np.asarray(forecast.std, dtype=float))
    if mu.shape[0] != network.n_buses:
        raise DispatchError(f"forecast has {mu.shape[0]} rows for {network.n_buses} buses")
    if T is not None and mu.shape[1] != T:
        raise DispatchError(f"forecast horizon {mu.shape[1]} != T={T}")
    prob = _build_core(network, mu.shape[1], mu, sigma, z,
                       balance_eq=False, storage_cost=True)
    prob.kind = "ced"
    prob.meta.update(epsilon=epsilon, uncertainty=model, complementarity=complementarity)
    return prob


def _bid_segments(bid, cap_p: float, cap_b: float):
    """Normalize a scalar (A, B) pair or a curve object into incremental
    (width, price) segment lists for each side."""
    if hasattr(bid, "discharge") and hasattr(bid, "charge"):
        disc = [(float(w), float(pr)) for w, pr in bid.discharge]
        chrg = [(float(w), float(pr)) for w, pr in bid.charge]
    else:
        A, B = bid
        disc = [(cap_p, float(A))] if cap_p > 0 else []
        chrg = [(cap_b, float(B))] if cap_b > 0 else []
    for w, pr in disc + chrg:
        if not np.isfinite(pr) or not np.isfinite(w):
            raise DispatchError(f"non-finite bid segment ({w}, {pr})")
    return disc, chrg


def build_sed(network: Network, t: int, prior_soc, bids, realized_netload,
              prior_gen=None, complementarity: str = "relaxed") -> DispatchProblem:
    """Single-period dispatch clearing storage bids at fixed prior SoC.

    ``bids`` holds one entry per storage: either a scalar (A, B) price pair
    or a bid curve with ``discharge``/``charge`` segment lists.  Charge and
    discharge quantities are capped by power and by the SoC headroom implied
    by ``prior_soc``; the solved SoC update is reported in ``solution.e``.
    """
    gens = network.generators
    stos = network.storages
    G, S, L = len(gens), len(stos), len(network.lines)
    d = np.asarray(realized_netload, dtype=float).reshape(-1)
    if d.size != network.n_buses:
        raise DispatchError(f"netload has {d.size} entries for {network.n_buses} buses")
    prior_soc = np.asarray(prior_soc, dtype=float).reshape(-1)
    if prior_soc.size != S:
        raise DispatchError(f"prior_soc has {prior_soc.size} entries for {S} storages")
    for s, sto in enumerate(stos):
        if not sto.e_min - 1e-9 <= prior_soc[s] <= sto.e_max + 1e-9:
            raise DispatchError(
                f"prior SoC {prior_soc[s]} outside [{sto.e_min}, {sto.e_max}] for storage {s}")
    if len(bids) != S:
        raise DispatchError(f"{len(bids)} bids for {S} storages")

    m = LinearModel()
    g_idx = np.zeros((G, 1), dtype=int)
    for i, gen in enumerate(gens):
        gi, _ = _cost_terms(m, gen, [f"g_{i}_{t}"])
        g_idx[i] = gi
    r_idx = np.vstack([m.add_vars([f"r_{i}_{t}"]) for i in range(G)]) \
        if G else np.zeros((0, 1), dtype=int)

    caps_p = np.zeros(S)
    caps_b = np.zeros(S)
    pseg: list[np.ndarray] = []
    bseg: list[np.ndarray] = []
    pseg_all = []
    bseg_all = []
    for s, sto in enumerate(stos):
        eta = sto.efficiency
        caps_p[s] = min(sto.power, max(0.0, (prior_soc[s] - sto.e_min) * eta))
        caps_b[s] = min(sto.power, max(0.0, (sto.e_max - prior_soc[s]) / eta))
        disc, chrg = _bid_segments(bids[s], caps_p[s], caps_b[s])
        pi_idx = m.add_vars([f"p_{s}_{t}_seg{k}" for k in range(len(disc))],
                            lb=0.0, ub=[w for w, _ in disc] or 0.0,
                            lin=[pr for _, pr in disc] or 0.0)
        bi_idx = m.add_vars([f"b_{s}_{t}_seg{k}" for k in range(len(chrg))],
                            lb=0.0, ub=[w for w, _ in chrg] or 0.0,
                            lin=[-pr for _, pr in chrg] or 0.0)
        pseg.append(pi_idx)
        bseg.append(bi_idx)
        pseg_all.append(pi_idx)
        bseg_all.append(bi_idx)

    all_p = np.concatenate(pseg_all) if S else np.zeros(0, dtype=int)
    all_b = np.concatenate(bseg_all) if S else np.zeros(0, dtype=int)

    rows_eq: dict = {}
    rows_le: dict = {}
    idx_bal = np.concatenate([g_idx[:, 0], all_p, all_b])
    coef_bal = np.concatenate([np.ones(G), np.ones(all_p.size), -np.ones(all_b.size)])
    rows_eq["balance"] = np.array([m.add_eq(idx_bal, coef_bal, d.sum(), f"balance_{t}")])

    flow_hi = np.zeros((L, 1), dtype=int)
    flow_lo = np.zeros((L, 1), dtype=int)
    if L:
        pi = network.ptdf
        gen_bus = np.array([g.bus for g in gens], dtype=int)
        for l, line in enumerate(network.lines):
            cg = pi[l, gen_bus] if G else np.zeros(0)
            cp = np.concatenate([np.full(pseg[s].size, pi[l, stos[s].bus]) for s in range(S)]) \
                if S else np.zeros(0)
            cb = np.concatenate([np.full(bseg[s].size, -pi[l, stos[s].bus]) for s in range(S)]) \
                if S else np.zeros(0)
            shift = float(pi[l] @ d)
            coef = np.concatenate([cg, cp, cb])
            flow_hi[l, 0] = m.add_le(idx_bal, coef, line.capacity + shift, f"flow_hi_{l}_{t}")
            flow_lo[l, 0] = m.add_le(idx_bal, -coef, line.capacity - shift, f"flow_lo_{l}_{t}")
    rows_le["flow_hi"] = flow_hi
    rows_le["flow_lo"] = flow_lo

    gencap = np.zeros((G, 1), dtype=int)
    for i, gen in enumerate(gens):
        gencap[i, 0] = m.add_le([g_idx[i, 0], r_idx[i, 0]], [1.0, 1.0],
                                gen.g_max, f"gencap_{i}_{t}")
    rows_le["gencap"] = gencap
    rows_le["reserve"] = np.array([m.add_le(r_idx[:, 0], -np.ones(G),
                                            -network.reserve_ratio * d.sum(), f"reserve_{t}")])

    ramp_up = -np.ones((G, 1), dtype=int)
    ramp_dn = -np.ones((G, 1), dtype=int)
    if prior_gen is not None:
        prior_gen = np.asarray(prior_gen, dtype=float).reshape(-1)
        for i, gen in enumerate(gens):
            ramp_up[i, 0] = m.add_le([g_idx[i, 0]], [1.0],
                                     prior_gen[i] + gen.ramp_up, f"ramp_up_{i}_{t}")
            ramp_dn[i, 0] = m.add_le([g_idx[i, 0]], [-1.0],
                                     gen.ramp_down - prior_gen[i], f"ramp_dn_{i}_{t}")
    rows_le["ramp_up"] = ramp_up
    rows_le["ramp_dn"] = ramp_dn

    pcap = np.zeros((S, 1), dtype=int)
    bcap = np.zeros((S, 1), dtype=int)
    for s in range(S):
        pcap[s, 0] = m.add_le(pseg[s], np.ones(pseg[s].size), caps_p[s], f"pcap_{s}_{t}")
        bcap[s, 0] = m.add_le(bseg[s], np.ones(bseg[s].size), caps_b[s], f"bcap_{s}_{t}")
    rows_le["pcap"] = pcap
    rows_le["bcap"] = bcap

    idx = {"g": g_idx, "r": r_idx, "pseg": pseg, "bseg": bseg}
    meta = {"balance_is_eq": True, "netload": d.reshape(-1, 1), "t": t,
            "prior_soc": prior_soc, "prior_gen": prior_gen,
            "caps_p": caps_p, "caps_b": caps_b,
            "complementarity": complementarity}
    return DispatchProblem(kind="sed", network=network, horizon=1, model=m,
                           idx=idx, rows_eq=rows_eq, rows_le=rows_le, meta=meta)


def _gather_le(raw: RawResult, rows: np.ndarray) -> np.ndarray:
    """-marginal over a row-id array; -1 ids (absent rows) give 0."""
    out = np.zeros(rows.shape)
    mask = rows >= 0
    if np.any(mask):
        out[mask] = -raw.le_marg[rows[mask]]
    return out


def _extract(problem: DispatchProblem, raw: RawResult) -> DispatchSolution:
    net = problem.network
    T = problem.horizon
    G, S, L = len(net.generators), len(net.storages), len(net.lines)
    x = raw.x
    mats = problem.model.matrices()

    g = x[problem.idx["g"]] if G else np.zeros((0, T))
    r = x[problem.idx["r"]] if G else np.zeros((0, T))

    if problem.kind == "sed":
        p = np.array([[x[problem.idx["pseg"][s]].sum()] for s in range(S)]) \
            if S else np.zeros((0, 1))
        b = np.array([[x[problem.idx["bseg"][s]].sum()] for s in range(S)]) \
            if S else np.zeros((0, 1))
        e = np.zeros((S, 1))
        for s, sto in enumerate(net.storages):
            e[s, 0] = problem.meta["prior_soc"][s] - p[s, 0] / sto.efficiency \
                + b[s, 0] * sto.efficiency
        theta = np.zeros((S, 1))
        iota_lo = np.zeros((S, 1))
        iota_hi = np.zeros((S, 1))
        alpha_lo = np.zeros((S, 1))
        beta_lo = np.zeros((S, 1))
        beta_hi = _gather_le(raw, problem.rows_le["pcap"])
        alpha_hi = _gather_le(raw, problem.rows_le["bcap"])
    else:
        p = x[problem.idx["p"]] if S else np.zeros((0, T))
        b = x[problem.idx["b"]] if S else np.zeros((0, T))
        e = x[problem.idx["e"]] if S else np.zeros((0, T))
        theta = -raw.eq_marg[problem.rows_eq["soc"]] if S else np.zeros((0, T))
        iota_lo = raw.lower_marg[problem.idx["e"]] if S else np.zeros((0, T))
        iota_hi = -raw.upper_marg[problem.idx["e"]] if S else np.zeros((0, T))
        beta_lo = raw.lower_marg[problem.idx["p"]] if S else np.zeros((0, T))
        beta_hi = -raw.upper_marg[problem.idx["p"]] if S else np.zeros((0, T))
        alpha_lo = raw.lower_marg[problem.idx["b"]] if S else np.zeros((0, T))
        alpha_hi = -raw.upper_marg[problem.idx["b"]] if S else np.zeros((0, T))

    if problem.meta["balance_is_eq"]:
        lam = raw.eq_marg[problem.rows_eq["balance"]]
    else:
        lam = -raw.le_marg[problem.rows_le["balance"]]

    duals = DualBundle(
        lambda_=lam,
        omega_lo=_gather_le(raw, problem.rows_le["flow_lo"]),
        omega_hi=_gather_le(raw, problem.rows_le["flow_hi"]),
        theta=theta,
        alpha_lo=alpha_lo, alpha_hi=alpha_hi,
        beta_lo=beta_lo, beta_hi=beta_hi,
        iota_lo=iota_lo, iota_hi=iota_hi,
        nu_lo=raw.lower_marg[problem.idx["g"]] if G else np.zeros((0, T)),
        nu_hi=_gather_le(raw, problem.rows_le["gencap"]),
        kappa_lo=_gather_le(raw, problem.rows_le["ramp_dn"]),
        kappa_hi=_gather_le(raw, problem.rows_le["ramp_up"]),
    )

    eq_res = float(np.max(np.abs(mats["A_eq"] @ x - mats["b_eq"]))) \
        if mats["b_eq"].size else 0.0
    le_res = float(np.max(np.maximum(mats["A_le"] @ x - mats["b_le"], 0.0))) \
        if mats["b_le"].size else 0.0
    diagnostics = {
        "duality_gap": _duality_gap(mats, raw),
        "complementarity_residual": _complementarity_residual(mats, raw),
        "feasibility_residual": max(eq_res, le_res),
        "pb_max": float(np.max(p * b)) if S else 0.0,
    }

    sol = DispatchSolution(status=OPTIMAL, objective=raw.objective, g=g, r=r,
                           p=p, b=b, e=e, duals=duals, lmp=None,
                           diagnostics=diagnostics)
    return replace(sol, lmp=compute_lmp(sol, net))


def _empty_solution(problem: DispatchProblem, status: str) -> DispatchSolution:
    T = problem.horizon
    G, S = len(problem.network.generators), len(problem.network.storages)
    z = np.zeros
    return DispatchSolution(status=status, objective=np.nan, g=z((G, T)), r=z((G, T)),
                            p=z((S, T)), b=z((S, T)), e=z((S, T)),
                            duals=None, lmp=None, diagnostics={})


def solve(problem: DispatchProblem) -> DispatchSolution:
    """Solve the convex program; infeasibility/unboundedness come back as a
    status, never as an exception."""
    raw = solve_linear_model(problem.model)
    if raw.status != OPTIMAL:
        return _empty_solution(problem, raw.status)
    return _extract(problem, raw)


def compute_lmp(solution: DispatchSolution, network: Network) -> np.ndarray:
    """Nodal prices lmp[n,t] = lambda_t - sum_l pi[l,n] (omega_hi - omega_lo)."""
    d = solution.duals
    T = d.lambda_.size
    lmp = np.tile(d.lambda_, (network.n_buses, 1))
    if len(network.lines):
        lmp = lmp - network.ptdf.T @ (d.omega_hi - d.omega_lo)
    return lmp


def hindsight_marginal_cost(solution: DispatchSolution, network: Network,
                            s: int) -> tuple[np.ndarray, np.ndarray]:
    """Truthful marginal costs from the stored-energy dual: the discharge
    cost adds the opportunity value grossed up by efficiency, the charge
    cost nets it down."""
    sto = network.storages[s]
    theta = solution.duals.theta[s]
    A = sto.marginal_cost + theta / sto.efficiency
    B = theta * sto.efficiency - sto.marginal_cost
    return A, B


def _discharge_vars(problem: DispatchProblem, s: int, t: int) -> np.ndarray:
    if problem.kind == "sed":
        return problem.idx["pseg"][s]
    return np.array([problem.idx["p"][s, t]])


def _charge_vars(problem: DispatchProblem, s: int, t: int) -> np.ndarray:
    if problem.kind == "sed":
        return problem.idx["bseg"][s]
    return np.array([problem.idx["b"][s, t]])


def resolve_complementarity(problem: DispatchProblem,
                            solution: DispatchSolution) -> DispatchSolution:
    """Restore charge/discharge non-simultaneity.

    Relaxed mode: zero the smaller side of each violating pair via its upper
    bound and re-solve once.  Exact mode: enumerate charge-or-discharge
    status per storage-period (desk scale only), keep the best feasible
    assignment, whose LP re-solve provides the duals.
    """
    if solution.status != OPTIMAL:
        return solution
    S, T = solution.p.shape
    viol = solution.p * solution.b > COMPLEMENTARITY_TOL
    if not viol.any():
        return solution

    mode = problem.meta.get("complementarity", "relaxed")
    if mode == "relaxed":
        changes: dict[int, float] = {}
        for s, t in np.argwhere(viol):
            side = _discharge_vars(problem, s, t) if solution.p[s, t] <= solution.b[s, t] \
                else _charge_vars(problem, s, t)
            for j in side:
                changes[int(j)] = 0.0
        return solve(problem.with_upper_bounds(changes))

    if mode != "exact":
        raise DispatchError(f"unknown complementarity mode {mode!r}")
    n_st = S * T
    if n_st > EXACT_ENUM_BUDGET:
        raise DispatchError(
            f"exact complementarity enumerates 2^{n_st} statuses; beyond the "
            f"budget of 2^{EXACT_ENUM_BUDGET} storage-periods, use relaxed mode")
    pairs = [(s, t) for s in range(S) for t in range(T)]
    best: Optional[DispatchSolution] = None
    for combo in itertools.product((0, 1), repeat=n_st):
        changes = {}
        for bit, (s, t) in zip(combo, pairs):
            side = _charge_vars(problem, s, t) if bit == 0 else _discharge_vars(problem, s, t)
            for j in side:
                changes[int(j)] = 0.0
        cand = solve(problem.with_upper_bounds(changes))
        if cand.status == OPTIMAL and (best is None or cand.objective < best.objective):
            best = cand
    return best if best is not None else _empty_solution(problem, INFEASIBLE)


def export_lp(problem: DispatchProblem) -> str:
    """Bit-exact textual dump of the assembled program for cross-solver audits."""
    m = problem.model
    out = [f"\\ gridbound {problem.kind} export: {m.n} vars, "
           f"{len(m.eq_rows)} eq, {len(m.le_rows)} le", "Minimize", " obj:"]
    terms = []
    for j in range(m.n):
        if m.c[j] != 0.0:
            terms.append(f"{m.c[j]!r} {m.names[j]}")
        if m.q[j] != 0.0:
            terms.append(f"{m.q[j]!r} {m.names[j]}^2")
    if m.const != 0.0:
        terms.append(f"{m.const!r}")
    out.append("  " + " + ".join(terms))
    out.append("Subject To")
    for idx, coef, rhs, name in m.eq_rows:
        expr = " + ".join(f"{c!r} {m.names[j]}" for j, c in zip(idx, coef))
        out.append(f" {name}: {expr} = {rhs!r}")
    for idx, coef, rhs, name in m.le_rows:
        expr = " + ".join(f"{c!r} {m.names[j]}" for j, c in zip(idx, coef))
        out.append(f" {name}: {expr} <= {rhs!r}")
    out.append("Bounds")
    for j in range(m.n):
        lo = "-inf" if not np.isfinite(m.lb[j]) else repr(m.lb[j])
        hi = "+inf" if not np.isfinite(m.ub[j]) else repr(m.ub[j])
        out.append(f" {lo} <= {m.names[j]} <= {hi}")
    out.append("End")
    return "\n".join(out) + "\n"
