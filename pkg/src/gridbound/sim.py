"""Agent-based day-ahead / real-time market experiment.

The experiment per day-ahead scenario:

1. clear a day-ahead dispatch on the scenario mean to anchor prices,
2. derive bid caps (stored-energy duals of a chance-constrained dispatch,
   their price-anticipated form, a deterministic default-bid benchmark,
   or none),
3. build one value-function agent per storage at its withholding scale,
4. run the 24 sequential real-time single-period dispatches against each
   Monte Carlo netload realization, once without caps and once with caps
   applied to every submitted curve,
5. aggregate paired system-cost / storage-profit records.

Property verifiers for bound coverage and the three monotonicity sweeps
(initial SoC, uncertainty scale, risk level) live here as well.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import dispatch as dp
from .agent import BidCurve, ValueFunction, bids_from_value, realize_dispatch, \
    solve_value_function, withholding_sigma
from .bounds import BidBounds, PROVENANCE_CED, PROVENANCE_DETERMINISTIC, \
    PROVENANCE_LMP, bid_bounds_table, cap_bids, deterministic_bounds_table
from .data import data_path
from .grid import Network, load_network
from .uncertainty import NetloadForecast, ScenarioSet, UncertaintyModel, \
    load_forecast_csv, parse_model, sample_netload


class SimError(RuntimeError):
    pass


@dataclass(frozen=True)
class AgentSpec:
    storage_id: int
    withholding_scale: float
    grid_points: int = 101
    quadrature_nodes: int = 7


@dataclass(frozen=True)
class ExperimentConfig:
    network_file: str
    forecast_file: str
    epsilon: float = 0.05
    model: str = "gaussian"
    sigma_multiplier: float = 1.0
    da_scenarios: int = 10
    rt_samples: int = 100
    horizon: int = 24
    seed: int = 0
    complementarity: str = "relaxed"
    bounds: str = "ced-dual"     # ced-dual | lmp-anticipated | deterministic | none
    window: str = "remaining"
    rolling_bounds: bool = False  # re-anchor the bound dispatch at realized SoC hourly
    curtailment: float = 0.0
    coverage_samples: int = 500
    agents: tuple[AgentSpec, ...] = ()

    def __post_init__(self):
        if self.da_scenarios < 1 or self.rt_samples < 1:
            raise SimError("scenario counts must be >= 1")
        if self.sigma_multiplier < 0:
            raise SimError("sigma_multiplier must be >= 0")
        if self.bounds not in ("ced-dual", "lmp-anticipated", "deterministic", "none"):
            raise SimError(f"unknown bounds provenance {self.bounds!r}")


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    agents = tuple(AgentSpec(storage_id=int(a["storage_id"]),
                             withholding_scale=float(a["withholding_scale"]),
                             grid_points=int(a.get("grid_points", 101)),
                             quadrature_nodes=int(a.get("quadrature_nodes", 7)))
                   for a in raw.pop("agents", []))
    return ExperimentConfig(agents=agents, **raw)


def resolve_data_file(name: str, base: Path | None = None) -> Path:
    p = Path(name)
    if p.is_absolute() and p.is_file():
        return p
    if base is not None and (base / p).is_file():
        return base / p
    if p.is_file():
        return p
    return data_path(name)


def load_inputs(config: ExperimentConfig, base: Path | None = None
                ) -> tuple[Network, NetloadForecast, UncertaintyModel]:
    network = load_network(resolve_data_file(config.network_file, base))
    if config.curtailment > 0.0:
        network = curtail_generation(network, config.curtailment)
    forecast = load_forecast_csv(resolve_data_file(config.forecast_file, base),
                                 n_nodes=network.n_buses, horizon=config.horizon)
    return network, forecast, parse_model(config.model)


def curtail_generation(network: Network, ratio: float) -> Network:
    """Scarcity knob: scale every generator's maximum output by (1-ratio)."""
    gens = tuple(replace(g, g_max=g.g_max * (1.0 - ratio),
                         g_min=min(g.g_min, g.g_max * (1.0 - ratio)))
                 for g in network.generators)
    return replace(network, generators=gens)


def network_with_initial_soc(network: Network, fraction: float) -> Network:
    stos = tuple(replace(s, e_initial=s.e_min + fraction * (s.e_max - s.e_min))
                 for s in network.storages)
    return replace(network, storages=stos)


# ---------------------------------------------------------------------------
# scenario generation and day-ahead clearing
# ---------------------------------------------------------------------------

def generate_scenarios(config: ExperimentConfig, network: Network,
                       forecast: NetloadForecast,
                       model: UncertaintyModel) -> ScenarioSet:
    """Day-ahead scenarios are the base mean scaled by a uniform [0.9, 1.1]
    daily factor; each gets ``rt_samples`` realizations at the multiplied
    sigma.  Fully reproducible from the config seed."""
    if forecast.n_nodes != network.n_buses or forecast.horizon < config.horizon:
        raise SimError(f"forecast shape {forecast.mean.shape} does not cover "
                       f"{network.n_buses} buses x {config.horizon} periods")
    mu = forecast.mean[:, :config.horizon]
    sigma = forecast.std[:, :config.horizon] * config.sigma_multiplier
    das = []
    rts = []
    for k in range(config.da_scenarios):
        factor = 0.9 + 0.2 * np.random.default_rng([config.seed, 977, k]).random()
        da_mu = mu * factor
        sub_seed = int(np.random.SeedSequence([config.seed, 1499, k]).generate_state(1)[0])
        ss = sample_netload(NetloadForecast(mean=da_mu, std=sigma), model,
                            config.rt_samples, sub_seed)
        das.append(da_mu)
        rts.append(ss.rt_samples[0])
    return ScenarioSet(da_scenarios=tuple(das), rt_samples=tuple(rts), seed=config.seed)


def clear_day_ahead(network: Network, da_scenario: np.ndarray,
                    scenario_id: int | None = None) -> tuple[np.ndarray, dp.DispatchSolution]:
    """Day-ahead prices from a multi-period dispatch on the scenario mean."""
    prob = dp.build_oed(network, da_scenario)
    sol = dp.resolve_complementarity(prob, dp.solve(prob))
    if sol.status != dp.OPTIMAL:
        raise SimError(f"day-ahead clearing {sol.status}"
                       + (f" for scenario {scenario_id}" if scenario_id is not None else ""))
    return sol.lmp, sol


def bounds_for_scenario(network: Network, da_mu: np.ndarray, sigma: np.ndarray,
                        config: ExperimentConfig, model: UncertaintyModel,
                        da_lmp: np.ndarray) -> Optional[BidBounds]:
    if config.bounds == "none":
        return None
    if config.bounds == "deterministic":
        return deterministic_bounds_table(da_lmp, network, config.horizon)
    prob = dp.build_ced(network, NetloadForecast(mean=da_mu, std=sigma),
                        config.epsilon, model, complementarity=config.complementarity)
    sol = dp.resolve_complementarity(prob, dp.solve(prob))
    if sol.status != dp.OPTIMAL:
        raise SimError(f"bound-generating dispatch {sol.status}")
    provenance = PROVENANCE_LMP if config.bounds == "lmp-anticipated" else PROVENANCE_CED
    return bid_bounds_table(sol, network, config.epsilon, config.window, provenance)


@dataclass
class StorageAgent:
    storage_id: int
    spec: AgentSpec
    value_fn: ValueFunction


def build_agents(network: Network, config: ExperimentConfig,
                 da_lmp: np.ndarray) -> list[StorageAgent]:
    """One agent per storage; storages without a config block default to
    truthful (scale 0)."""
    by_id = {a.storage_id: a for a in config.agents}
    agents = []
    for s, sto in enumerate(network.storages):
        spec = by_id.get(s, AgentSpec(storage_id=s, withholding_scale=0.0))
        vf = solve_value_function(sto, da_lmp[sto.bus, :config.horizon],
                                  withholding_sigma(spec.withholding_scale),
                                  spec.grid_points, spec.quadrature_nodes)
        agents.append(StorageAgent(storage_id=s, spec=spec, value_fn=vf))
    return agents


# ---------------------------------------------------------------------------
# real-time day and experiment
# ---------------------------------------------------------------------------

@dataclass
class TrialRecord:
    da_id: int
    rt_id: int
    bounds_mode: str            # "on" | "off"
    failed: bool
    failed_at: int = -1
    system_cost: float = np.nan
    profit: np.ndarray = field(default_factory=lambda: np.zeros(0))
    p: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    b: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    soc: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    lmp_at_storage: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    bid_discharge: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    bid_charge: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    capped_discharge: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    capped_charge: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))


def _system_cost(network: Network, g: np.ndarray, p: np.ndarray, b: np.ndarray) -> float:
    cost = 0.0
    for i, gen in enumerate(network.generators):
        cost += gen.cost.value(float(g[i, 0]))
    for s, sto in enumerate(network.storages):
        cost += sto.marginal_cost * float(p[s, 0] + b[s, 0])
    return cost


def run_realtime_day(network: Network, rt_netload: np.ndarray,
                     agents: list[StorageAgent], bounds: Optional[BidBounds],
                     complementarity: str = "relaxed",
                     rolling_bounds=None) -> TrialRecord:
    """Sequential hourly dispatch with SoC-tracking agents.

    Bids are regenerated every hour at the realized SoC; with ``bounds``
    given, every curve is clipped before clearing.  ``rolling_bounds`` may
    supply a callable ``(t, socs) -> BidBounds`` that re-derives the caps
    each hour from the agents' realized state.  Settlement is at the
    storage bus's real-time price.  An infeasible hour marks the trial
    failed (it is excluded from averages but counted).
    """
    T = rt_netload.shape[1]
    S = len(network.storages)
    rec = TrialRecord(da_id=-1, rt_id=-1, bounds_mode="on" if bounds is not None else "off",
                      failed=False, profit=np.zeros(S), p=np.zeros((S, T)),
                      b=np.zeros((S, T)), soc=np.zeros((S, T + 1)),
                      lmp_at_storage=np.zeros((S, T)),
                      bid_discharge=np.zeros((S, T)), bid_charge=np.zeros((S, T)),
                      capped_discharge=np.zeros((S, T)), capped_charge=np.zeros((S, T)))
    socs = np.array([sto.e_initial for sto in network.storages])
    rec.soc[:, 0] = socs
    prior_gen = None
    total_cost = 0.0
    for t in range(T):
        if rolling_bounds is not None:
            bounds = rolling_bounds(t, socs)
            rec.bounds_mode = "on"
        curves: list[BidCurve] = []
        for a in agents:
            raw = bids_from_value(a.value_fn, network.storages[a.storage_id],
                                  float(socs[a.storage_id]), t)
            rec.bid_discharge[a.storage_id, t] = raw.first_discharge_price()
            rec.bid_charge[a.storage_id, t] = raw.first_charge_price()
            if bounds is not None:
                raw = cap_bids(raw, bounds.row(a.storage_id, t))
            rec.capped_discharge[a.storage_id, t] = raw.first_discharge_price()
            rec.capped_charge[a.storage_id, t] = raw.first_charge_price()
            curves.append(raw)
        prob = dp.build_sed(network, t, socs, curves, rt_netload[:, t],
                            prior_gen=prior_gen, complementarity=complementarity)
        sol = dp.resolve_complementarity(prob, dp.solve(prob))
        if sol.status != dp.OPTIMAL:
            rec.failed = True
            rec.failed_at = t
            rec.system_cost = np.nan
            return rec
        total_cost += _system_cost(network, sol.g, sol.p, sol.b)
        for s, sto in enumerate(network.storages):
            price = float(sol.lmp[sto.bus, 0])
            rec.p[s, t] = sol.p[s, 0]
            rec.b[s, t] = sol.b[s, 0]
            rec.lmp_at_storage[s, t] = price
            rec.profit[s] += price * (sol.p[s, 0] - sol.b[s, 0]) \
                - sto.marginal_cost * (sol.p[s, 0] + sol.b[s, 0])
            socs[s] = realize_dispatch(sto, float(socs[s]),
                                       float(sol.p[s, 0]), float(sol.b[s, 0]))
        rec.soc[:, t + 1] = socs
        prior_gen = sol.g[:, 0]
    rec.system_cost = total_cost
    return rec


def rolling_bounds_fn(network: Network, da_mu: np.ndarray, sigma: np.ndarray,
                      config: ExperimentConfig, model: UncertaintyModel):
    """Hourly cap re-derivation anchored at the agents' realized SoC."""

    def recompute(t: int, socs: np.ndarray) -> BidBounds:
        stos = tuple(replace(sto, e_initial=float(min(max(socs[s], sto.e_min),
                                                      sto.e_max)))
                     for s, sto in enumerate(network.storages))
        net_t = replace(network, storages=stos)
        prob = dp.build_ced(net_t, NetloadForecast(mean=da_mu, std=sigma),
                            config.epsilon, model,
                            complementarity=config.complementarity)
        sol = dp.resolve_complementarity(prob, dp.solve(prob))
        if sol.status != dp.OPTIMAL:
            raise SimError(f"rolling bound dispatch {sol.status} at hour {t}")
        provenance = PROVENANCE_LMP if config.bounds == "lmp-anticipated" \
            else PROVENANCE_CED
        return bid_bounds_table(sol, net_t, config.epsilon, config.window, provenance)

    return recompute


def _scenario_block(network: Network, config: ExperimentConfig,
                    model: UncertaintyModel, sigma: np.ndarray,
                    k: int, da_mu: np.ndarray,
                    rt_list: tuple[np.ndarray, ...]) -> list[TrialRecord]:
    da_lmp, _ = clear_day_ahead(network, da_mu, scenario_id=k)
    bnds = bounds_for_scenario(network, da_mu, sigma, config, model, da_lmp)
    rolling = None
    if config.rolling_bounds and config.bounds in ("ced-dual", "lmp-anticipated"):
        rolling = rolling_bounds_fn(network, da_mu, sigma, config, model)
    agents = build_agents(network, config, da_lmp)
    out = []
    for j, rt in enumerate(rt_list):
        for mode, bb in (("off", None), ("on", bnds)):
            rec = run_realtime_day(network, rt, agents, bb, config.complementarity,
                                   rolling_bounds=rolling if mode == "on" else None)
            rec.da_id = k
            rec.rt_id = j
            out.append(rec)
    return out


@dataclass(frozen=True)
class MetricsReport:
    """Aggregates recomputed from the stored trial records."""

    group: dict
    n_trials: int
    n_failed: int
    system_cost: dict
    storage_profit: dict
    deltas: dict

    def to_dict(self) -> dict:
        return {"group": self.group, "n_trials": self.n_trials,
                "n_failed": self.n_failed, "system_cost": self.system_cost,
                "storage_profit": self.storage_profit, "deltas": self.deltas}


def _stats(values: np.ndarray) -> dict:
    if values.size == 0:
        return {"mean": None, "p10": None, "p50": None, "p90": None}
    return {"mean": float(np.mean(values)),
            "p10": float(np.percentile(values, 10)),
            "p50": float(np.percentile(values, 50)),
            "p90": float(np.percentile(values, 90))}


def build_report(config: ExperimentConfig, records: list[TrialRecord]) -> MetricsReport:
    ok = [r for r in records if not r.failed]
    paired: dict[tuple[int, int], dict[str, TrialRecord]] = {}
    for r in ok:
        paired.setdefault((r.da_id, r.rt_id), {})[r.bounds_mode] = r
    both = [v for v in paired.values() if "on" in v and "off" in v]
    cost_on = np.array([v["on"].system_cost for v in both])
    cost_off = np.array([v["off"].system_cost for v in both])
    prof_on = np.array([float(np.sum(v["on"].profit)) for v in both])
    prof_off = np.array([float(np.sum(v["off"].profit)) for v in both])

    def delta(on: np.ndarray, off: np.ndarray) -> dict:
        if on.size == 0:
            return {"absolute": None, "percent": None}
        d = float(np.mean(on) - np.mean(off))
        base = float(np.mean(off))
        return {"absolute": d, "percent": (100.0 * d / base) if base != 0.0 else None}

    scales = {a.storage_id: a.withholding_scale for a in config.agents}
    return MetricsReport(
        group={"withholding_scale": scales or {0: 0.0},
               "sigma_multiplier": config.sigma_multiplier,
               "bounds": config.bounds, "epsilon": config.epsilon,
               "seed": config.seed},
        n_trials=len(records), n_failed=sum(r.failed for r in records),
        system_cost={"with_bounds": _stats(cost_on), "without_bounds": _stats(cost_off)},
        storage_profit={"with_bounds": _stats(prof_on), "without_bounds": _stats(prof_off)},
        deltas={"system_cost": delta(cost_on, cost_off),
                "storage_profit": delta(prof_on, prof_off)},
    )


def run_experiment(config: ExperimentConfig, base: Path | None = None,
                   jobs: int = 1) -> tuple[MetricsReport, list[TrialRecord]]:
    """Full cross of DA scenarios x RT samples x {bounds off, bounds on}.

    Trials are independent given the scenario, so scenario blocks may run
    in parallel; records are concatenated in scenario order, keeping the
    report deterministic for a fixed config and seed.
    """
    network, forecast, model = load_inputs(config, base)
    sigma = forecast.std[:, :config.horizon] * config.sigma_multiplier
    scen = generate_scenarios(config, network, forecast, model)
    args = [(network, config, model, sigma, k, scen.da_scenarios[k], scen.rt_samples[k])
            for k in range(config.da_scenarios)]
    records: list[TrialRecord] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for block in pool.map(_scenario_block_star, args):
                records.extend(block)
    else:
        for a in args:
            records.extend(_scenario_block(*a))
    return build_report(config, records), records


def _scenario_block_star(args):
    return _scenario_block(*args)


# ---------------------------------------------------------------------------
# property verifiers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoverageResult:
    per_storage: np.ndarray        # fraction covered, (S,)
    counted: np.ndarray            # interior cleared storage-periods, (S,)
    threshold: float
    passed: bool


def verify_coverage(config: ExperimentConfig, n_samples: int | None = None,
                    base: Path | None = None) -> CoverageResult:
    """Empirical Monte Carlo check that hindsight truthful bids stay below
    the caps on interior cleared storage-periods.

    Interior means: the cleared side is strictly inside its headroom cap
    and the post-period SoC strictly inside its bounds; binding periods are
    excluded because an uncleared unit may legitimately bid beyond the cap.
    """
    N = n_samples if n_samples is not None else config.coverage_samples
    if N < 100:
        raise SimError(f"coverage needs >= 100 samples, got {N}")
    network, forecast, model = load_inputs(config, base)
    mu = forecast.mean[:, :config.horizon]
    sigma = forecast.std[:, :config.horizon] * config.sigma_multiplier
    fc = NetloadForecast(mean=mu, std=sigma)

    ced = dp.build_ced(network, fc, config.epsilon, model,
                       complementarity=config.complementarity)
    ced_sol = dp.resolve_complementarity(ced, dp.solve(ced))
    if ced_sol.status != dp.OPTIMAL:
        raise SimError(f"coverage CED solve {ced_sol.status}")
    bnds = bid_bounds_table(ced_sol, network, config.epsilon, config.window)

    scen = sample_netload(fc, model, N, config.seed)
    S = len(network.storages)
    covered = np.zeros(S)
    counted = np.zeros(S)
    for d in scen.rt_samples[0]:
        prob = dp.build_oed(network, d)
        sol = dp.resolve_complementarity(prob, dp.solve(prob))
        if sol.status != dp.OPTIMAL:
            continue
        for s, sto in enumerate(network.storages):
            A, B = dp.hindsight_marginal_cost(sol, network, s)
            prev = np.concatenate([[sto.e_initial], sol.e[s, :-1]])
            cap_p = np.minimum(sto.power, (prev - sto.e_min) * sto.efficiency)
            cap_b = np.minimum(sto.power, (sto.e_max - prev) / sto.efficiency)
            tol = 1e-6
            soc_interior = (sol.e[s] > sto.e_min + tol) & (sol.e[s] < sto.e_max - tol)
            disc = (sol.p[s] > tol) & (sol.p[s] < cap_p - tol) & soc_interior
            chrg = (sol.b[s] > tol) & (sol.b[s] < cap_b - tol) & soc_interior
            counted[s] += disc.sum() + chrg.sum()
            covered[s] += np.sum(A[disc] <= bnds.a_bar[s, disc] + 1e-9)
            covered[s] += np.sum(B[chrg] <= bnds.b_bar[s, chrg] + 1e-9)
    eps = config.epsilon
    threshold = (1.0 - eps) - 3.0 * np.sqrt(eps * (1.0 - eps) / N)
    frac = np.where(counted > 0, covered / np.maximum(counted, 1), 1.0)
    return CoverageResult(per_storage=frac, counted=counted, threshold=threshold,
                          passed=bool(np.all(frac >= threshold)))


@dataclass(frozen=True)
class SweepResult:
    axis: str
    points: np.ndarray
    a_bar: np.ndarray      # (points, S, T)
    b_bar: np.ndarray
    passed: bool
    first_violation: Optional[dict]


MONOTONE_SLACK = 1e-6


def verify_monotonicity(config: ExperimentConfig, axis: str,
                        grid=None, base: Path | None = None) -> SweepResult:
    """Sweep one axis, recompute the cap table, and check the proposition's
    sign: caps fall with initial SoC, rise with uncertainty, fall with the
    risk level epsilon."""
    network, forecast, model = load_inputs(config, base)
    mu = forecast.mean[:, :config.horizon]
    base_sigma = forecast.std[:, :config.horizon]

    if axis == "soc":
        pts = np.linspace(0.0, 1.0, 11) if grid is None else np.asarray(grid, float)
        direction = "non-increasing"
    elif axis == "sigma":
        pts = np.array([0.0, 0.5, 1.0, 2.0, 3.0]) if grid is None else np.asarray(grid, float)
        direction = "non-decreasing"
    elif axis == "epsilon":
        pts = np.array([0.01, 0.05, 0.10, 0.15, 0.5]) if grid is None else np.asarray(grid, float)
        direction = "non-increasing"
    else:
        raise SimError(f"unknown sweep axis {axis!r}")
    if pts.size < 5:
        raise SimError(f"sweep needs >= 5 grid points, got {pts.size}")

    tables = []
    for x in pts:
        net = network
        sig = base_sigma * config.sigma_multiplier
        eps = config.epsilon
        if axis == "soc":
            net = network_with_initial_soc(network, float(x))
        elif axis == "sigma":
            sig = base_sigma * float(x)
        else:
            eps = float(x)
        prob = dp.build_ced(net, NetloadForecast(mean=mu, std=sig), eps, model,
                            complementarity=config.complementarity)
        sol = dp.resolve_complementarity(prob, dp.solve(prob))
        if sol.status != dp.OPTIMAL:
            raise SimError(f"sweep dispatch {sol.status} at {axis}={x}")
        tables.append(bid_bounds_table(sol, net, eps, config.window))

    a = np.stack([t.a_bar for t in tables])
    b = np.stack([t.b_bar for t in tables])
    sign = -1.0 if direction == "non-increasing" else 1.0
    diffs_a = sign * np.diff(a, axis=0)
    diffs_b = sign * np.diff(b, axis=0)
    ok = bool(np.all(diffs_a >= -MONOTONE_SLACK) and np.all(diffs_b >= -MONOTONE_SLACK))
    first = None
    if not ok:
        for name, diffs in (("A_bar", diffs_a), ("B_bar", diffs_b)):
            bad = np.argwhere(diffs < -MONOTONE_SLACK)
            if bad.size:
                i, s, t = bad[0]
                first = {"metric": name, "axis": axis,
                         "from": float(pts[i]), "to": float(pts[i + 1]),
                         "storage": int(s), "t": int(t),
                         "before": float((a if name == "A_bar" else b)[i, s, t]),
                         "after": float((a if name == "A_bar" else b)[i + 1, s, t])}
                break
    return SweepResult(axis=axis, points=pts, a_bar=a, b_bar=b,
                       passed=ok, first_violation=first)
