import dataclasses
import json

import numpy as np
import pytest

from gridbound import dispatch as dp
from gridbound.agent import solve_value_function
from gridbound.bounds import BidBounds
from gridbound.data import data_path
from gridbound.grid import Bus, CostFunction, Generator, Line, Network, Storage, load_network
from gridbound.sim import (AgentSpec, ExperimentConfig, SimError, StorageAgent,
                           build_report, clear_day_ahead, generate_scenarios,
                           load_config, load_inputs, run_experiment, run_realtime_day)
from gridbound.uncertainty import Gaussian, load_forecast_csv, parse_model


def small_config(**overrides):
    fields = dict(network_file="desk3.json", forecast_file="desk3_forecast.csv",
                  da_scenarios=2, rt_samples=3, seed=0,
                  agents=(AgentSpec(0, 5.0),))
    fields.update(overrides)
    return ExperimentConfig(**fields)


# --- scenarios ------------------------------------------------------------------

def test_scenario_counts_and_shapes():
    cfg = small_config(da_scenarios=10, rt_samples=100)
    net, fc, model = load_inputs(cfg)
    scen = generate_scenarios(cfg, net, fc, model)
    assert len(scen.da_scenarios) == 10
    assert sum(len(r) for r in scen.rt_samples) == 1000
    assert scen.da_scenarios[0].shape == (3, 24)


def test_zero_multiplier_collapses_rt_to_da():
    cfg = small_config(sigma_multiplier=0.0)
    net, fc, model = load_inputs(cfg)
    scen = generate_scenarios(cfg, net, fc, model)
    for k, da in enumerate(scen.da_scenarios):
        for rt in scen.rt_samples[k]:
            assert np.array_equal(rt, da)


def test_scenarios_bit_reproducible():
    cfg = small_config()
    net, fc, model = load_inputs(cfg)
    a = generate_scenarios(cfg, net, fc, model)
    b = generate_scenarios(cfg, net, fc, model)
    for x, y in zip(a.da_scenarios, b.da_scenarios):
        assert np.array_equal(x, y)
    for xs, ys in zip(a.rt_samples, b.rt_samples):
        for x, y in zip(xs, ys):
            assert np.array_equal(x, y)


def test_da_factor_within_band():
    cfg = small_config(da_scenarios=20)
    net, fc, model = load_inputs(cfg)
    scen = generate_scenarios(cfg, net, fc, model)
    base = fc.mean[:, :24]
    factors = [float(np.median(da / base)) for da in scen.da_scenarios]
    assert all(0.9 <= f <= 1.1 for f in factors)
    assert np.std(factors) > 0.01  # actually varies


# --- day-ahead clearing -----------------------------------------------------------

def bus1(gens, storages=()):
    return Network(buses=(Bus(0),), lines=(), generators=tuple(gens),
                   storages=tuple(storages), slack_bus=0, reserve_ratio=0.0)


QUAD = Generator(0, CostFunction.quadratic(0.01, 20.0), 0.0, 500.0, 500.0, 500.0)


def test_day_ahead_prices_single_bus():
    lmp, sol = clear_day_ahead(bus1([QUAD]), np.array([[100.0, 200.0]]))
    assert lmp[0] == pytest.approx([22.0, 24.0], abs=1e-6)


def test_day_ahead_zero_netload_prices_at_minimum_marginal():
    # at exactly zero load the balance dual is a face (any value <= C'(0));
    # the solver's pick must stay on it, and the limit from above is C'(0)
    lmp, _ = clear_day_ahead(bus1([QUAD]), np.array([[0.0]]))
    assert lmp[0, 0] <= 20.0 + 1e-6
    lmp_eps, _ = clear_day_ahead(bus1([QUAD]), np.array([[1e-3]]))
    assert lmp_eps[0, 0] == pytest.approx(20.0, abs=1e-4)


def test_day_ahead_congestion_separates_nodes():
    gens = (Generator(0, CostFunction.quadratic(0.02, 10.0), 0.0, 400.0, 400.0, 400.0),
            Generator(1, CostFunction.quadratic(0.05, 35.0), 0.0, 400.0, 400.0, 400.0))
    net = Network(buses=(Bus(0), Bus(1)), lines=(Line(0, 1, 10.0, 60.0),),
                  generators=gens, storages=(), slack_bus=0, reserve_ratio=0.0)
    lmp, _ = clear_day_ahead(net, np.array([[20.0], [120.0]]))
    assert lmp[1, 0] - lmp[0, 0] > 1.0


def test_day_ahead_infeasible_names_scenario():
    gen = Generator(0, CostFunction.quadratic(0.01, 20.0), 0.0, 50.0, 50.0, 50.0)
    with pytest.raises(SimError, match="scenario 3"):
        clear_day_ahead(bus1([gen]), np.array([[100.0]]), scenario_id=3)


# --- run_realtime_day --------------------------------------------------------------

def toy_day_setup():
    # fixed 10/30 prices from a two-segment generator; tiny lossless storage
    gen = Generator(0, CostFunction.piecewise([(0, 0), (100, 1000), (400, 10000)]),
                    0.0, 400.0, 400.0, 400.0)
    sto = Storage(0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0)
    net = bus1([gen], [sto])
    rt = np.array([[50.0, 150.0]])
    vf = solve_value_function(sto, [10.0, 30.0], 0.0)
    agents = [StorageAgent(0, AgentSpec(0, 0.0), vf)]
    return net, rt, agents, vf


def test_toy_day_profit_matches_dp_value():
    net, rt, agents, vf = toy_day_setup()
    rec = run_realtime_day(net, rt, agents, None)
    assert not rec.failed
    assert float(rec.profit[0]) == pytest.approx(vf.value_at(0, 0.0), abs=1e-6)
    assert vf.value_at(0, 0.0) == 20.0


def test_inactive_caps_leave_trial_bitwise_identical():
    net, rt, agents, _ = toy_day_setup()
    plain = run_realtime_day(net, rt, agents, None)
    generous = BidBounds(a_bar=np.full((1, 2), 1e5), b_bar=np.full((1, 2), 1e5),
                         epsilon=0.05, provenance="CED-dual")
    capped = run_realtime_day(net, rt, agents, generous)
    assert np.array_equal(plain.p, capped.p)
    assert np.array_equal(plain.b, capped.b)
    assert np.array_equal(plain.profit, capped.profit)
    assert plain.system_cost == capped.system_cost


def test_soc_stays_within_limits_and_cost_definition_holds():
    cfg = small_config()
    report, records = run_experiment(cfg)
    net = load_network(data_path("desk3.json"))
    sto = net.storages[0]
    for rec in records:
        assert not rec.failed
        assert np.all(rec.soc >= sto.e_min - 1e-9)
        assert np.all(rec.soc <= sto.e_max + 1e-9)
        # profit identity: settle every hour at the storage-bus price
        recomputed = np.sum(rec.lmp_at_storage * (rec.p - rec.b)
                            - sto.marginal_cost * (rec.p + rec.b), axis=1)
        assert recomputed[0] == pytest.approx(float(rec.profit[0]), abs=1e-6)


def test_settlement_balances_on_uncongested_bus():
    # without congestion the load payment equals generator plus storage revenue
    sto = Storage(0, 10.0, 0.0, 40.0, 1.0, 0.0, 20.0)
    net = bus1([QUAD], [sto])
    prob = dp.build_sed(net, 0, [20.0], [(21.0, 19.0)], [150.0])
    sol = dp.solve(prob)
    lam = float(sol.duals.lambda_[0])
    load_payment = lam * 150.0
    gen_revenue = lam * float(sol.g[0, 0])
    sto_revenue = lam * float(sol.p[0, 0] - sol.b[0, 0])
    assert load_payment == pytest.approx(gen_revenue + sto_revenue, abs=1e-6)


def test_failed_trial_is_marked_and_counted():
    gen = Generator(0, CostFunction.quadratic(0.01, 20.0), 0.0, 60.0, 60.0, 60.0)
    sto = Storage(0, 1.0, 0.0, 2.0, 1.0, 0.0, 1.0)
    net = bus1([gen], [sto])
    rt = np.array([[50.0, 500.0]])  # second hour beyond all capacity
    vf = solve_value_function(sto, [20.0, 20.0], 0.0)
    rec = run_realtime_day(net, rt, [StorageAgent(0, AgentSpec(0, 0.0), vf)], None)
    assert rec.failed and rec.failed_at == 1
    assert np.isnan(rec.system_cost)
    report = build_report(small_config(), [rec])
    assert report.n_failed == 1
    assert report.system_cost["with_bounds"]["mean"] is None


# --- run_experiment / report ---------------------------------------------------------

def test_experiment_deterministic_and_pairwise_complete():
    cfg = small_config()
    rep1, recs1 = run_experiment(cfg)
    rep2, recs2 = run_experiment(cfg)
    assert json.dumps(rep1.to_dict(), sort_keys=True) == \
        json.dumps(rep2.to_dict(), sort_keys=True)
    assert rep1.n_trials == 2 * cfg.da_scenarios * cfg.rt_samples
    modes = {(r.da_id, r.rt_id, r.bounds_mode) for r in recs1}
    assert len(modes) == rep1.n_trials


def test_zero_scale_zero_multiplier_gives_exactly_zero_deltas():
    cfg = small_config(sigma_multiplier=0.0, agents=(AgentSpec(0, 0.0),),
                       da_scenarios=1, rt_samples=2)
    report, _ = run_experiment(cfg)
    assert report.deltas["system_cost"]["absolute"] == 0.0
    assert report.deltas["storage_profit"]["absolute"] == 0.0


def test_report_recomputed_from_records():
    cfg = small_config()
    report, records = run_experiment(cfg)
    ok = [r for r in records if not r.failed]
    on = np.mean([r.system_cost for r in ok if r.bounds_mode == "on"])
    off = np.mean([r.system_cost for r in ok if r.bounds_mode == "off"])
    assert report.deltas["system_cost"]["absolute"] == pytest.approx(on - off, abs=1e-9)


def test_parallel_jobs_reproduce_serial_report():
    cfg = small_config()
    rep_serial, _ = run_experiment(cfg, jobs=1)
    rep_par, _ = run_experiment(cfg, jobs=2)
    assert json.dumps(rep_serial.to_dict(), sort_keys=True) == \
        json.dumps(rep_par.to_dict(), sort_keys=True)


def test_config_loading_and_validation(tmp_path):
    cfg = load_config(data_path("experiment_desk3_small.json"))
    assert cfg.da_scenarios == 2 and cfg.rt_samples == 5
    assert cfg.agents[0].withholding_scale == 5.0
    bad = dict(network_file="desk3.json", forecast_file="desk3_forecast.csv",
               da_scenarios=0)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(SimError):
        load_config(path)
    with pytest.raises(SimError):
        ExperimentConfig(network_file="x", forecast_file="y", bounds="sideways")


def test_curtailment_scales_generation():
    from gridbound.sim import curtail_generation

    net = load_network(data_path("desk3.json"))
    cut = curtail_generation(net, 0.4)
    for g0, g1 in zip(net.generators, cut.generators):
        assert g1.g_max == pytest.approx(0.6 * g0.g_max)


def test_rolling_bounds_mode_recomputes_hourly():
    cfg = small_config(da_scenarios=1, rt_samples=1, rolling_bounds=True)
    report, records = run_experiment(cfg)
    assert report.n_failed == 0
    on = [r for r in records if r.bounds_mode == "on"][0]
    off = [r for r in records if r.bounds_mode == "off"][0]
    assert not np.isnan(on.system_cost) and not np.isnan(off.system_cost)


def test_doubling_rt_samples_is_monte_carlo_stable():
    base = small_config(da_scenarios=1, rt_samples=6)
    more = small_config(da_scenarios=1, rt_samples=12)
    rep_a, _ = run_experiment(base)
    rep_b, _ = run_experiment(more)
    a = rep_a.system_cost["without_bounds"]["mean"]
    b = rep_b.system_cost["without_bounds"]["mean"]
    assert abs(a - b) / b < 0.01
