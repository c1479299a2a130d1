import numpy as np
import pytest

from gridbound.agent import (AgentError, BidCurve, ValueFunction, WithholdingProfile,
                             bids_from_value, realize_dispatch, solve_value_function,
                             withholding_sigma)
from gridbound.grid import Storage

from oracles import dp_enumeration


IDEAL = Storage(0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0)
VALLEY_PEAK = np.array([12, 10, 9, 9, 10, 12, 18, 25, 30, 33, 35, 36, 38, 40,
                        45, 55, 70, 80, 75, 60, 45, 35, 25, 18], dtype=float)


def lossy(e0=20.0):
    return Storage(0, 10.0, 0.0, 40.0, 0.95, 10.0, e0)


# --- withholding map ----------------------------------------------------------

def test_withholding_sigma_linear_map():
    assert withholding_sigma(0.0) == 0.0
    assert withholding_sigma(5.0) == 50.0
    assert withholding_sigma(3.0) == 30.0
    assert WithholdingProfile(2.5).sigma == 25.0


@pytest.mark.parametrize("scale", [-0.1, 5.01])
def test_withholding_scale_range_enforced(scale):
    with pytest.raises(AgentError):
        withholding_sigma(scale)


# --- solve_value_function -------------------------------------------------------

def test_two_period_toy_value_is_exact():
    vf = solve_value_function(IDEAL, [10.0, 30.0], 0.0)
    assert vf.value_at(0, 0.0) == 20.0  # exact, not approximate


def test_toy_matches_exhaustive_dp_oracle():
    sto = Storage(0, 3.0, 0.0, 8.0, 0.9, 2.0, 4.0)
    prices = [15.0, 40.0, 22.0, 55.0]
    vf = solve_value_function(sto, prices, 0.0, grid_points=401)
    grid, V = dp_enumeration(sto, prices)
    for e in (0.0, 2.0, 4.0, 6.0, 8.0):
        assert vf.value_at(0, e) == pytest.approx(
            float(np.interp(e, grid, V[0])), abs=0.2)


def test_flat_prices_below_cost_give_zero_value():
    sto = Storage(0, 5.0, 0.0, 20.0, 0.9, 8.0, 10.0)
    vf = solve_value_function(sto, [5.0] * 6, 0.0)  # prices below throughput cost
    assert np.max(np.abs(vf.values)) == 0.0


def test_flat_prices_no_profitable_cycle_from_empty():
    # above-cost flat prices still leave an empty battery with zero value,
    # and its charge bid stays out of the money, so the agent idles
    sto = Storage(0, 5.0, 0.0, 20.0, 0.9, 8.0, 0.0)
    vf = solve_value_function(sto, [20.0] * 6, 0.0)
    assert vf.value_at(0, sto.e_min) == pytest.approx(0.0, abs=1e-12)
    curve = bids_from_value(vf, sto, sto.e_min, 0)
    assert curve.discharge == ()  # nothing stored, nothing to offer
    assert curve.first_charge_price() < 20.0


def test_values_nondecreasing_in_soc_for_nonnegative_prices():
    rng = np.random.default_rng(14)
    for _ in range(10):
        sto = Storage(0, float(rng.uniform(2, 10)), 0.0, float(rng.uniform(10, 50)),
                      float(rng.uniform(0.85, 1.0)), float(rng.uniform(0, 8)),
                      0.0)
        prices = rng.uniform(5, 60, size=8)
        vf = solve_value_function(sto, prices, 0.0)
        assert np.all(np.diff(vf.values, axis=1) >= -1e-9)


def test_value_rows_concave():
    rng = np.random.default_rng(23)
    for _ in range(20):
        sto = Storage(0, float(rng.uniform(2, 10)), 0.0, float(rng.uniform(10, 50)),
                      float(rng.uniform(0.85, 1.0)), float(rng.uniform(0, 8)),
                      float(rng.uniform(0, 10)))
        prices = rng.uniform(5, 60, size=int(rng.integers(3, 9)))
        sigma = float(rng.uniform(0, 30))
        vf = solve_value_function(sto, prices, sigma)
        h = vf.soc_grid[1] - vf.soc_grid[0]
        second = np.diff(vf.values, 2, axis=1) / h
        assert np.max(second) <= 1e-6
        assert np.all(np.diff(vf.subgradients, axis=1) <= 1e-9)


def test_grid_refinement_stable():
    sto = lossy()
    for sigma in (0.0, 20.0):
        v101 = solve_value_function(sto, VALLEY_PEAK, sigma, grid_points=101)
        v201 = solve_value_function(sto, VALLEY_PEAK, sigma, grid_points=201)
        a = v101.value_at(0, sto.e_initial)
        b = v201.value_at(0, sto.e_initial)
        assert abs(a - b) <= 0.01 * max(1.0, abs(b))


def test_preconditions_enforced():
    with pytest.raises(AgentError):
        solve_value_function(IDEAL, [10.0], 0.0, grid_points=5)
    with pytest.raises(AgentError):
        solve_value_function(IDEAL, [10.0], 0.0, quadrature_nodes=1)
    with pytest.raises(AgentError):
        solve_value_function(IDEAL, [10.0], -1.0)


# --- zero-uncertainty consistency with dispatch duals ---------------------------

def test_truthful_agent_reproduces_hindsight_costs():
    # a price-marginal (water-level) storage pins the stored-energy dual, so
    # a zero-uncertainty agent fed the dispatch prices must quote the same
    # truthful costs at every hour before its final sale
    from gridbound import dispatch as dp
    from gridbound.grid import Bus, CostFunction, Generator, Network

    gen = Generator(0, CostFunction.quadratic(0.02, 15.0), 0.0, 1000.0, 1000.0, 1000.0)
    sto = Storage(0, 200.0, 0.0, 600.0, 0.95, 5.0, 50.0)
    net = Network(buses=(Bus(0),), lines=(), generators=(gen,), storages=(sto,),
                  slack_bus=0, reserve_ratio=0.0)
    d = np.array([[100.0, 80.0, 130.0, 380.0, 260.0, 500.0]])
    sol = dp.resolve_complementarity(*(lambda p: (p, dp.solve(p)))(dp.build_oed(net, d)))
    assert sol.b[0].max() > 1.0 and sol.p[0].max() > 1.0  # actually trades
    A, B = dp.hindsight_marginal_cost(sol, net, 0)
    vf = solve_value_function(sto, sol.lmp[0], 0.0, grid_points=401)
    soc = sto.e_initial
    for t in range(d.shape[1] - 1):
        curve = bids_from_value(vf, sto, soc, t)
        assert curve.first_discharge_price() == pytest.approx(A[t], abs=0.25)
        assert curve.first_charge_price() == pytest.approx(B[t], abs=0.25)
        soc = realize_dispatch(sto, soc, float(sol.p[0, t]), float(sol.b[0, t]))


# --- withholding monotonicity ----------------------------------------------------

def test_scale_five_discharge_price_strictly_above_truthful():
    sto = lossy()
    lo = solve_value_function(sto, VALLEY_PEAK, withholding_sigma(0.0))
    hi = solve_value_function(sto, VALLEY_PEAK, withholding_sigma(5.0))
    c_lo = bids_from_value(lo, sto, sto.e_initial, 0)
    c_hi = bids_from_value(hi, sto, sto.e_initial, 0)
    assert c_hi.first_discharge_price() > c_lo.first_discharge_price()


def test_first_step_prices_monotone_in_assumed_sigma():
    # discharge side checked where the slope is spike-sale driven (scarce
    # inventory), charge side where it is purchase-substitution driven
    # (scarce headroom); Q=15 keeps quadrature noise below the ordering.
    sell_side = Storage(0, 10.0, 0.0, 40.0, 0.95, 10.0, 4.0)
    buy_side = Storage(0, 10.0, 0.0, 40.0, 0.95, 10.0, 36.0)
    discharge = []
    charge = []
    for scale in (0.0, 1.0, 2.0, 3.0, 4.0, 5.0):
        sigma = withholding_sigma(scale)
        vf_s = solve_value_function(sell_side, VALLEY_PEAK, sigma, quadrature_nodes=15)
        vf_b = solve_value_function(buy_side, VALLEY_PEAK, sigma, quadrature_nodes=15)
        discharge.append(bids_from_value(vf_s, sell_side, 4.0, 0).first_discharge_price())
        charge.append(bids_from_value(vf_b, buy_side, 36.0, 0).first_charge_price())
    assert np.all(np.diff(discharge) >= -1e-9), discharge
    assert np.all(np.diff(charge) <= 1e-9), charge


# --- bids_from_value ---------------------------------------------------------------

def flat_value_fn(storage, slope, T=2, K=11):
    grid = np.linspace(storage.e_min, storage.e_max, K)
    values = np.tile(slope * grid, (T + 1, 1))
    sub = np.full((T + 1, K), slope, dtype=float)
    return ValueFunction(soc_grid=grid, values=values, subgradients=sub, horizon=T)


def test_flat_subgradient_gives_flat_curves():
    sto = Storage(0, 10.0, 0.0, 40.0, 1.0, 0.0, 20.0)
    vf = flat_value_fn(sto, 30.0)
    curve = bids_from_value(vf, sto, 20.0, 0)
    assert all(pr == pytest.approx(30.0) for _, pr in curve.discharge)
    assert all(pr == pytest.approx(30.0) for _, pr in curve.charge)


def test_first_step_price_arithmetic():
    sto = Storage(0, 10.0, 0.0, 40.0, 0.95, 10.0, 20.0)
    vf = flat_value_fn(sto, 20.0)
    curve = bids_from_value(vf, sto, 20.0, 0)
    assert curve.first_discharge_price() == pytest.approx(10.0 + 20.0 / 0.95)
    assert curve.first_charge_price() == pytest.approx(0.95 * 20.0 - 10.0)


def test_curve_caps_respect_power_and_headroom():
    sto = lossy(e0=3.0)
    vf = solve_value_function(sto, VALLEY_PEAK, 0.0)
    curve = bids_from_value(vf, sto, 3.0, 0)
    # discharge limited by stored energy, charge by power
    assert sum(q for q, _ in curve.discharge) == pytest.approx(
        min(sto.power, (3.0 - sto.e_min) * sto.efficiency))
    assert sum(q for q, _ in curve.charge) == pytest.approx(
        min(sto.power, (sto.e_max - 3.0) / sto.efficiency))
    d_prices = [pr for _, pr in curve.discharge]
    c_prices = [pr for _, pr in curve.charge]
    assert d_prices == sorted(d_prices)
    assert c_prices == sorted(c_prices, reverse=True)


def test_bids_out_of_soc_range_rejected():
    sto = lossy()
    vf = flat_value_fn(sto, 20.0)
    with pytest.raises(AgentError):
        bids_from_value(vf, sto, 41.0, 0)


# --- realize_dispatch ----------------------------------------------------------------

def test_realize_dispatch_updates_soc():
    sto = Storage(0, 10.0, 0.0, 40.0, 0.95, 10.0, 20.0)
    assert realize_dispatch(sto, 20.0, 0.0, 0.0) == 20.0
    ideal = Storage(0, 5.0, 0.0, 40.0, 1.0, 0.0, 0.0)
    assert realize_dispatch(ideal, 0.0, 0.0, 5.0) == 5.0
    assert realize_dispatch(sto, 1.0, 0.475, 0.0) == pytest.approx(0.5)


def test_realize_dispatch_flags_violations():
    sto = Storage(0, 10.0, 0.0, 40.0, 1.0, 0.0, 20.0)
    with pytest.raises(AgentError):
        realize_dispatch(sto, 1.0, 5.0, 0.0)
    # sub-tolerance excursions are clamped instead
    assert realize_dispatch(sto, 40.0, 0.0, 5e-10) == 40.0
