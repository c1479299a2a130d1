"""Strategic storage participant: opportunity value function and bid curves.

The agent assumes real-time prices are normally distributed around the
day-ahead price with a standard deviation set by its withholding scale
(sigma = 10 * scale, scale in [0, 5]).  A backward dynamic program over a
state-of-charge grid, with the price expectation discretized by
Gauss-Hermite quadrature, yields the value of stored energy at the end of
each period.  Bid curves then price each quantity step at the interpolated
value-function slope: discharging is offered at cost plus the foregone
stored value (grossed up by efficiency), charging at the gained stored
value net of cost.

Index convention: ``values[t]`` is the value of SoC held *before* period t,
so ``values[T] = 0`` is terminal and period-t bids read the post-action
slope ``subgradients[t + 1]``.  With zero price uncertainty this reproduces
the hindsight marginal costs derived from the dispatch duals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Storage


class AgentError(ValueError):
    pass


SIGMA_PER_SCALE = 10.0  # $/MWh of assumed price std per unit withholding scale
MAX_SCALE = 5.0
BID_STEPS = 10  # quantity steps per curve side


@dataclass(frozen=True)
class WithholdingProfile:
    scale: float

    @property
    def sigma(self) -> float:
        return withholding_sigma(self.scale)


def withholding_sigma(scale: float) -> float:
    """Linear map from withholding scale 0..5 to price sigma 0..50 $/MWh."""
    if not 0.0 <= scale <= MAX_SCALE:
        raise AgentError(f"withholding scale {scale} outside [0, {MAX_SCALE}]")
    return SIGMA_PER_SCALE * scale


@dataclass(frozen=True)
class ValueFunction:
    """SoC-gridded opportunity values and their right-difference slopes.

    ``values`` has shape (T+1, K): row t is the value of holding each grid
    SoC entering period t; row T is the terminal zero.  ``subgradients``
    are the per-row right differences ($/MWh), last column repeated.
    """

    soc_grid: np.ndarray
    values: np.ndarray
    subgradients: np.ndarray
    horizon: int

    def value_at(self, t: int, e: float) -> float:
        return float(np.interp(e, self.soc_grid, self.values[t]))

    def slope_at(self, t: int, e: float) -> float:
        return float(np.interp(e, self.soc_grid, self.subgradients[t]))


@dataclass(frozen=True)
class BidCurve:
    """Stepwise offers anchored at the current SoC.

    Each side is a tuple of (segment width MWh, price $/MWh); discharge
    prices are non-decreasing and charge prices non-increasing along the
    curve, and total widths respect the power and SoC headroom caps.
    """

    t: int
    soc: float
    discharge: tuple[tuple[float, float], ...]
    charge: tuple[tuple[float, float], ...]

    def first_discharge_price(self) -> float:
        return self.discharge[0][1] if self.discharge else float("inf")

    def first_charge_price(self) -> float:
        return self.charge[0][1] if self.charge else float("-inf")


def _right_differences(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    h = grid[1] - grid[0]
    v = np.diff(values, axis=-1) / h
    return np.concatenate([v, v[..., -1:]], axis=-1)


def solve_value_function(storage: Storage, da_price, price_sigma: float,
                         grid_points: int = 101, quadrature_nodes: int = 7) -> ValueFunction:
    """Backward DP over the SoC grid under Normal(da_price[t], price_sigma).

    The within-period maximization is exact for the piecewise-linear
    interpolated value function: every reachable grid knot plus the two
    reach endpoints are evaluated.
    """
    lam_bar = np.asarray(da_price, dtype=float).reshape(-1)
    T = lam_bar.size
    if grid_points < 11:
        raise AgentError(f"grid_points must be >= 11, got {grid_points}")
    if quadrature_nodes < 3:
        raise AgentError(f"quadrature_nodes must be >= 3, got {quadrature_nodes}")
    if price_sigma < 0:
        raise AgentError(f"price_sigma must be >= 0, got {price_sigma}")

    K = grid_points
    eta = storage.efficiency
    M = storage.marginal_cost
    grid = np.linspace(storage.e_min, storage.e_max, K)

    nodes, weights = np.polynomial.hermite.hermgauss(quadrature_nodes)
    weights = weights / np.sqrt(np.pi)

    # reachable post-action SoC from each grid point
    e_lo = np.maximum(grid - storage.power / eta, grid[0])
    e_hi = np.minimum(grid + storage.power * eta, grid[-1])

    # candidate next states: all knots plus the two exact endpoints per row
    cand = np.tile(grid, (K, 1))
    cand = np.concatenate([cand, e_lo[:, None], e_hi[:, None]], axis=1)
    feasible = (cand >= e_lo[:, None] - 1e-12) & (cand <= e_hi[:, None] + 1e-12)
    delta = cand - grid[:, None]  # >0 charge, <0 discharge

    values = np.zeros((T + 1, K))
    for t in range(T - 1, -1, -1):
        vnext = values[t + 1]
        cont = np.interp(cand, grid, vnext)
        acc = np.zeros(K)
        for lam, w in zip(lam_bar[t] + np.sqrt(2.0) * price_sigma * nodes, weights):
            reward = np.where(
                delta <= 0.0,
                (lam - M) * eta * (-delta),        # discharge p = -delta*eta
                -(lam + M) / eta * delta,          # charge b = delta/eta
            )
            total = np.where(feasible, reward + cont, -np.inf)
            acc += w * total.max(axis=1)
        values[t] = acc

    return ValueFunction(soc_grid=grid, values=values,
                         subgradients=_right_differences(values, grid), horizon=T)


def bids_from_value(value_fn: ValueFunction, storage: Storage, soc: float,
                    t: int, steps: int = BID_STEPS) -> BidCurve:
    """Stepwise bid curve for period ``t`` at the current SoC.

    Quantity step k is priced at the value-function slope evaluated at the
    SoC reached after clearing the full first k steps, so deeper discharge
    steps carry higher prices (and deeper charge steps lower ones) whenever
    the value function is concave.
    """
    if not storage.e_min - 1e-9 <= soc <= storage.e_max + 1e-9:
        raise AgentError(f"SoC {soc} outside [{storage.e_min}, {storage.e_max}]")
    eta = storage.efficiency
    M = storage.marginal_cost
    v = value_fn.subgradients[t + 1]
    grid = value_fn.soc_grid

    cap_p = min(storage.power, max(0.0, (soc - storage.e_min) * eta))
    cap_b = min(storage.power, max(0.0, (storage.e_max - soc) / eta))

    discharge = ()
    if cap_p > 1e-12:
        q = cap_p / steps * np.arange(1, steps + 1)
        prices = M + np.interp(soc - q / eta, grid, v) / eta
        prices = np.maximum.accumulate(prices)  # guard fp noise in v
        discharge = tuple((cap_p / steps, float(pr)) for pr in prices)
    charge = ()
    if cap_b > 1e-12:
        q = cap_b / steps * np.arange(1, steps + 1)
        prices = np.interp(soc + q * eta, grid, v) * eta - M
        prices = np.minimum.accumulate(prices)
        charge = tuple((cap_b / steps, float(pr)) for pr in prices)
    return BidCurve(t=t, soc=soc, discharge=discharge, charge=charge)


def realize_dispatch(storage: Storage, soc: float, p: float, b: float) -> float:
    """SoC update e' = e - p/eta + b*eta for a cleared quantity pair.

    A violation of the SoC range beyond 1e-9 indicates a market-clearing
    bug and raises; sub-tolerance excursions are clamped.
    """
    e_new = soc - p / storage.efficiency + b * storage.efficiency
    if e_new < storage.e_min - 1e-9 or e_new > storage.e_max + 1e-9:
        raise AgentError(
            f"cleared dispatch (p={p}, b={b}) drives SoC to {e_new}, outside "
            f"[{storage.e_min}, {storage.e_max}]")
    return float(min(max(e_new, storage.e_min), storage.e_max))
