"""Locational storage bid caps from chance-constrained dispatch duals.

The discharge cap adds the windowed maximum stored-energy value (grossed up
by efficiency) to the throughput cost; the charge cap mirrors it with the
windowed minimum.  Both can equivalently be read off the risk-aware nodal
prices for cleared, interior units.  A deterministic benchmark in the style
of current default-bid practice (4th highest day-ahead price plus physical
cost) is provided for comparison, and ``cap_bids`` applies any of them to
submitted offers by clipping.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dispatch import DispatchSolution
from .grid import Network, Storage

PROVENANCE_CED = "CED-dual"
PROVENANCE_LMP = "LMP-anticipated"
PROVENANCE_DETERMINISTIC = "Deterministic-benchmark"


class BoundsError(ValueError):
    pass


@dataclass(frozen=True)
class BidBounds:
    """Per-storage, per-period caps: discharge ``a_bar`` and charge ``b_bar``,
    both (S, T) arrays."""

    a_bar: np.ndarray
    b_bar: np.ndarray
    epsilon: float
    provenance: str

    def row(self, s: int, t: int) -> tuple[float, float]:
        return float(self.a_bar[s, t]), float(self.b_bar[s, t])


def _window(t: int, T: int, window: str) -> slice:
    if window == "remaining":
        return slice(t, T)
    if window == "full":
        return slice(0, T)
    raise BoundsError(f"window must be 'remaining' or 'full', got {window!r}")


def bounds_from_ced(ced_solution: DispatchSolution, storage: Storage, s: int,
                    t: int, window: str = "remaining") -> tuple[float, float]:
    """One (discharge cap, charge cap) row at period ``t`` from the stored
    energy duals of a solved chance-constrained dispatch."""
    theta = ced_solution.duals.theta[s]
    sl = _window(t, theta.size, window)
    if theta[sl].size == 0:
        raise BoundsError(f"empty extremum window at t={t}")
    a_bar = storage.marginal_cost + float(np.max(theta[sl])) / storage.efficiency
    b_bar = float(np.min(theta[sl])) * storage.efficiency - storage.marginal_cost
    return a_bar, b_bar


def bounds_from_lmp(risk_lmp: np.ndarray, storage: Storage, t: int,
                    window: str = "remaining") -> tuple[float, float]:
    """Anticipated caps from the risk-aware nodal price profile at the
    storage bus: min/max prices map to the stored-energy value extremes
    (charge minimum grossed up, discharge maximum netted down), which makes
    the caps equal the windowed price extremes themselves."""
    lmp = np.asarray(risk_lmp, dtype=float).reshape(-1)
    sl = _window(t, lmp.size, window)
    if lmp[sl].size == 0:
        raise BoundsError(f"empty extremum window at t={t}")
    m, eta = storage.marginal_cost, storage.efficiency
    theta_min = (float(np.min(lmp[sl])) + m) / eta
    theta_max = (float(np.max(lmp[sl])) - m) * eta
    a_bar = m + theta_max / eta
    b_bar = theta_min * eta - m
    return a_bar, b_bar


def bid_bounds_table(ced_solution: DispatchSolution, network: Network,
                     epsilon: float, window: str = "remaining",
                     provenance: str = PROVENANCE_CED) -> BidBounds:
    """Assemble the full (S, T) cap table from one CED solve."""
    S = len(network.storages)
    T = ced_solution.duals.theta.shape[1] if S else 0
    a = np.zeros((S, T))
    b = np.zeros((S, T))
    for s, sto in enumerate(network.storages):
        if provenance == PROVENANCE_LMP:
            lmp = ced_solution.lmp[sto.bus]
            for t in range(T):
                a[s, t], b[s, t] = bounds_from_lmp(lmp, sto, t, window)
        else:
            for t in range(T):
                a[s, t], b[s, t] = bounds_from_ced(ced_solution, sto, s, t, window)
    return BidBounds(a_bar=a, b_bar=b, epsilon=epsilon, provenance=provenance)


def deterministic_default_bound(da_lmp: np.ndarray, storage: Storage) -> tuple[float, float]:
    """Time-invariant benchmark: 4th highest day-ahead price plus physical
    cost on the discharge side, mirrored with the 4th lowest minus cost on
    the charge side."""
    lmp = np.sort(np.asarray(da_lmp, dtype=float).reshape(-1))
    if lmp.size < 4:
        raise BoundsError(f"need >= 4 day-ahead prices, got {lmp.size}")
    a_bar = float(lmp[-4]) + storage.marginal_cost
    b_bar = float(lmp[3]) - storage.marginal_cost
    return a_bar, b_bar


def deterministic_bounds_table(da_lmp_by_bus: np.ndarray, network: Network,
                               horizon: int) -> BidBounds:
    S = len(network.storages)
    a = np.zeros((S, horizon))
    b = np.zeros((S, horizon))
    for s, sto in enumerate(network.storages):
        a_bar, b_bar = deterministic_default_bound(da_lmp_by_bus[sto.bus], sto)
        a[s, :] = a_bar
        b[s, :] = b_bar
    return BidBounds(a_bar=a, b_bar=b, epsilon=float("nan"),
                     provenance=PROVENANCE_DETERMINISTIC)


def cap_bids(bid, bounds_row: tuple[float, float]):
    """Clip a scalar (A, B) pair or a bid curve to the caps.

    Every discharge price is clipped to min(A, a_bar) and every charge price
    to min(B, b_bar); clipping preserves the curves' price ordering.
    """
    a_bar, b_bar = bounds_row
    if not (np.isfinite(a_bar) and np.isfinite(b_bar)):
        raise BoundsError(f"bounds must be finite, got ({a_bar}, {b_bar})")
    if hasattr(bid, "discharge") and hasattr(bid, "charge"):
        disc = tuple((q, min(pr, a_bar)) for q, pr in bid.discharge)
        chrg = tuple((q, min(pr, b_bar)) for q, pr in bid.charge)
        return replace(bid, discharge=disc, charge=chrg)
    A, B = bid
    return (min(A, a_bar), min(B, b_bar))


def write_bounds_csv(bounds: BidBounds, path: str | Path) -> None:
    """Export with columns ``storage,t,A_bar,B_bar,epsilon,provenance``."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["storage", "t", "A_bar", "B_bar", "epsilon", "provenance"])
        S, T = bounds.a_bar.shape
        for s in range(S):
            for t in range(T):
                w.writerow([s, t, repr(float(bounds.a_bar[s, t])),
                            repr(float(bounds.b_bar[s, t])),
                            repr(bounds.epsilon), bounds.provenance])
