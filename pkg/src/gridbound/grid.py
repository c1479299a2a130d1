"""Physical power-system model: buses, lines, generators, storage units.

Conventions used throughout the package:

- all power quantities are energy per dispatch step (MWh/step); the step
  length is carried as ``step_hours`` metadata and defaults to one hour,
- bus ids are dense integers ``0..N-1`` with exactly one designated slack,
- line flow is measured from ``from_bus`` to ``to_bus`` and maps to nodal
  injections through the PTDF matrix computed against the slack bus.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np


class GridError(ValueError):
    """Raised for malformed or physically inconsistent network data."""


@dataclass(frozen=True)
class Bus:
    id: int
    name: str = ""


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float
    capacity: float  # MWh per step, >= 0


@dataclass(frozen=True)
class CostFunction:
    """Convex, monotonically increasing production cost.

    ``quadratic``: C(g) = c2*g^2 + c1*g + c0 with c2 >= 0.
    ``piecewise``: linear interpolation through ``breakpoints`` (g, cost)
    with non-decreasing, non-negative slopes.
    """

    kind: str
    c2: float = 0.0
    c1: float = 0.0
    c0: float = 0.0
    breakpoints: tuple[tuple[float, float], ...] = ()

    @staticmethod
    def quadratic(c2: float, c1: float, c0: float = 0.0) -> "CostFunction":
        return CostFunction(kind="quadratic", c2=float(c2), c1=float(c1), c0=float(c0))

    @staticmethod
    def piecewise(points: Sequence[Sequence[float]]) -> "CostFunction":
        pts = tuple((float(x), float(y)) for x, y in points)
        return CostFunction(kind="piecewise", breakpoints=pts)

    def value(self, g: float) -> float:
        if self.kind == "quadratic":
            return self.c2 * g * g + self.c1 * g + self.c0
        xs = np.array([p[0] for p in self.breakpoints])
        ys = np.array([p[1] for p in self.breakpoints])
        if g <= xs[0]:
            return float(ys[0] + self.segment_slopes()[0] * (g - xs[0]))
        if g >= xs[-1]:
            return float(ys[-1] + self.segment_slopes()[-1] * (g - xs[-1]))
        return float(np.interp(g, xs, ys))

    def marginal(self, g: float) -> float:
        """Right-derivative of the cost at ``g``."""
        if self.kind == "quadratic":
            return 2.0 * self.c2 * g + self.c1
        xs = [p[0] for p in self.breakpoints]
        slopes = self.segment_slopes()
        for k in range(len(slopes)):
            if g < xs[k + 1]:
                return slopes[k]
        return slopes[-1]

    def segment_slopes(self) -> list[float]:
        if self.kind != "piecewise":
            raise GridError("segment_slopes is only defined for piecewise costs")
        out = []
        for (x0, y0), (x1, y1) in zip(self.breakpoints, self.breakpoints[1:]):
            out.append((y1 - y0) / (x1 - x0))
        return out

    def to_dict(self) -> dict:
        if self.kind == "quadratic":
            return {"kind": "quadratic", "c2": self.c2, "c1": self.c1, "c0": self.c0}
        return {"kind": "piecewise", "breakpoints": [list(p) for p in self.breakpoints]}

    @staticmethod
    def from_dict(d: dict) -> "CostFunction":
        if d["kind"] == "quadratic":
            return CostFunction.quadratic(d.get("c2", 0.0), d.get("c1", 0.0), d.get("c0", 0.0))
        if d["kind"] == "piecewise":
            return CostFunction.piecewise(d["breakpoints"])
        raise GridError(f"unknown cost kind {d['kind']!r}")


@dataclass(frozen=True)
class Generator:
    bus: int
    cost: CostFunction
    g_min: float
    g_max: float
    ramp_up: float
    ramp_down: float


@dataclass(frozen=True)
class Storage:
    bus: int
    power: float          # charge/discharge cap, MWh per step
    e_min: float
    e_max: float
    efficiency: float     # one-way, in (0, 1]
    marginal_cost: float  # $/MWh throughput
    e_initial: float


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    storages: tuple[Storage, ...]
    slack_bus: int
    reserve_ratio: float = 0.0
    step_hours: float = 1.0

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @cached_property
    def ptdf(self) -> np.ndarray:
        return compute_ptdf(self.lines, self.n_buses, self.slack_bus)

    def to_dict(self) -> dict:
        return {
            "buses": [{"id": b.id, "name": b.name} for b in self.buses],
            "lines": [
                {"from_bus": l.from_bus, "to_bus": l.to_bus,
                 "susceptance": l.susceptance, "capacity": l.capacity}
                for l in self.lines
            ],
            "generators": [
                {"bus": g.bus, "cost": g.cost.to_dict(), "g_min": g.g_min,
                 "g_max": g.g_max, "ramp_up": g.ramp_up, "ramp_down": g.ramp_down}
                for g in self.generators
            ],
            "storages": [
                {"bus": s.bus, "power": s.power, "e_min": s.e_min, "e_max": s.e_max,
                 "efficiency": s.efficiency, "marginal_cost": s.marginal_cost,
                 "e_initial": s.e_initial}
                for s in self.storages
            ],
            "slack_bus": self.slack_bus,
            "reserve_ratio": self.reserve_ratio,
            "step_hours": self.step_hours,
        }

    @staticmethod
    def from_dict(d: dict) -> "Network":
        buses = tuple(Bus(id=int(b["id"]), name=b.get("name", f"bus{b['id']}"))
                      for b in d["buses"])
        lines = tuple(Line(int(l["from_bus"]), int(l["to_bus"]),
                           float(l["susceptance"]), float(l["capacity"]))
                      for l in d["lines"])
        gens = tuple(Generator(int(g["bus"]), CostFunction.from_dict(g["cost"]),
                               float(g["g_min"]), float(g["g_max"]),
                               float(g["ramp_up"]), float(g["ramp_down"]))
                     for g in d["generators"])
        stos = tuple(Storage(int(s["bus"]), float(s["power"]), float(s["e_min"]),
                             float(s["e_max"]), float(s["efficiency"]),
                             float(s["marginal_cost"]), float(s["e_initial"]))
                     for s in d["storages"])
        return Network(buses=buses, lines=lines, generators=gens, storages=stos,
                       slack_bus=int(d["slack_bus"]),
                       reserve_ratio=float(d.get("reserve_ratio", 0.0)),
                       step_hours=float(d.get("step_hours", 1.0)))


def load_network(path: str | Path) -> "Network":
    """Read a network from the UTF-8 JSON file format."""
    with open(path, "r", encoding="utf-8") as f:
        return Network.from_dict(json.load(f))


def save_network(network: Network, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(network.to_dict(), f, indent=2, sort_keys=True)


def _connected_component(n_buses: int, lines: Sequence[Line], start: int) -> set[int]:
    adj: dict[int, list[int]] = {i: [] for i in range(n_buses)}
    for l in lines:
        adj[l.from_bus].append(l.to_bus)
        adj[l.to_bus].append(l.from_bus)
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def compute_ptdf(lines: Sequence[Line], buses: int | Sequence[Bus], slack: int) -> np.ndarray:
    """Power transfer distribution factors against ``slack``.

    Returns a |lines| x |buses| matrix ``pi`` such that for a balanced nodal
    injection vector P (sum zero), line flows are ``pi @ P``.  Column
    ``slack`` is identically zero.  Built from the reduced susceptance matrix
    (slack row/column removed, then factorized).
    """
    n = buses if isinstance(buses, int) else len(buses)
    if not 0 <= slack < n:
        raise GridError(f"slack bus {slack} out of range 0..{n - 1}")
    if n == 1:
        return np.zeros((len(lines), 1))
    reached = _connected_component(n, lines, slack)
    if len(reached) != n:
        isolated = sorted(set(range(n)) - reached)
        raise GridError(f"network is disconnected: buses {isolated} unreachable from slack {slack}")

    lap = np.zeros((n, n))
    for l in lines:
        b = l.susceptance
        lap[l.from_bus, l.from_bus] += b
        lap[l.to_bus, l.to_bus] += b
        lap[l.from_bus, l.to_bus] -= b
        lap[l.to_bus, l.from_bus] -= b

    keep = [i for i in range(n) if i != slack]
    theta = np.zeros((n, n))
    theta[np.ix_(keep, keep)] = np.linalg.solve(lap[np.ix_(keep, keep)], np.eye(n - 1))

    pi = np.zeros((len(lines), n))
    for k, l in enumerate(lines):
        pi[k] = l.susceptance * (theta[l.from_bus] - theta[l.to_bus])
    return pi


def discrete_second_derivative(cost: CostFunction, g: float, dg: float) -> float:
    """Symmetric second difference (C(g+dg) + C(g-dg) - 2 C(g)) / dg^2.

    Non-negative for any convex cost; exact for quadratics.
    """
    if dg <= 0:
        raise GridError(f"dg must be positive, got {dg}")
    if cost.kind == "piecewise":
        lo = cost.breakpoints[0][0]
        hi = cost.breakpoints[-1][0]
        if g - dg < lo or g + dg > hi:
            raise GridError(
                f"[{g - dg}, {g + dg}] leaves the piecewise range [{lo}, {hi}]")
    return (cost.value(g + dg) + cost.value(g - dg) - 2.0 * cost.value(g)) / (dg * dg)


def _validate_cost(cost: CostFunction, g_min: float, label: str, out: list[str]) -> None:
    if cost.kind == "quadratic":
        if cost.c2 < 0:
            out.append(f"{label}: quadratic cost has c2 < 0 ({cost.c2})")
        if cost.c1 + 2.0 * cost.c2 * g_min < 0:
            out.append(f"{label}: marginal cost negative at g_min "
                       f"(c1 + 2*c2*g_min = {cost.c1 + 2 * cost.c2 * g_min})")
    elif cost.kind == "piecewise":
        if len(cost.breakpoints) < 2:
            out.append(f"{label}: piecewise cost needs at least two breakpoints")
            return
        xs = [p[0] for p in cost.breakpoints]
        if any(x1 <= x0 for x0, x1 in zip(xs, xs[1:])):
            out.append(f"{label}: piecewise breakpoints not strictly increasing")
            return
        slopes = cost.segment_slopes()
        if any(s < 0 for s in slopes):
            out.append(f"{label}: piecewise cost has a negative slope")
        if any(s1 < s0 - 1e-12 for s0, s1 in zip(slopes, slopes[1:])):
            out.append(f"{label}: piecewise slopes decrease (non-convex)")
    else:
        out.append(f"{label}: unknown cost kind {cost.kind!r}")


def validate_network(network: Network) -> list[str]:
    """Check every type invariant; returns a list of violations (empty = valid).

    Violations are data, not exceptions: each entry names the entity and the
    rule it breaks.
    """
    out: list[str] = []
    n = network.n_buses
    ids = [b.id for b in network.buses]
    if sorted(ids) != list(range(n)):
        out.append(f"buses: ids not dense 0..{n - 1}: {sorted(ids)}")
    if not 0 <= network.slack_bus < n:
        out.append(f"slack_bus {network.slack_bus} is not a valid bus id")
    if not 0.0 <= network.reserve_ratio < 1.0:
        out.append(f"reserve_ratio {network.reserve_ratio} outside [0, 1)")
    if network.step_hours <= 0:
        out.append(f"step_hours {network.step_hours} must be positive")

    for k, l in enumerate(network.lines):
        if l.from_bus == l.to_bus:
            out.append(f"line {k}: from_bus == to_bus ({l.from_bus})")
        for end in (l.from_bus, l.to_bus):
            if not 0 <= end < n:
                out.append(f"line {k}: references unknown bus {end}")
        if l.capacity < 0:
            out.append(f"line {k}: capacity {l.capacity} < 0")
        if l.susceptance <= 0:
            out.append(f"line {k}: susceptance {l.susceptance} <= 0")

    for k, g in enumerate(network.generators):
        if not 0 <= g.bus < n:
            out.append(f"generator {k}: references unknown bus {g.bus}")
        if not 0 <= g.g_min <= g.g_max:
            out.append(f"generator {k}: requires 0 <= g_min <= g_max, "
                       f"got [{g.g_min}, {g.g_max}]")
        if g.ramp_up < 0:
            out.append(f"generator {k}: ramp_up {g.ramp_up} < 0")
        if g.ramp_down < 0:
            out.append(f"generator {k}: ramp_down {g.ramp_down} < 0")
        _validate_cost(g.cost, g.g_min, f"generator {k}", out)

    for k, s in enumerate(network.storages):
        if not 0 <= s.bus < n:
            out.append(f"storage {k}: references unknown bus {s.bus}")
        if s.power <= 0:
            out.append(f"storage {k}: power {s.power} <= 0")
        if s.e_min > s.e_max:
            out.append(f"storage {k}: e_min {s.e_min} > e_max {s.e_max}")
        elif not s.e_min <= s.e_initial <= s.e_max:
            out.append(f"storage {k}: e_initial {s.e_initial} outside "
                       f"[{s.e_min}, {s.e_max}]")
        if not 0.0 < s.efficiency <= 1.0:
            out.append(f"storage {k}: efficiency {s.efficiency} outside (0, 1]")
        if s.marginal_cost < 0:
            out.append(f"storage {k}: marginal_cost {s.marginal_cost} < 0")

    return out
