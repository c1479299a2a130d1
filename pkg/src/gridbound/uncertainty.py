"""Netload uncertainty models and scenario sampling.

Every model supplies the *normalized* inverse CDF z(eps) = F^-1(1 - eps)
consumed by the chance-constraint reformulation (effective netload
mu + z * sigma).  Four variants:

- ``Gaussian``: standard-normal quantile,
- ``Robust``: distribution-free Cantelli-style quantile envelopes for four
  shape assumptions (none / symmetric / unimodal / symmetric+unimodal),
- ``Versatile``: three-parameter logistic-power law F(x) = (1+e^(-a(x-c)))^-b
  with closed-form inverse CDF, fit to data by maximum likelihood,
- ``Empirical``: ceiling-order-statistic quantile of normalized samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy import optimize, special


class UncertaintyError(ValueError):
    """Raised for invalid probability levels or degenerate sample data."""


class FitError(RuntimeError):
    """Versatile MLE failure; carries the best iterate found so far."""

    def __init__(self, message: str, best: tuple[float, float, float]):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class Gaussian:
    pass


@dataclass(frozen=True)
class Robust:
    shape: str = "na"  # one of: na, s, u, su

    def __post_init__(self):
        if self.shape.lower() not in ("na", "s", "u", "su"):
            raise UncertaintyError(f"unknown robust shape {self.shape!r}")


@dataclass(frozen=True)
class Versatile:
    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise UncertaintyError(f"versatile a, b must be positive, got ({self.a}, {self.b})")


@dataclass(frozen=True)
class Empirical:
    samples: tuple[float, ...]

    def __post_init__(self):
        if len(self.samples) == 0:
            raise UncertaintyError("empirical model needs at least one sample")
        arr = np.asarray(self.samples, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise UncertaintyError("empirical samples must be finite")
        if np.any(np.diff(arr) < 0):
            raise UncertaintyError("empirical samples must be sorted ascending")


UncertaintyModel = Union[Gaussian, Robust, Versatile, Empirical]


@dataclass(frozen=True)
class NetloadForecast:
    """Per-node, per-period forecast moments; arrays shaped (nodes, horizon)."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_2d(np.asarray(self.mean, dtype=float))
        std = np.atleast_2d(np.asarray(self.std, dtype=float))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        if mean.shape != std.shape:
            raise UncertaintyError(f"mean {mean.shape} and std {std.shape} differ in shape")
        if np.any(std < 0):
            raise UncertaintyError("std must be elementwise non-negative")

    @property
    def n_nodes(self) -> int:
        return self.mean.shape[0]

    @property
    def horizon(self) -> int:
        return self.mean.shape[1]


@dataclass(frozen=True)
class ScenarioSet:
    """Day-ahead mean profiles plus per-scenario real-time realizations."""

    da_scenarios: tuple[np.ndarray, ...]
    rt_samples: tuple[tuple[np.ndarray, ...], ...]
    seed: int


def parse_model(spec: str) -> UncertaintyModel:
    """Parse a model spec string: ``gaussian``, ``robust:<shape>``,
    ``versatile:a,b,c`` or ``empirical:<csv path>``."""
    s = spec.strip().lower()
    if s == "gaussian":
        return Gaussian()
    if s == "robust":
        return Robust("na")
    if s.startswith("robust:"):
        return Robust(s.split(":", 1)[1])
    if s.startswith("versatile:"):
        try:
            a, b, c = (float(x) for x in s.split(":", 1)[1].split(","))
        except ValueError as exc:
            raise UncertaintyError(f"bad versatile spec {spec!r}: want versatile:a,b,c") from exc
        return Versatile(a, b, c)
    if spec.strip().startswith("empirical:"):
        path = spec.strip().split(":", 1)[1]
        values = load_samples_csv(path)
        return Empirical(tuple(np.sort(values)))
    raise UncertaintyError(f"unknown uncertainty model {spec!r}")


def _robust_quantile(shape: str, eps: float) -> float:
    s = shape.lower()
    if s == "na":
        return math.sqrt((1.0 - eps) / eps)
    if s == "s":
        return math.sqrt(1.0 / (2.0 * eps)) if eps <= 0.5 else 0.0
    if s == "u":
        if eps <= 1.0 / 6.0:
            return math.sqrt((4.0 - 9.0 * eps) / (9.0 * eps))
        return math.sqrt((3.0 - 3.0 * eps) / (1.0 + 3.0 * eps))
    if s == "su":
        if eps <= 1.0 / 6.0:
            return math.sqrt(2.0 / (9.0 * eps))
        if eps <= 0.5:
            return math.sqrt(3.0) * (1.0 - 2.0 * eps)
        return 0.0
    raise UncertaintyError(f"unknown robust shape {shape!r}")


def inverse_cdf(model: UncertaintyModel, epsilon: float) -> float:
    """Normalized quantile z = F^-1(1 - epsilon) for the given model."""
    if not 0.0 < epsilon < 1.0:
        raise UncertaintyError(f"epsilon must lie in (0, 1), got {epsilon}")
    if isinstance(model, Gaussian):
        return float(special.ndtri(1.0 - epsilon))
    if isinstance(model, Robust):
        return _robust_quantile(model.shape, epsilon)
    if isinstance(model, Versatile):
        return model.c - math.log((1.0 - epsilon) ** (-1.0 / model.b) - 1.0) / model.a
    if isinstance(model, Empirical):
        z = _normalized(np.asarray(model.samples, dtype=float))
        return empirical_quantile(z, 1.0 - epsilon)
    raise UncertaintyError(f"unknown model type {type(model).__name__}")


def _normalized(samples: np.ndarray) -> np.ndarray:
    sd = float(np.std(samples))
    if sd == 0.0:
        return samples - float(np.mean(samples))
    return (samples - float(np.mean(samples))) / sd


def empirical_quantile(samples: Sequence[float], q: float) -> float:
    """Ceiling order statistic: the smallest sample with empirical CDF >= q.

    ``samples`` must be sorted ascending and nonempty.  The index is
    ceil(q*n) (1-based), nudged by 1e-9 so exact-integer products do not
    round up from float noise.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise UncertaintyError("empirical_quantile needs a nonempty sample array")
    idx = max(1, math.ceil(q * arr.size - 1e-9))
    return float(arr[min(idx, arr.size) - 1])


def versatile_cdf(x: np.ndarray | float, a: float, b: float, c: float) -> np.ndarray | float:
    return (1.0 + np.exp(-a * (np.asarray(x, dtype=float) - c))) ** (-b)


def versatile_loglik(samples: np.ndarray, a: float, b: float, c: float) -> float:
    w = a * (samples - c)
    # log pdf = log a + log b - w - (b+1) log(1 + e^-w)
    return float(np.sum(np.log(a) + np.log(b) - w - (b + 1.0) * np.logaddexp(0.0, -w)))


def fit_versatile(samples: Sequence[float], max_iter: int = 500) -> tuple[float, float, float]:
    """Maximum-likelihood (a, b, c) of the versatile distribution.

    Starts from a moment-matched b=1 (logistic) guess and refines with
    L-BFGS-B over (log a, log b, c).  The returned fit never has lower
    log-likelihood than the starting guess.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 30:
        raise UncertaintyError(f"fit_versatile needs >= 30 samples, got {x.size}")
    sd = float(np.std(x))
    if sd == 0.0:
        raise UncertaintyError("fit_versatile: samples are constant (zero variance)")

    a0 = math.pi / (sd * math.sqrt(3.0))
    start = np.array([math.log(a0), 0.0, float(np.median(x))])

    def nll(p):
        a, b, c = math.exp(p[0]), math.exp(p[1]), p[2]
        return -versatile_loglik(x, a, b, c)

    res = optimize.minimize(nll, start, method="L-BFGS-B",
                            options={"maxiter": max_iter, "ftol": 1e-8})
    best = (math.exp(res.x[0]), math.exp(res.x[1]), float(res.x[2]))
    if not res.success and res.status != 1:  # status 1 = hit maxiter
        raise FitError(f"versatile MLE failed: {res.message}", best)
    if res.status == 1:
        raise FitError(f"versatile MLE did not converge in {max_iter} iterations", best)
    if -res.fun < versatile_loglik(x, math.exp(start[0]), 1.0, start[2]):
        return (a0, 1.0, float(start[2]))
    return best


def _draw_normalized(model: UncertaintyModel, rng: np.random.Generator,
                     shape: tuple[int, ...]) -> np.ndarray:
    if isinstance(model, (Gaussian, Robust)):
        # Robust shapes are quantile envelopes, not distributions; realizations
        # fall back to Gaussian draws while planning uses the robust quantiles.
        return rng.standard_normal(shape)
    if isinstance(model, Versatile):
        u = rng.random(shape)
        return model.c - np.log(u ** (-1.0 / model.b) - 1.0) / model.a
    if isinstance(model, Empirical):
        z = _normalized(np.asarray(model.samples, dtype=float))
        return rng.choice(z, size=shape, replace=True)
    raise UncertaintyError(f"unknown model type {type(model).__name__}")


def sample_netload(forecast: NetloadForecast, model: UncertaintyModel,
                   count: int, seed: int) -> ScenarioSet:
    """Draw ``count`` real-time realizations d = mean + std * Z.

    Each realization i uses its own generator seeded by (seed, i), so
    parallel generation is order-independent and results are bit-reproducible
    for a fixed seed.  Negative netload is permitted (renewable excess).
    """
    if count < 1:
        raise UncertaintyError(f"count must be >= 1, got {count}")
    shape = forecast.mean.shape
    draws = []
    for i in range(count):
        rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, i])
        z = _draw_normalized(model, rng, shape)
        draws.append(forecast.mean + forecast.std * z)
    return ScenarioSet(da_scenarios=(forecast.mean.copy(),),
                       rt_samples=(tuple(draws),), seed=int(seed))


def load_forecast_csv(path: str | Path, n_nodes: int | None = None,
                      horizon: int | None = None) -> NetloadForecast:
    """Read a forecast file with columns ``node,t,mu,sigma`` (header required)."""
    rows = _read_csv(path, ("node", "t", "mu", "sigma"))
    nodes = [int(r[0]) for r in rows]
    ts = [int(r[1]) for r in rows]
    n = (max(nodes) + 1) if n_nodes is None else n_nodes
    T = (max(ts) + 1) if horizon is None else horizon
    mean = np.zeros((n, T))
    std = np.zeros((n, T))
    for node, t, mu, sigma in rows:
        mean[int(node), int(t)] = float(mu)
        std[int(node), int(t)] = float(sigma)
    return NetloadForecast(mean=mean, std=std)


def load_samples_csv(path: str | Path) -> np.ndarray:
    """Read a historical-sample file with columns ``node,t,value``."""
    rows = _read_csv(path, ("node", "t", "value"))
    return np.array([float(r[2]) for r in rows])


def _read_csv(path: str | Path, expected: tuple[str, ...]) -> list[list[str]]:
    import csv

    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != expected:
            raise UncertaintyError(
                f"{path}: expected header {','.join(expected)!r}, got {header}")
        return [row for row in reader if row]
