"""Seeded Wiener paths, drift-crossing detection and Monte Carlo estimates.

The failure event for a path is the first time the process nu W_t - beta t
exceeds alpha (equivalently phi(t) - nu W_t < 0).  In reduced form this is
W_t - (beta/nu) t > alpha/nu, whose infinite-horizon probability is
exp(-2 alpha beta / nu^2).

Seeds: every random stream is built from `numpy.random.SeedSequence`, so a
(master_seed, path_index, ...) key maps to the same stream regardless of
which worker draws it or in what order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.special import ndtr


def derive_seed(master_seed: int, *keys: int) -> int:
    """Deterministic 64-bit seed for the stream keyed by (master_seed, *keys)."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _step_count(T: float, h: float) -> int:
    if T <= 0 or h <= 0:
        raise ValueError("T and h must be positive")
    n = round(T / h)
    if n < 1 or abs(n * h - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T/h = {T / h!r} is not an integer step count")
    return int(n)


def _path_values(seed: int, n: int, h: float) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    w = np.empty(n + 1)
    w[0] = 0.0
    np.cumsum(rng.standard_normal(n) * math.sqrt(h), out=w[1:])
    return w


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Nodal values W(t_n), t_n = n h, n = 0..T/h.

    ``depth`` counts bridge halvings applied since sampling; it keys the
    refinement streams so that refine(refine(p, 2), 2) == refine(p, 4).
    """

    seed: int | None
    T: float
    h: float
    values: np.ndarray
    depth: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        n = _step_count(self.T, self.h)
        if v.shape != (n + 1,):
            raise ValueError(f"expected {n + 1} nodal values, got shape {v.shape}")
        if v[0] != 0.0:
            raise ValueError("W(0) must be 0")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls, T: float, h: float) -> "BrownianPath":
        """The identically-zero path (test constructor)."""
        return cls(None, T, h, np.zeros(_step_count(T, h) + 1))

    @classmethod
    def from_values(cls, values, h: float, seed: int | None = None) -> "BrownianPath":
        values = np.asarray(values, dtype=float)
        return cls(seed, (len(values) - 1) * h, h, values)

    @classmethod
    def from_function(cls, fn, T: float, h: float) -> "BrownianPath":
        """Deterministic path W(t) = fn(t), fn(0) = 0 (for classical-order studies)."""
        t = np.arange(_step_count(T, h) + 1) * h
        return cls(None, T, h, np.asarray(fn(t), dtype=float))

    @property
    def n_steps(self) -> int:
        return len(self.values) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.h

    def index_of(self, t: float) -> int:
        n = round(t / self.h)
        if abs(n * self.h - t) > 1e-9 * max(1.0, abs(t)) or not (0 <= n <= self.n_steps):
            raise ValueError(f"t={t!r} is not a node of this path (h={self.h!r})")
        return int(n)

    def at(self, t: float) -> float:
        return float(self.values[self.index_of(t)])

    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def subsample(self, factor: int) -> "BrownianPath":
        """Restrict to every ``factor``-th node (a coarser view of the same path)."""
        factor = int(factor)
        if factor < 1 or self.n_steps % factor:
            raise ValueError(f"factor {factor} does not divide {self.n_steps} steps")
        return BrownianPath(self.seed, self.T, self.h * factor, self.values[::factor], self.depth)

    def __eq__(self, other):
        if not isinstance(other, BrownianPath):
            return NotImplemented
        return (self.h == other.h and self.T == other.T
                and np.array_equal(self.values, other.values))

    __hash__ = None


def sample_path(seed: int, T: float, h: float) -> BrownianPath:
    """Wiener path with Normal(0, h) increments drawn from SeedSequence(seed)."""
    n = _step_count(T, h)
    return BrownianPath(int(seed), T, h, _path_values(seed, n, h))


def refine(path: BrownianPath, factor: int, subseed: int = 0) -> BrownianPath:
    """Brownian-bridge refinement by a power of two; parent nodes are kept exactly.

    Each halving inserts midpoints (W_a + W_b)/2 + sqrt(h/4) Z, with Z drawn
    from the stream keyed by (seed, subseed, depth) in node order.
    """
    factor = int(factor)
    if factor < 1 or factor & (factor - 1):
        raise ValueError(f"refinement factor must be a power of 2, got {factor}")
    w = np.array(path.values)
    h = path.h
    depth = path.depth
    base = 0 if path.seed is None else int(path.seed)
    while factor > 1:
        depth += 1
        rng = np.random.default_rng(np.random.SeedSequence(base, spawn_key=(int(subseed), depth)))
        mid = 0.5 * (w[:-1] + w[1:]) + math.sqrt(h / 4) * rng.standard_normal(len(w) - 1)
        fine = np.empty(2 * len(w) - 1)
        fine[0::2] = w
        fine[1::2] = mid
        w = fine
        h /= 2
        factor //= 2
    return BrownianPath(path.seed, path.T, h, w, depth)


def _excess(path: BrownianPath, params) -> np.ndarray:
    return params.nu * path.values - params.beta * path.times


def crossing_index(path: BrownianPath, params, reduced: bool = False) -> int | None:
    """First node n with nu W(t_n) - beta t_n > alpha, or None.

    ``reduced=True`` uses the equivalent test W - (beta/nu) t > alpha/nu.
    """
    if reduced:
        hit = path.values - (params.beta / params.nu) * path.times > params.alpha / params.nu
    else:
        hit = _excess(path, params) > params.alpha
    idx = np.flatnonzero(hit)
    return int(idx[0]) if idx.size else None


def crossing_time(path: BrownianPath, params) -> float | None:
    """First grid time at which nu W - beta t exceeds alpha (nodal monitoring)."""
    n = crossing_index(path, params)
    return None if n is None else float(path.times[n])


def bridge_log_survival(path: BrownianPath, params) -> np.ndarray:
    """Cumulative log P(no crossing up to node n | nodal values), n = 1..N.

    Between nodes nu W - beta t is a Brownian bridge with diffusion nu^2,
    so an interval with endpoint gaps d0, d1 > 0 below alpha is crossed with
    probability exp(-2 d0 d1 / (nu^2 h)).
    """
    gap = params.alpha - _excess(path, params)
    d0, d1 = gap[:-1], gap[1:]
    out = np.full(len(d0), -np.inf)
    safe = (d0 > 0) & (d1 > 0)
    p = np.exp(-2.0 * d0[safe] * d1[safe] / (params.nu**2 * path.h))
    out[safe] = np.log1p(-p)
    return np.cumsum(out)


def bridge_crossing_time(path: BrownianPath, params, u: float) -> float | None:
    """Continuous-monitoring crossing time sampled with uniform ``u``.

    Returns the right endpoint of the interval in which the crossing falls.
    """
    cum = bridge_log_survival(path, params)
    hit = np.flatnonzero(cum < math.log(u)) if u > 0 else np.array([], int)
    return float((hit[0] + 1) * path.h) if hit.size else None


def analytic_crossing_probability(params) -> float:
    """Infinite-horizon probability exp(-2 alpha beta / nu^2)."""
    return math.exp(-2.0 * params.alpha * params.beta / params.nu**2)


def finite_horizon_crossing_probability(T: float, params) -> float:
    """P(sup_{t<=T} (nu W_t - beta t) > alpha) for continuous monitoring."""
    a = params.alpha / params.nu
    b = params.beta / params.nu
    rt = math.sqrt(T)
    return float(ndtr((-a - b * T) / rt) + math.exp(-2 * a * b) * ndtr((-a + b * T) / rt))


@dataclass(frozen=True)
class CrossingEstimate:
    """Finite-horizon Monte Carlo crossing frequency.

    The estimate targets P(crossing within [0, horizon]); it is a lower bound
    for the infinite-horizon probability.  Unpacks as (estimate, std_error).
    """

    estimate: float
    std_error: float
    n_paths: int
    horizon: float
    step: float
    monitor: str
    analytic_infinite_horizon: float
    analytic_finite_horizon: float
    crossed: np.ndarray = field(repr=False)
    crossing_times: np.ndarray = field(repr=False)

    def __iter__(self) -> Iterator[float]:
        return iter((self.estimate, self.std_error))


def path_crossing(path_index: int, T: float, h: float, params, master_seed: int,
                  monitor: str = "bridge") -> float | None:
    """Crossing time for ensemble member ``path_index`` (None if it survives)."""
    path = sample_path(derive_seed(master_seed, path_index), T, h)
    if monitor == "nodal":
        return crossing_time(path, params)
    if monitor == "bridge":
        u = np.random.default_rng(
            np.random.SeedSequence(int(master_seed), spawn_key=(int(path_index), 1))).random()
        return bridge_crossing_time(path, params, u)
    raise ValueError(f"monitor must be 'nodal' or 'bridge', got {monitor!r}")


def mc_crossing_probability(n_paths: int, T: float, h: float, params, master_seed: int,
                            monitor: str = "bridge") -> CrossingEstimate:
    """Monte Carlo frequency of nu W - beta t > alpha within [0, T].

    ``monitor="bridge"`` samples continuous-time crossings via the exact
    between-node bridge law; ``"nodal"`` only inspects grid nodes (what the
    solvers see) and is biased low by O(sqrt(h)).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    _step_count(T, h)
    times = np.full(n_paths, np.nan)
    for i in range(n_paths):
        t = path_crossing(i, T, h, params, master_seed, monitor)
        if t is not None:
            times[i] = t
    crossed = ~np.isnan(times)
    p = float(crossed.mean())
    se = math.sqrt(p * (1 - p) / n_paths)
    return CrossingEstimate(p, se, n_paths, T, h, monitor,
                            analytic_crossing_probability(params),
                            finite_horizon_crossing_probability(T, params),
                            crossed, times)
