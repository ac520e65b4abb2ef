"""Time integration of the pathwise-deterministic and original stochastic SQG equations.

Transformed equation (u = Gamma(t) theta):

    du/dt = -B(u, u; W_t) - (nu^2 / 2) |k|^{2s} u

integrated with exponential time differencing (linear part exact).
Original Ito equation:

    d theta + R_perp theta . grad theta dt = nu |grad|^s theta dW_t

stepped by explicit Euler transport followed by the exact per-mode factor
exp(nu |k|^s dW - nu^2 |k|^{2s} h / 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bilinear import BilinearKernel, bilinear_B_direct, get_kernel
from .diagnostics import MonotoneVerdict, check_monotone, condition_check
from .spectral import (
    OVERFLOW_GUARD,
    FourierField,
    GevreyParams,
    OverflowGuardError,
    gamma_apply,
    gevrey_norm,
    sobolev_norm,
)
from .stochastic import BrownianPath


SCHEMES = ("etdrk2", "etdrk4", "picard", "direct_spde")
_SERIES_RADIUS = 1.0
_SERIES_TERMS = 24


class NonFiniteStateError(FloatingPointError):
    pass


class NotContracting(Exception):
    pass


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    T_end: float
    scheme: str = "etdrk2"
    record_every: int = 1
    overflow_policy: str = "abort"
    filter_tol: float = 0.0
    snapshot_every: int = 0
    stop_on_crossing: bool = False
    rel_tol: float = 1e-8

    def __post_init__(self):
        if self.dt <= 0 or self.T_end <= 0:
            raise ValueError("dt and T_end must be positive")
        n = round(self.T_end / self.dt)
        if n < 1 or abs(n * self.dt - self.T_end) > 1e-9 * max(1.0, self.T_end):
            raise ValueError(f"T_end/dt = {self.T_end / self.dt!r} is not integral")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.overflow_policy not in ("abort", "oracle_fallback"):
            raise ValueError("overflow_policy must be 'abort' or 'oracle_fallback'")

    @property
    def n_steps(self) -> int:
        return int(round(self.T_end / self.dt))


@dataclass
class TrajectoryRecord:
    """Recorded series for one pathwise run.

    ``gevrey_norm`` is ||u(t)||_{G^sigma_phi(t)} of the transformed variable and
    ``sobolev_norm`` is ||theta(t)||_{H^{sigma s}} of the original variable.
    """

    times: np.ndarray
    gevrey_norm: np.ndarray
    sobolev_norm: np.ndarray
    crossed_flags: np.ndarray
    crossing_time: float | None
    scheme: str
    params: GevreyParams
    metadata: dict = field(default_factory=dict)
    events: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    final_u: FourierField | None = None
    final_theta: FourierField | None = None
    admissible: bool = True
    verdict: MonotoneVerdict | None = None

    @property
    def crossed(self) -> bool:
        return self.crossing_time is not None

    @property
    def monotone(self) -> bool | None:
        """True/False on non-crossed admissible runs, None where no claim applies."""
        if self.verdict is None or not self.verdict.applicable:
            return None
        return self.verdict.passed

    def rows(self) -> list[dict]:
        return [
            {"t": float(t), "gevrey_norm": float(g), "sobolev_norm": float(s), "crossed": bool(c)}
            for t, g, s, c in zip(self.times, self.gevrey_norm, self.sobolev_norm, self.crossed_flags)
        ]


def phi_functions(z: np.ndarray, order: int) -> list[np.ndarray]:
    """phi_1..phi_order of z, phi_j(z) = sum_m z^m / (m + j)!.

    Taylor series inside |z| < 1, the recursion phi_{j+1} = (phi_j - 1/j!)/z
    outside.
    """
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < _SERIES_RADIUS
    out = []
    zs = z[small]
    zl = z[~small]
    prev_l = np.expm1(zl) / zl if zl.size else zl
    for j in range(1, order + 1):
        res = np.empty_like(z)
        acc = np.zeros_like(zs)
        term = np.full_like(zs, 1.0 / math.factorial(j))
        for m in range(_SERIES_TERMS):
            acc += term
            term = term * zs / (m + j + 1)
        res[small] = acc
        if j == 1:
            cur_l = prev_l
        else:
            cur_l = (prev_l - 1.0 / math.factorial(j - 1)) / zl
        res[~small] = cur_l
        prev_l = cur_l
        out.append(res)
    return out


class _Transformed:
    """Array-level ETD stepper for one (grid, params, dt, scheme)."""

    def __init__(self, grid, params: GevreyParams, dt: float, scheme: str,
                 overflow_policy: str = "abort", filter_tol: float = 0.0,
                 guard: float = OVERFLOW_GUARD):
        self.grid = grid
        self.params = params
        self.dt = dt
        self.scheme = scheme
        self.kernel: BilinearKernel = get_kernel(grid, params.nu, params.s)
        self.policy = overflow_policy
        self.filter_tol = filter_tol
        self.guard = guard
        self.events: list[str] = []
        lin = -0.5 * params.nu**2 * grid.kpow(2 * params.s)
        self.E = np.exp(dt * lin)
        if scheme == "etdrk2":
            p1, p2 = phi_functions(dt * lin, 2)
            self.c1 = dt * p1
            self.c2 = dt * p2
        elif scheme == "etdrk4":
            self.E2 = np.exp(0.5 * dt * lin)
            (q1,) = phi_functions(0.5 * dt * lin, 1)
            self.half = 0.5 * dt * q1
            p1, p2, p3 = phi_functions(dt * lin, 3)
            self.f1 = dt * (p1 - 3 * p2 + 4 * p3)
            self.f2 = dt * (p2 - 2 * p3)
            self.f3 = dt * (-p2 + 4 * p3)
        else:
            raise ValueError(f"scheme {scheme!r} is not an ETD scheme")

    def nonlinear(self, u: np.ndarray, W: float) -> np.ndarray:
        try:
            return -self.kernel.apply(u, u, W, self.guard, self.filter_tol)
        except OverflowGuardError as err:
            if self.policy != "oracle_fallback":
                raise
            self.events.append(f"oracle_fallback at W={W:.6g}: {err}")
            f = FourierField(self.grid, u, check=False)
            return -bilinear_B_direct(f, f, W, self.params).coeffs

    def step(self, u: np.ndarray, W0: float, Wh: float, W1: float) -> np.ndarray:
        """Advance one dt; W0, Wh, W1 are W at t, t + dt/2, t + dt."""
        n0 = self.nonlinear(u, W0)
        if self.scheme == "etdrk2":
            a = self.E * u + self.c1 * n0
            na = self.nonlinear(a, W1)
            return a + self.c2 * (na - n0)
        a = self.E2 * u + self.half * n0
        na = self.nonlinear(a, Wh)
        b = self.E2 * u + self.half * na
        nb = self.nonlinear(b, Wh)
        c = self.E2 * a + self.half * (2 * nb - n0)
        nc = self.nonlinear(c, W1)
        return self.E * u + self.f1 * n0 + 2 * self.f2 * (na + nb) + self.f3 * nc


def _path_stride(path: BrownianPath, dt: float, need_half: bool) -> int:
    base = dt / 2 if need_half else dt
    r = round(base / path.h)
    if r < 1 or abs(r * path.h - base) > 1e-9 * max(base, 1e-300):
        what = "dt/2" if need_half else "dt"
        raise ValueError(f"path step {path.h!r} does not divide {what} = {base!r}")
    return int(r) * (2 if need_half else 1)


def step_transformed(u: FourierField, t: float, path: BrownianPath, cfg: SolverConfig,
                     params: GevreyParams) -> FourierField:
    """One ETD step of the transformed equation from t to t + dt."""
    st = _Transformed(u.grid, params, cfg.dt, cfg.scheme, cfg.overflow_policy, cfg.filter_tol)
    need_half = cfg.scheme == "etdrk4"
    i0 = path.index_of(t)
    i1 = path.index_of(t + cfg.dt)
    Wh = path.at(t + cfg.dt / 2) if need_half else 0.0
    new = st.step(u.coeffs, path.values[i0], Wh, path.values[i1])
    return FourierField(u.grid, new, check=False)


def back_transform(u: FourierField, W_val: float, params: GevreyParams) -> FourierField:
    """theta = Gamma^{-1} u = exp(nu W |grad|^s) u."""
    return gamma_apply(u, -W_val, params)


def _theta_sobolev(grid, u: np.ndarray, W: float, params: GevreyParams) -> float:
    f = FourierField(grid, u, check=False)
    try:
        return sobolev_norm(back_transform(f, W, params), params.sigma * params.s)
    except OverflowGuardError:
        return math.nan


class _Recorder:
    def __init__(self, grid, params, cfg: SolverConfig, path: BrownianPath):
        self.grid = grid
        self.params = params
        self.cfg = cfg
        self.path = path
        self.t: list[float] = []
        self.g: list[float] = []
        self.s: list[float] = []
        self.c: list[bool] = []
        self.snapshots: list = []
        self.crossing_time: float | None = None

    def node(self, n: int, W: float) -> bool:
        """Check the crossing condition at solver node n; True once crossed."""
        t = n * self.cfg.dt
        if self.crossing_time is None and self.params.nu * W - self.params.beta * t > self.params.alpha:
            self.crossing_time = t
        return self.crossing_time is not None

    def record(self, n: int, arr: np.ndarray, W: float, direct: bool = False):
        """Record norms at node n; ``arr`` is u (transformed) or theta (direct)."""
        t = n * self.cfg.dt
        p = self.params
        f = FourierField(self.grid, arr, check=False)
        if direct:
            sn = sobolev_norm(f, p.sigma * p.s)
            if not math.isfinite(sn):
                raise NonFiniteStateError(f"non-finite theta norm at t={t:.6g}")
            try:
                gn = gevrey_norm(gamma_apply(f, W, p), p.phi(t), p, p.sigma)
            except OverflowGuardError:
                gn = math.nan
        else:
            gn = gevrey_norm(f, p.phi(t), p, p.sigma)
            if not math.isfinite(gn):
                raise NonFiniteStateError(f"non-finite Gevrey norm at t={t:.6g} (W={W:.6g})")
            sn = _theta_sobolev(self.grid, arr, W, p)
        self.t.append(t)
        self.g.append(gn)
        self.s.append(sn)
        self.c.append(self.crossing_time is not None)
        se = self.cfg.snapshot_every
        if se and n % se == 0:
            self.snapshots.append((t, f))

    def build(self, scheme: str, **kw) -> TrajectoryRecord:
        return TrajectoryRecord(np.array(self.t), np.array(self.g), np.array(self.s),
                                np.array(self.c, bool), self.crossing_time, scheme, self.params,
                                snapshots=self.snapshots, **kw)


def _check_start(u0: FourierField, path: BrownianPath, cfg: SolverConfig):
    if path.T < cfg.T_end - 1e-12 * max(1.0, cfg.T_end):
        raise ValueError(f"path horizon {path.T} shorter than T_end {cfg.T_end}")


def _finish(rec: _Recorder, scheme: str, u0: FourierField, params, cfg, events, final_u,
            final_theta, n_done) -> TrajectoryRecord:
    cc = condition_check(u0, params)
    out = rec.build(scheme, events=list(events), final_u=final_u, final_theta=final_theta,
                    admissible=cc["admissible"],
                    metadata={"dt": cfg.dt, "T_end": cfg.T_end, "steps_taken": n_done,
                              "N": u0.grid.N, "dealias_cutoff": u0.grid.dealias_cutoff,
                              "record_every": cfg.record_every, "filter_tol": cfg.filter_tol,
                              "margin": cc["margin"]})
    out.verdict = check_monotone(out, cfg.rel_tol)
    return out


def integrate_transformed(u0: FourierField, path: BrownianPath, cfg: SolverConfig,
                          params: GevreyParams) -> TrajectoryRecord:
    """Integrate the transformed equation on [0, T_end] along ``path``."""
    _check_start(u0, path, cfg)
    grid = u0.grid
    scheme = cfg.scheme if cfg.scheme in ("etdrk2", "etdrk4") else "etdrk2"
    st = _Transformed(grid, params, cfg.dt, scheme, cfg.overflow_policy, cfg.filter_tol)
    need_half = scheme == "etdrk4"
    stride = _path_stride(path, cfg.dt, need_half)
    W = path.values
    rec = _Recorder(grid, params, cfg, path)
    u = np.array(u0.coeffs)
    rec.node(0, W[0])
    rec.record(0, u, W[0])
    n_steps = cfg.n_steps
    n = 0
    for n in range(1, n_steps + 1):
        i0 = (n - 1) * stride
        i1 = n * stride
        u = st.step(u, W[i0], W[(i0 + i1) // 2] if need_half else 0.0, W[i1])
        crossed = rec.node(n, W[i1])
        if n % cfg.record_every == 0 or n == n_steps or (crossed and cfg.stop_on_crossing):
            rec.record(n, u, W[i1])
        if crossed and cfg.stop_on_crossing:
            break
    Wf = W[n * stride]
    fu = FourierField(grid, u, check=False)
    try:
        ft = back_transform(fu, Wf, params)
    except OverflowGuardError:
        ft = None
    return _finish(rec, scheme, u0, params, cfg, st.events, fu, ft, n)


def _noise_exponent(grid, params):
    return params.nu * grid.kpow(params.s), 0.5 * params.nu**2 * grid.kpow(2 * params.s)


def step_direct_spde(theta: FourierField, t: float, dW: float, h: float,
                     params: GevreyParams) -> FourierField:
    """Euler transport substep, then the exact factor exp(nu|k|^s dW - nu^2 |k|^{2s} h/2)."""
    grid = theta.grid
    ker = get_kernel(grid, params.nu, params.s)
    a, b = _noise_exponent(grid, params)
    expo = a * dW - b * h
    peak = float(np.max(np.abs(expo[theta.coeffs != 0]), initial=0.0))
    if peak > OVERFLOW_GUARD:
        raise OverflowGuardError(peak)
    new = np.exp(expo) * (theta.coeffs - h * ker.product(theta.coeffs, theta.coeffs))
    return FourierField(grid, new, check=False)


def integrate_direct(theta0: FourierField, path: BrownianPath, cfg: SolverConfig,
                     params: GevreyParams) -> TrajectoryRecord:
    """Integrate the original Ito SPDE on [0, T_end] along ``path``."""
    _check_start(theta0, path, cfg)
    grid = theta0.grid
    ker = get_kernel(grid, params.nu, params.s)
    stride = _path_stride(path, cfg.dt, False)
    W = path.values
    a, b = _noise_exponent(grid, params)
    h = cfg.dt
    rec = _Recorder(grid, params, cfg, path)
    th = np.array(theta0.coeffs)
    rec.node(0, W[0])
    rec.record(0, th, W[0], direct=True)
    n_steps = cfg.n_steps
    n = 0
    for n in range(1, n_steps + 1):
        dW = W[n * stride] - W[(n - 1) * stride]
        th = np.exp(a * dW - b * h) * (th - h * ker.product(th, th, cfg.filter_tol))
        crossed = rec.node(n, W[n * stride])
        if n % cfg.record_every == 0 or n == n_steps or (crossed and cfg.stop_on_crossing):
            rec.record(n, th, W[n * stride], direct=True)
        if crossed and cfg.stop_on_crossing:
            break
    ft = FourierField(grid, th, check=False)
    try:
        fu = gamma_apply(ft, W[n * stride], params)
    except OverflowGuardError:
        fu = None
    return _finish(rec, "direct_spde", theta0, params, cfg, [], fu, ft, n)


def integrate(u0: FourierField, path: BrownianPath, cfg: SolverConfig,
              params: GevreyParams) -> TrajectoryRecord:
    if cfg.scheme == "direct_spde":
        return integrate_direct(u0, path, cfg, params)
    if cfg.scheme == "picard":
        raise ValueError("use picard_local_solve for the Picard scheme")
    return integrate_transformed(u0, path, cfg, params)


@dataclass
class TransformComparison:
    dts: list
    l2_differences: list
    order: float
    orders: list


def compare_transform(theta0: FourierField, path: BrownianPath, dts: Sequence[float], T: float,
                      params: GevreyParams, scheme: str = "etdrk2",
                      filter_tol: float = 0.0) -> TransformComparison:
    """Terminal L^2 gap between Gamma^{-1}(transformed run) and the direct SPDE run.

    All runs read the same finely sampled ``path`` (coarser dt subsample it).
    The reported order is the least-squares slope of log gap vs log dt.
    """
    diffs = []
    for dt in dts:
        cfg = SolverConfig(dt=dt, T_end=T, scheme=scheme, record_every=max(1, round(T / dt)),
                           filter_tol=filter_tol)
        rt = integrate_transformed(theta0, path, cfg, params)
        rd = integrate_direct(theta0, path, SolverConfig(dt=dt, T_end=T, scheme="direct_spde",
                                                         record_every=cfg.record_every,
                                                         filter_tol=filter_tol), params)
        diffs.append(sobolev_norm(rt.final_theta - rd.final_theta, 0.0))
    x = np.log(np.asarray(dts, float))
    y = np.log(np.asarray(diffs))
    order = float(np.polyfit(x, y, 1)[0]) if len(dts) > 1 else math.nan
    orders = [float((y[i] - y[i + 1]) / (x[i] - x[i + 1])) for i in range(len(dts) - 1)]
    return TransformComparison(list(dts), diffs, order, orders)


@dataclass
class PicardResult:
    times: np.ndarray
    differences: list
    ratios: list
    verdict: str
    iterates: list
    final: np.ndarray = field(repr=False)

    @property
    def asymptotic_ratio(self) -> float:
        return self.ratios[-1] if self.ratios else math.nan


def picard_local_solve(u0: FourierField, path: BrownianPath, T_loc: float, n_iter: int,
                       quad_dt: float, params: GevreyParams, keep_iterates: bool = False,
                       filter_tol: float = 0.0) -> PicardResult:
    """Picard iteration of the Duhamel map on [0, T_loc].

    u0(t) = e^{-t nu^2 A/2} u0 and u_{n+1}(t) = e^{-t nu^2 A/2} u0
    - int_0^t e^{-(t-tau) nu^2 A/2} B(u_n, u_n)(tau) dtau, with the integral
    by the trapezoidal rule on the quad_dt grid.  d_n is the sup over grid
    times of ||u_{n+1} - u_n||_{G^sigma_phi(t)}.
    """
    grid = u0.grid
    M = round(T_loc / quad_dt)
    if M < 1 or abs(M * quad_dt - T_loc) > 1e-9 * max(1.0, T_loc):
        raise ValueError("T_loc/quad_dt must be integral")
    stride = _path_stride(path, quad_dt, False)
    if M * stride > path.n_steps:
        raise ValueError("path horizon shorter than T_loc")
    ker = get_kernel(grid, params.nu, params.s)
    lin = -0.5 * params.nu**2 * grid.kpow(2 * params.s)
    times = np.arange(M + 1) * quad_dt
    Wt = path.values[::stride][: M + 1]
    E = np.exp(quad_dt * lin)
    free = np.exp(times[:, None, None] * lin[None]) * u0.coeffs[None]
    w = np.exp(params.phi(times)[:, None, None] * grid.kpow(params.s)[None]) \
        * grid.kpow(params.sigma * params.s)[None]

    def duhamel(traj):
        out = np.empty_like(traj)
        out[0] = free[0]
        acc = np.zeros(traj.shape[1:], np.complex128)
        prev = ker.apply(traj[0], traj[0], Wt[0], filter_tol=filter_tol)
        for m in range(1, M + 1):
            cur = ker.apply(traj[m], traj[m], Wt[m], filter_tol=filter_tol)
            acc = E * acc + 0.5 * quad_dt * (E * prev + cur)
            out[m] = free[m] - acc
            prev = cur
        return out

    def dist(a, b):
        d = np.abs(a - b) * w
        return float(np.sqrt((d**2).sum(axis=(1, 2))).max())

    cur = free
    kept = [cur] if keep_iterates else []
    diffs: list[float] = []
    ratios: list[float] = []
    verdict = "converged"
    up = 0
    for _ in range(n_iter):
        nxt = duhamel(cur)
        d = dist(nxt, cur)
        if diffs and diffs[-1] > 0:
            r = d / diffs[-1]
            ratios.append(r)
            up = up + 1 if r > 1 else 0
        diffs.append(d)
        cur = nxt
        if keep_iterates:
            kept.append(cur)
        if up >= 3:
            verdict = "not_contracting"
            break
        if d == 0:
            break
    return PicardResult(times, diffs, ratios, verdict, kept, cur)


@dataclass
class ContractionFit:
    """Power law ratio ~ C T^exponent fitted over local horizons."""

    T_list: list
    ratios: list
    exponent: float
    constant: float
    residual: float
    degenerate: bool
    ratio_index: int


def contraction_scaling_experiment(u0: FourierField, path: BrownianPath, T_list: Sequence[float],
                                   params: GevreyParams, n_iter: int = 3, quad_dt: float = 1e-3,
                                   ratio_index: int = 0, filter_tol: float = 0.0) -> ContractionFit:
    """Least-squares slope of log(contraction ratio) vs log(T).

    The ratio for each horizon is d_{i+1}/d_i with i = ``ratio_index``
    (default d_1/d_0, the iterate pair furthest from the roundoff floor).
    Returns degenerate=True without fitting when any ratio is missing or zero,
    e.g. for single-mode data where the first iterate is already the fixed point.
    """
    T = np.asarray(T_list, float)
    if T.size < 4:
        raise ValueError("need at least 4 local horizons")
    q = T[1:] / T[:-1]
    if np.any(T <= 0) or not np.allclose(q, q[0], rtol=1e-9) or q[0] <= 1:
        raise ValueError("T_list must be an increasing geometric sequence")
    ratios = []
    for t in T:
        res = picard_local_solve(u0, path, float(t), max(n_iter, ratio_index + 2), quad_dt, params,
                                 filter_tol=filter_tol)
        ratios.append(res.ratios[ratio_index] if len(res.ratios) > ratio_index else 0.0)
    r = np.asarray(ratios)
    if np.any(~np.isfinite(r)) or np.any(r <= 0):
        return ContractionFit(list(T), ratios, math.nan, math.nan, math.nan, True, ratio_index)
    x, y = np.log(T), np.log(r)
    slope, icpt = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    return ContractionFit(list(T), ratios, float(slope), float(math.exp(icpt)), resid, False,
                          ratio_index)
