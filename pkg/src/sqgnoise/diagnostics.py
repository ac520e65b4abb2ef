"""Numerical checks of the Gevrey-norm inequalities along fields and trajectories.

Only literally-true consequences are ever gated on (signs, monotonicity,
embeddings); quantities that carry implicit constants, such as the bilinear
pairing ratio or the dissipation budget, are measured and reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bilinear import bilinear_B_fft
from .spectral import (
    FourierField,
    GevreyParams,
    frac_deriv,
    gamma_apply,
    gevrey_norm,
    l2_inner,
    sobolev_norm,
)

MONOTONE_RTOL = 1e-8


class LemmaHypothesisError(ValueError):
    """phi - nu W < 0: the bilinear pairing bound makes no claim."""


def condition_check(u0: FourierField, params: GevreyParams) -> dict:
    """Admissibility ||u0||_{G^sigma_{alpha+epsilon}} <= nu^2/2 - beta."""
    norm = gevrey_norm(u0, params.alpha + params.epsilon, params, params.sigma)
    margin = params.threshold - norm
    return {"admissible": margin >= 0, "margin": margin, "norm": norm,
            "threshold": params.threshold}


@dataclass(frozen=True)
class MonotoneVerdict:
    passed: bool
    applicable: bool
    first_violation: int | None
    n_checked: int
    max_rel_increase: float

    def as_json(self) -> dict:
        return {"check": "monotone", "pass": self.passed,
                "details": {"applicable": self.applicable,
                            "first_violation": self.first_violation,
                            "n_checked": self.n_checked,
                            "max_rel_increase": self.max_rel_increase}}


def check_monotone(record, rel_tol: float = MONOTONE_RTOL) -> MonotoneVerdict:
    """Is norm(t_{n+1}) <= norm(t_n)(1 + rel_tol) for every recorded step?

    ``record`` is a TrajectoryRecord or a plain sequence of norms.  For a
    record only the prefix before the first crossing is examined, and the
    verdict is flagged inapplicable when the run crossed or its initial
    datum is inadmissible.
    """
    if hasattr(record, "gevrey_norm"):
        norms = np.asarray(record.gevrey_norm, float)
        applicable = bool(record.admissible) and record.crossing_time is None
        if record.crossing_time is not None:
            stop = int(np.searchsorted(record.times, record.crossing_time, side="left"))
            norms = norms[:stop]
    else:
        norms = np.asarray(record, float)
        applicable = True
    if norms.size == 0:
        raise ValueError("empty norm series")
    prev, nxt = norms[:-1], norms[1:]
    bad = nxt > prev * (1 + rel_tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(prev > 0, nxt / prev - 1, np.where(nxt > 0, np.inf, 0.0))
    idx = np.flatnonzero(bad)
    return MonotoneVerdict(passed=not idx.size, applicable=applicable,
                           first_violation=int(idx[0]) if idx.size else None,
                           n_checked=int(prev.size),
                           max_rel_increase=float(rel.max(initial=-np.inf)) if rel.size else 0.0)


@dataclass(frozen=True)
class EnergyResidual:
    lhs_derivative: float
    dissipation_budget: float
    midpoint_norm: float

    @property
    def nonincreasing(self) -> bool:
        return self.lhs_derivative <= 0


def energy_residual(u_t0: FourierField, u_t1: FourierField, h: float, path, params: GevreyParams,
                    t0: float = 0.0) -> EnergyResidual:
    """Finite-difference d/dt ||u||^2_{G^sigma_phi} and the dissipation budget.

    budget = (nu^2 - 2 beta - 2 ||m||_{G^sigma}) ||m||^2_{G^{sigma+1}} at the
    midpoint state m = (u_t0 + u_t1)/2, phi(t0 + h/2).  ``path`` is accepted
    for interface symmetry; the budget does not depend on W.
    """
    p = params
    n0 = gevrey_norm(u_t0, p.phi(t0), p, p.sigma)
    n1 = gevrey_norm(u_t1, p.phi(t0 + h), p, p.sigma)
    mid = (u_t0 + u_t1) * 0.5
    pm = p.phi(t0 + h / 2)
    gm = gevrey_norm(mid, pm, p, p.sigma)
    gh = gevrey_norm(mid, pm, p, p.sigma + 1)
    budget = (p.nu**2 - 2 * p.beta - 2 * gm) * gh**2
    return EnergyResidual((n1**2 - n0**2) / h, budget, gm)


def bilinear_pairing_ratio(u: FourierField, phi_val: float, W_val: float,
                           params: GevreyParams) -> float:
    """|<e^{phi A^1/2} B(u,u), e^{phi A^1/2} A^sigma u>| / (||.||_{sigma s} ||.||^2_{(sigma+1)s})."""
    if phi_val - params.nu * W_val < 0:
        raise LemmaHypothesisError(f"phi - nu W = {phi_val - params.nu * W_val:.6g} < 0")
    p = params
    den = gevrey_norm(u, phi_val, p, p.sigma) * gevrey_norm(u, phi_val, p, p.sigma + 1) ** 2
    if den == 0:
        return 0.0
    b = bilinear_B_fft(u, u, W_val, p)
    lhs = gamma_apply(b, -phi_val, p)
    rhs = gamma_apply(frac_deriv(u, 2 * p.sigma * p.s), -phi_val, p)
    return abs(l2_inner(lhs, rhs)) / den


def embedding_check(f: FourierField, gamma: float, delta: float, rho: float,
                    params: GevreyParams, slack: float = 1e-12) -> tuple[bool, bool]:
    """The two Gevrey embeddings:

    ||f||_{G^rho_gamma} <= ||f||_{G^rho_{gamma+delta}} and
    ||f||_{G^{rho+1}_gamma} <= delta^-1 ||f||_{G^rho_{gamma+delta}}.
    """
    if min(gamma, delta, rho) <= 0:
        raise ValueError("gamma, delta and rho must be positive")
    big = gevrey_norm(f, gamma + delta, params, rho)
    first = gevrey_norm(f, gamma, params, rho) <= big * (1 + slack)
    second = gevrey_norm(f, gamma, params, rho + 1) <= big * (1 + slack) / delta
    return first, second


@dataclass(frozen=True)
class RadiusFit:
    rate: float
    r2: float
    n_shells: int

    @property
    def low_quality(self) -> bool:
        return self.r2 < 0.5


def spectral_radius_fit(f: FourierField, s: float, min_shells: int = 8) -> RadiusFit:
    """Exponential decay rate of the shell maxima of |u_hat| against |k|^s.

    Shells are exact |k|^2 values; the rate is minus the least-squares
    slope of log(max amplitude) vs |k|^s.
    """
    g = f.grid
    k2 = (g.k1.astype(np.int64) ** 2 + g.k2.astype(np.int64) ** 2).ravel()
    amp = np.abs(f.coeffs).ravel()
    nz = amp > 0
    if not nz.any():
        raise ValueError("zero field has no populated shells")
    shells, inv = np.unique(k2[nz], return_inverse=True)
    peak = np.zeros(len(shells))
    np.maximum.at(peak, inv, amp[nz])
    if len(shells) < min_shells:
        raise ValueError(f"only {len(shells)} populated shells; need {min_shells}")
    x = np.sqrt(shells.astype(float)) ** s
    y = np.log(peak)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss if ss > 0 else 0.0
    return RadiusFit(float(-slope), r2, len(shells))


def back_transform_bounds(record, theta0: FourierField, params: GevreyParams) -> dict:
    """Max violations of ||theta(t)||_{H^{sigma s}} <= ||u(t)||_{G_phi} <= ||theta0||_{G_{alpha+eps}}."""
    upper = gevrey_norm(theta0, params.alpha + params.epsilon, params, params.sigma)
    g = np.asarray(record.gevrey_norm)
    th = np.asarray(record.sobolev_norm)
    first = float(np.max(th / g - 1, initial=-np.inf))
    second = float(np.max(g / upper - 1, initial=-np.inf)) if upper > 0 else 0.0
    return {"first_excess": first, "second_excess": second}


def pairing_corpus_max(seeds, grid, params: GevreyParams, target_norm: float,
                       spectral_slope: float = 1.0, W_val: float = 0.0) -> float:
    """Max pairing ratio over random fields drawn with the given seeds (phi = alpha)."""
    from .spectral import random_field

    best = 0.0
    for sd in seeds:
        u = random_field(int(sd), grid, params, target_norm, spectral_slope)
        best = max(best, bilinear_pairing_ratio(u, params.alpha, W_val, params))
    return best


def inviscid_energy_defect(f: FourierField, params: GevreyParams) -> float:
    """<B(f,f; W=0), f> relative to ||f||_{L2}^2 ||f||_{H^1}."""
    b = bilinear_B_fft(f, f, 0.0, params)
    scale = sobolev_norm(f, 0.0) ** 2 * sobolev_norm(f, 1.0)
    return abs(l2_inner(b, f)) / scale if scale > 0 else 0.0


def verdict_json(name: str, passed: bool, **details) -> dict:
    return {"check": name, "pass": bool(passed),
            "details": {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v))
                        for k, v in details.items()}}
