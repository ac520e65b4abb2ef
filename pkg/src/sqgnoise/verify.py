"""Fast invariant suite behind ``sqgnoise verify``.

Each check returns a JSON-ready verdict {check, pass, details}.  These are
reduced-size versions of the acceptance criteria; the full-size runs live in
tests/test_acceptance.py.
"""

from __future__ import annotations

import math

import numpy as np

from .bilinear import bilinear_B_direct, bilinear_B_fft
from .diagnostics import embedding_check, inviscid_energy_defect, verdict_json
from .solver import SolverConfig, compare_transform, integrate_direct, integrate_transformed
from .spectral import FourierField, GevreyParams, SpectralGrid, make_field, random_field
from .stochastic import analytic_crossing_probability, derive_seed, mc_crossing_probability, sample_path


def max_rel_error(a: FourierField, b: FourierField) -> float:
    """max |a - b| over coefficients, relative to max |b| (0 when both vanish)."""
    scale = float(np.abs(b.coeffs).max())
    diff = float(np.abs(a.coeffs - b.coeffs).max())
    if scale == 0:
        return diff
    return diff / scale


def single_mode_transformed(s: float = 0.5) -> dict:
    g = SpectralGrid(16)
    p = GevreyParams(nu=1.0, s=s, strict=False)
    u0 = make_field(g, {(1, 0): 1.0})
    rec = integrate_transformed(u0, sample_path(1, 2.0, 0.1), SolverConfig(0.1, 2.0), p)
    err = abs(rec.final_u.coefficient((1, 0)) / math.exp(-1.0) - 1)
    return verdict_json("single_mode_transformed", err <= 1e-12, rel_error=err)


def single_mode_direct(s: float = 0.5) -> dict:
    g = SpectralGrid(16)
    p = GevreyParams(nu=1.0, s=s, strict=False)
    u0 = make_field(g, {(1, 0): 1.0})
    path = sample_path(2, 2.0, 0.1)
    rec = integrate_direct(u0, path, SolverConfig(0.1, 2.0, scheme="direct_spde"), p)
    exact = math.exp(path.values[-1] - 1.0)
    err = abs(rec.final_theta.coefficient((1, 0)) / exact - 1)
    return verdict_json("single_mode_direct", err <= 1e-12, rel_error=err)


def oracle_equivalence(n_pairs: int = 4, N: int = 16) -> dict:
    g = SpectralGrid(N)
    p = GevreyParams(nu=1.0, s=0.5, strict=False)
    worst = 0.0
    for i in range(n_pairs):
        f = random_field(2 * i, g, p, 1.0)
        h = random_field(2 * i + 1, g, p, 1.0)
        for W in (0.0, 0.5, -0.5, 2.0, -2.0):
            worst = max(worst, max_rel_error(bilinear_B_fft(f, h, W, p), bilinear_B_direct(f, h, W, p)))
    return verdict_json("oracle_equivalence", worst <= 1e-10, max_rel_error=worst, pairs=n_pairs)


def drift_crossing(n_paths: int = 4000) -> dict:
    p = GevreyParams(nu=1.0, alpha=1.0, beta=0.5, strict=False)
    est = mc_crossing_probability(n_paths, 50.0, 0.01, p, master_seed=2024)
    target = analytic_crossing_probability(p)
    gap = abs(est.estimate - target)
    return verdict_json("drift_crossing", gap <= 3 * est.std_error + 0.005,
                        estimate=est.estimate, std_error=est.std_error, analytic=target)


def monotone_short(n_runs: int = 3) -> dict:
    g = SpectralGrid(32)
    p = GevreyParams(nu=1.0, s=0.5, sigma=1.5, beta=0.25, strict=False)
    cfg = SolverConfig(1e-3, 1.0)
    fails = 0
    ran = 0
    i = 0
    while ran < n_runs:
        path = sample_path(derive_seed(99, i), 1.0, 1e-3)
        i += 1
        rec = integrate_transformed(random_field(i, g, p, 0.9 * p.threshold), path, cfg, p)
        if rec.crossed:
            continue
        ran += 1
        fails += not rec.verdict.passed
    return verdict_json("monotone_short", fails == 0, runs=ran, failures=fails)


def transform_equivalence() -> dict:
    g = SpectralGrid(16)
    p = GevreyParams(nu=1.0, s=0.5, sigma=1.5, strict=False)
    path = sample_path(11, 0.5, 1e-3)
    cmp = compare_transform(random_field(5, g, p, 0.2), path, [5e-2, 1e-2, 1e-3], 0.5, p)
    return verdict_json("transform_equivalence", cmp.order >= 0.5, order=cmp.order,
                        gaps=cmp.l2_differences)


def property_sweep(n_cases: int = 200, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    g = SpectralGrid(16)
    fails = {"embedding": 0, "subadditivity": 0, "hermitian": 0, "energy": 0}
    for _ in range(n_cases):
        s = float(rng.uniform(0.05, 1.0))
        p = GevreyParams(nu=1.0, s=s, strict=False)
        f = random_field(int(rng.integers(1 << 30)), g, p, float(rng.uniform(0.1, 2)))
        gamma, delta, rho = rng.uniform(0.05, 2, size=3)
        if not all(embedding_check(f, gamma, delta, rho, p)):
            fails["embedding"] += 1
        j = rng.integers(-50, 51, size=2)
        k = rng.integers(-50, 51, size=2)
        if np.hypot(*(j + k)) ** s > np.hypot(*j) ** s + np.hypot(*k) ** s + 1e-12:
            fails["subadditivity"] += 1
        b = bilinear_B_fft(f, f, float(rng.uniform(-1, 1)), p)
        try:
            FourierField(g, b.coeffs)
        except ValueError:
            fails["hermitian"] += 1
        if inviscid_energy_defect(f, p) > 1e-12:
            fails["energy"] += 1
    return verdict_json("property_sweep", not any(fails.values()), cases=n_cases, **fails)


QUICK = [single_mode_transformed, single_mode_direct, oracle_equivalence, property_sweep,
         transform_equivalence, monotone_short]
FULL = QUICK + [drift_crossing]


def run_suite(full: bool = False) -> list[dict]:
    return [check() for check in (FULL if full else QUICK)]
