import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqgnoise.diagnostics import (
    LemmaHypothesisError,
    bilinear_pairing_ratio,
    check_monotone,
    condition_check,
    embedding_check,
    energy_residual,
    inviscid_energy_defect,
    pairing_corpus_max,
    spectral_radius_fit,
    verdict_json,
)
from sqgnoise.solver import SolverConfig, integrate_transformed
from sqgnoise.spectral import (
    FourierField,
    GevreyParams,
    SpectralGrid,
    gevrey_norm,
    make_field,
    random_field,
)
from sqgnoise.stochastic import BrownianPath, sample_path


def _single_mode(grid, params, t, amp=1.0):
    """Closed-form transformed solution for the mode pair +-(1, 0)."""
    return make_field(grid, {(1, 0): amp * math.exp(-0.5 * params.nu**2 * t)})


class TestConditionCheck:
    def test_threshold_example(self, grid16):
        p = GevreyParams(nu=2.0, s=0.5, sigma=1.5, beta=1.0, strict=False)
        f = random_field(1, grid16, p, 0.5)
        cc = condition_check(f, p)
        assert cc["threshold"] == 1.0
        assert cc["margin"] == pytest.approx(0.5, abs=1e-12)
        assert cc["admissible"]

    def test_zero_field(self, grid16, loose):
        cc = condition_check(FourierField.zeros(grid16), loose)
        assert cc["admissible"] and cc["margin"] == loose.threshold

    def test_just_over(self, grid16, loose):
        f = random_field(2, grid16, loose, loose.threshold + 0.1)
        cc = condition_check(f, loose)
        assert not cc["admissible"]
        assert cc["margin"] == pytest.approx(-0.1, abs=1e-12)


class TestMonotone:
    def test_decreasing(self):
        v = check_monotone([3.0, 2.0, 1.0, 0.5])
        assert v.passed and v.first_violation is None and v.n_checked == 3

    def test_tolerance(self):
        assert check_monotone([1.0, 1.0 + 1e-9], 1e-8).passed
        v = check_monotone([1.0, 1.0 + 1e-7], 1e-8)
        assert not v.passed and v.first_violation == 0
        assert v.max_rel_increase == pytest.approx(1e-7, rel=1e-6)

    def test_reversal_and_idempotence(self):
        s = [5.0, 4.0, 3.5, 1.0]
        assert check_monotone(s) == check_monotone(s)
        rev = check_monotone(s[::-1])
        assert not rev.passed and rev.first_violation == 0

    def test_empty(self):
        with pytest.raises(ValueError):
            check_monotone([])

    def test_single_mode_record(self, grid16):
        p = GevreyParams(nu=1.0, s=0.6, sigma=1.8, beta=0.4)
        path = BrownianPath.from_function(lambda t: 0.3 * np.sin(5 * t), 3.0, 0.01)
        rec = integrate_transformed(make_field(grid16, {(1, 0): 0.01}), path,
                                    SolverConfig(0.01, 3.0), p)
        v = check_monotone(rec, rel_tol=0.0)
        assert v.passed and v.applicable
        assert v.max_rel_increase < 0

    def test_crossed_prefix_and_applicability(self, grid16, loose):
        path = BrownianPath.from_function(lambda t: 3 * t, 1.0, 0.01)
        rec = integrate_transformed(random_field(1, grid16, loose, 0.1), path,
                                    SolverConfig(0.01, 1.0), loose)
        v = check_monotone(rec)
        assert rec.crossed and not v.applicable
        assert v.n_checked == int(round(rec.crossing_time / 0.01)) - 1
        assert rec.monotone is None

    def test_as_json(self):
        j = check_monotone([2.0, 1.0]).as_json()
        assert j["check"] == "monotone" and j["pass"] is True


class TestEnergyResidual:
    def test_zero(self, grid16, loose):
        z = FourierField.zeros(grid16)
        r = energy_residual(z, z, 0.1, None, loose)
        assert (r.lhs_derivative, r.dissipation_budget) == (0.0, 0.0)

    def test_single_mode_second_order(self, grid16, loose):
        p = loose
        t0 = 0.3
        errs = []
        for h in (0.1, 0.05, 0.025):
            r = energy_residual(_single_mode(grid16, p, t0), _single_mode(grid16, p, t0 + h), h,
                                None, p, t0=t0)
            tm = t0 + h / 2
            norm_sq = 2 * math.exp(2 * p.phi(tm) - p.nu**2 * tm)
            exact = 2 * (p.beta - p.nu**2 / 2) * norm_sq
            errs.append(abs(r.lhs_derivative - exact))
            assert r.nonincreasing
        assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
        assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)

    def test_admissible_trajectory_nonpositive(self, grid16):
        p = GevreyParams(nu=1.0, s=0.6, sigma=1.8, beta=0.4)
        u0 = random_field(4, grid16, p, 0.9 * p.threshold)
        rec = integrate_transformed(u0, sample_path(2, 1.0, 0.01),
                                    SolverConfig(0.01, 1.0, snapshot_every=10), p)
        assert not rec.crossed
        snaps = rec.snapshots
        for (ta, ua), (tb, ub) in zip(snaps, snaps[1:]):
            r = energy_residual(ua, ub, tb - ta, None, p, t0=ta)
            assert r.lhs_derivative <= 0
            assert math.isfinite(r.dissipation_budget)


class TestPairingRatio:
    def test_single_mode_zero(self, grid16, loose):
        assert bilinear_pairing_ratio(make_field(grid16, {(1, 0): 1}), 1.0, 0.2, loose) == 0.0

    def test_zero_field(self, grid16, loose):
        assert bilinear_pairing_ratio(FourierField.zeros(grid16), 1.0, 0.0, loose) == 0.0

    def test_hypothesis_error(self, grid16, loose):
        with pytest.raises(LemmaHypothesisError):
            bilinear_pairing_ratio(random_field(1, grid16, loose, 0.2), 0.5, 0.6, loose)

    def test_corpus_stable(self):
        p = GevreyParams(nu=1.0, s=0.5, sigma=1.5, strict=False)
        g = SpectralGrid(32)
        a = pairing_corpus_max(range(400), g, p, 0.2)
        b = pairing_corpus_max(range(800), g, p, 0.2)
        c = pairing_corpus_max(range(10**6, 10**6 + 400), g, p, 0.2)
        assert 0 < a <= b < math.inf
        assert b / a - 1 <= 0.10
        assert abs(c / a - 1) <= 0.10

    def test_scale_invariant(self, grid16, loose):
        u = random_field(3, grid16, loose, 0.2)
        assert bilinear_pairing_ratio(u, 1.0, 0.0, loose) == pytest.approx(
            bilinear_pairing_ratio(u * 3.0, 1.0, 0.0, loose), rel=1e-12)


class TestEmbedding:
    def test_single_mode_example(self, grid8):
        p = GevreyParams(nu=1.0, s=1.0, strict=False)
        f = make_field(grid8, {(1, 0): 1})
        ratio = gevrey_norm(f, 0.3, p, 2.0) / gevrey_norm(f, 0.8, p, 1.0)
        assert ratio == pytest.approx(math.exp(-0.5), rel=1e-14)
        assert embedding_check(f, 0.3, 0.5, 1.0, p) == (True, True)

    def test_large_delta(self, grid16, loose):
        f = random_field(1, grid16, loose, 1.0)
        assert embedding_check(f, 0.2, 50.0, 1.5, loose)[1]

    def test_rejects_nonpositive(self, grid16, loose):
        with pytest.raises(ValueError):
            embedding_check(random_field(1, grid16, loose, 1.0), 0.0, 1.0, 1.0, loose)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31), s=st.floats(0.05, 1.0), gamma=st.floats(0.05, 2),
           delta=st.floats(0.05, 2), rho=st.floats(0.05, 2))
    def test_random(self, seed, s, gamma, delta, rho):
        p = GevreyParams(nu=1.0, s=s, strict=False)
        f = random_field(seed, SpectralGrid(16), p, 1.0)
        assert embedding_check(f, gamma, delta, rho, p) == (True, True)


class TestRadiusFit:
    def _profile(self, grid, rate, s):
        c = np.where(grid.kmag > 0, np.exp(-rate * grid.kpow(s)), 0.0).astype(complex)
        c[grid.nyquist_mask] = 0
        return FourierField(grid, c)

    def test_exact_profile(self):
        g = SpectralGrid(32)
        for s in (0.5, 1.0):
            fit = spectral_radius_fit(self._profile(g, 0.7, s), s)
            assert fit.rate == pytest.approx(0.7, abs=1e-6)
            assert fit.r2 > 0.999999

    def test_white_spectrum(self):
        g = SpectralGrid(32)
        c = np.where(g.kmag > 0, 1.0, 0.0).astype(complex)
        c[g.nyquist_mask] = 0
        fit = spectral_radius_fit(FourierField(g, c), 0.5)
        assert fit.rate == pytest.approx(0, abs=1e-12)
        assert fit.low_quality

    def test_too_few_shells(self, grid16):
        with pytest.raises(ValueError):
            spectral_radius_fit(make_field(grid16, {(1, 0): 1, (0, 2): 1}), 0.5)
        with pytest.raises(ValueError):
            spectral_radius_fit(FourierField.zeros(grid16), 0.5)

    def test_rate_grows_along_trajectory(self):
        g = SpectralGrid(32)
        p = GevreyParams(nu=1.0, s=0.6, sigma=1.8, beta=0.4)
        u0 = random_field(5, g, p, 0.5 * p.threshold)
        rec = integrate_transformed(u0, sample_path(1, 1.0, 0.01), SolverConfig(0.01, 1.0), p)
        assert spectral_radius_fit(rec.final_u, p.s).rate > spectral_radius_fit(u0, p.s).rate


class TestMisc:
    def test_inviscid_defect(self, loose):
        g = SpectralGrid(32)
        for seed in range(10):
            assert inviscid_energy_defect(random_field(seed, g, loose, 1.0), loose) <= 1e-12
        assert inviscid_energy_defect(FourierField.zeros(g), loose) == 0.0

    def test_verdict_json_sanitizes(self):
        j = verdict_json("x", True, a=math.nan, b=1.5, c=3)
        assert j == {"check": "x", "pass": True, "details": {"a": "nan", "b": 1.5, "c": 3}}
