import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqgnoise.bilinear import SoftCapError, bilinear_B_direct, bilinear_B_fft
from sqgnoise.spectral import (
    FourierField,
    GevreyParams,
    GridMismatchError,
    OverflowGuardError,
    SpectralGrid,
    gamma_apply,
    l2_inner,
    make_field,
    random_field,
)
from sqgnoise.verify import max_rel_error

TWO_SHELL = {(1, 0): 1, (0, 2): 1}


def _hand_B(k, modes, W, nu, s):
    """Scalar sum over the pairs (j, k - j) drawn from a short mode list."""
    amp = {}
    for q, a in modes.items():
        amp[q] = a
        amp[(-q[0], -q[1])] = complex(a).conjugate()
    total = 0j
    for j, fj in amp.items():
        m = (k[0] - j[0], k[1] - j[1])
        if m not in amp:
            continue
        jn = math.hypot(*j)
        cross = -j[1] * m[0] + j[0] * m[1]
        expo = -nu * W * (math.hypot(*k) ** s - jn**s - math.hypot(*m) ** s)
        total -= math.exp(expo) * cross / jn * fj * amp[m]
    return total


class TestExamples:
    @pytest.mark.parametrize("W", [0.0, 0.4, -1.3])
    def test_single_shell_is_steady(self, grid8, loose, W):
        for modes in ({(1, 0): 1}, {(1, 0): 1, (0, 1): 1}, {(3, 4): 1, (5, 0): 0.5j}):
            g = SpectralGrid(16) if (3, 4) in modes else grid8
            f = make_field(g, modes)
            assert np.abs(bilinear_B_fft(f, f, W, loose).coeffs).max() < 1e-15
            assert np.abs(bilinear_B_direct(f, f, W, loose).coeffs).max() < 1e-15

    def test_two_shell_hand_values(self, grid8):
        p = GevreyParams(nu=1.0, s=0.5, strict=False)
        f = make_field(grid8, TWO_SHELL)
        b = bilinear_B_direct(f, f, 0.0, p)
        expect = {(1, 2): -1, (1, -2): 1, (-1, 2): 1, (-1, -2): -1}
        for k, v in expect.items():
            assert b.coefficient(k) == pytest.approx(v, abs=1e-15)
        # nothing else is produced
        assert np.count_nonzero(np.abs(b.coeffs) > 1e-15) == 4
        bf = bilinear_B_fft(f, f, 0.0, p)
        assert max_rel_error(bf, b) <= 1e-14

    def test_two_shell_with_noise_factor(self, grid8):
        p = GevreyParams(nu=1.0, s=0.5, strict=False)
        f = make_field(grid8, TWO_SHELL)
        factor = 1.9025695111099106  # exp(-0.7 (5^(1/4) - 1 - sqrt 2))
        assert math.exp(-0.7 * (5**0.25 - 1 - math.sqrt(2))) == pytest.approx(factor, rel=1e-15)
        for b in (bilinear_B_direct(f, f, 0.7, p), bilinear_B_fft(f, f, 0.7, p)):
            assert b.coefficient((1, 2)) == pytest.approx(-factor, rel=1e-13)
            assert b.coefficient((1, -2)) == pytest.approx(factor, rel=1e-13)

    def test_hand_sum_matches_oracle(self, grid8):
        p = GevreyParams(nu=0.8, s=0.7, strict=False)
        modes = {(1, 0): 0.5 - 1j, (0, 2): 1.5, (1, 1): 0.25j}
        f = make_field(grid8, modes)
        b = bilinear_B_direct(f, f, -0.6, p)
        for k in [(1, 2), (2, 1), (0, 1), (1, -1), (2, 2), (-1, 3)]:
            if not grid8.dealias_mask[grid8.index_of(k)]:
                continue
            assert b.coefficient(k) == pytest.approx(_hand_B(k, modes, -0.6, 0.8, 0.7), abs=1e-14)

    def test_random_example_w04(self, grid16, loose):
        f = random_field(0, grid16, loose, 1.0)
        assert max_rel_error(bilinear_B_fft(f, f, 0.4, loose),
                             bilinear_B_direct(f, f, 0.4, loose)) <= 1e-10


class TestOracleEquivalence:
    @pytest.mark.parametrize("N", [8, 16, 32])
    def test_grids(self, N, loose):
        g = SpectralGrid(N)
        worst = 0.0
        for i in range(3):
            f = random_field(10 * N + i, g, loose, 1.0)
            h = random_field(20 * N + i, g, loose, 1.0)
            for W in (0.0, 0.5, -0.5, 2.0, -2.0):
                worst = max(worst, max_rel_error(bilinear_B_fft(f, h, W, loose),
                                                 bilinear_B_direct(f, h, W, loose)))
        assert worst <= 1e-10

    def test_support_beyond_cutoff(self, grid16, loose):
        f = make_field(grid16, {(6, 1): 0.3, (1, 1): 1j, (0, 7): 0.2})
        h = random_field(5, grid16, loose, 1.0)
        # the product aliases here, so only the Gamma conjugation is checked
        for W in (0.5, -0.5):
            b0 = bilinear_B_fft(gamma_apply(f, -W, loose), gamma_apply(h, -W, loose), 0.0, loose)
            assert max_rel_error(bilinear_B_fft(f, h, W, loose), gamma_apply(b0, W, loose)) <= 1e-12

    def test_zero_mode_exact(self, grid16, loose):
        f = random_field(1, grid16, loose, 1.0)
        h = random_field(2, grid16, loose, 1.0)
        for W in (0.0, 1.0, -1.0):
            assert bilinear_B_fft(f, h, W, loose).coeffs[0, 0] == 0
            assert bilinear_B_direct(f, h, W, loose).coeffs[0, 0] == 0

    def test_output_dealiased_and_hermitian(self, grid16, loose):
        f = random_field(3, grid16, loose, 1.0)
        b = bilinear_B_fft(f, f, 0.3, loose)
        assert not b.coeffs[~grid16.dealias_mask].any()
        FourierField(grid16, b.coeffs)


class TestStructure:
    def test_bilinearity(self, grid16, loose):
        f1, f2, h = (random_field(i, grid16, loose, 1.0) for i in (4, 5, 6))
        a, b = 0.7, -1.9
        for W in (0.0, 0.8):
            lhs = bilinear_B_fft(a * f1 + b * f2, h, W, loose)
            rhs = a * bilinear_B_fft(f1, h, W, loose) + b * bilinear_B_fft(f2, h, W, loose)
            assert max_rel_error(lhs, rhs) <= 1e-12
            lhs = bilinear_B_fft(h, a * f1 + b * f2, W, loose)
            rhs = a * bilinear_B_fft(h, f1, W, loose) + b * bilinear_B_fft(h, f2, W, loose)
            assert max_rel_error(lhs, rhs) <= 1e-12

    @pytest.mark.parametrize("W", [0.5, -0.5, 1.5])
    def test_w_consistency(self, grid16, loose, W):
        f = random_field(7, grid16, loose, 1.0)
        h = random_field(8, grid16, loose, 1.0)
        b0 = bilinear_B_fft(gamma_apply(f, -W, loose), gamma_apply(h, -W, loose), 0.0, loose)
        assert max_rel_error(bilinear_B_fft(f, h, W, loose), gamma_apply(b0, W, loose)) <= 1e-10

    def test_inviscid_energy_identity(self, loose):
        for N in (16, 32):
            g = SpectralGrid(N)
            for seed in range(5):
                f = random_field(seed, g, loose, 1.0)
                b = bilinear_B_fft(f, f, 0.0, loose)
                scale = math.sqrt(l2_inner(b, b) * l2_inner(f, f))
                assert abs(l2_inner(b, f)) <= 1e-12 * scale

    def test_normalized_variable_form(self, grid8):
        """e^{phi|k|^s} B_hat(k) equals minus the m(k, j) sum in the variable v."""
        p = GevreyParams(nu=1.0, s=0.75, sigma=1.5, strict=False)
        phi, W = 0.9, 0.3
        u = random_field(9, grid8, p, 1.0)
        g = grid8
        ks = g.kpow(p.s)
        v = u.coeffs * np.exp(phi * ks) * g.kpow(p.sigma * p.s)
        b = bilinear_B_direct(u, u, W, p)
        lat = [(int(g.k1[a, c]), int(g.k2[a, c])) for a, c in zip(*np.nonzero(v))]
        vmap = {q: v[g.index_of(q)] for q in lat}
        for a, c in zip(*np.nonzero(g.dealias_mask)):
            k = (int(g.k1[a, c]), int(g.k2[a, c]))
            kn = math.hypot(*k)
            total = 0j
            for j in lat:
                m = (k[0] - j[0], k[1] - j[1])
                if m not in vmap:
                    continue
                jn, mn = math.hypot(*j), math.hypot(*m)
                mkj = (m[0] * -j[1] + m[1] * j[0]) / (mn ** (p.sigma * p.s) * jn ** (1 + p.sigma * p.s))
                total += mkj * math.exp((phi - W) * (kn**p.s - mn**p.s - jn**p.s)) * vmap[m] * vmap[j]
            assert math.exp(phi * kn**p.s) * b.coeffs[a, c] == pytest.approx(-total, abs=1e-12)


class TestErrors:
    def test_soft_cap(self, loose):
        g = SpectralGrid(128)
        f = make_field(g, {(1, 0): 1})
        with pytest.raises(SoftCapError):
            bilinear_B_direct(f, f, 0.0, loose)

    def test_guard(self, grid16):
        p = GevreyParams(nu=1.0, s=1.0, strict=False)
        f = make_field(grid16, {(1, 0): 1})
        with pytest.raises(OverflowGuardError):
            bilinear_B_fft(f, f, 200.0, p)
        # the oracle has a bounded combined exponent and still answers
        assert np.isfinite(bilinear_B_direct(f, f, 200.0, p).coeffs).all()

    def test_grid_mismatch(self, grid8, grid16, loose):
        with pytest.raises(GridMismatchError):
            bilinear_B_fft(make_field(grid8, {(1, 0): 1}), make_field(grid16, {(1, 0): 1}), 0, loose)


class TestProperties:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), s=st.floats(0.1, 1.0), W=st.floats(-2, 2))
    def test_oracle_random(self, seed, s, W):
        g = SpectralGrid(16)
        p = GevreyParams(nu=1.0, s=s, strict=False)
        f = random_field(seed, g, p, 1.0)
        h = random_field(seed + 1, g, p, 1.0)
        assert max_rel_error(bilinear_B_fft(f, h, W, p), bilinear_B_direct(f, h, W, p)) <= 1e-10
