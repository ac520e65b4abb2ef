"""The SQG nonlinearity B(f, g) = Gamma(R_perp Gamma^{-1} f . grad Gamma^{-1} g).

Two evaluation routes:

* `bilinear_B_fft` factorizes the Gamma conjugation and forms the product
  in physical space (dealiased, O(N^2 log N)).
* `bilinear_B_direct` sums the lattice convolution with the combined
  exponent exp(-nu W (|k|^s - |j|^s - |k-j|^s)) per pair (O(N^4)); it is
  the oracle for the fast path.

Sign bookkeeping: the Riesz factor contributes i j_perp/|j|, the gradient
i (k-j), so B_hat(k) = -sum_j e^{...} (j_perp . (k-j))/|j| f_hat(j) g_hat(k-j).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .spectral import (
    OVERFLOW_GUARD,
    FourierField,
    GevreyParams,
    GridMismatchError,
    OverflowGuardError,
    SpectralGrid,
)

DIRECT_SOFT_CAP = 64


class SoftCapError(ValueError):
    pass


class BilinearKernel:
    """Precomputed symbols for one (grid, nu, s); operates on raw coefficient arrays."""

    def __init__(self, grid: SpectralGrid, nu: float, s: float):
        self.grid = grid
        self.nu = nu
        self.s = s
        N = grid.N
        self.N = N
        self.h = N // 2 + 1
        k1 = grid.k1.astype(float)
        k2 = grid.k2.astype(float)
        inv = grid.kpow(-1.0)
        self.ks = grid.kpow(s)
        self.mask = grid.dealias_mask
        # |k|^s on the retained modes only, so exp(+-W nu |k|^s) stays finite
        # on the (zero) coefficients beyond the cutoff
        self.ks_out = np.where(self.mask, self.ks, 0.0)
        # half-spectrum slices of the symbols used before irfft2
        r1 = (-1j * k2 * inv)[:, : self.h]
        r2 = (1j * k1 * inv)[:, : self.h]
        d1 = (1j * k1)[:, : self.h]
        d2 = (1j * k2)[:, : self.h]
        # stacked as (v1, v2, g1, g2) so one batched irfft2 serves all four
        self.sym = np.stack([r1, r2, d1, d2])
        self.kmax_s = float(grid.kmag[self.mask].max()) ** s
        self._neg = grid.neg_index
        self._cols = (N - np.arange(self.h, N)) % N

    def exponent(self, W: float) -> float:
        return self.nu * abs(W) * self.kmax_s

    def gamma(self, W: float) -> np.ndarray:
        return np.exp(-W * self.nu * self.ks_out)

    def _full(self, half: np.ndarray) -> np.ndarray:
        N, h = self.N, self.h
        out = np.empty((N, N), np.complex128)
        out[:, :h] = half
        out[:, h:] = np.conj(half[self._neg][:, self._cols])
        # the k2 = 0 column comes out of a complex FFT; make it exactly Hermitian
        col = out[:, 0]
        out[:, 0] = 0.5 * (col + np.conj(col[self._neg]))
        return out

    def product(self, f: np.ndarray, g: np.ndarray, filter_tol: float = 0.0) -> np.ndarray:
        """Dealiased coefficients of R_perp f . grad g (no Gamma conjugation).

        ``filter_tol > 0`` zeroes output coefficients below
        ``filter_tol * max|output|`` (a Krasny-type roundoff filter).
        """
        N, h = self.N, self.h
        s = (N, N)
        spec = np.empty((4, N, h), np.complex128)
        spec[:2] = self.sym[:2] * f[None, :, :h]
        spec[2:] = self.sym[2:] * g[None, :, :h]
        v1, v2, g1, g2 = sfft.irfft2(spec, s=s, axes=(-2, -1))
        # irfft2 carries 1/N^2 per factor; rfft2 none: net scale N^2
        p = sfft.rfft2(v1 * g1 + v2 * g2) * (N * N)
        out = self._full(p)
        out[~self.mask] = 0
        if filter_tol > 0:
            a = np.abs(out)
            out[a <= filter_tol * a.max(initial=0.0)] = 0
        return out

    def apply(self, f: np.ndarray, g: np.ndarray, W: float,
              guard: float = OVERFLOW_GUARD, filter_tol: float = 0.0) -> np.ndarray:
        if W == 0:
            return self.product(f, g, filter_tol)
        outside = ~self.mask
        if f[outside].any() or g[outside].any():
            # inputs reach past the cutoff: conjugate with the full symbol
            ks_in = self.ks
            expo = self.nu * abs(W) * float(self.ks.max())
        else:
            ks_in = self.ks_out
            expo = self.exponent(W)
        if expo > guard:
            raise OverflowGuardError(expo, guard, "fall back to bilinear_B_direct")
        ginv = np.exp(W * self.nu * ks_in)
        if f is g:
            fi = gi = f * ginv
        else:
            fi, gi = f * ginv, g * ginv
        return self.product(fi, gi, filter_tol) * self.gamma(W)


@lru_cache(maxsize=32)
def get_kernel(grid: SpectralGrid, nu: float, s: float) -> BilinearKernel:
    return BilinearKernel(grid, nu, s)


def _check_pair(f: FourierField, g: FourierField):
    if f.grid != g.grid:
        raise GridMismatchError(f"grid {f.grid} != {g.grid}")


def bilinear_B_fft(f: FourierField, g: FourierField, W_val: float, params: GevreyParams,
                   guard: float = OVERFLOW_GUARD, filter_tol: float = 0.0) -> FourierField:
    """Dealiased pseudo-spectral B(f, g) at Brownian value W_val.

    Raises `OverflowGuardError` when nu |W| (max retained |k|)^s exceeds
    ``guard``; callers may then use `bilinear_B_direct`.
    """
    _check_pair(f, g)
    ker = get_kernel(f.grid, params.nu, params.s)
    gf, gg = f.coeffs, g.coeffs
    out = ker.apply(gf, gg, W_val, guard, filter_tol)
    return FourierField(f.grid, out, check=False)


def bilinear_B_direct(f: FourierField, g: FourierField, W_val: float, params: GevreyParams,
                      max_N: int = DIRECT_SOFT_CAP) -> FourierField:
    """Direct truncated-lattice convolution for B(f, g), projected onto the dealiased set."""
    _check_pair(f, g)
    grid = f.grid
    N = grid.N
    if N > max_N:
        raise SoftCapError(f"direct convolution is O(N^4); N={N} exceeds soft cap {max_N}")
    s, nu = params.s, params.nu
    k1 = grid.k1
    k2 = grid.k2
    ks = grid.kpow(s)
    mask = grid.dealias_mask
    half = N // 2
    out = np.zeros((N, N), np.complex128)
    fc, gc = f.coeffs, g.coeffs
    for a, b in zip(*np.nonzero(fc)):
        j1, j2 = int(k1[a, b]), int(k2[a, b])
        jmag = float(np.hypot(j1, j2))
        m1 = k1 - j1
        m2 = k2 - j2
        ok = mask & (m1 >= -half) & (m1 < half) & (m2 >= -half) & (m2 < half)
        if not ok.any():
            continue
        gm = gc[m1[ok] % N, m2[ok] % N]
        mmag_s = np.hypot(m1[ok], m2[ok]) ** s
        cross = -j2 * m1[ok] + j1 * m2[ok]
        expo = -nu * W_val * (ks[ok] - jmag**s - mmag_s)
        out[ok] -= np.exp(expo) * (cross / jmag) * fc[a, b] * gm
    return FourierField(grid, out, check=False)
