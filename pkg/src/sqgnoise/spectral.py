"""Truncated Fourier fields on the 2-torus and their multiplier calculus.

Coefficients follow the convention

    u(x) = sum_k u_hat(k) exp(i k.x),   u_hat(k) = (2 pi)^-2 int u exp(-i k.x) dx,

so a coefficient array is ``fft2(samples) / N**2``.  Arrays are indexed
``[k1, k2]`` in FFT order, i.e. axis 0 carries the first wavenumber
component.  All norms are plain lattice sums over ``k != 0`` with no
``(2 pi)^2`` volume factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from collections.abc import Mapping, Sequence

import numpy as np

OVERFLOW_GUARD = 600.0
_HERMITIAN_RTOL = 1e-12
_IMAG_RTOL = 1e-12


class OverflowGuardError(ArithmeticError):
    """An exponential multiplier would exceed the configured exponent cap."""

    def __init__(self, exponent: float, guard: float = OVERFLOW_GUARD, hint: str = ""):
        self.exponent = float(exponent)
        self.guard = float(guard)
        msg = f"multiplier exponent {self.exponent:.6g} exceeds overflow guard {self.guard:.6g}"
        if hint:
            msg += f"; {hint}"
        super().__init__(msg)


class NonRealResidueError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralGrid:
    """Square lattice K = {-N/2 <= k_i < N/2} with a 2/3-rule cutoff.

    The default cutoff is the largest integer c with 3c < N, which is
    floor(N/3) unless N is a multiple of 3.  Only that choice makes a
    quadratic pseudo-spectral product alias-free on the retained modes.
    """

    N: int
    dealias_cutoff: int | None = None

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or self.N < 4 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 4, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if self.dealias_cutoff is None:
            object.__setattr__(self, "dealias_cutoff", (self.N - 1) // 3)
        c = self.dealias_cutoff
        if not (0 < c <= self.N // 2):
            raise ValueError(f"dealias_cutoff must lie in (0, N/2], got {c}")
        object.__setattr__(self, "dealias_cutoff", int(c))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        k = np.rint(np.fft.fftfreq(self.N) * self.N).astype(np.int64)
        k1, k2 = np.meshgrid(k, k, indexing="ij")
        k1.setflags(write=False)
        k2.setflags(write=False)
        return k1, k2

    @property
    def k1(self) -> np.ndarray:
        return self.wavenumbers[0]

    @property
    def k2(self) -> np.ndarray:
        return self.wavenumbers[1]

    @cached_property
    def kmag(self) -> np.ndarray:
        out = np.hypot(self.k1, self.k2)
        out.setflags(write=False)
        return out

    def kpow(self, r: float) -> np.ndarray:
        """|k|**r with |0|**r := 0."""
        km = self.kmag
        out = np.zeros_like(km)
        nz = km > 0
        out[nz] = km[nz] ** r
        return out

    @cached_property
    def neg_index(self) -> np.ndarray:
        return (-np.arange(self.N)) % self.N

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        h = self.N // 2
        m = (self.k1 == -h) | (self.k2 == -h)
        m.setflags(write=False)
        return m

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        c = self.dealias_cutoff
        m = (np.abs(self.k1) <= c) & (np.abs(self.k2) <= c)
        m[0, 0] = False
        m.setflags(write=False)
        return m

    def index_of(self, k: Sequence[int]) -> tuple[int, int]:
        k1, k2 = int(k[0]), int(k[1])
        h = self.N // 2
        if not (-h <= k1 < h and -h <= k2 < h):
            raise ValueError(f"wavevector {(k1, k2)} outside the lattice for N={self.N}")
        return k1 % self.N, k2 % self.N

    def mirror(self, coeffs: np.ndarray) -> np.ndarray:
        """Return the array c(-k) (indices taken mod N)."""
        n = self.neg_index
        return coeffs[n][:, n]


def hermitian_defect(grid: SpectralGrid, coeffs: np.ndarray) -> float:
    return float(np.max(np.abs(coeffs - np.conj(grid.mirror(coeffs))), initial=0.0))


class FourierField:
    """Immutable mean-zero real field stored as its full coefficient array."""

    __slots__ = ("grid", "coeffs")

    def __init__(self, grid: SpectralGrid, coeffs: np.ndarray, *, check: bool = True):
        c = np.array(coeffs, dtype=np.complex128, copy=True)
        if c.shape != (grid.N, grid.N):
            raise GridMismatchError(f"coefficient shape {c.shape} != {(grid.N, grid.N)}")
        if check:
            if not np.all(np.isfinite(c)):
                raise ValueError("non-finite Fourier coefficient")
            if c[0, 0] != 0:
                raise ValueError("zero mode must vanish (mean-zero field)")
            if np.any(c[grid.nyquist_mask] != 0):
                raise ValueError("Nyquist-row coefficients must vanish")
            scale = float(np.max(np.abs(c), initial=0.0))
            if hermitian_defect(grid, c) > _HERMITIAN_RTOL * max(scale, 1e-300):
                raise ValueError("coefficients are not Hermitian symmetric")
        c.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "coeffs", c)

    def __setattr__(self, name, value):
        raise AttributeError("FourierField is immutable")

    def __reduce__(self):
        # rebuild through __init__ so pickling (process pools) respects immutability
        return (_rebuild_field, (self.grid, np.array(self.coeffs)))

    def __repr__(self):
        nnz = int(np.count_nonzero(self.coeffs))
        return f"FourierField(N={self.grid.N}, nonzero={nnz})"

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "FourierField":
        return cls(grid, np.zeros((grid.N, grid.N), np.complex128), check=False)

    def _same_grid(self, other: "FourierField"):
        if other.grid != self.grid:
            raise GridMismatchError(f"grid {other.grid} != {self.grid}")

    def __add__(self, other: "FourierField") -> "FourierField":
        self._same_grid(other)
        return FourierField(self.grid, self.coeffs + other.coeffs, check=False)

    def __sub__(self, other: "FourierField") -> "FourierField":
        self._same_grid(other)
        return FourierField(self.grid, self.coeffs - other.coeffs, check=False)

    def __mul__(self, a: float) -> "FourierField":
        if isinstance(a, complex) or np.iscomplexobj(a):
            raise TypeError("only real scalars preserve a real field")
        return FourierField(self.grid, self.coeffs * float(a), check=False)

    __rmul__ = __mul__

    def __neg__(self) -> "FourierField":
        return FourierField(self.grid, -self.coeffs, check=False)

    def coefficient(self, k: Sequence[int]) -> complex:
        return complex(self.coeffs[self.grid.index_of(k)])

    def support_kmax(self) -> float:
        nz = self.coeffs != 0
        return float(self.grid.kmag[nz].max()) if nz.any() else 0.0

    def nonzero_modes(self) -> list[tuple[int, int, complex]]:
        """(k1, k2, amplitude) for every nonzero coefficient, row-major over K."""
        g = self.grid
        out = []
        for a, b in zip(*np.nonzero(self.coeffs)):
            out.append((int(g.k1[a, b]), int(g.k2[a, b]), complex(self.coeffs[a, b])))
        return out


def _rebuild_field(grid: SpectralGrid, coeffs: np.ndarray) -> "FourierField":
    return FourierField(grid, coeffs, check=False)


@dataclass(frozen=True)
class GevreyParams:
    """Parameter bundle (nu, s, sigma, alpha, beta, epsilon) with phi(t) = alpha + beta t.

    With ``strict=True`` the full hypothesis set is enforced:
    sigma in (1/s, 2), 0 < beta < nu^2/2 and 0 < epsilon < alpha.
    ``strict=False`` keeps only the basic positivity constraints so that
    runs outside the hypotheses (e.g. s = 1/2, where the sigma interval is
    empty) can still be set up; `hypothesis_violations` lists what fails.
    """

    nu: float = 1.0
    s: float = 1.0
    sigma: float = 1.5
    alpha: float = 1.0
    beta: float = 0.25
    epsilon: float = 0.1
    strict: bool = True

    def __post_init__(self):
        for name in ("nu", "s", "sigma", "alpha", "beta", "epsilon"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if not (0 < self.s <= 1):
            raise ValueError("s must lie in (0, 1]")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.sigma <= 0 or self.beta < 0 or self.epsilon < 0:
            raise ValueError("sigma must be positive; beta and epsilon nonnegative")
        if self.strict:
            bad = self.hypothesis_violations()
            if bad:
                raise ValueError("; ".join(bad))

    def hypothesis_violations(self) -> list[str]:
        out = []
        if not (1.0 / self.s < self.sigma < 2.0):
            out.append(f"sigma={self.sigma} not in (1/s, 2) = ({1.0 / self.s:.6g}, 2)")
        if not (0 < self.beta < self.nu**2 / 2):
            out.append(f"beta={self.beta} not in (0, nu^2/2) = (0, {self.nu**2 / 2:.6g})")
        if not (0 < self.epsilon < self.alpha):
            out.append(f"epsilon={self.epsilon} not in (0, alpha) = (0, {self.alpha:.6g})")
        return out

    @property
    def threshold(self) -> float:
        """Admissibility threshold nu^2/2 - beta for the initial Gevrey norm."""
        return self.nu**2 / 2 - self.beta

    def phi(self, t):
        return self.alpha + self.beta * t


def make_field(grid: SpectralGrid, modes) -> FourierField:
    """Field with the listed amplitudes; mirror modes are filled with conjugates.

    ``modes`` is a mapping {(k1, k2): amplitude} or an iterable of such pairs.
    """
    if isinstance(modes, Mapping):
        modes = modes.items()
    c = np.zeros((grid.N, grid.N), np.complex128)
    assigned = np.zeros((grid.N, grid.N), bool)
    h = grid.N // 2
    for k, amp in modes:
        amp = complex(amp)
        k1, k2 = int(k[0]), int(k[1])
        if k1 == 0 and k2 == 0:
            if amp != 0:
                raise ValueError("nonzero amplitude at k = 0 violates the zero-mean invariant")
            continue
        if k1 == -h or k2 == -h:
            raise ValueError(f"mode {(k1, k2)} lies on the Nyquist row, which has no mirror in K")
        for (q1, q2), val in (((k1, k2), amp), ((-k1, -k2), amp.conjugate())):
            idx = grid.index_of((q1, q2))
            if assigned[idx] and c[idx] != val:
                raise ValueError(f"conflicting amplitudes at {(q1, q2)}: {c[idx]} vs {val}")
            c[idx] = val
            assigned[idx] = True
    return FourierField(grid, c)


def random_field(seed: int, grid: SpectralGrid, params: GevreyParams,
                 target_norm: float, spectral_slope: float = 1.0) -> FourierField:
    """Hermitian Gaussian field rescaled to an exact Gevrey norm.

    Amplitudes are |k|^-slope exp(-(alpha+epsilon)|k|^s) times complex
    Gaussians on the dealiased modes, then scaled so that the
    G^sigma_{alpha+epsilon} norm equals ``target_norm``.
    """
    if target_norm < 0:
        raise ValueError("target_norm must be nonnegative")
    if target_norm == 0:
        return FourierField.zeros(grid)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((grid.N, grid.N)) + 1j * rng.standard_normal((grid.N, grid.N))
    k1, k2 = grid.k1, grid.k2
    upper = (k1 > 0) | ((k1 == 0) & (k2 > 0))
    keep = upper & grid.dealias_mask
    profile = np.zeros((grid.N, grid.N))
    profile[keep] = grid.kmag[keep] ** (-spectral_slope) * np.exp(
        -(params.alpha + params.epsilon) * grid.kmag[keep] ** params.s)
    half = np.where(keep, profile * z / math.sqrt(2.0), 0)
    coeffs = half + np.conj(grid.mirror(half))
    raw = FourierField(grid, coeffs, check=False)
    norm = gevrey_norm(raw, params.alpha + params.epsilon, params, params.sigma)
    return FourierField(grid, coeffs * (target_norm / norm))


def riesz_perp(f: FourierField) -> tuple[FourierField, FourierField]:
    """R_perp = (-R_2, R_1) with symbols (-i k2/|k|, i k1/|k|)."""
    g = f.grid
    inv = g.kpow(-1.0)
    c1 = -1j * g.k2 * inv * f.coeffs
    c2 = 1j * g.k1 * inv * f.coeffs
    return FourierField(g, c1, check=False), FourierField(g, c2, check=False)


def frac_deriv(f: FourierField, r: float) -> FourierField:
    """Multiply coefficients by |k|^r (zero mode stays zero)."""
    return FourierField(f.grid, f.coeffs * f.grid.kpow(r), check=False)


def gamma_exponent(f: FourierField, tau: float, params: GevreyParams) -> float:
    return params.nu * abs(tau) * f.support_kmax() ** params.s


def gamma_apply(f: FourierField, tau: float, params: GevreyParams,
                guard: float = OVERFLOW_GUARD) -> FourierField:
    """Apply exp(-tau nu |k|^s); tau = W_t gives Gamma(t), tau = -W_t its inverse.

    The guard is checked against the largest |k| carrying a nonzero
    coefficient.
    """
    expo = gamma_exponent(f, tau, params)
    if expo > guard:
        raise OverflowGuardError(expo, guard, "use the direct-convolution bilinear path")
    if tau == 0:
        return f
    sym = np.exp(-tau * params.nu * f.grid.kpow(params.s))
    return FourierField(f.grid, f.coeffs * sym, check=False)


def _weighted_sum_sq(coeffs: np.ndarray, log_weight: np.ndarray) -> float:
    """fsum of |c|^2 exp(2 log_weight) over nonzero c, row-major.

    Working in logs keeps large Gevrey weights from overflowing before the
    (small) coefficient is applied.
    """
    a = np.abs(coeffs)
    nz = a > 0
    if not nz.any():
        return 0.0
    terms = np.exp(2.0 * (np.log(a[nz]) + log_weight[nz]))
    return math.fsum(terms.tolist())


def gevrey_norm(f: FourierField, phi_val: float, params: GevreyParams, gamma_index: float,
                guard: float = OVERFLOW_GUARD) -> float:
    """sqrt(sum_k |k|^{2 gamma s} exp(2 phi |k|^s) |u_hat(k)|^2)."""
    if phi_val < 0:
        raise ValueError("phi_val must be nonnegative")
    s = params.s
    expo = phi_val * f.support_kmax() ** s
    if expo > guard:
        raise OverflowGuardError(expo, guard)
    return math.sqrt(_weighted_sum_sq(f.coeffs, _log_weight(f.grid, phi_val, gamma_index * s, s)))


def sobolev_norm(f: FourierField, r: float) -> float:
    """Homogeneous H^r norm, sqrt(sum_k |k|^{2r} |u_hat(k)|^2)."""
    return math.sqrt(_weighted_sum_sq(f.coeffs, _log_weight(f.grid, 0.0, r, 1.0)))


def _log_weight(grid: SpectralGrid, phi_val: float, r: float, s: float) -> np.ndarray:
    km = grid.kmag
    lw = np.zeros_like(km)
    nz = km > 0
    lw[nz] = r * np.log(km[nz]) + phi_val * km[nz] ** s
    return lw


def l2_inner(f: FourierField, g: FourierField) -> float:
    """Real part of sum_k f_hat(k) conj(g_hat(k)) (the L^2 pairing over (2 pi)^2)."""
    f._same_grid(g)
    return math.fsum((f.coeffs * np.conj(g.coeffs)).real.ravel().tolist())


def symmetrize(grid: SpectralGrid, coeffs: np.ndarray) -> np.ndarray:
    """Project onto Hermitian, mean-zero, Nyquist-free coefficient arrays."""
    c = 0.5 * (coeffs + np.conj(grid.mirror(coeffs)))
    c[0, 0] = 0
    c[grid.nyquist_mask] = 0
    return c


def to_physical(f: FourierField) -> np.ndarray:
    """Samples on the uniform grid x_j = 2 pi j / N (axis 0 is x1)."""
    N = f.grid.N
    u = np.fft.ifft2(f.coeffs) * (N * N)
    scale = float(np.max(np.abs(u), initial=0.0))
    resid = float(np.max(np.abs(u.imag), initial=0.0))
    if resid > _IMAG_RTOL * max(scale, 1.0):
        raise NonRealResidueError(f"imaginary residue {resid:.3e} in physical field")
    return np.ascontiguousarray(u.real)


def from_physical(samples: np.ndarray, grid: SpectralGrid) -> FourierField:
    samples = np.asarray(samples)
    if samples.shape != (grid.N, grid.N):
        raise GridMismatchError(f"sample shape {samples.shape} != {(grid.N, grid.N)}")
    if np.iscomplexobj(samples):
        raise TypeError("physical samples must be real")
    c = np.fft.fft2(samples) / (grid.N * grid.N)
    return FourierField(grid, symmetrize(grid, c), check=False)


def eval_fourier_sum(f: FourierField, points: np.ndarray) -> np.ndarray:
    """Direct evaluation of sum_k u_hat(k) exp(i k.x) at arbitrary points (oracle)."""
    modes = f.nonzero_modes()
    pts = np.atleast_2d(points)
    out = np.zeros(len(pts), np.complex128)
    for k1, k2, amp in modes:
        out += amp * np.exp(1j * (k1 * pts[:, 0] + k2 * pts[:, 1]))
    return out
