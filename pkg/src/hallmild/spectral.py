"""Periodic grids, Fourier-space vector fields and spectral differential operators.

Coefficients are normalized so that ``coeffs = fftn(values) / n**3``; a real
field ``cos(2*pi*x/L)`` therefore has two coefficients of size 1/2.  Arrays
may carry any number of leading component axes; the last three are spatial.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

_WORKERS = 1


def set_fft_workers(n):
    global _WORKERS
    _WORKERS = max(1, int(n))


def fft3(values):
    n = values.shape[-1]
    return sfft.fftn(values, axes=(-3, -2, -1), workers=_WORKERS) / n**3


def ifft3(coeffs):
    n = coeffs.shape[-1]
    return sfft.ifftn(coeffs, axes=(-3, -2, -1), workers=_WORKERS) * n**3


@dataclass(frozen=True)
class Grid:
    """Uniform n^3 grid on the periodic box [0, L)^3."""

    n: int
    box_length: float = 2 * np.pi

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 4 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 4, got {n!r}")
        if not (np.isfinite(self.box_length) and self.box_length > 0):
            raise ValueError("box_length must be positive and finite")

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @property
    def base_wavenumber(self):
        return 2 * np.pi / self.box_length

    @property
    def cell_volume(self):
        return (self.box_length / self.n) ** 3

    @property
    def volume(self):
        return self.box_length**3

    @cached_property
    def wavenumbers(self):
        """Integer mode indices k, shape (3, n, n, n), in fft ordering."""
        k1 = np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)
        return np.stack(np.meshgrid(k1, k1, k1, indexing="ij"))

    @cached_property
    def xi(self):
        """Physical derivative wavenumbers 2*pi*k/L with Nyquist components zeroed."""
        k = self.wavenumbers.astype(np.float64)
        k[self.wavenumbers == -self.n // 2] = 0.0
        return self.base_wavenumber * k

    @cached_property
    def xi_sq(self):
        return np.sum(self.xi**2, axis=0)

    @cached_property
    def inv_xi_sq(self):
        out = np.zeros(self.shape)
        nz = self.xi_sq > 0
        out[nz] = 1.0 / self.xi_sq[nz]
        return out

    @cached_property
    def ksq_int(self):
        """Integer |k|^2 per mode (Nyquist kept), used to index tabulated multipliers."""
        return np.sum(self.wavenumbers**2, axis=0)

    @cached_property
    def heat_rate(self):
        """|2*pi*k/L|^2 per mode (the heat symbol; Nyquist kept)."""
        return self.base_wavenumber**2 * self.ksq_int.astype(np.float64)

    @cached_property
    def kappa(self):
        """|2*pi*k/L| per mode."""
        return np.sqrt(self.heat_rate)

    @cached_property
    def dealias_mask(self):
        """2/3 rule: keep modes with every |k_i| < n/3."""
        return np.all(3 * np.abs(self.wavenumbers) < self.n, axis=0)

    @cached_property
    def coordinates(self):
        x1 = np.arange(self.n) * (self.box_length / self.n)
        return np.stack(np.meshgrid(x1, x1, x1, indexing="ij"))

    def max_resolved_kappa(self):
        return float(np.max(self.kappa[self.dealias_mask]))

    # -- operators on raw coefficient arrays -------------------------------

    def grad(self, fhat):
        """Gradient of a scalar (..., n, n, n) -> (..., 3, n, n, n)."""
        return 1j * self.xi * fhat[..., None, :, :, :]

    def div(self, fhat):
        return 1j * np.sum(self.xi * fhat, axis=-4)

    def curl(self, fhat):
        x0, x1, x2 = self.xi
        f0, f1, f2 = fhat[..., 0, :, :, :], fhat[..., 1, :, :, :], fhat[..., 2, :, :, :]
        return 1j * np.stack([x1 * f2 - x2 * f1, x2 * f0 - x0 * f2, x0 * f1 - x1 * f0], axis=-4)

    def laplacian(self, fhat):
        return -self.xi_sq * fhat

    def project(self, fhat):
        """Helmholtz projection I - xi xi^T / |xi|^2; the zero mode is annihilated."""
        dot = np.sum(self.xi * fhat, axis=-4)
        out = fhat - self.xi * (dot * self.inv_xi_sq)[..., None, :, :, :]
        out[..., 0, 0, 0] = 0.0
        return out

    def div_tensor(self, ghat):
        """(div G)_i = d_j G_ij for G of shape (..., 3, 3, n, n, n)."""
        return 1j * np.einsum("jabc,...ijabc->...iabc", self.xi, ghat)

    def dealias(self, fhat):
        return fhat * self.dealias_mask

    def to_physical(self, fhat):
        return ifft3(fhat).real

    def to_spectral(self, values):
        return fft3(values)

    def max_divergence(self, fhat):
        """max_k |xi . f(k)| / max |f| (0 for the zero field)."""
        scale = np.max(np.abs(fhat))
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(np.sum(self.xi * fhat, axis=-4))) / scale)


# ---------------------------------------------------------------------------
# field containers


@dataclass
class PhysicalVectorField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape[-3:] != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")


@dataclass
class SpectralVectorField:
    grid: Grid
    coeffs: np.ndarray
    is_solenoidal: bool = field(default=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape[-3:] != self.grid.shape:
            raise ValueError(f"coeffs shape {self.coeffs.shape} does not match grid {self.grid.shape}")

    @property
    def n_components(self):
        return int(np.prod(self.coeffs.shape[:-3], dtype=np.int64))

    def hermitian_defect(self):
        """max |c(-k) - conj(c(k))| relative to max |c|."""
        return hermitian_defect(self.coeffs)

    def l2_norm(self):
        """Physical L^2 norm via Parseval."""
        g = self.grid
        return float(np.sqrt(g.volume * np.sum(np.abs(self.coeffs) ** 2)))


def _negate_index(arr):
    # index map k -> -k along the three spatial axes
    return np.roll(arr[..., ::-1, ::-1, ::-1], shift=1, axis=(-3, -2, -1))


def hermitian_defect(coeffs):
    scale = np.max(np.abs(coeffs))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(_negate_index(coeffs) - np.conj(coeffs))) / scale)


def _check_same_grid(*fields):
    grids = {f.grid for f in fields}
    if len(grids) != 1:
        raise ValueError("fields live on different grids")


# ---------------------------------------------------------------------------
# public operations


def forward_transform(f):
    """Physical values -> Fourier coefficients."""
    if not np.all(np.isfinite(f.values)):
        raise ValueError("non-finite values in physical field")
    return SpectralVectorField(f.grid, fft3(f.values))


def inverse_transform(f, tol=1e-10):
    """Fourier coefficients -> physical values; rejects broken Hermitian symmetry."""
    z = ifft3(f.coeffs)
    scale = np.max(np.abs(z.real)) if z.size else 0.0
    resid = np.max(np.abs(z.imag)) if z.size else 0.0
    if resid > tol * max(scale, np.finfo(float).tiny):
        raise ValueError(f"coefficients are not Hermitian-symmetric (imaginary residue {resid:.3e})")
    return PhysicalVectorField(f.grid, z.real)


def helmholtz_project(f):
    return SpectralVectorField(f.grid, f.grid.project(f.coeffs), is_solenoidal=True)


def gradient(f):
    return SpectralVectorField(f.grid, f.grid.grad(_scalar(f.coeffs)), is_solenoidal=False)


def divergence(f):
    return SpectralVectorField(f.grid, f.grid.div(f.coeffs))


def curl(f):
    return SpectralVectorField(f.grid, f.grid.curl(f.coeffs), is_solenoidal=True)


def laplacian(f):
    return SpectralVectorField(f.grid, f.grid.laplacian(f.coeffs), is_solenoidal=f.is_solenoidal)


def _scalar(c):
    return c[0] if c.ndim == 4 and c.shape[0] == 1 else c


def product_coeffs(grid, fhat, ghat, kind):
    """Dealiased pointwise product of coefficient arrays.

    Inputs are truncated to the 2/3 band before the transform round trip and
    the result is truncated again, so the output equals the truncated exact
    convolution of the truncated inputs.
    """
    mask = grid.dealias_mask
    a = ifft3(fhat * mask).real
    b = ifft3(ghat * mask).real
    if kind == "tensor":
        prod = a[:, None] * b[None, :]
    elif kind == "cross":
        prod = np.cross(a, b, axis=0)
    elif kind == "dot":
        prod = np.sum(a * b, axis=0)
    else:
        raise ValueError(f"unknown product kind {kind!r}")
    return fft3(prod) * mask


def pointwise_product(f, g, kind="cross"):
    """f (x) g, f x g or f . g computed in physical space and dealiased."""
    _check_same_grid(f, g)
    return SpectralVectorField(f.grid, product_coeffs(f.grid, f.coeffs, g.coeffs, kind))


def is_solenoidal(f, rtol=1e-10):
    return f.grid.max_divergence(f.coeffs) <= rtol


MIN_TIME_SAMPLES = 8


@dataclass
class SpaceTimeField:
    """Spectral coefficients sampled on uniform times t_i = i*T/(n_t-1).

    ``coeffs`` has shape (n_t, C, n, n, n).
    """

    grid: Grid
    times: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.times.ndim != 1 or self.times.size < MIN_TIME_SAMPLES:
            raise ValueError(f"need at least {MIN_TIME_SAMPLES} time samples")
        if self.coeffs.shape[0] != self.times.size or self.coeffs.shape[-3:] != self.grid.shape:
            raise ValueError(f"coeffs shape {self.coeffs.shape} inconsistent with times/grid")
        if self.times[0] != 0.0:
            raise ValueError("time samples must start at t = 0")
        dt = np.diff(self.times)
        if np.any(dt <= 0) or np.ptp(dt) > 1e-9 * dt[0]:
            raise ValueError("time samples must be uniform and increasing")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("non-finite entries in space-time field")

    @property
    def n_t(self):
        return self.times.size

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def t_final(self):
        return float(self.times[-1])

    def slice(self, i):
        return SpectralVectorField(self.grid, self.coeffs[i])

    def __sub__(self, other):
        return SpaceTimeField(self.grid, self.times, self.coeffs - other.coeffs)

    def __add__(self, other):
        return SpaceTimeField(self.grid, self.times, self.coeffs + other.coeffs)

    def __mul__(self, c):
        return SpaceTimeField(self.grid, self.times, self.coeffs * c)

    __rmul__ = __mul__

    def __neg__(self):
        return SpaceTimeField(self.grid, self.times, -self.coeffs)

    @classmethod
    def zeros(cls, grid, times, n_components=3):
        times = np.asarray(times, dtype=np.float64)
        return cls(grid, times, np.zeros((times.size, n_components) + grid.shape, dtype=np.complex128))

    @classmethod
    def from_function(cls, grid, times, func):
        """Sample ``func(x, t) -> (C, n, n, n)`` real values at every time."""
        times = np.asarray(times, dtype=np.float64)
        x = grid.coordinates
        vals = [np.asarray(func(x, t), dtype=np.float64) for t in times]
        vals = [v[None] if v.ndim == 3 else v for v in vals]
        return cls(grid, times, fft3(np.stack(vals)))
