"""Discrete Littlewood-Paley analysis on the periodic box.

Frequencies are angular: kappa = |2*pi*k/L| in space and omega = 2*pi*m/T_box
in time, so the heat symbol is kappa^2 + i*omega and the parabolic radius
is rho = kappa + |omega|^(1/2).  Block j keeps psi(2^-j rho) where

    psi(r) = theta(r/2) - theta(r),

theta being a C-infinity step equal to 1 on [0, 1/2] and 0 on [1, inf).
The blocks telescope to an exact partition of unity and psi vanishes
outside (1/2, 2).

Space-time norms are restriction norms on R^3 x (0, T).  They are computed
on an explicit extension (``extension_operator``) that is tapered to zero
and periodized in time, with L^p taken over the original window only; the
reports label these values "E-proxy".
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
import scipy.fft as sfft

from . import _kernels
from . import spectral as _sp
from .spectral import SpaceTimeField, SpectralVectorField, ifft3

PROFILE_SAMPLES = 4096
PROFILE_SHARPENING = 3
_R_LO, _R_HI = 0.5, 1.0

ISOTROPIC = "isotropic-spatial"
ANISOTROPIC = "anisotropic-spacetime"


class UnsupportedRangeError(ValueError):
    """Raised for index combinations a norm routine does not implement."""


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def smooth_step_derivative(x):
    x = np.asarray(x, dtype=np.float64)
    inside = (x > 0) & (x < 1)
    xs = np.where(inside, x, 0.5)
    a = np.exp(-1.0 / xs)
    b = np.exp(-1.0 / (1.0 - xs))
    d = a * b * (1.0 / xs**2 + 1.0 / (1.0 - xs) ** 2) / (a + b) ** 2
    return np.where(inside, d, 0.0)


@dataclass(frozen=True)
class DyadicProfile:
    """Tabulated radial bump; ``theta`` is sampled on [1/2, 1]."""

    flavor: str
    theta: np.ndarray = field(repr=False)
    r_lo: float = _R_LO
    r_hi: float = _R_HI

    def __call__(self, r):
        """psi(r) for radii r (any shape)."""
        return _kernels.shell_weights(np.asarray(r, dtype=np.float64), 1.0, self.theta, self.r_lo, self.r_hi)

    def block(self, j, rho):
        """psi(2^-j rho)."""
        return _kernels.shell_weights(rho, 2.0**-j, self.theta, self.r_lo, self.r_hi)

    def radius(self, xi, tau=None):
        """|xi| (isotropic) or |xi| + |tau|^(1/2) (anisotropic)."""
        xi = np.abs(np.asarray(xi, dtype=np.float64))
        if self.flavor == ISOTROPIC or tau is None:
            return xi
        return xi + np.sqrt(np.abs(np.asarray(tau, dtype=np.float64)))


@lru_cache(maxsize=None)
def _theta_table(samples, sharpening):
    x = np.linspace(0.0, 1.0, samples)
    y = x
    for _ in range(sharpening):
        y = smooth_step(y)
    table = 1.0 - y
    table[0], table[-1] = 1.0, 0.0
    table.setflags(write=False)
    return table


def build_dyadic_profile(flavor=ANISOTROPIC):
    if flavor not in (ISOTROPIC, ANISOTROPIC):
        raise ValueError(f"unknown flavor {flavor!r}")
    return DyadicProfile(flavor, _theta_table(PROFILE_SAMPLES, PROFILE_SHARPENING))


@dataclass(frozen=True)
class BesovSpec:
    s: float
    p: float
    q: float
    flavor: str = ANISOTROPIC

    def __post_init__(self):
        if not (self.p > 1 or self.p == math.inf):
            raise ValueError(f"p must lie in (1, inf], got {self.p}")
        if not (1 <= self.q <= math.inf):
            raise ValueError(f"q must lie in [1, inf], got {self.q}")
        if self.flavor not in (ISOTROPIC, ANISOTROPIC):
            raise ValueError(f"unknown flavor {self.flavor!r}")


@dataclass
class BesovReport:
    spec: BesovSpec
    per_block: dict
    total: float
    truncation_range: tuple
    label: str = "exact"

    def to_dict(self):
        return {
            "s": self.spec.s,
            "p": _num(self.spec.p),
            "q": _num(self.spec.q),
            "flavor": self.spec.flavor,
            "label": self.label,
            "truncation_range": list(self.truncation_range),
            "per_block": {str(j): v for j, v in self.per_block.items()},
            "total": self.total,
        }


def _num(x):
    return "inf" if x == math.inf else x


@dataclass
class BlockNorms:
    """Unweighted block norms ||f * phi_j||_{L^p}, shared by every (s, q)."""

    p: float
    js: np.ndarray
    values: np.ndarray
    flavor: str
    label: str

    def report(self, s, q):
        spec = BesovSpec(s, self.p, q, self.flavor)
        weighted = 2.0 ** (s * self.js.astype(np.float64)) * self.values
        return BesovReport(
            spec,
            {int(j): float(v) for j, v in zip(self.js, weighted)},
            lq_sum(weighted, q),
            (int(self.js[0]), int(self.js[-1])),
            self.label,
        )

    def total(self, s, q):
        return lq_sum(2.0 ** (s * self.js.astype(np.float64)) * self.values, q)


def lq_sum(values, q):
    values = np.abs(np.asarray(values, dtype=np.float64))
    if values.size == 0:
        return 0.0
    if q == math.inf:
        return float(values.max())
    top = values.max()
    if top == 0:
        return 0.0
    return float(top * np.sum((values / top) ** q) ** (1.0 / q))


def dyadic_band(rho_min, rho_max):
    """Blocks j whose support (2^(j-1), 2^(j+1)) meets [rho_min, rho_max]."""
    lo = math.floor(math.log2(rho_min)) if rho_min > 0 else 0
    hi = math.ceil(math.log2(rho_max))
    js = [j for j in range(lo - 1, hi + 2) if 2.0 ** (j - 1) < rho_max and 2.0 ** (j + 1) > rho_min]
    return int(js[0]), int(js[-1])


def _lp_from_physical(values, weights, p):
    """(sum_t w_t sum_x |v(t, x)|^p)^(1/p) with |.| the pointwise Euclidean norm.

    ``values`` has shape (M, C, n, n, n); ``weights`` (M,).
    """
    mag = np.sqrt(np.sum(values**2, axis=1)).reshape(values.shape[0], -1)
    if p == math.inf:
        return float(mag.max()) if mag.size else 0.0
    top = float(mag.max()) if mag.size else 0.0
    if top == 0:
        return 0.0
    return top * _kernels.weighted_power_sum(mag / top, weights, p) ** (1.0 / p)


# ---------------------------------------------------------------------------
# spatial norms


def spatial_band(grid):
    return dyadic_band(grid.base_wavenumber, grid.max_resolved_kappa())


def spatial_blocks(grid, coeffs, p, band=None, profile=None):
    profile = profile or build_dyadic_profile(ISOTROPIC)
    band = band or spatial_band(grid)
    js = np.arange(band[0], band[1] + 1)
    coeffs = np.asarray(coeffs)
    c = coeffs.reshape((-1,) + grid.shape)
    vals = np.empty(js.size)
    for i, j in enumerate(js):
        w = profile.block(int(j), grid.kappa)
        if p == 2:
            vals[i] = math.sqrt(grid.volume * float(np.sum(np.abs(c * w) ** 2)))
        else:
            phys = ifft3(c * w).real[None]
            vals[i] = _lp_from_physical(phys, np.array([grid.cell_volume]), p)
    return BlockNorms(p, js, vals, ISOTROPIC, "exact")


def besov_norm_spatial(f, spec, band=None):
    """Homogeneous Besov norm of a field on the box, truncated to the resolvable band."""
    if spec.flavor != ISOTROPIC:
        raise ValueError("besov_norm_spatial needs an isotropic-spatial spec")
    coeffs = f.coeffs if isinstance(f, SpectralVectorField) else f
    return spatial_blocks(f.grid, coeffs, spec.p, band).report(spec.s, spec.q)


# ---------------------------------------------------------------------------
# extension in time


def extension_coefficients(k):
    """lambda_1..lambda_{k+1} with sum_j (-j)^l lambda_j = 1 for 0 <= l <= k."""
    if k < 0:
        raise ValueError("extension order must be >= 0")
    j = np.arange(1, k + 2, dtype=np.float64)
    vander = np.vstack([(-j) ** l for l in range(k + 1)])
    try:
        lam = np.linalg.solve(vander, np.ones(k + 1))
    except np.linalg.LinAlgError as exc:  # distinct nodes make this unreachable
        raise ValueError("Vandermonde solve failed") from exc
    if not np.all(np.isfinite(lam)):
        raise ValueError("Vandermonde solve failed")
    return lam


@dataclass
class ExtendedField:
    """Samples on t_i = (i - origin) * dt; the original field occupies
    indices origin .. origin + n_t - 1."""

    grid: object
    times: np.ndarray
    coeffs: np.ndarray
    origin: int
    n_original: int


def extension_operator(f, k):
    """Reflection extension to negative times.

    E f(t) = sum_{j=1}^{k+1} lambda_j f(-j t) for t < 0.  With data on [0, T]
    this is available on [-T/(k+1), 0); the sample -i*dt reads the stored
    slices j*i, so no interpolation is involved.
    """
    lam = extension_coefficients(k)
    m = (f.n_t - 1) // (k + 1)
    left = np.empty((m,) + f.coeffs.shape[1:], dtype=f.coeffs.dtype)
    for i in range(1, m + 1):
        left[m - i] = sum(lam[j - 1] * f.coeffs[j * i] for j in range(1, k + 2))
    times = np.concatenate([-f.dt * np.arange(m, 0, -1), f.times])
    return ExtendedField(f.grid, times, np.concatenate([left, f.coeffs]), m, f.n_t)


def _windowed_extension(f, k):
    """Two-sided extension (reflection at t = 0 and at t = T) with a smooth
    taper to zero, suitable for periodic transforms in time."""
    lam = extension_coefficients(k)
    m = (f.n_t - 1) // (k + 1)
    c = f.coeffs
    n_t = f.n_t
    shape = (n_t + 2 * m,) + c.shape[1:]
    out = np.empty(shape, dtype=np.complex128)
    out[m : m + n_t] = c
    taper = smooth_step(1.0 - np.arange(1, m + 1) / (m + 1.0))
    for i in range(1, m + 1):
        lo = sum(lam[j - 1] * c[j * i] for j in range(1, k + 2))
        hi = sum(lam[j - 1] * c[n_t - 1 - j * i] for j in range(1, k + 2))
        out[m - i] = taper[i - 1] * lo
        out[m + n_t - 1 + i] = taper[i - 1] * hi
    return out, m


def _time_weights(n_t, dt):
    w = np.full(n_t, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def _spacetime_setup(f, ext_order):
    """Time spectrum of the windowed extension, restricted to active columns.

    Returns (spec, omega, m, cols) with spec of shape (n_active, N_e): one
    row per (component, spatial mode) whose coefficients are not all zero.
    """
    if f.n_t < 4:
        raise ValueError("n_t too small to resolve any parabolic shell")
    ext, m = _windowed_extension(f, ext_order)
    n_e = ext.shape[0]
    flat = ext.reshape(n_e, -1)
    cols = np.flatnonzero(np.any(flat != 0, axis=0))
    spec = sfft.fft(np.ascontiguousarray(flat[:, cols].T), axis=-1, workers=_sp._WORKERS)
    omega = 2 * np.pi * np.fft.fftfreq(n_e, d=f.dt)
    return spec, omega, m, cols


def _scatter(f, rows, cols):
    """Rows (n_active, n_t) back to a full (n_t, C, n, n, n) coefficient array."""
    out = np.zeros((f.n_t, int(np.prod(f.coeffs.shape[1:]))), dtype=np.complex128)
    out[:, cols] = rows.T
    return out.reshape((f.n_t,) + f.coeffs.shape[1:])


def anisotropic_band(grid, n_e, dt):
    omega = 2 * np.pi * np.fft.fftfreq(n_e, d=dt)
    w_min = float(np.min(np.abs(omega[omega != 0])))
    rho_min = min(grid.base_wavenumber, math.sqrt(w_min))
    rho_max = grid.max_resolved_kappa() + math.sqrt(float(np.max(np.abs(omega))))
    return dyadic_band(rho_min, rho_max)


def _window_dft(n_e, m, n_t):
    """Inverse DFT rows for the original window: (n_e, n_t) matrix."""
    k = np.arange(n_e)[:, None]
    i = np.arange(m, m + n_t)[None, :]
    return np.exp(2j * np.pi * k * i / n_e) / n_e


def _window_lp(f, rows, cols, m, p, idft=None):
    """L^p over the original window of the inverse time transform of ``rows``."""
    g = f.grid
    if idft is None:
        idft = _window_dft(rows.shape[-1], m, f.n_t)
    blk = rows @ idft
    weights = _time_weights(f.n_t, f.dt)
    if p == 2:
        power = np.sum(blk.real**2 + blk.imag**2, axis=0)
        return math.sqrt(g.volume * float(np.dot(weights, power)))
    return _lp_from_physical(ifft3(_scatter(f, blk, cols)).real, weights * g.cell_volume, p)


def _column_values(grid, f, table, cols):
    n_comp = f.coeffs[0].size // table.size
    return np.broadcast_to(table.ravel(), (n_comp, table.size)).ravel()[cols]


def anisotropic_blocks(f, p, ext_order=1, band=None, profile=None):
    """Unweighted block norms of the E-proxy of a space-time field."""
    profile = profile or build_dyadic_profile(ANISOTROPIC)
    g = f.grid
    n_e = f.n_t + 2 * ((f.n_t - 1) // (ext_order + 1))
    band = band or anisotropic_band(g, n_e, f.dt)
    js = np.arange(band[0], band[1] + 1)
    vals = np.zeros(js.size)
    spec, omega, m, cols = _spacetime_setup(f, ext_order)
    if cols.size:
        idft = _window_dft(n_e, m, f.n_t)
        kappa = _column_values(g, f, g.kappa, cols)
        root = np.sqrt(np.abs(omega))
        for i, j in enumerate(js):
            # columns whose parabolic radius can reach the shell (2^(j-1), 2^(j+1))
            act = np.flatnonzero((kappa < 2.0 ** (j + 1)) & (kappa + root.max() > 2.0 ** (j - 1)))
            if not act.size:
                continue
            w = profile.block(int(j), kappa[act, None] + root[None, :])
            if np.any(w):
                if p == 2:
                    vals[i] = _window_lp(f, spec[act] * w, None, m, p, idft)
                else:
                    vals[i] = _window_lp(f, spec[act] * w, cols[act], m, p, idft)
    return BlockNorms(p, js, vals, ANISOTROPIC, "E-proxy")


def besov_norm_anisotropic(f, spec, ext_order=1, band=None):
    if spec.flavor != ANISOTROPIC:
        raise ValueError("besov_norm_anisotropic needs an anisotropic-spacetime spec")
    return anisotropic_blocks(f, spec.p, ext_order, band).report(spec.s, spec.q)


# ---------------------------------------------------------------------------
# parabolic Sobolev norms


def _derivative_tensor(grid, c, order):
    """All ordered spatial derivatives of the given order, stacked on axis 1."""
    comps = [c]
    for _ in range(order):
        comps = [1j * grid.xi[i] * x for x in comps for i in range(3)]
    return np.concatenate(comps, axis=1)


def sobolev_norm_parabolic(f, s, p, ext_order=1, method=None):
    """||h_{-s} * f||_{L^p} on the time window.

    method="multiplier": (kappa^2 + i omega)^(s/2) with the principal branch
    (p = 2 only).  method="derivative": l^p combination over 2l + m = s of
    || |D_x^m D_t^l f| ||_{L^p} (s even), so for p = 2 it is the root of
    ||D_t f||^2 + ||D_x^2 f||^2 at s = 2.  Default: multiplier for p = 2.
    """
    if method is None:
        method = "multiplier" if p == 2 else "derivative"
    if method not in ("multiplier", "derivative"):
        raise ValueError(f"unknown method {method!r}")
    if method == "multiplier" and p != 2:
        raise UnsupportedRangeError("multiplier path is exact only for p = 2")
    if method == "derivative" and (s < 0 or s % 2 != 0 or not (1 < p < math.inf)):
        raise UnsupportedRangeError(f"derivative path needs even s >= 0 and 1 < p < inf (got s={s}, p={p})")
    g = f.grid
    if method == "multiplier":
        spec, omega, m, cols = _spacetime_setup(f, ext_order)
        if not cols.size:
            return 0.0
        rate = _column_values(g, f, g.heat_rate, cols)
        z = rate[:, None] + 1j * omega[None, :]
        if s == 0:
            mult = np.ones_like(z)
        else:
            nz = z != 0
            mult = np.zeros_like(z)
            mult[nz] = np.exp(0.5 * s * np.log(z[nz]))
        return _window_lp(f, spec * mult, cols, m, p)
    k = int(s // 2)
    total = 0.0
    for l in range(k + 1):
        dx = SpaceTimeField(g, f.times, _derivative_tensor(g, f.coeffs, 2 * (k - l)))
        spec, omega, m, cols = _spacetime_setup(dx, ext_order)
        if cols.size:
            total += _window_lp(dx, spec * (1j * omega[None, :]) ** l, cols, m, p) ** p
    return total ** (1.0 / p)


# ---------------------------------------------------------------------------
# Lorentz norms


def lorentz_norm_values(values, weights, p, r):
    """Lorentz L^{p,r} norm of a simple function from its decreasing rearrangement.

    ``values`` are cell magnitudes, ``weights`` cell measures.  The integral
    int (s^(1/p) f*(s))^r ds/s is done exactly on each constant step of f*.
    """
    if not 1 <= p < math.inf:
        raise ValueError("Lorentz norm needs 1 <= p < inf")
    if not 1 <= r <= math.inf:
        raise ValueError("Lorentz norm needs 1 <= r <= inf")
    v = np.abs(np.asarray(values, dtype=np.float64))
    w = np.broadcast_to(np.asarray(weights, dtype=np.float64), v.shape).ravel()
    v = v.ravel()
    order = np.argsort(-v, kind="stable")
    v, w = v[order], w[order]
    b = np.cumsum(w)
    a = b - w
    if r == math.inf:
        return float(np.max(v * b ** (1.0 / p))) if v.size else 0.0
    top = v.max() if v.size else 0.0
    if top == 0:
        return 0.0
    pieces = (v / top) ** r * (p / r) * (b ** (r / p) - a ** (r / p))
    return float(top * np.sum(pieces) ** (1.0 / r))


def spacetime_magnitudes(f):
    """Pointwise Euclidean magnitude of a space-time field and its cell measures."""
    g = f.grid
    phys = ifft3(f.coeffs).real
    mag = np.sqrt(np.sum(phys**2, axis=1))
    w = _time_weights(f.n_t, f.dt) * g.cell_volume
    return mag, np.broadcast_to(w[:, None, None, None], mag.shape)


def lorentz_norm(f, p, r):
    mag, w = spacetime_magnitudes(f)
    return lorentz_norm_values(mag, w, p, r)


def lp_norm(f, p):
    """L^p norm over the box times [0, T] with trapezoid weights in time."""
    g = f.grid
    phys = ifft3(f.coeffs).real
    return _lp_from_physical(phys, _time_weights(f.n_t, f.dt) * g.cell_volume, p)
