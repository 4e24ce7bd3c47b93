"""Heat propagator, Duhamel integrals and the mild right-hand sides.

Every spatial operator here is a Fourier multiplier, so the time integral
int_0^t M(xi) exp(-|xi|^2 (t-s)) F(s) ds is evaluated mode by mode with
Gauss-Legendre nodes (open, so s = t is never sampled).  Forcing known only
at the stored time slices is interpolated in time with local cubic Lagrange
polynomials.

Forcing conventions per kind (G a rank-2 tensor, v a vector, phi a scalar):

    plain      v     -> v
    grad       phi   -> grad phi
    grad_proj  G     -> P div G          (div G)_i = d_j G_ij
    hess       v     -> grad (div v)     multiplier -xi (xi . v)
    curl       v     -> curl v
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from . import _kernels
from .spectral import SpaceTimeField, SpectralVectorField, fft3, ifft3


class DuhamelKind(str, Enum):
    PLAIN = "plain"
    GRAD = "grad"
    GRAD_PROJ = "grad_proj"
    HESS = "hess"
    CURL = "curl"


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    n_steps: int
    quad_order: int = 16

    def __post_init__(self):
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.n_steps < 2:
            raise ValueError("n_steps must be >= 2")
        if self.quad_order < 4:
            raise ValueError("quad_order must be >= 4")

    @property
    def times(self):
        return np.linspace(0.0, self.t_final, self.n_steps)

    @property
    def dt(self):
        return self.t_final / (self.n_steps - 1)


def apply_kind(grid, kind, fhat):
    """Apply the spatial multiplier of ``kind`` to forcing coefficients."""
    kind = DuhamelKind(kind)
    if kind is DuhamelKind.PLAIN:
        return fhat
    if kind is DuhamelKind.GRAD:
        if fhat.ndim >= 4 and fhat.shape[-4] == 1:
            fhat = fhat[..., 0, :, :, :]
        return grid.grad(fhat)
    if kind is DuhamelKind.GRAD_PROJ:
        return grid.project(grid.div_tensor(fhat))
    if kind is DuhamelKind.HESS:
        dot = np.sum(grid.xi * fhat, axis=-4)
        return -grid.xi * dot[..., None, :, :, :]
    return grid.curl(fhat)


def heat_propagate(f, t):
    """exp(t * Laplacian) applied mode by mode (exact in time)."""
    if t < 0:
        raise ValueError("heat propagation requires t >= 0")
    g = f.grid
    return SpectralVectorField(g, f.coeffs * np.exp(-g.heat_rate * t), is_solenoidal=f.is_solenoidal)


def _heat_coeffs(grid, coeffs, t):
    return coeffs * np.exp(-grid.heat_rate * t)


def duhamel(kind, forcing, t, quad, grid=None):
    """int_0^t M_kind exp((t-s) Laplacian) F(s) ds for a callable forcing.

    ``forcing(s)`` returns coefficient arrays (or SpectralVectorField).  The
    interval [0, t] is split at the sample times of ``quad`` and each piece
    gets ``quad.quad_order`` Gauss-Legendre nodes.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    x, w = np.polynomial.legendre.leggauss(quad.quad_order)
    breaks = [s for s in quad.times if s < t]
    breaks.append(t)
    acc = None
    g = grid
    for a, b in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (b - a)
        for xq, wq in zip(x, w):
            s = a + half * (1.0 + xq)
            val = forcing(s)
            if isinstance(val, SpectralVectorField):
                g = val.grid
                val = val.coeffs
            if not np.all(np.isfinite(val)):
                raise ValueError(f"non-finite forcing at s = {s!r}")
            term = (half * wq) * np.exp(-g.heat_rate * (t - s)) * val
            acc = term if acc is None else acc + term
    if g is None:
        raise ValueError("grid unknown: pass grid= or return SpectralVectorField from forcing")
    if acc is None:
        val = forcing(0.0)
        if isinstance(val, SpectralVectorField):
            val = val.coeffs
        acc = np.zeros_like(np.asarray(val, dtype=np.complex128))
    return SpectralVectorField(g, apply_kind(g, kind, acc))


def _lagrange_basis(nodes, x):
    """Values of the Lagrange basis polynomials on ``nodes`` at points ``x``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.ones((len(nodes),) + x.shape)
    for m, xm in enumerate(nodes):
        for l, xl in enumerate(nodes):
            if l != m:
                out[m] *= (x - xl) / (xm - xl)
    return out


class DuhamelPlan:
    """Precomputed slice-to-slice Duhamel weights for a uniform time grid.

    Over [t_j, t_{j+1}] the forcing is the cubic through the four nearest
    slices; the exact heat factor then gives the recursion

        D(t_{j+1}) = exp(-lam h) D(t_j) + sum_m A_m(lam) F(t_{s0+m}),

    with A_m tabulated once per distinct integer |k|^2.
    """

    def __init__(self, grid, times, quad_order=16):
        self.grid = grid
        self.times = np.asarray(times, dtype=np.float64)
        self.quad_order = int(quad_order)
        n_t = self.times.size
        self.h = float(self.times[1] - self.times[0])
        self.width = min(4, n_t)
        j = np.arange(n_t - 1)
        self.start = np.clip(j - 1, 0, n_t - self.width)
        self.itype = j - self.start
        n_types = int(self.itype.max()) + 1

        x, w = np.polynomial.legendre.leggauss(self.quad_order)
        ks = np.arange(int(grid.ksq_int.max()) + 1)
        lam = grid.base_wavenumber**2 * ks
        nodes = np.arange(self.width, dtype=np.float64)
        table = np.empty((n_types, self.width, ks.size))
        for r in range(n_types):
            tau = r + 0.5 * (1.0 + x)
            basis = _lagrange_basis(nodes, tau)  # (width, Q)
            damp = np.exp(-np.outer(lam, 0.5 * self.h * (1.0 - x)))  # (K, Q)
            table[r] = 0.5 * self.h * (basis * w) @ damp.T
        flat_idx = grid.ksq_int.ravel()
        self.coef = np.ascontiguousarray(table[:, :, flat_idx])
        self.decay = np.exp(-lam * self.h)[flat_idx]
        self._gl = (x, w)

    def integrate(self, forcing):
        """Duhamel integral at every slice for forcing slices (n_t, C, n, n, n)."""
        forcing = np.asarray(forcing)
        shape = forcing.shape
        flat = forcing.reshape(shape[0], -1, self.grid.n**3)
        out = _kernels.duhamel_accumulate(self.decay, self.coef, self.itype, self.start, flat)
        return out.reshape(shape)

    def evaluate(self, forcing, at_slices, t):
        """Duhamel integral at an arbitrary time from slice forcing and slice values."""
        n_t = self.times.size
        if not 0.0 <= t <= self.times[-1] * (1 + 1e-12):
            raise ValueError("t outside the time grid")
        j = min(int(np.floor(t / self.h)), n_t - 2)
        dt = t - self.times[j]
        if dt <= 0:
            return at_slices[j].copy()
        s0 = self.start[j]
        x, w = self._gl
        tau = (j - s0) + 0.5 * (dt / self.h) * (1.0 + x)
        basis = _lagrange_basis(np.arange(self.width, dtype=np.float64), tau)
        lam = self.grid.heat_rate
        acc = np.exp(-lam * dt) * at_slices[j]
        for q in range(x.size):
            fq = np.tensordot(basis[:, q], forcing[s0 : s0 + self.width], axes=(0, 0))
            acc = acc + (0.5 * dt * w[q]) * np.exp(-lam * 0.5 * dt * (1.0 - x[q])) * fq
        return acc

    def interpolate(self, forcing, s):
        """The piecewise-cubic forcing used by ``integrate`` evaluated at time s."""
        n_t = self.times.size
        j = min(max(int(np.floor(s / self.h)), 0), n_t - 2)
        s0 = self.start[j]
        tau = (s - self.times[s0]) / self.h
        basis = _lagrange_basis(np.arange(self.width, dtype=np.float64), np.array([tau]))[:, 0]
        return np.tensordot(basis, forcing[s0 : s0 + self.width], axes=(0, 0))


@lru_cache(maxsize=16)
def _plan_cached(grid, times_key, quad_order):
    return DuhamelPlan(grid, np.array(times_key), quad_order)


def get_plan(grid, times, quad_order=16):
    return _plan_cached(grid, tuple(np.asarray(times, dtype=np.float64).tolist()), int(quad_order))


# ---------------------------------------------------------------------------
# nonlinear forcing of the Hall-MHD system


def sym_to_full(sym):
    """(6, ...) upper-triangle components xx, xy, xz, yy, yz, zz -> (3, 3, ...)."""
    xx, xy, xz, yy, yz, zz = sym
    return np.stack([np.stack([xx, xy, xz]), np.stack([xy, yy, yz]), np.stack([xz, yz, zz])])


_SYM = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))

# how the Lorentz force enters F_u; recorded in run manifests
LORENTZ_IDENTITY = (
    "(curl b) x b = (b . grad) b - grad(|b|^2)/2 = div(b (x) b) - grad(|b|^2)/2 for div b = 0; "
    "the gradient is removed by P, so F_u = P div(b (x) b - u (x) u)"
)


def nonlinear_forcing(grid, uhat, bhat, hall=True):
    """Forcing of the velocity and magnetic equations at one time.

    Returns (F_u, F_b) with
        F_u = P div(b (x) b - u (x) u)
        F_b = curl(u x b - (curl b) x b)      (Hall part dropped if hall=False)
    Products are formed on the 2/3-truncated fields and truncated again.
    """
    mask = grid.dealias_mask
    u = ifft3(uhat * mask).real
    b = ifft3(bhat * mask).real
    sym = np.stack([b[i] * b[j] - u[i] * u[j] for i, j in _SYM])
    w = np.cross(u, b, axis=0)
    if hall:
        j = ifft3(grid.curl(bhat * mask)).real
        w = w - np.cross(j, b, axis=0)
    ghat = fft3(sym) * mask
    what = fft3(w) * mask
    f_u = grid.project(grid.div_tensor(sym_to_full(ghat)))
    f_b = grid.curl(what)
    return f_u, f_b


def forcing_slices(grid, u, b, hall=True):
    """Nonlinear forcing at every slice of two space-time fields."""
    n_t = u.coeffs.shape[0]
    fu = np.empty_like(u.coeffs)
    fb = np.empty_like(b.coeffs)
    for i in range(n_t):
        fu[i], fb[i] = nonlinear_forcing(grid, u.coeffs[i], b.coeffs[i], hall=hall)
    return fu, fb


def recover_pressure(grid, uhat, bhat):
    """Pressure from div of the momentum equation: Lap p = div(-(u.grad)u + (curl b) x b)."""
    mask = grid.dealias_mask
    u = ifft3(uhat * mask).real
    b = ifft3(bhat * mask).real
    j = ifft3(grid.curl(bhat * mask)).real
    sym = np.stack([-u[i] * u[k] for i, k in _SYM])
    n_hat = grid.div_tensor(sym_to_full(fft3(sym) * mask)) + fft3(np.cross(j, b, axis=0)) * mask
    return -grid.div(n_hat) * grid.inv_xi_sq


def _check_pair(u, b):
    if u.grid != b.grid or u.coeffs.shape != b.coeffs.shape or not np.array_equal(u.times, b.times):
        raise ValueError("u and b must share grid and time samples")


def _heat_slices(grid, coeffs0, times):
    return np.stack([_heat_coeffs(grid, coeffs0, t) for t in times])


def _at(plan, fslices, dslices, heat0, grid, t):
    return _heat_coeffs(grid, heat0, t) + plan.evaluate(fslices, dslices, t)


def mild_rhs_u(u, b, u0, t=None, quad_order=16, terms=False):
    """Right-hand side of the velocity integral formula.

    heat(u0) + int grad_proj(-u (x) u) + int grad_proj(b (x) b) + (1/2) P int grad |b|^2.
    The last term is a projected gradient and vanishes identically; it is
    evaluated only when ``terms=True`` so the split can be inspected.
    With ``t=None`` the result is returned at every slice of ``u``.
    """
    _check_pair(u, b)
    g = u.grid
    plan = get_plan(g, u.times, quad_order)
    u0c = u0.coeffs if isinstance(u0, SpectralVectorField) else u0
    if not terms:
        fu, _ = forcing_slices(g, u, b, hall=False)
        d = plan.integrate(fu)
        if t is None:
            return SpaceTimeField(g, u.times, _heat_slices(g, u0c, u.times) + d)
        return SpectralVectorField(g, _at(plan, fu, d, u0c, g, t), is_solenoidal=True)

    mask = g.dealias_mask
    tt = u.times[-1] if t is None else t
    uu = np.empty((u.n_t, 3, 3) + g.shape, dtype=complex)
    bb = np.empty_like(uu)
    b2 = np.empty((u.n_t,) + g.shape, dtype=complex)
    for i in range(u.n_t):
        uu[i] = -_outer(g, u.coeffs[i], u.coeffs[i], mask)
        bb[i] = _outer(g, b.coeffs[i], b.coeffs[i], mask)
        b2[i] = np.einsum("ii...->...", bb[i])
    out = {"heat": _heat_coeffs(g, u0c, tt)}
    for name, kind, f in (("uu", DuhamelKind.GRAD_PROJ, uu), ("bb", DuhamelKind.GRAD_PROJ, bb)):
        fs = np.stack([apply_kind(g, kind, f[i]) for i in range(u.n_t)])
        out[name] = plan.evaluate(fs, plan.integrate(fs), tt)
    fs = np.stack([g.project(apply_kind(g, DuhamelKind.GRAD, b2[i])) for i in range(u.n_t)])
    out["grad_b2"] = -0.5 * plan.evaluate(fs, plan.integrate(fs), tt)
    return out


def _outer(grid, fhat, ghat, mask):
    a = ifft3(fhat * mask).real
    c = ifft3(ghat * mask).real
    return fft3(a[:, None] * c[None, :]) * mask


def mild_rhs_b(u, b, b0, t=None, quad_order=16, hall=True):
    """Right-hand side of the magnetic integral formula.

    heat(b0) + int curl(u x b) - int curl((curl b) x b); the Hall piece is the
    second integral.  With ``t=None`` the result is returned at every slice.
    """
    _check_pair(u, b)
    g = u.grid
    plan = get_plan(g, u.times, quad_order)
    b0c = b0.coeffs if isinstance(b0, SpectralVectorField) else b0
    _, fb = forcing_slices(g, u, b, hall=hall)
    d = plan.integrate(fb)
    if t is None:
        return SpaceTimeField(g, u.times, _heat_slices(g, b0c, u.times) + d)
    return SpectralVectorField(g, _at(plan, fb, d, b0c, g, t), is_solenoidal=True)


def hall_operator_T(b1, b2, t=None, quad_order=16):
    """T(b1, b2) = int_0^t grad div exp((t-s) Laplacian) (b1 x b2)(s) ds.

    Bilinear and antisymmetric; T(b, b) = 0 because b x b = 0 pointwise.
    """
    _check_pair(b1, b2)
    g = b1.grid
    plan = get_plan(g, b1.times, quad_order)
    mask = g.dealias_mask
    f = np.empty_like(b1.coeffs)
    for i in range(b1.n_t):
        a = ifft3(b1.coeffs[i] * mask).real
        c = ifft3(b2.coeffs[i] * mask).real
        f[i] = apply_kind(g, DuhamelKind.HESS, fft3(np.cross(a, c, axis=0)) * mask)
    d = plan.integrate(f)
    if t is None:
        return SpaceTimeField(g, b1.times, d)
    return SpectralVectorField(g, plan.evaluate(f, d, t))
