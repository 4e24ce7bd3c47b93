"""Independent ground truth for the mild solver.

* an integrating-factor spectral time stepper for the differential system,
* solver-vs-solver comparison with an explicit error budget,
* the weak-form residual of a space-time pair against solenoidal test fields,
* brute-force oracles: adaptive Simpson Duhamel integrals, a naive DFT and a
  direct convolution of truncated coefficient arrays.

Nothing here imports the Duhamel machinery of ``heat``; the oracles own their
multipliers and quadrature.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import besov
from .besov import smooth_step, smooth_step_derivative
from .spectral import SpectralVectorField, fft3, ifft3

SCHEMES = ("IMEX-Euler", "IMEX-CNAB2")
C_STAB = 0.5


# ---------------------------------------------------------------------------
# time stepper


@dataclass
class ImexConfig:
    """dt and step count; ``scheme`` is IMEX-Euler (first order) or IMEX-CNAB2.

    Both treat diffusion exactly through the per-mode factor exp(-|xi|^2 dt)
    and the nonlinear terms explicitly (forward Euler, resp. Adams-Bashforth 2
    started by one Heun step).  The Hall term is second order in b, so
    dt * max|b| * kappa_max^2 <= c_stab is enforced.
    """

    dt: float = 1e-3
    steps: int = 100
    scheme: str = "IMEX-CNAB2"
    hall: bool = True
    nonlinear: bool = True
    diffusion: bool = True
    c_stab: float = C_STAB

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not self.c_stab > 0:
            raise ValueError("c_stab must be positive")


class StabilityError(RuntimeError):
    pass


def _rhs(grid, uhat, bhat, hall):
    """P(b.grad b - u.grad u) and curl(u x b - (curl b) x b) on the 2/3 band."""
    mask = grid.dealias_mask
    u = ifft3(uhat * mask).real
    b = ifft3(bhat * mask).real
    grad_u = ifft3(1j * grid.xi[None] * (uhat * mask)[:, None]).real  # d_j u_i
    grad_b = ifft3(1j * grid.xi[None] * (bhat * mask)[:, None]).real
    adv = np.einsum("jxyz,ijxyz->ixyz", b, grad_b) - np.einsum("jxyz,ijxyz->ixyz", u, grad_u)
    emf = np.cross(u, b, axis=0)
    if hall:
        j = ifft3(grid.curl(bhat * mask)).real
        emf = emf - np.cross(j, b, axis=0)
    nu = grid.project(fft3(adv) * mask)
    nb = grid.curl(fft3(emf) * mask)
    return nu, nb


def stability_number(grid, bhat, dt):
    b = ifft3(bhat * grid.dealias_mask).real
    bmax = float(np.max(np.sqrt(np.sum(b**2, axis=0))))
    return dt * bmax * grid.max_resolved_kappa() ** 2


class ImexSolver:
    """Stateful stepper; ``history`` holds the previous nonlinear term for AB2."""

    def __init__(self, grid, cfg):
        self.grid = grid
        self.cfg = cfg
        rate = grid.heat_rate if cfg.diffusion else np.zeros(grid.shape)
        self.e1 = np.exp(-rate * cfg.dt)
        self.e2 = self.e1**2
        self.prev = None

    def _n(self, u, b):
        if not self.cfg.nonlinear:
            z = np.zeros_like(u)
            return z, z
        return _rhs(self.grid, u, b, self.cfg.hall)

    def step(self, u, b):
        cfg, g, e1 = self.cfg, self.grid, self.e1
        if cfg.hall and cfg.nonlinear:
            nstab = stability_number(g, b, cfg.dt)
            if nstab > cfg.c_stab:
                raise StabilityError(f"dt * max|b| * kappa_max^2 = {nstab:.3g} exceeds c_stab = {cfg.c_stab}")
        nu, nb = self._n(u, b)
        dt = cfg.dt
        if cfg.scheme == "IMEX-Euler":
            u1, b1 = e1 * (u + dt * nu), e1 * (b + dt * nb)
        elif self.prev is None:
            # Heun start in integrating-factor form
            us, bs = e1 * (u + dt * nu), e1 * (b + dt * nb)
            nus, nbs = self._n(us, bs)
            u1 = e1 * u + 0.5 * dt * (e1 * nu + nus)
            b1 = e1 * b + 0.5 * dt * (e1 * nb + nbs)
        else:
            pu, pb = self.prev
            u1 = e1 * u + dt * (1.5 * e1 * nu - 0.5 * self.e2 * pu)
            b1 = e1 * b + dt * (1.5 * e1 * nb - 0.5 * self.e2 * pb)
        self.prev = (nu, nb)
        u1, b1 = g.project(u1), g.project(b1)
        return u1, b1

    def run(self, u0, b0, steps=None, record_every=None):
        """Advance ``steps`` steps; optionally keep every k-th state."""
        steps = self.cfg.steps if steps is None else steps
        u, b = np.array(u0, dtype=np.complex128), np.array(b0, dtype=np.complex128)
        states = [(0.0, u, b)] if record_every else []
        for i in range(steps):
            u, b = self.step(u, b)
            if record_every and (i + 1) % record_every == 0:
                states.append(((i + 1) * self.cfg.dt, u, b))
        return u, b, states


def imex_step(u, b, cfg, history=None):
    """One step from SpectralVectorFields; ``history`` (a dict) carries AB2 state."""
    if u.grid != b.grid:
        raise ValueError("u and b live on different grids")
    for f in (u, b):
        if f.grid.max_divergence(f.coeffs) > 1e-10:
            raise ValueError("imex_step requires divergence-free inputs")
    solver = ImexSolver(u.grid, cfg)
    if history is not None:
        solver.prev = history.get("prev")
    u1, b1 = solver.step(u.coeffs, b.coeffs)
    if history is not None:
        history["prev"] = solver.prev
    return SpectralVectorField(u.grid, u1, True), SpectralVectorField(b.grid, b1, True)


def imex_solve(data, t_final, dt, scheme="IMEX-CNAB2", hall=True):
    """Integrate from the initial data to t_final with a step that divides it."""
    steps = int(round(t_final / dt))
    if abs(steps * dt - t_final) > 1e-9 * t_final:
        raise ValueError("dt must divide t_final")
    cfg = ImexConfig(dt=dt, steps=steps, scheme=scheme, hall=hall)
    u, b, _ = ImexSolver(data.grid, cfg).run(data.u0.coeffs, data.b0.coeffs)
    return u, b


# ---------------------------------------------------------------------------
# cross validation


def _rel_l2(grid, a, b):
    num = math.sqrt(sum(float(np.sum(np.abs(x - y) ** 2)) for x, y in zip(a, b)))
    den = math.sqrt(sum(float(np.sum(np.abs(x) ** 2)) for x in a))
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


def cross_validate(mild, imex, t, dt_envelope=0.0, quad_tol=0.0, p=2.0):
    """Compare (u, b) from the mild solver with (u, b) from the time stepper at time t.

    ``mild`` is a pair of SpaceTimeFields (t must be one of its slices) and
    ``imex`` a pair of coefficient arrays at t.  PASS iff the relative L^2
    gap is at most tol_model = max(5 * dt_envelope, 10 * quad_tol).
    """
    mu, mb = mild
    if mu.grid != mb.grid or mu.grid.shape != np.shape(imex[0])[-3:]:
        raise ValueError("mismatched grids")
    idx = np.flatnonzero(np.isclose(mu.times, t, rtol=0, atol=1e-12 * max(1.0, t)))
    if idx.size != 1:
        raise ValueError(f"t = {t} is not a slice of the mild solution")
    i = int(idx[0])
    g = mu.grid
    a = (mu.coeffs[i], mb.coeffs[i])
    gap = _rel_l2(g, a, imex)
    spec = besov.BesovSpec(3 / p, p, 1, besov.ISOTROPIC)
    band = besov.spatial_band(g)

    def bnorm(c):
        return besov.besov_norm_spatial(SpectralVectorField(g, c), spec, band).total

    den = bnorm(a[0]) + bnorm(a[1])
    num = bnorm(a[0] - imex[0]) + bnorm(a[1] - imex[1])
    tol_model = max(5 * dt_envelope, 10 * quad_tol)
    return {
        "t": float(t),
        "rel_l2_gap": gap,
        "rel_besov_gap": num / den if den > 0 else (0.0 if num == 0 else math.inf),
        "dt_envelope": dt_envelope,
        "quad_tol": quad_tol,
        "tol_model": tol_model,
        "passed": bool(gap <= tol_model),
        "note": "solver-vs-solver comparison; no exact nontrivial Hall-MHD solution is available",
    }


def observed_order(gap_coarse, gap_fine, ratio=2.0):
    if gap_coarse <= 0 or gap_fine <= 0:
        return math.nan
    return math.log(gap_coarse / gap_fine) / math.log(ratio)


# ---------------------------------------------------------------------------
# weak formulation


@dataclass
class TestField:
    """Phi(x, t) = chi(t) phi(x) with phi solenoidal and chi = 0 for t >= cutoff."""

    phi: np.ndarray
    chi: object
    dchi: object
    cutoff: float


def bump_in_time(t_final, cutoff_frac=0.8, freq=0.0, phase=0.0):
    """chi(t) = cos(freq t + phase) w(t) with w = 1 near t = 0 and w = 0 past the cutoff."""
    tc = cutoff_frac * t_final
    t_on = 0.3 * tc
    span = tc - t_on

    def chi(t):
        return math.cos(freq * t + phase) * (1.0 - float(smooth_step((t - t_on) / span)))

    def dchi(t):
        w = 1.0 - float(smooth_step((t - t_on) / span))
        dw = -float(smooth_step_derivative((t - t_on) / span)) / span
        return -freq * math.sin(freq * t + phase) * w + math.cos(freq * t + phase) * dw

    return chi, dchi, tc


def random_test_fields(grid, t_final, count, seed=0, band=(1, 3)):
    rng = np.random.default_rng(seed)
    kk = np.sqrt(grid.ksq_int)
    shell = (kk >= band[0]) & (kk <= band[1]) & grid.dealias_mask
    out = []
    for _ in range(count):
        c = grid.project(fft3(rng.standard_normal((3,) + grid.shape))) * shell
        c /= math.sqrt(grid.volume * float(np.sum(np.abs(c) ** 2)))
        chi, dchi, tc = bump_in_time(t_final, rng.uniform(0.6, 0.9), rng.uniform(0, 40), rng.uniform(0, 2 * np.pi))
        out.append(TestField(c, chi, dchi, tc))
    return out


def _inner(grid, a, b):
    """int a . b dx for coefficient arrays of real fields."""
    return grid.volume * float(np.real(np.sum(a * np.conj(b))))


def _weak_fluxes(g, uc, bc, hall):
    mask = g.dealias_mask
    up = ifft3(uc * mask).real
    bp = ifft3(bc * mask).real
    tens = fft3(up[:, None] * up[None] - bp[:, None] * bp[None])
    emf = np.cross(up, bp, axis=0)
    if hall:
        emf = emf - np.cross(ifft3(g.curl(bc * mask)).real, bp, axis=0)
    return tens, fft3(emf)


def weak_residual(u, b, data, phis, evaluate, nodes_per_interval=6, hall=True, nonlinear=True):
    """Normalized weak-form residuals of (u, b) against each test field.

    ``evaluate(t)`` returns the coefficient pair (u(t), b(t)) at any t in
    [0, T] (for the mild solution: the Duhamel reconstruction between slices).
    Velocity:  -<<u, Lap Phi>> = <<u, Phi_t>> + <<u (x) u - b (x) b, grad Phi>> + <u0, Phi(0)>
    Magnetic:  -<<b, Lap Phi>> = <<b, Phi_t>> + <<u x b - (curl b) x b, curl Phi>> + <b0, Phi(0)>
    Each residual is |LHS - RHS| divided by the sum of the term magnitudes.
    ``nonlinear=False`` drops the quadratic terms (the linear heat identity).
    """
    g = u.grid
    for ph in phis:
        if g.max_divergence(ph.phi) > 1e-10:
            raise ValueError("test fields must be divergence free")
    x, w = np.polynomial.legendre.leggauss(nodes_per_interval)
    t_end = max(ph.cutoff for ph in phis)
    breaks = [t for t in u.times if t < t_end] + [t_end]
    lap = [-g.xi_sq * ph.phi for ph in phis]
    grad = [1j * g.xi[None] * ph.phi[:, None] for ph in phis]  # d_j phi_i
    curl = [g.curl(ph.phi) for ph in phis]
    acc = np.zeros((len(phis), 2, 4))  # eq, term: lap, time, nonlinear, data
    for a, c in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (c - a)
        for xq, wq in zip(x, w):
            t = a + half * (1 + xq)
            uc, bc = evaluate(t)
            if not nonlinear:
                emf = np.zeros_like(uc)
                tens = np.zeros((3,) + uc.shape, dtype=complex)
            else:
                tens, emf = _weak_fluxes(g, uc, bc, hall)
            for i, ph in enumerate(phis):
                chi, dchi = ph.chi(t), ph.dchi(t)
                wt = half * wq
                acc[i, 0, 0] += wt * chi * -_inner(g, uc, lap[i])
                acc[i, 0, 1] += wt * dchi * _inner(g, uc, ph.phi)
                acc[i, 0, 2] += wt * chi * _inner(g, tens, grad[i])
                acc[i, 1, 0] += wt * chi * -_inner(g, bc, lap[i])
                acc[i, 1, 1] += wt * dchi * _inner(g, bc, ph.phi)
                acc[i, 1, 2] += wt * chi * _inner(g, emf, curl[i])
    out = []
    for i, ph in enumerate(phis):
        acc[i, 0, 3] = ph.chi(0.0) * _inner(g, data.u0.coeffs, ph.phi)
        acc[i, 1, 3] = ph.chi(0.0) * _inner(g, data.b0.coeffs, ph.phi)
        res = {}
        for e, name in enumerate(("u", "b")):
            lhs = acc[i, e, 0]
            rhs = acc[i, e, 1] + acc[i, e, 2] + acc[i, e, 3]
            scale = float(np.sum(np.abs(acc[i, e])))
            res[name] = abs(lhs - rhs) / scale if scale > 0 else 0.0
        out.append(res)
    return out


# ---------------------------------------------------------------------------
# brute-force oracles


def _oracle_multiplier(grid, kind, c):
    xi = grid.xi
    if kind == "plain":
        return c
    if kind == "grad":
        c = c[0] if c.ndim == 4 else c
        return 1j * xi * c[None]
    if kind == "grad_proj":
        v = 1j * np.stack([sum(xi[j] * c[i, j] for j in range(3)) for i in range(3)])
        ksq = np.sum(xi**2, axis=0)
        safe = np.where(ksq > 0, ksq, 1.0)
        dot = sum(xi[j] * v[j] for j in range(3))
        out = v - xi * (dot / safe)[None]
        out[:, ksq == 0] = 0.0
        out[:, 0, 0, 0] = 0.0
        return out
    if kind == "hess":
        dot = sum(xi[j] * c[j] for j in range(3))
        return -xi * dot[None]
    if kind == "curl":
        return 1j * np.stack([xi[1] * c[2] - xi[2] * c[1], xi[2] * c[0] - xi[0] * c[2], xi[0] * c[1] - xi[1] * c[0]])
    raise ValueError(f"unknown kind {kind!r}")


class ToleranceNotReached(RuntimeError):
    pass


def brute_duhamel(kind, forcing, t, tol=1e-12, grid=None, max_depth=40):
    """int_0^t M_kind exp((t - s) Lap) F(s) ds by adaptive Simpson bisection.

    ``forcing(s)`` returns coefficient arrays.  An interval is accepted when
    the two-half Simpson sum differs from the whole-interval value by at most
    15 * tol * (length / t), measured in max norm over all coefficients.
    """
    g = grid
    if g is None:
        raise ValueError("grid is required")
    kind = getattr(kind, "value", kind)
    lam = g.heat_rate
    if t == 0:
        return SpectralVectorField(g, _oracle_multiplier(g, kind, np.zeros_like(np.asarray(forcing(0.0), dtype=complex))))

    def f(s):
        return np.exp(-lam * (t - s)) * np.asarray(forcing(s), dtype=np.complex128)

    def simpson(fa, fm, fb, h):
        return (h / 6.0) * (fa + 4 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, m - a)
        right = simpson(fm, frm, fb, b - m)
        err = float(np.max(np.abs(left + right - whole)))
        if err <= 15 * tol * (b - a) / t:
            return left + right + (left + right - whole) / 15.0
        if depth >= max_depth:
            raise ToleranceNotReached(f"tolerance {tol:g} not reached on [{a:g}, {b:g}]")
        return recurse(a, m, fa, flm, fm, left, depth + 1) + recurse(m, b, fm, frm, fb, right, depth + 1)

    # a fixed first split keeps the acceptance test from being fooled by symmetric forcing
    pieces = 8
    edges = np.linspace(0.0, t, pieces + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
        total = total + recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, b - a), 0)
    return SpectralVectorField(g, _oracle_multiplier(g, kind, total))


def naive_dft3(values):
    """Forward transform by direct summation, coeffs = sum f(x) exp(-2 pi i k.x / n) / n^3."""
    values = np.asarray(values, dtype=np.complex128)
    n = values.shape[-1]
    idx = np.arange(n)
    w = np.exp(-2j * np.pi * np.outer(idx, idx) / n)
    out = np.zeros_like(values)
    lead = values.shape[:-3]
    for k0 in range(n):
        for k1 in range(n):
            for k2 in range(n):
                phase = w[k0][:, None, None] * w[k1][None, :, None] * w[k2][None, None, :]
                out[(...,) + (k0, k1, k2)] = np.sum(values * phase, axis=(-3, -2, -1))
    return out.reshape(lead + (n, n, n)) / n**3


def naive_idft3(coeffs):
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    n = coeffs.shape[-1]
    return np.conj(naive_dft3(np.conj(coeffs))) * n**3


def direct_convolution(grid, fhat, ghat, kind="tensor"):
    """Truncated exact convolution of truncated coefficient arrays, by explicit mode pairs."""
    n = grid.n
    mask = grid.dealias_mask
    kset = np.argwhere(mask)
    kvec = np.fft.fftfreq(n, 1.0 / n).astype(int)
    f = fhat * mask
    g = ghat * mask
    if kind == "tensor":
        out = np.zeros((3, 3) + grid.shape, dtype=complex)
    elif kind == "cross":
        out = np.zeros((3,) + grid.shape, dtype=complex)
    elif kind == "dot":
        out = np.zeros(grid.shape, dtype=complex)
    else:
        raise ValueError(f"unknown product kind {kind!r}")
    for a in kset:
        fa = f[(slice(None),) + tuple(a)]
        if not np.any(fa):
            continue
        ka = kvec[a]
        for bidx in kset:
            gb = g[(slice(None),) + tuple(bidx)]
            if not np.any(gb):
                continue
            kc = ka + kvec[bidx]
            if np.any(3 * np.abs(kc) >= n):
                continue
            c = tuple(kc % n)
            if kind == "tensor":
                out[(slice(None), slice(None)) + c] += np.outer(fa, gb)
            elif kind == "cross":
                out[(slice(None),) + c] += np.cross(fa, gb)
            else:
                out[c] += np.dot(fa, gb)
    return out
