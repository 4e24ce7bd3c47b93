"""Empirical constants for the inequalities behind the contraction estimate.

Each inequality is LHS(f, g) <= c * RHS(f, g) for scalar space-time fields.
A corpus of random pairs is split into a calibration half and a held-out
half; c is the largest calibration ratio and the inequality passes when the
held-out maximum stays within ``margin * c``.  All norms are E-proxy norms
on the band of the corpus grid.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from . import besov
from .heat import DuhamelKind, apply_kind, get_plan
from .spectral import Grid, SpaceTimeField, SpectralVectorField, fft3, product_coeffs

MIN_CALIBRATION = 50
ZERO_TOL = 1e-13


def _aniso(f, s, p, q):
    return besov.anisotropic_blocks(f, p).total(s, q)


def _product(f, g):
    """Dealiased pointwise product of two scalar space-time fields."""
    grid = f.grid
    c = np.stack([product_coeffs(grid, f.coeffs[i], g.coeffs[i], "dot") for i in range(f.n_t)])
    return SpaceTimeField(grid, f.times, c[:, None])


def _sup(f):
    return besov.lp_norm(f, math.inf)


def _gradient(f):
    g = f.grid
    return SpaceTimeField(g, f.times, np.stack([g.grad(f.coeffs[i, 0]) for i in range(f.n_t)]))


def _heat_flow(f):
    g = f.grid
    c0 = f.coeffs[0]
    return SpaceTimeField(g, f.times, np.stack([c0 * np.exp(-g.heat_rate * t) for t in f.times]))


def _duhamel_gradient(f):
    g = f.grid
    plan = get_plan(g, f.times, 16)
    forcing = np.stack([apply_kind(g, DuhamelKind.GRAD, f.coeffs[i, 0]) for i in range(f.n_t)])
    return SpaceTimeField(g, f.times, plan.integrate(forcing))


def _spatial(f, i, s, p, q):
    spec = besov.BesovSpec(s, p, q, besov.ISOTROPIC)
    return besov.besov_norm_spatial(SpectralVectorField(f.grid, f.coeffs[i]), spec).total


# name -> (description, lhs(f, g), rhs(f, g))
INEQUALITIES = {
    "product-holder": (
        "||fg||_B(1;2,2) <= c (||f||_B(1;2,2) ||g||_inf + ||f||_inf ||g||_B(1;2,2))",
        lambda f, g: _aniso(_product(f, g), 1.0, 2, 2),
        lambda f, g: _aniso(f, 1.0, 2, 2) * _sup(g) + _sup(f) * _aniso(g, 1.0, 2, 2),
    ),
    "lorentz-embedding": (
        "||f||_L(4,2) <= c ||f||_B(5/2-5/4;2,2)",
        lambda f, g: besov.lorentz_norm(f, 4.0, 2.0),
        lambda f, g: _aniso(f, 1.25, 2, 2),
    ),
    "sup-embedding": (
        "||f||_inf <= c ||f||_B(5/2;2,1)",
        lambda f, g: _sup(f),
        lambda f, g: _aniso(f, 2.5, 2, 1),
    ),
    "product-critical": (
        "||fg||_B(1;2,2) <= c (||f||_B(5/2;2,1) ||g||_B(1;2,2) + ||g||_B(5/2;2,1) ||f||_B(1;2,2))",
        lambda f, g: _aniso(_product(f, g), 1.0, 2, 2),
        lambda f, g: _aniso(f, 2.5, 2, 1) * _aniso(g, 1.0, 2, 2) + _aniso(g, 2.5, 2, 1) * _aniso(f, 1.0, 2, 2),
    ),
    "derivative-lifting": (
        "||grad f||_B(1;2,2) <= c ||f||_B(2;2,2)",
        lambda f, g: _aniso(_gradient(f), 1.0, 2, 2),
        lambda f, g: _aniso(f, 2.0, 2, 2),
    ),
    "heat-trace": (
        "||Gamma f(0)||_B(1;2,2) <= c ||f(0)||_B(0;2,2)(R^3)",
        lambda f, g: _aniso(_heat_flow(f), 1.0, 2, 2),
        lambda f, g: _spatial(f, 0, 0.0, 2, 2),
    ),
    "duhamel-gradient": (
        "||grad Gamma * f||_B(3/2;2,2) <= c ||f||_B(1/2;2,2)",
        lambda f, g: _aniso(_duhamel_gradient(f), 1.5, 2, 2),
        lambda f, g: _aniso(f, 0.5, 2, 2),
    ),
}


@dataclass
class InequalityResult:
    name: str
    description: str
    fitted_c: float
    heldout_max: float
    margin: float
    n_calibration: int
    n_heldout: int
    violations: int
    degenerate: int
    passed: bool
    ratios_calibration: list = field(default_factory=list, repr=False)
    ratios_heldout: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "name": self.name,
            "description": self.description,
            "fitted_c": self.fitted_c,
            "heldout_max": self.heldout_max,
            "margin": self.margin,
            "n_calibration": self.n_calibration,
            "n_heldout": self.n_heldout,
            "violations": self.violations,
            "degenerate": self.degenerate,
            "verdict": "PASS" if self.passed else "FAIL",
        }


@dataclass
class BatteryReport:
    results: dict
    warnings: list
    n_samples: int

    @property
    def passed(self):
        return all(r.passed for r in self.results.values())

    def to_dict(self):
        return {
            "n_samples": self.n_samples,
            "warnings": list(self.warnings),
            "passed": self.passed,
            "inequalities": {k: v.to_dict() for k, v in self.results.items()},
        }


def _ratio(lhs, rhs):
    """(ratio, degenerate flag); 0/0 counts as ratio 0."""
    if rhs > ZERO_TOL:
        return lhs / rhs, False
    if lhs <= ZERO_TOL:
        return 0.0, False
    return math.inf, True


def estimate_battery(corpus, names=None, margin=1.05, heldout=None):
    """Fit one constant per inequality on a calibration half and test it on the rest.

    ``corpus`` is a list of (f, g) pairs.  Unless ``heldout`` (a boolean mask)
    is given, even positions calibrate and odd positions are held out, which
    keeps strata balanced when the corpus is generated in adjacent pairs.
    """
    names = list(names or INEQUALITIES)
    n = len(corpus)
    heldout = np.arange(n) % 2 == 1 if heldout is None else np.asarray(heldout, dtype=bool)
    notes = []
    n_cal = int(np.sum(~heldout))
    if n_cal < MIN_CALIBRATION:
        msg = f"insufficient calibration samples: {n_cal} < {MIN_CALIBRATION}"
        notes.append(msg)
        warnings.warn(msg)
    results = {}
    for name in names:
        desc, lhs, rhs = INEQUALITIES[name]
        cal, held = [], []
        degenerate = 0
        for i, (f, g) in enumerate(corpus):
            r, bad = _ratio(lhs(f, g), rhs(f, g))
            degenerate += bad
            (held if heldout[i] else cal).append(r)
        c = max(cal) if cal else 0.0
        hmax = max(held) if held else 0.0
        limit = margin * c
        violations = int(sum(r > limit for r in held)) + degenerate
        results[name] = InequalityResult(
            name, desc, c, hmax, margin, len(cal), len(held), violations, degenerate,
            bool(violations == 0 and math.isfinite(c)), cal, held,
        )
    return BatteryReport(results, notes, n)


# ---------------------------------------------------------------------------
# corpus


BANDS = ((1, 2), (2, 3), (1, 4), (3, 5))
DECADES = (-2, -1, 0, 1, 2)


def time_profile(t_final, rng, n_freq=3):
    """Smooth random temporal modes: (omega, phase, decay) triples."""
    return list(
        zip(
            rng.uniform(0, 4 * np.pi / t_final, n_freq),
            rng.uniform(0, 2 * np.pi, n_freq),
            rng.uniform(0, 2.0 / t_final, n_freq),
        )
    )


def random_scalar_field(grid, times, band, amplitude, rng, profile=None, coherent=False, centre=None):
    """sum_m a_m(t) e_m(x): shell-limited spatial profiles times smooth temporal modes.

    ``coherent`` aligns the phases of every shell mode at ``centre`` (random
    if not given), which gives a localized bump instead of random-phase
    noise.  The field is
    scaled so that its sup over the grid equals ``amplitude``.
    """
    kk = np.sqrt(grid.ksq_int)
    shell = (kk >= band[0]) & (kk <= band[1]) & grid.dealias_mask
    profile = profile or time_profile(float(times[-1]), rng)
    if coherent:
        x0 = rng.uniform(0, grid.box_length, 3) if centre is None else np.asarray(centre)
        bump = shell * np.exp(-1j * np.tensordot(x0, grid.xi, axes=(0, 0)))
        spatial = [bump] * len(profile)
    else:
        spatial = [fft3(rng.standard_normal(grid.shape)) * shell for _ in profile]
    vals = [
        sum(np.cos(w * t + ph) * np.exp(-d * t) * c for (w, ph, d), c in zip(profile, spatial))
        for t in times
    ]
    c = np.stack(vals)[:, None]
    c[..., 0, 0, 0] = 0.0
    f = SpaceTimeField(grid, times, c)
    top = besov.lp_norm(f, math.inf)
    return f * (amplitude / top) if top > 0 else f


def make_corpus(n_samples=100, seed=0, n=16, n_t=16, t_final=1.0):
    """Stratified twins: samples 2i and 2i + 1 share bands, amplitude decade,
    family (random-phase noise or coherent bump) and temporal profile, and
    differ in the spatial realization and the amplitude within the decade.
    The two bumps of a coherent pair share their centre, a random grid point."""
    if n_samples < 2:
        raise ValueError("need at least two samples")
    grid = Grid(n)
    times = np.linspace(0.0, t_final, n_t)
    rng = np.random.default_rng(seed)
    corpus = []
    for i in range(n_samples):
        stratum = i // 2
        if i % 2 == 0:
            prof_f = time_profile(t_final, rng)
            prof_g = time_profile(t_final, rng)
        band_f = BANDS[stratum % len(BANDS)]
        band_g = BANDS[(stratum // len(BANDS)) % len(BANDS)]
        dec = DECADES[stratum % len(DECADES)]
        amp_f = 10.0 ** (dec + rng.uniform(0, 1))
        amp_g = 10.0 ** (-dec + rng.uniform(0, 1))
        coherent = stratum % 2 == 1
        # grid points, so grid translations (which leave every norm here unchanged) relate twins
        centre = rng.integers(0, n, 3) * (grid.box_length / n)
        corpus.append(
            (
                random_scalar_field(grid, times, band_f, amp_f, rng, prof_f, coherent, centre),
                random_scalar_field(grid, times, band_g, amp_g, rng, prof_g, coherent, centre),
            )
        )
    return corpus
