import numpy as np
import pytest
from hypothesis import given, strategies as st

from hallmild import heat
from hallmild.heat import DuhamelKind, TimeGrid, duhamel, heat_propagate
from hallmild.reference import brute_duhamel
from hallmild.spectral import Grid, SpaceTimeField, SpectralVectorField, fft3

from conftest import random_field


def single_mode(grid, k=(1, 0, 0), comp=1, amp=1.0):
    c = np.zeros((3,) + grid.shape, dtype=complex)
    c[(comp,) + k] = amp
    c[(comp,) + tuple(-np.asarray(k) % grid.n)] = np.conj(amp)
    return c


def test_time_grid_guards():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 8)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 8, quad_order=3)
    tg = TimeGrid(1.0, 5)
    assert tg.dt == 0.25 and tg.times[-1] == 1.0


def test_heat_identity_and_eigenfunction(grid8, rng):
    f = random_field(grid8, rng)
    assert np.array_equal(heat_propagate(f, 0.0).coeffs, f.coeffs)
    g = SpectralVectorField(grid8, single_mode(grid8))  # |xi|^2 = 1 on the 2 pi box
    out = heat_propagate(g, 1.0).coeffs[1, 1, 0, 0]
    assert out == pytest.approx(np.exp(-1.0), rel=1e-14)
    with pytest.raises(ValueError):
        heat_propagate(f, -1e-3)


def test_heat_semigroup(grid16, rng):
    f = random_field(grid16, rng)
    a = heat_propagate(heat_propagate(f, 0.03), 0.05).coeffs
    b = heat_propagate(f, 0.08).coeffs
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(b))


@given(t1=st.floats(0, 2), t2=st.floats(0, 2), seed=st.integers(0, 1000))
def test_heat_l2_non_increasing(t1, t2, seed):
    g = Grid(8)
    f = random_field(g, np.random.default_rng(seed))
    lo, hi = sorted((t1, t2))
    assert heat_propagate(f, hi).l2_norm() <= heat_propagate(f, lo).l2_norm() * (1 + 1e-14)


def test_duhamel_zero_forcing(grid8):
    tg = TimeGrid(0.5, 8)
    out = duhamel(DuhamelKind.PLAIN, lambda s: np.zeros((3,) + grid8.shape, complex), 0.5, tg, grid8)
    assert not np.any(out.coeffs)


@pytest.mark.parametrize("k,t", [((1, 0, 0), 1.0), ((2, 1, 0), 0.3), ((0, 0, 3), 0.1)])
def test_duhamel_plain_closed_form(grid8, k, t):
    lam = float(np.sum(np.square(k)))
    c = single_mode(grid8, k)
    tg = TimeGrid(t, 8, quad_order=16)
    out = duhamel("plain", lambda s: c, t, tg, grid8).coeffs[(1,) + k]
    assert abs(out - (1 - np.exp(-lam * t)) / lam) <= 1e-8


def test_duhamel_hess_against_adaptive_oracle(grid8):
    c = single_mode(grid8, (1, 2, 0), comp=0) + single_mode(grid8, (1, 2, 0), comp=1, amp=0.5j)
    tg = TimeGrid(0.7, 8, quad_order=16)
    forcing = lambda s: np.exp(-s) * c
    fast = duhamel(DuhamelKind.HESS, forcing, 0.7, tg, grid8).coeffs
    slow = brute_duhamel(DuhamelKind.HESS, forcing, 0.7, tol=1e-10, grid=grid8).coeffs
    assert np.max(np.abs(fast - slow)) <= 1e-8


def test_duhamel_linear(grid8, rng):
    tg = TimeGrid(0.2, 8)
    c = random_field(grid8, rng).coeffs
    f = lambda s: np.cos(3 * s) * c
    a = duhamel("curl", f, 0.2, tg, grid8).coeffs
    b = duhamel("curl", lambda s: 2.5 * f(s), 0.2, tg, grid8).coeffs
    assert np.array_equal(2.5 * a, b) or np.max(np.abs(2.5 * a - b)) <= 1e-15 * np.max(np.abs(b))


@pytest.mark.parametrize("kind", ["grad_proj", "curl"])
def test_duhamel_divergence_free_kinds(grid8, rng, kind):
    tg = TimeGrid(0.2, 8)
    shape = (3, 3) if kind == "grad_proj" else (3,)
    c = fft3(rng.standard_normal(shape + grid8.shape))
    out = duhamel(kind, lambda s: (1 + s) * c, 0.2, tg, grid8)
    assert grid8.max_divergence(out.coeffs) <= 1e-10
    assert out.hermitian_defect() < 1e-12


def test_plan_matches_callable_for_cubic_in_time(grid8, rng):
    # the plan interpolates cubically between slices, so a cubic forcing is exact
    times = np.linspace(0, 0.4, 9)
    c = random_field(grid8, rng).coeffs
    poly = lambda s: (1 - 2 * s + 3 * s**2 - s**3) * c
    plan = heat.get_plan(grid8, times, 16)
    d = plan.integrate(np.stack([poly(s) for s in times]))
    tg = TimeGrid(0.4, 9)
    for i in (1, 4, 8):
        ref = duhamel("plain", poly, times[i], tg, grid8).coeffs
        assert np.max(np.abs(d[i] - ref)) <= 1e-13
    mid = plan.evaluate(np.stack([poly(s) for s in times]), d, 0.23)
    ref = duhamel("plain", poly, 0.23, tg, grid8).coeffs
    assert np.max(np.abs(mid - ref)) <= 1e-13


def test_heat_plus_duhamel_solves_forced_heat_equation(grid8, rng):
    # v = heat(v0) + int F: check dv/dt - Lap v = F by centred differences
    c = random_field(grid8, rng, band=(1, 2)).coeffs
    v0 = random_field(grid8, rng, band=(1, 2)).coeffs
    F = lambda s: np.sin(2 * s) * c
    tg = TimeGrid(1.0, 11)
    lam = grid8.heat_rate

    def v(t):
        return np.exp(-lam * t) * v0 + duhamel("plain", F, t, tg, grid8).coeffs

    h = 1e-4
    for t in (0.25, 0.55):
        dv = (v(t + h) - v(t - h)) / (2 * h)
        resid = dv + lam * v(t) - F(t)
        assert np.max(np.abs(resid)) <= 1e-6 * np.max(np.abs(c))


def test_hall_operator_antisymmetric_and_vanishing_on_diagonal(grid8, rng):
    times = np.linspace(0, 0.1, 8)
    b1 = SpaceTimeField(grid8, times, np.stack([random_field(grid8, rng).coeffs * (1 + t) for t in times]))
    b2 = SpaceTimeField(grid8, times, np.stack([random_field(grid8, rng).coeffs * np.exp(-t) for t in times]))
    t12 = heat.hall_operator_T(b1, b2).coeffs
    t21 = heat.hall_operator_T(b2, b1).coeffs
    assert np.max(np.abs(t12 + t21)) <= 1e-14 * np.max(np.abs(t12))
    assert np.max(np.abs(heat.hall_operator_T(b1, b1).coeffs)) <= 1e-15


def test_hall_operator_against_composite_oracle(grid8):
    from hallmild.reference import direct_convolution

    times = np.linspace(0, 0.2, 9)
    a = single_mode(grid8, (1, 0, 0), comp=1)
    c = single_mode(grid8, (0, 1, 0), comp=2)
    b1 = SpaceTimeField(grid8, times, np.stack([a * (1 + s) for s in times]))
    b2 = SpaceTimeField(grid8, times, np.stack([c * (1 - s) for s in times]))
    fast = heat.hall_operator_T(b1, b2, t=0.2).coeffs
    cross = direct_convolution(grid8, a, c, "cross")
    slow = brute_duhamel("hess", lambda s: (1 + s) * (1 - s) * cross, 0.2, tol=1e-12, grid=grid8).coeffs
    assert np.max(np.abs(fast - slow)) <= 1e-8


def _stf(grid, times, coeffs):
    return SpaceTimeField(grid, times, np.stack([coeffs] * len(times)))


def test_mild_rhs_linear_parts(grid8, rng):
    times = np.linspace(0, 0.1, 8)
    u0 = random_field(grid8, rng, solenoidal=True)
    zero = SpaceTimeField.zeros(grid8, times)
    ru = heat.mild_rhs_u(zero, zero, u0, t=0.1)
    assert np.max(np.abs(ru.coeffs - heat_propagate(u0, 0.1).coeffs)) <= 1e-15
    rb = heat.mild_rhs_b(zero, zero, u0, t=0.07)
    assert np.max(np.abs(rb.coeffs - heat_propagate(u0, 0.07).coeffs)) <= 1e-15
    # b = 0 leaves only the heat term in the magnetic formula
    u = _stf(grid8, times, random_field(grid8, rng, solenoidal=True).coeffs)
    rb = heat.mild_rhs_b(u, zero, u0)
    assert np.max(np.abs(rb.coeffs[-1] - heat_propagate(u0, 0.1).coeffs)) <= 1e-15


def test_mild_rhs_outputs_solenoidal(grid8, rng):
    times = np.linspace(0, 0.1, 8)
    u = _stf(grid8, times, random_field(grid8, rng, solenoidal=True).coeffs)
    b = _stf(grid8, times, random_field(grid8, rng, solenoidal=True).coeffs)
    u0 = random_field(grid8, rng, solenoidal=True)
    for out in (heat.mild_rhs_u(u, b, u0), heat.mild_rhs_b(u, b, u0)):
        assert max(grid8.max_divergence(c) for c in out.coeffs) <= 1e-10


def test_mild_rhs_u_terms_against_oracle(grid8):
    # u0 = 0, u = 0, b a constant-in-time single mode: only the b (x) b term is nonzero
    times = np.linspace(0, 0.1, 8)
    bm = single_mode(grid8, (1, 1, 0), comp=2) + single_mode(grid8, (0, 1, 0), comp=0, amp=0.3)
    b = _stf(grid8, times, bm)
    zero = SpaceTimeField.zeros(grid8, times)
    parts = heat.mild_rhs_u(zero, b, np.zeros((3,) + grid8.shape, complex), terms=True)
    assert not np.any(parts["heat"]) and not np.any(parts["uu"])
    assert np.max(np.abs(parts["grad_b2"])) <= 1e-15
    from hallmild.reference import direct_convolution

    bb = direct_convolution(grid8, bm, bm, "tensor")
    slow = brute_duhamel("grad_proj", lambda s: bb, 0.1, tol=1e-12, grid=grid8).coeffs
    assert np.max(np.abs(parts["bb"] - slow)) <= 1e-10
    full = heat.mild_rhs_u(zero, b, np.zeros((3,) + grid8.shape, complex), t=0.1).coeffs
    assert np.max(np.abs(full - slow)) <= 1e-10


def test_nonlinear_forcing_zero_and_pair_mismatch(grid8):
    z = np.zeros((3,) + grid8.shape, complex)
    fu, fb = heat.nonlinear_forcing(grid8, z, z)
    assert not np.any(fu) and not np.any(fb)
    a = SpaceTimeField.zeros(grid8, np.linspace(0, 1, 8))
    b = SpaceTimeField.zeros(grid8, np.linspace(0, 2, 8))
    with pytest.raises(ValueError):
        heat.mild_rhs_u(a, b, z)


def test_recover_pressure_taylor_green(grid16):
    # for the TG velocity, p = (cos 2x + cos 2y)/16 * (cos 2z + 2)
    x, y, z = grid16.coordinates
    u = np.stack([np.sin(x) * np.cos(y) * np.cos(z), -np.cos(x) * np.sin(y) * np.cos(z), 0 * x])
    p = grid16.to_physical(heat.recover_pressure(grid16, fft3(u), np.zeros((3,) + grid16.shape, complex)))
    expect = (np.cos(2 * x) + np.cos(2 * y)) * (np.cos(2 * z) + 2) / 16
    expect -= expect.mean()
    assert np.max(np.abs(p - expect)) <= 1e-12
