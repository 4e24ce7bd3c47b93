import math

import numpy as np
import pytest

from hallmild import battery
from hallmild.spectral import Grid, SpaceTimeField, fft3


def _smooth_pair(grid, times):
    x, y, z = grid.coordinates
    c0 = fft3(np.exp(-((x - np.pi) ** 2 + (y - np.pi) ** 2 + (z - np.pi) ** 2)))
    c0 = c0 * grid.dealias_mask
    c0[0, 0, 0] = 0
    f = SpaceTimeField(grid, times, np.stack([np.cos(t) * c0 for t in times])[:, None])
    return f, f * 0.5


def test_small_corpus_warns():
    corpus = battery.make_corpus(8, seed=1, n=8, n_t=8)
    with pytest.warns(UserWarning, match="insufficient calibration samples"):
        rep = battery.estimate_battery(corpus, names=["sup-embedding"])
    assert rep.warnings and rep.n_samples == 8


def test_ratio_conventions():
    assert battery._ratio(0.0, 0.0) == (0.0, False)
    r, bad = battery._ratio(1.0, 0.0)
    assert math.isinf(r) and bad
    assert battery._ratio(2.0, 4.0) == (0.5, False)


def test_zero_pair_is_not_a_violation():
    g = Grid(8)
    times = np.linspace(0, 1, 8)
    z = SpaceTimeField(g, times, np.zeros((8, 1) + g.shape, complex))
    f, h = _smooth_pair(g, times)
    with pytest.warns(UserWarning):
        rep = battery.estimate_battery([(f, h), (z, z), (f, h), (z, z)], names=["sup-embedding"])
    res = rep.results["sup-embedding"]
    assert res.violations == 0 and res.degenerate == 0 and res.passed


def test_degenerate_pair_counts_as_violation(monkeypatch):
    g = Grid(8)
    times = np.linspace(0, 1, 8)
    f, h = _smooth_pair(g, times)
    desc, lhs, _ = battery.INEQUALITIES["sup-embedding"]
    monkeypatch.setitem(battery.INEQUALITIES, "broken", (desc, lhs, lambda a, b: 0.0))
    with pytest.warns(UserWarning):
        rep = battery.estimate_battery([(f, h)] * 4, names=["broken"])
    assert rep.results["broken"].degenerate == 4
    assert not rep.results["broken"].passed and not rep.passed


def test_sup_embedding_finite_for_bump():
    g = Grid(16)
    f, h = _smooth_pair(g, np.linspace(0, 1, 16))
    _, lhs, rhs = battery.INEQUALITIES["sup-embedding"]
    ratio = lhs(f, h) / rhs(f, h)
    assert 0 < ratio < math.inf


def test_derivative_lifting_ratio_is_flat_across_shells():
    # on a single spatial shell |grad| acts like |k| ~ 2^j, which the lift by one
    # derivative absorbs, so the ratio stays bounded as the shell moves out
    g = Grid(32)
    times = np.linspace(0, 1, 16)
    _, lhs, rhs = battery.INEQUALITIES["derivative-lifting"]
    ratios = []
    for k in (2, 4, 8):
        c = np.zeros(g.shape, complex)
        c[k, 0, 0] = c[-k, 0, 0] = 0.5
        f = SpaceTimeField(g, times, np.stack([np.exp(-t) * c for t in times])[:, None])
        ratios.append(lhs(f, f) / rhs(f, f))
    assert max(ratios) / min(ratios) < 4


def test_corpus_shape_and_scaling():
    corpus = battery.make_corpus(6, seed=3, n=8, n_t=8)
    assert len(corpus) == 6
    f, _ = corpus[0]
    from hallmild.besov import lp_norm

    # sup normalization: amplitude lies in its decade
    assert 1e-2 <= lp_norm(f, math.inf) <= 1e-1 + 1e-12
    with pytest.raises(ValueError):
        battery.make_corpus(1)


def test_deterministic():
    a = battery.make_corpus(4, seed=5, n=8, n_t=8)
    b = battery.make_corpus(4, seed=5, n=8, n_t=8)
    for (f1, g1), (f2, g2) in zip(a, b):
        assert np.array_equal(f1.coeffs, f2.coeffs) and np.array_equal(g1.coeffs, g2.coeffs)
    with pytest.warns(UserWarning):
        r1 = battery.estimate_battery(a, names=["product-holder"]).to_dict()
    with pytest.warns(UserWarning):
        r2 = battery.estimate_battery(b, names=["product-holder"]).to_dict()
    assert r1 == r2
