import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hallmild.spectral import Grid, SpectralVectorField, fft3

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def grid8():
    return Grid(8)


@pytest.fixture
def grid16():
    return Grid(16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_field(grid, rng, components=3, solenoidal=False, band=None):
    """Real random field as spectral coefficients, optionally projected and band-limited."""
    c = fft3(rng.standard_normal((components,) + grid.shape))
    if band is not None:
        kk = np.sqrt(grid.ksq_int)
        c = c * ((kk >= band[0]) & (kk <= band[1]))
    c[..., 0, 0, 0] = 0.0
    if solenoidal:
        c = grid.project(c)
    return SpectralVectorField(grid, c, is_solenoidal=solenoidal)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
