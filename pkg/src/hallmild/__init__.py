"""Picard iterates of the mild Hall-MHD system on a periodic box, measured in
discrete anisotropic Besov norms."""

__version__ = "0.1.0"

from .spectral import Grid, SpaceTimeField, SpectralVectorField, PhysicalVectorField
from .heat import DuhamelKind, TimeGrid, duhamel, heat_propagate
from .besov import BesovSpec, BesovReport, besov_norm_anisotropic, besov_norm_spatial
from .picard import InitialData, SolverConfig, make_initial_data, run
from .reference import ImexConfig, cross_validate, imex_solve

__all__ = [
    "__version__",
    "Grid",
    "SpaceTimeField",
    "SpectralVectorField",
    "PhysicalVectorField",
    "DuhamelKind",
    "TimeGrid",
    "duhamel",
    "heat_propagate",
    "BesovSpec",
    "BesovReport",
    "besov_norm_anisotropic",
    "besov_norm_spatial",
    "InitialData",
    "SolverConfig",
    "make_initial_data",
    "run",
    "ImexConfig",
    "cross_validate",
    "imex_solve",
]
