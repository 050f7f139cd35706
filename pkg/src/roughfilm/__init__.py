"""Homogenized shape anisotropy and exchange of thin films with periodic rough surfaces."""

__version__ = "0.1.0"

from .anisotropy import AnisotropyTensor, EasyAxis, compute, compute_general, compute_parallel, easy_axis
from .cell_solver import ConvergenceError, ExchangeTensor, MeshParams, exchange_tensor, solve_cell
from .energy import EnergyParams, MagnetizationField, constant_minimizer, evaluate_E0
from .gamma_validator import EpsSweep, ValidatorResolution, finite_eps_energy, sweep
from .profiles import FilmGeometry, GeometryError, Profile, flat_slab, parallel_film
from .quadrature import CellRule, NonFiniteError, PlaneRule, integrate_plane, kernel_mass

__all__ = [
    "AnisotropyTensor", "CellRule", "ConvergenceError", "EasyAxis", "EnergyParams", "EpsSweep",
    "ExchangeTensor", "FilmGeometry", "GeometryError", "MagnetizationField", "MeshParams",
    "NonFiniteError", "PlaneRule", "Profile", "ValidatorResolution", "compute", "compute_general",
    "compute_parallel", "constant_minimizer", "easy_axis", "evaluate_E0", "exchange_tensor",
    "finite_eps_energy", "flat_slab", "integrate_plane", "kernel_mass", "parallel_film",
    "solve_cell", "sweep",
]
