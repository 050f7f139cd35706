"""Limiting energy of magnetization fields sampled on the film plane.

The field is stored at cell centres of a uniform grid of square cells of
side ``h`` covering omega, so a field of shape ``(Nx, Ny, 3)`` needs
``Nx h`` and ``Ny h`` to match the sides of omega.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .anisotropy import AnisotropyTensor, easy_axis
from .cell_solver import ExchangeTensor
from .profiles import FilmGeometry

UNIT_TOL = 1e-10


@dataclass(frozen=True)
class EnergyParams:
    d: float
    geom: FilmGeometry

    def __post_init__(self):
        if not (np.isfinite(self.d) and self.d > 0):
            raise ValueError(f"exchange constant d must be positive, got {self.d}")


@dataclass(frozen=True, eq=False)
class MagnetizationField:
    """Unit vectors at the cell centres of a square grid with spacing ``spacing``."""

    grid: np.ndarray
    spacing: float

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 3 or grid.shape[2] != 3 or min(grid.shape[:2]) < 2:
            raise ValueError(f"field grid must have shape (Nx, Ny, 3) with Nx, Ny >= 2, got {grid.shape}")
        if not (self.spacing > 0):
            raise ValueError("grid spacing must be positive")
        norms = np.linalg.norm(grid, axis=2)
        bad = np.abs(norms - 1.0) > UNIT_TOL
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise ValueError(f"|m| = {norms[i, j]:.12g} at node ({i}, {j}) is not 1")
        object.__setattr__(self, "grid", grid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape[:2]

    @classmethod
    def constant(cls, m, geom: FilmGeometry, n: int = 16) -> "MagnetizationField":
        """Constant field on ``n`` cells along the first side of omega."""
        h, (nx, ny) = _grid_for(geom, n)
        m = np.asarray(m, dtype=float)
        return cls(np.broadcast_to(m / np.linalg.norm(m), (nx, ny, 3)).copy(), h)

    @classmethod
    def from_function(cls, fn, geom: FilmGeometry, n: int = 16) -> "MagnetizationField":
        """Sample ``fn(points) -> (..., 3)`` at the cell centres."""
        h, (nx, ny) = _grid_for(geom, n)
        x0, _, y0, _ = geom.omega
        xs = x0 + h * (np.arange(nx) + 0.5)
        ys = y0 + h * (np.arange(ny) + 0.5)
        pts = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
        return cls(np.asarray(fn(pts), dtype=float), h)

    @classmethod
    def from_csv(cls, path, geom: FilmGeometry) -> "MagnetizationField":
        """Read rows ``x_index, y_index, m1, m2, m3``; the spacing follows from omega."""
        rows = []
        with open(Path(path), newline="", encoding="utf-8") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].strip().startswith("#"):
                    continue
                try:
                    rows.append([float(v) for v in rec])
                except ValueError:
                    if rows:
                        raise
                    continue  # header line
        data = np.asarray(rows)
        if data.ndim != 2 or data.shape[1] != 5:
            raise ValueError("field CSV needs five columns: x_index, y_index, m1, m2, m3")
        idx = data[:, :2].astype(int)
        if np.any(idx != data[:, :2]) or np.any(idx < 0):
            raise ValueError("field CSV indices must be nonnegative integers")
        nx, ny = idx.max(axis=0) + 1
        grid = np.full((nx, ny, 3), np.nan)
        grid[idx[:, 0], idx[:, 1]] = data[:, 2:]
        if np.isnan(grid).any() or len(data) != nx * ny:
            raise ValueError("field CSV does not cover a complete grid exactly once")
        x0, x1, _, _ = geom.omega
        return cls(grid, (x1 - x0) / nx)


def _grid_for(geom, n):
    x0, x1, y0, y1 = geom.omega
    h = (x1 - x0) / n
    ny = (y1 - y0) / h
    if abs(ny - round(ny)) > 1e-9 * max(1.0, ny):
        raise ValueError("omega's sides are not commensurate with the requested grid")
    return h, (n, int(round(ny)))


def _check_shape(field: MagnetizationField, geom: FilmGeometry):
    x0, x1, y0, y1 = geom.omega
    nx, ny = field.shape
    h = field.spacing
    for n, length, axis in ((nx, x1 - x0, "x1"), (ny, y1 - y0, "x2")):
        if abs(n * h - length) > 1e-9 * length:
            raise ValueError(f"field covers {n} x {h:g} = {n * h:g} along {axis}, omega has {length:g}")


@dataclass(frozen=True)
class EnergyReport:
    exchange_term: float
    anisotropy_term: float

    @property
    def total(self) -> float:
        return self.exchange_term + self.anisotropy_term

    def to_dict(self) -> dict:
        return {"exchange_term": self.exchange_term, "anisotropy_term": self.anisotropy_term,
                "total": self.total}


def field_gradient(field: MagnetizationField) -> np.ndarray:
    """``(Nx, Ny, 3, 2)`` array of in-plane derivatives of each component.

    Central differences inside, first-order one-sided differences on the
    boundary of omega.
    """
    g = field.grid
    h = field.spacing
    return np.stack([np.gradient(g, h, axis=0), np.gradient(g, h, axis=1)], axis=-1)


def energy_terms(field: MagnetizationField, G: ExchangeTensor, A: AnisotropyTensor,
                 params: EnergyParams) -> EnergyReport:
    _check_shape(field, params.geom)
    area = field.spacing ** 2
    grad = field_gradient(field)
    exchange = params.d ** 2 * area * float(np.einsum("xyia,ab,xyib->", grad, np.asarray(G.G), grad))
    aniso = area * float(np.einsum("xyi,ij,xyj->", field.grid, A.sym, field.grid))
    return EnergyReport(exchange, aniso)


def evaluate_E0(field: MagnetizationField, G: ExchangeTensor, A: AnisotropyTensor,
                params: EnergyParams) -> float:
    """``d^2 sum h^2 sum_i G grad m_i . grad m_i + sum h^2 A.sym m . m``."""
    return energy_terms(field, G, A, params).total


def constant_minimizer(G: ExchangeTensor | None, A: AnisotropyTensor, params: EnergyParams):
    """Easy axis and the energy ``|omega| min A.sym m . m`` of the constant field along it.

    Constant fields carry no exchange energy and the exchange term is
    nonnegative, so this is the minimum over all fields.
    """
    ax = easy_axis(A)
    return ax.axis, params.geom.area * ax.value
