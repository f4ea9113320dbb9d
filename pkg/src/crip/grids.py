"""Finite-volume grids and the polarisation field that lives on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .spins import NvProbe, TargetEnsemble


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Spherical shells around the probe, for angle-averaged problems."""

    r_min: float
    r_max: float
    n_cells: int
    spacing: str = "log"

    boundary_names = ("inner", "outer")

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ValueError("radial grid needs 0 < r_min < r_max")
        if self.n_cells < 8:
            raise ValueError("radial grid needs at least 8 cells")
        if self.spacing not in ("linear", "log"):
            raise ValueError("spacing must be 'linear' or 'log'")

    @cached_property
    def faces(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.r_min, self.r_max, self.n_cells + 1)
        return np.linspace(self.r_min, self.r_max, self.n_cells + 1)

    @cached_property
    def centers(self) -> np.ndarray:
        f = self.faces
        if self.spacing == "log":
            return np.sqrt(f[:-1] * f[1:])
        return 0.5 * (f[:-1] + f[1:])

    @cached_property
    def volumes(self) -> np.ndarray:
        f = self.faces
        return 4.0 / 3.0 * math.pi * (f[1:] ** 3 - f[:-1] ** 3)

    @property
    def shape(self) -> tuple[int]:
        return (self.n_cells,)

    @property
    def active(self) -> np.ndarray:
        return np.ones(self.n_cells, dtype=bool)

    @property
    def radii(self) -> np.ndarray:
        return self.centers


@dataclass(frozen=True, eq=False)
class CartesianGrid:
    """Uniform box of cubic cells, NV at the origin.

    ``active`` marks cells that hold target spins; everything else is
    excluded and sees zero-flux walls.
    """

    lower: tuple[float, float, float]
    upper: tuple[float, float, float]
    cell: float
    active_mask: np.ndarray | None = field(default=None, repr=False)

    boundary_names = ("x-", "x+", "y-", "y+", "z-", "z+")

    def __post_init__(self):
        if not self.cell > 0:
            raise ValueError("cell size must be > 0")
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        shape = []
        for lo, hi in zip(lower, upper):
            n = (hi - lo) / self.cell
            if hi <= lo or abs(n - round(n)) > 1e-6 * max(1.0, n):
                raise ValueError("box extent must be a positive multiple of the cell size")
            shape.append(int(round(n)))
        object.__setattr__(self, "_shape", tuple(shape))
        if self.active_mask is not None:
            m = np.ascontiguousarray(self.active_mask, dtype=bool)
            if m.shape != self.shape:
                raise ValueError("active mask shape does not match the grid")
            if not m.any():
                raise ValueError("grid has no active cells")
            object.__setattr__(self, "active_mask", m)

    @classmethod
    def for_ensemble(cls, lower, upper, cell: float, ensemble: TargetEnsemble,
                     probe: NvProbe, r_min: float = 0.0) -> "CartesianGrid":
        """Box whose active cells are those inside the ensemble geometry and
        at least ``r_min`` away from the probe."""
        g = cls(lower, upper, cell)
        c = g.centers
        mask = ensemble.geometry.contains(c, probe.depth) & (np.linalg.norm(c, axis=-1) >= r_min)
        return cls(g.lower, g.upper, cell, mask)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self._shape

    @cached_property
    def axes(self) -> list[np.ndarray]:
        return [lo + self.cell * (np.arange(n) + 0.5) for lo, n in zip(self.lower, self.shape)]

    @cached_property
    def centers(self) -> np.ndarray:
        X, Y, Z = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([X, Y, Z], axis=-1)

    @cached_property
    def active(self) -> np.ndarray:
        if self.active_mask is None:
            return np.ones(self.shape, dtype=bool)
        return self.active_mask

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.where(self.active, self.cell ** 3, 0.0)

    @cached_property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.centers, axis=-1)


Grid = RadialGrid | CartesianGrid


@dataclass(eq=False)
class PolarizationField:
    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError("field values do not match the grid shape")
        if self.time < 0:
            raise ValueError("time must be >= 0")

    def copy(self) -> "PolarizationField":
        return PolarizationField(self.grid, self.values.copy(), self.time)

    def mean(self) -> float:
        """Volume-weighted mean polarisation over active cells."""
        v = self.grid.volumes
        return float(np.sum(v * self.values) / np.sum(v))

    def total(self) -> float:
        """Volume integral of P (nm^3)."""
        return float(np.sum(self.grid.volumes * self.values))


def init_field(grid: Grid, P0: float = 0.0) -> PolarizationField:
    if not 0.0 <= P0 <= 1.0:
        raise ValueError("initial polarisation must lie in [0, 1]")
    values = np.where(grid.active, float(P0), 0.0)
    return PolarizationField(grid, values, 0.0)


def radial_profile(field: PolarizationField, edges=None) -> tuple[np.ndarray, np.ndarray]:
    """(r, <P>(r)).  Radial grids return their cells; Cartesian fields are
    volume-averaged over spherical shells given by ``edges``."""
    grid = field.grid
    if isinstance(grid, RadialGrid):
        return grid.centers.copy(), field.values.copy()
    r = grid.radii[grid.active]
    p = field.values[grid.active]
    if edges is None:
        edges = np.arange(0.0, r.max() + grid.cell, grid.cell)
    edges = np.asarray(edges, dtype=float)
    idx = np.digitize(r, edges) - 1
    ok = (idx >= 0) & (idx < len(edges) - 1)
    counts = np.bincount(idx[ok], minlength=len(edges) - 1)
    sums = np.bincount(idx[ok], weights=p[ok], minlength=len(edges) - 1)
    keep = counts > 0
    mids = 0.5 * (edges[:-1] + edges[1:])
    return mids[keep], sums[keep] / counts[keep]
