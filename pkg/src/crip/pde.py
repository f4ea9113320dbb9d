"""Reaction-diffusion solver for the probe-driven polarisation field.

The field obeys

    dP/dt = beta lap(P) - (u + Gamma_SL) P + u

on a finite-volume grid.  Writing V for cell volumes and K for the
(symmetric, positive semi-definite) conductance matrix, the semi-discrete
system is V dP/dt = -beta K P + V (u (1 - P) - Gamma_SL P).  Every implicit
solve is therefore with an SPD matrix of the form diag(D) + a K.

Two time schemes are offered.  ``StrangSplit`` (half diffusion, exact
reaction, half diffusion) is second order once dt resolves the pumping
rate near the probe.  ``ImplicitEuler`` solves the whole linear system per
step; it is first order but monotone, and its fixed point is exactly the
steady state, which makes it the robust choice when u dt >> 1.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy.linalg import solve_banded
from scipy.sparse.linalg import LinearOperator, cg

from . import kernels
from .grids import CartesianGrid, PolarizationField, RadialGrid, init_field
from .spins import (
    CouplingModel,
    NvProbe,
    TargetEnsemble,
    cooling_coefficient,
    hyperfine_coupling,
    shell_integral_a2,
)

DEBUG = os.environ.get("CRIP_DEBUG", "") not in ("", "0")

SCHEMES = ("StrangSplit", "ImplicitEuler")
BOUNDARIES = ("ZeroFlux", "FixedZero")


class SolverError(RuntimeError):
    """Linear solve failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (relative residual {residual:.3e})")
        self.residual = residual


class DegenerateSteadyStateWarning(UserWarning):
    pass


class BoundaryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1.0
    scheme: str = "StrangSplit"
    boundary: Mapping[str, str] = field(default_factory=dict)
    steady_tolerance: float = 1e-8
    max_iterations: int = 20000
    linear_tolerance: float = 1e-13
    dt_growth: float = 1.0
    dt_max: float = math.inf

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not 0 < self.steady_tolerance < 1:
            raise ValueError("steady_tolerance must lie in (0, 1)")
        if self.dt_growth < 1:
            raise ValueError("dt_growth must be >= 1")
        for face, kind in self.boundary.items():
            if kind not in BOUNDARIES:
                raise ValueError(f"boundary {face!r}: {kind!r} not in {BOUNDARIES}")

    def boundary_for(self, name: str) -> str:
        return self.boundary.get(name, "ZeroFlux")


# --- diffusion operators ---------------------------------------------------

class _RadialOperator:
    def __init__(self, grid: RadialGrid, config: SolverConfig):
        self.grid = grid
        f, c = grid.faces, grid.centers
        areas = 4.0 * math.pi * f ** 2
        g = areas[1:-1] / np.diff(c)
        self.off = -g
        diag = np.zeros(grid.n_cells)
        diag[:-1] += g
        diag[1:] += g
        self.dirichlet = tuple(config.boundary_for(n) == "FixedZero" for n in grid.boundary_names)
        if self.dirichlet[0]:
            diag[0] += areas[0] / (c[0] - f[0])
        if self.dirichlet[1]:
            diag[-1] += areas[-1] / (f[-1] - c[-1])
        self.diag = diag

    def apply(self, p):
        out = self.diag * p
        out[:-1] += self.off * p[1:]
        out[1:] += self.off * p[:-1]
        return out

    def solve(self, d, a, b, tol, maxiter, x0=None):
        ab = np.zeros((3, d.size))
        ab[0, 1:] = a * self.off
        ab[1] = d + a * self.diag
        ab[2, :-1] = a * self.off
        return solve_banded((1, 1), ab, b)


class _CartesianOperator:
    def __init__(self, grid: CartesianGrid, config: SolverConfig):
        self.grid = grid
        self.h = grid.cell
        self.active = np.ascontiguousarray(grid.active, dtype=np.uint8)
        self.dirichlet = np.array(
            [config.boundary_for(n) == "FixedZero" for n in grid.boundary_names], dtype=np.int32)
        act = grid.active
        diag = np.zeros(grid.shape)
        for axis in range(3):
            n = grid.shape[axis]
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[axis] = slice(0, n - 1)
            hi[axis] = slice(1, n)
            link = act[tuple(lo)] & act[tuple(hi)]
            diag[tuple(lo)] += link
            diag[tuple(hi)] += link
            for side, idx in ((0, 0), (1, n - 1)):
                if self.dirichlet[2 * axis + side]:
                    s = [slice(None)] * 3
                    s[axis] = idx
                    diag[tuple(s)] += 2.0
        self.diag = np.where(act, diag * self.h, 0.0)
        self._buf = np.zeros(grid.shape)

    def apply(self, p):
        p = np.ascontiguousarray(p, dtype=float).reshape(self.grid.shape)
        out = np.empty(self.grid.shape)
        kernels.neg_laplacian_3d(p, self.active, self.dirichlet, out)
        out *= self.h
        return out

    def solve(self, d, a, b, tol, maxiter, x0=None):
        shape = self.grid.shape
        act = self.grid.active
        d = np.where(act, d, 1.0).ravel()
        b = np.where(act, b, 0.0).ravel()
        n = d.size
        buf = self._buf

        def matvec(x):
            kernels.neg_laplacian_3d(np.ascontiguousarray(x.reshape(shape)), self.active, self.dirichlet, buf)
            return d * x + (a * self.h) * buf.ravel()

        A = LinearOperator((n, n), matvec=matvec, dtype=float)
        inv_diag = 1.0 / (d + a * self.diag.ravel())
        M = LinearOperator((n, n), matvec=lambda x: inv_diag * x, dtype=float)
        x0 = None if x0 is None else np.where(act, x0, 0.0).ravel()
        x, info = cg(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, M=M)
        if info != 0:
            bnorm = np.linalg.norm(b)
            res = np.linalg.norm(b - A.matvec(x)) / (bnorm if bnorm > 0 else 1.0)
            raise SolverError("conjugate gradient did not converge", res)
        return np.where(act, x.reshape(shape), 0.0)


def make_operator(grid, config: SolverConfig):
    for name in config.boundary:
        if name not in grid.boundary_names:
            raise ValueError(f"unknown boundary face {name!r} for {type(grid).__name__}")
    if isinstance(grid, RadialGrid):
        return _RadialOperator(grid, config)
    return _CartesianOperator(grid, config)


# --- cell data -------------------------------------------------------------

def cell_cooling(grid, probe: NvProbe, model: CouplingModel) -> np.ndarray:
    """Per-cell pumping rate u.  Radial cells carry the exact shell average of
    the angle-averaged rate; Cartesian cells carry the centre value."""
    if isinstance(grid, RadialGrid):
        a2 = shell_integral_a2(model, grid.faces[:-1], grid.faces[1:])
        return a2 / (2.0 * probe.dephasing_rate * grid.volumes)
    u = cooling_coefficient(model, probe, grid.centers)
    return np.where(grid.active, u, 0.0)


def cell_a2_weight(grid, probe: NvProbe, model: CouplingModel) -> np.ndarray:
    """Per-cell integral of A^2 over the cell volume (rad^2/s^2 nm^3)."""
    if isinstance(grid, RadialGrid):
        return shell_integral_a2(model, grid.faces[:-1], grid.faces[1:])
    A = hyperfine_coupling(model, grid.centers, probe.axis_array)
    return np.where(grid.active, A * A * grid.cell ** 3, 0.0)


# --- elementary updates ----------------------------------------------------

def reaction_update(field: PolarizationField, u_field, gamma_sl: float, dt: float) -> PolarizationField:
    """Exact local update of dP/dt = u (1 - P) - Gamma_SL P over ``dt`` (in place)."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    u = np.ascontiguousarray(np.broadcast_to(u_field, field.values.shape), dtype=float)
    flat = field.values.reshape(-1)
    kernels.reaction_update(flat, u.reshape(-1), float(gamma_sl), float(dt))
    return field


def _implicit_diffusion(op, volumes, active, p, beta, dt, theta, tol, maxiter):
    if theta == 1.0:
        rhs = volumes * p
    else:
        rhs = volumes * p - (1.0 - theta) * dt * beta * op.apply(p)
    return op.solve(volumes, theta * dt * beta, rhs, tol, maxiter)


def diffusion_update(field: PolarizationField, beta: float, dt: float, config: SolverConfig,
                     operator=None) -> PolarizationField:
    """One implicit diffusion step over ``dt`` (in place).

    StrangSplit uses Crank-Nicolson; if that leaves [0, 1] (possible for
    large dt beta / h^2) the step is redone with backward Euler, whose
    M-matrix keeps the maximum principle.  Both conserve the volume
    integral with zero-flux walls.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if beta == 0:
        return field
    op = operator if operator is not None else make_operator(field.grid, config)
    vol = field.grid.volumes
    act = field.grid.active
    p = field.values
    tol, maxiter = config.linear_tolerance, config.max_iterations
    if config.scheme == "StrangSplit":
        new = _implicit_diffusion(op, vol, act, p, beta, dt, 0.5, tol, maxiter)
        lo, hi = p[act].min(), p[act].max()
        slack = 1e-12
        if new[act].min() < min(lo, 0.0) - slack or new[act].max() > max(hi, 1.0) + slack:
            new = _implicit_diffusion(op, vol, act, p, beta, dt, 1.0, tol, maxiter)
    else:
        new = _implicit_diffusion(op, vol, act, p, beta, dt, 1.0, tol, maxiter)
    field.values = np.ascontiguousarray(np.where(act, new, 0.0))
    return field


# --- the full problem ------------------------------------------------------

class CripProblem:
    """Bundles a grid with the physics so per-cell data is computed once.

    ``duty`` multiplies the pumping rate to account for the probe spending
    part of each cycle in optical re-initialisation.
    """

    def __init__(self, grid, ensemble: TargetEnsemble, probe: NvProbe, model: CouplingModel,
                 config: SolverConfig | None = None, duty: float = 1.0):
        if not 0 < duty <= 1:
            raise ValueError("duty factor must lie in (0, 1]")
        self.grid = grid
        self.ensemble = ensemble
        self.probe = probe
        self.model = model
        self.config = config or SolverConfig()
        self.duty = duty
        self.u = np.ascontiguousarray(duty * cell_cooling(grid, probe, model))
        self.a2_weight = cell_a2_weight(grid, probe, model)
        self.operator = make_operator(grid, self.config)

    @property
    def beta(self) -> float:
        return self.ensemble.diffusion_coefficient

    @property
    def gamma_sl(self) -> float:
        return self.ensemble.spin_lattice_rate

    def init_field(self, P0: float = 0.0) -> PolarizationField:
        return init_field(self.grid, P0)

    def suggest_dt(self) -> float:
        """0.1 / max(u + Gamma_SL), capped at 10 h^2 / (6 beta)."""
        rate = float(np.max(self.u)) + self.gamma_sl
        dt = 0.1 / rate if rate > 0 else math.inf
        if self.beta > 0:
            if isinstance(self.grid, RadialGrid):
                h = float(np.min(np.diff(self.grid.faces)))
            else:
                h = self.grid.cell
            dt = min(dt, 10.0 * h * h / (6.0 * self.beta))
        return dt if math.isfinite(dt) else self.config.dt

    def step(self, field: PolarizationField, dt: float | None = None) -> PolarizationField:
        """Advance ``field`` in place by ``dt`` (default ``config.dt``)."""
        dt = self.config.dt if dt is None else dt
        cfg = self.config
        if cfg.scheme == "StrangSplit":
            diffusion_update(field, self.beta, 0.5 * dt, cfg, self.operator)
            reaction_update(field, self.u, self.gamma_sl, dt)
            diffusion_update(field, self.beta, 0.5 * dt, cfg, self.operator)
        elif self.beta == 0:
            reaction_update(field, self.u, self.gamma_sl, dt)
        else:
            # unsplit backward Euler: (V/dt + beta K + V(u + G)) P' = V (P/dt + u)
            vol = self.grid.volumes
            d = vol * (1.0 / dt + self.u + self.gamma_sl)
            b = vol * (field.values / dt + self.u)
            new = self.operator.solve(d, self.beta, b, cfg.linear_tolerance, cfg.max_iterations,
                                      x0=field.values)
            field.values = np.ascontiguousarray(np.where(self.grid.active, new, 0.0))
        _enforce_bounds(field)
        field.time += dt
        return field

    def evolve(self, field: PolarizationField, t_end: float,
               observers: Iterable[Callable[[PolarizationField], None]] = (),
               observe_at: Iterable[float] = ()) -> PolarizationField:
        """Step until ``t_end``; each observer receives a snapshot copy at
        every time in ``observe_at`` (default: ``t_end`` only)."""
        if t_end < field.time:
            raise ValueError("t_end precedes the field time")
        observers = list(observers)
        stops = sorted({float(t) for t in observe_at if field.time < t <= t_end} | {float(t_end)})
        requested = set(float(t) for t in observe_at) or {float(t_end)}
        dt = self.config.dt
        for stop in stops:
            while stop - field.time > 1e-12 * max(1.0, stop):
                h = min(dt, stop - field.time)
                self.step(field, h)
                if h == dt:
                    dt = min(dt * self.config.dt_growth, self.config.dt_max)
            field.time = stop
            if stop in requested:
                for obs in observers:
                    obs(field.copy())
        return field

    def steady_state(self) -> PolarizationField:
        """Solve (beta K + V (u + Gamma_SL)) P = V u."""
        grid, cfg = self.grid, self.config
        vol = grid.volumes
        act = grid.active
        has_sink = self.gamma_sl > 0 or any(
            cfg.boundary_for(n) == "FixedZero" for n in grid.boundary_names)
        if not has_sink:
            warnings.warn("no spin-lattice relaxation and no absorbing boundary: steady state is "
                          "P = 1 wherever pumping reaches", DegenerateSteadyStateWarning, stacklevel=2)
            if self.beta > 0 and np.any(self.u[act] > 0):
                values = np.where(act, 1.0, 0.0)
            else:
                values = np.where(act & (self.u > 0), 1.0, 0.0)
            return PolarizationField(grid, values, math.inf)
        d = vol * (self.u + self.gamma_sl)
        b = vol * self.u
        if self.beta == 0:
            with np.errstate(invalid="ignore", divide="ignore"):
                values = np.where(d > 0, b / np.where(d > 0, d, 1.0), 0.0)
        else:
            values = self.operator.solve(d, self.beta, b, cfg.steady_tolerance, cfg.max_iterations)
        values = np.where(act, values, 0.0)
        out = PolarizationField(grid, values, math.inf)
        _enforce_bounds(out)
        self.check_far_boundary(out)
        return out

    def check_far_boundary(self, field: PolarizationField, ratio: float = 1e-3) -> bool:
        """Warn if the gradient next to zero-flux outer walls is not small
        compared with the peak gradient.  Returns True when the check passes."""
        grid = self.grid
        p = field.values
        if isinstance(grid, RadialGrid):
            if self.config.boundary_for("outer") != "ZeroFlux":
                return True
            grad = np.abs(np.diff(p)) / np.diff(grid.centers)
            edge, peak = grad[-1], grad.max()
        else:
            grads = np.gradient(np.where(grid.active, p, np.nan), grid.cell)
            mag = np.sqrt(sum(np.nan_to_num(g) ** 2 for g in grads))
            edge = 0.0
            for axis in range(3):
                for side, idx, sign in ((0, 1, -1), (1, -2, 1)):
                    name = grid.boundary_names[2 * axis + side]
                    if self.config.boundary_for(name) != "ZeroFlux":
                        continue
                    s = [slice(None)] * 3
                    s[axis] = idx
                    s = tuple(s)
                    # faces lying on a physical interface are not truncation walls
                    ghost = grid.centers[s].copy()
                    ghost[..., axis] += sign * 2.0 * grid.cell
                    open_face = self.ensemble.geometry.contains(ghost, self.probe.depth)
                    if np.any(open_face):
                        edge = max(edge, float(np.max(mag[s][open_face])))
            peak = float(np.max(mag))
        if peak > 0 and edge > ratio * peak:
            warnings.warn(f"polarisation gradient at the outer boundary is {edge / peak:.1e} of the "
                          "peak gradient; consider enlarging the domain", BoundaryWarning, stacklevel=2)
            return False
        return True


def _enforce_bounds(field: PolarizationField, tol: float = 1e-9):
    v = field.values
    if DEBUG:
        assert v.min() >= -tol and v.max() <= 1 + tol, "polarisation left [0, 1]"
    np.clip(v, 0.0, 1.0, out=v)


def step(field, ensemble, probe, model, config, problem: CripProblem | None = None):
    problem = problem or CripProblem(field.grid, ensemble, probe, model, config)
    return problem.step(field)


def evolve(field, ensemble, probe, model, config, t_end, observers=(), observe_at=(), duty=1.0):
    problem = CripProblem(field.grid, ensemble, probe, model, config, duty)
    return problem.evolve(field, t_end, observers, observe_at)


def steady_state(ensemble, probe, model, grid, config, duty=1.0) -> PolarizationField:
    return CripProblem(grid, ensemble, probe, model, config, duty).steady_state()
