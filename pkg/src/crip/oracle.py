"""Explicit-spin cross-check of the continuum model.

A finite set of randomly placed spins is evolved under the same rate
equations (optionally with pairwise flip-flop exchange) and observables are
estimated by averaging over random placements.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .spins import (
    CouplingModel,
    NvProbe,
    SpinSpecies,
    TargetEnsemble,
    cooling_coefficient,
    dipolar_prefactor,
    hyperfine_coupling,
)


class StepSizeError(RuntimeError):
    pass


@dataclass(frozen=True)
class Box:
    lower: tuple[float, float, float]
    upper: tuple[float, float, float]

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def draw(self, rng, n):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        return lo + (hi - lo) * rng.random((n, 3))


@dataclass(frozen=True)
class Shell:
    """Spherical shell r_inner <= |R| <= r_outer about the probe."""

    r_inner: float
    r_outer: float

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * (self.r_outer ** 3 - self.r_inner ** 3)

    def draw(self, rng, n):
        u = rng.random(n)
        r = np.cbrt(self.r_inner ** 3 + u * (self.r_outer ** 3 - self.r_inner ** 3))
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return r[:, None] * v


@dataclass(eq=False)
class DiscreteEnsemble:
    positions: np.ndarray  # (N, 3) nm
    polarizations: np.ndarray  # (N,)
    rng_seed: int = 0
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=float).reshape(-1, 3)
        self.polarizations = np.ascontiguousarray(self.polarizations, dtype=float)
        if self.polarizations.shape != (self.positions.shape[0],):
            raise ValueError("one polarisation per spin required")
        if np.any(self.polarizations < 0) or np.any(self.polarizations > 1):
            raise ValueError("polarisations must lie in [0, 1]")

    def __len__(self):
        return self.positions.shape[0]

    def copy(self) -> "DiscreteEnsemble":
        return DiscreteEnsemble(self.positions.copy(), self.polarizations.copy(), self.rng_seed, self.time)


def sample_ensemble(ensemble: TargetEnsemble, region, *, count: int | None = None,
                    density: float | None = None, seed: int = 0, probe: NvProbe | None = None,
                    r_min: float = 0.0) -> DiscreteEnsemble:
    """Uniform random spins in ``region``.

    With ``count`` exactly that many spins are placed (rejecting points
    outside the geometry or within ``r_min`` of the probe).  Otherwise the
    number is Poisson with mean density * region volume, density defaulting
    to the ensemble's.
    """
    if not region.volume > 0:
        raise ValueError("sampling region has zero volume")
    depth = probe.depth if probe is not None else 0.0
    rng = np.random.default_rng(seed)

    def keep(pts):
        ok = ensemble.geometry.contains(pts, depth) & (np.linalg.norm(pts, axis=1) >= r_min)
        return pts[ok]

    if count is None:
        dens = ensemble.number_density if density is None else density
        n = int(rng.poisson(dens * region.volume))
        pos = keep(region.draw(rng, n))
    else:
        chunks, have = [], 0
        for _ in range(1000):
            pts = keep(region.draw(rng, max(2 * (count - have), 16)))
            chunks.append(pts)
            have += len(pts)
            if have >= count:
                break
        else:
            raise ValueError("region barely overlaps the ensemble geometry")
        pos = np.concatenate(chunks)[:count]
    return DiscreteEnsemble(pos, np.zeros(len(pos)), seed)


def flipflop_prefactor(species: SpinSpecies, intra_linewidth: float) -> float:
    """w0 (nm^6/s) such that the pair exchange rate is w0 / r^6."""
    c = dipolar_prefactor(species.gamma, species.gamma)
    return c * c * 0.3 / (2.0 * intra_linewidth)


def evolve_discrete(d: DiscreteEnsemble, probe: NvProbe, model: CouplingModel, gamma_sl: float,
                    couple_spins: bool = False, t_end: float = 0.0, w0: float = 0.0,
                    max_steps: int = 10_000_000) -> DiscreteEnsemble:
    """Advance every spin from ``d.time`` to ``t_end``; returns a new ensemble.

    Without coupling each spin follows its closed-form solution.  With
    coupling, exact reaction steps alternate with explicit Euler exchange
    steps of size at most 0.1 / max_i sum_j w_ij.
    """
    if t_end < d.time:
        raise ValueError("t_end precedes the ensemble time")
    out = d.copy()
    span = t_end - d.time
    if span == 0:
        return out
    u = np.ascontiguousarray(cooling_coefficient(model, probe, out.positions))
    p = out.polarizations
    if not couple_spins or w0 == 0 or len(out) < 2:
        kernels.reaction_update(p, u, float(gamma_sl), float(span))
        out.time = t_end
        return out

    rowsum = np.empty(len(out))
    kernels.pair_rate_rowsum(out.positions, float(w0), rowsum)
    dt_max = 0.1 / float(rowsum.max())
    if dt_max < 1e-12 * span or span / dt_max > max_steps:
        raise StepSizeError(f"exchange step {dt_max:.3e} s too small for a {span:.3e} s run")
    flux = np.empty(len(out))
    t = d.time
    while t_end - t > 1e-15 * max(1.0, t_end):
        h = min(dt_max, t_end - t)
        kernels.reaction_update(p, u, float(gamma_sl), h)
        kernels.pair_exchange(out.positions, p, float(w0), flux)
        p += h * flux
        np.clip(p, 0.0, 1.0, out=p)
        t += h
    out.time = t_end
    return out


def discrete_hyperfine_variance(d: DiscreteEnsemble, model: CouplingModel, probe: NvProbe) -> float:
    """A_P^2 = 1/2 sum_i (1 - P_i) A(R_i)^2 (rad^2/s^2)."""
    A = hyperfine_coupling(model, d.positions, probe.axis_array)
    return 0.5 * float(np.sum((1.0 - d.polarizations) * A * A))


@dataclass(frozen=True)
class OracleCurve:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    per_seed: np.ndarray = field(repr=False)


def oracle_variance_curve(ensemble: TargetEnsemble, region, probe: NvProbe, model: CouplingModel,
                          times, seeds, *, count: int | None = None, r_min: float = 0.0,
                          threads: int = 1) -> OracleCurve:
    """Seed-averaged A_P^2(t) with uncoupled spins starting unpolarised.

    Seeds run independently (optionally on ``threads`` workers); results
    are reduced in seed order so the average does not depend on scheduling.
    """
    times = np.asarray(times, dtype=float)

    def one(seed):
        d = sample_ensemble(ensemble, region, count=count, seed=int(seed), probe=probe, r_min=r_min)
        return [discrete_hyperfine_variance(
            evolve_discrete(d, probe, model, ensemble.spin_lattice_rate, False, float(t)), model, probe)
            for t in times]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, seeds))
    else:
        rows = [one(s) for s in seeds]
    per_seed = np.array(rows)
    n = per_seed.shape[0]
    mean = per_seed.mean(axis=0)
    stderr = per_seed.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(len(times), math.nan)
    return OracleCurve(times, mean, stderr, per_seed)


def dump_ensemble(d: DiscreteEnsemble, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# seed={d.rng_seed} time_s={d.time!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_nm", "y_nm", "z_nm", "P"])
        for (x, y, z), p in zip(d.positions.tolist(), d.polarizations.tolist()):
            w.writerow([repr(x), repr(y), repr(z), repr(p)])


def load_ensemble(path) -> DiscreteEnsemble:
    with open(path, newline="") as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError("missing '# seed=...' header line")
        meta = dict(tok.split("=", 1) for tok in header[1:].split())
        rows = list(csv.DictReader(fh))
    pos = np.array([[float(r["x_nm"]), float(r["y_nm"]), float(r["z_nm"])] for r in rows]).reshape(-1, 3)
    pol = np.array([float(r["P"]) for r in rows])
    return DiscreteEnsemble(pos, pol, int(meta.get("seed", 0)), float(meta.get("time_s", 0.0)))
