"""Experiment configuration files.

Configs are YAML mappings.  Every section is strict: unknown keys are
errors, and validation reports every problem at once with dotted key paths
such as ``probe.depth``.  Omitted sections and keys take the defaults below;
``dump_config`` writes the fully resolved form.
"""

from __future__ import annotations

import hashlib
import math
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import spins
from .grids import CartesianGrid, RadialGrid
from .pde import SolverConfig
from .scaleup import AXIS_100, ContrastAgent, PolarizationCell, StackConfig, get_agent

KINDS = ("spectrum", "relax-curve", "evolve", "steady-state", "oracle-compare", "scaleup")


class ConfigError(ValueError):
    """Raised for unreadable or invalid configs; ``errors`` lists every problem."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid experiment config:\n  " + "\n  ".join(self.errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_default=True)


Axis = Union[Literal["z", "100"], tuple[float, float, float]]


def _axis_vector(axis) -> tuple[float, float, float]:
    if axis == "z":
        return (0.0, 0.0, 1.0)
    if axis == "100":
        return AXIS_100
    return tuple(float(a) for a in axis)


class SpeciesSection(_Strict):
    name: str
    gamma: float = Field(description="Hz/T")

    @field_validator("gamma")
    @classmethod
    def _nonzero(cls, v):
        if v == 0 or not math.isfinite(v):
            raise ValueError("gamma must be finite and nonzero")
        return v


class ProbeSection(_Strict):
    zero_field_splitting: float = Field(spins.D_NV, gt=0)
    gamma_nv: float = Field(spins.GAMMA_NV, gt=0)
    dephasing_rate: float = Field(1.0e6, gt=0)
    background_rate: float = Field(200.0, ge=0)
    depth: float = Field(10.0, gt=0)
    axis: Axis = "z"

    @field_validator("axis")
    @classmethod
    def _unit(cls, v):
        vec = _axis_vector(v)
        if abs(math.sqrt(sum(a * a for a in vec)) - 1.0) > 1e-12:
            raise ValueError("axis must be a unit vector")
        return v

    def build(self) -> spins.NvProbe:
        return spins.NvProbe(self.zero_field_splitting, self.gamma_nv, self.dephasing_rate,
                             self.background_rate, self.depth, _axis_vector(self.axis))


class GeometrySection(_Strict):
    type: Literal["full_space", "half_space", "slab"] = "full_space"
    z_lo: Optional[float] = None
    z_hi: Optional[float] = None

    @model_validator(mode="after")
    def _slab(self):
        if self.type == "slab":
            if self.z_lo is None or self.z_hi is None or not self.z_hi > self.z_lo:
                raise ValueError("slab geometry needs z_lo < z_hi")
        return self

    def build(self):
        if self.type == "full_space":
            return spins.FullSpace()
        if self.type == "half_space":
            return spins.HalfSpaceAboveSurface()
        return spins.Slab(self.z_lo, self.z_hi)


class EnsembleSection(_Strict):
    species: str
    number_density: float = Field(gt=0)
    diffusion_coefficient: float = Field(0.0, ge=0)
    spin_lattice_rate: float = Field(0.0, ge=0)
    geometry: GeometrySection = GeometrySection()

    def build(self) -> spins.TargetEnsemble:
        return spins.TargetEnsemble(spins.get_species(self.species), self.number_density,
                                    self.diffusion_coefficient, self.spin_lattice_rate, self.geometry.build())


class CouplingSection(_Strict):
    kernel: Literal["isotropic", "secular", "transverse"] = "transverse"
    r_min: float = Field(spins.R_MIN_DIAMOND, gt=0)
    normalized: bool = False
    prefactor: Optional[float] = Field(None, ge=0, description="rad/s nm^3; default from gyromagnetic ratios")

    def build(self, species: spins.SpinSpecies, probe: spins.NvProbe) -> spins.CouplingModel:
        if self.prefactor is None:
            return spins.CouplingModel.dipolar(species, probe, self.kernel, self.r_min, self.normalized)
        return spins.CouplingModel(self.prefactor, self.kernel, self.r_min, self.normalized)


class RadialGridSection(_Strict):
    type: Literal["radial"] = "radial"
    r_min: float = Field(spins.R_MIN_DIAMOND, gt=0)
    r_max: float = Field(100.0, gt=0)
    n_cells: int = Field(400, ge=8)
    spacing: Literal["linear", "log"] = "log"

    @model_validator(mode="after")
    def _order(self):
        if not self.r_max > self.r_min:
            raise ValueError("r_max must exceed r_min")
        return self

    def build(self, ensemble, probe, r_min) -> RadialGrid:
        return RadialGrid(self.r_min, self.r_max, self.n_cells, self.spacing)


class CartesianGridSection(_Strict):
    type: Literal["cartesian"] = "cartesian"
    lower: tuple[float, float, float] = (-80.0, -80.0, 10.0)
    upper: tuple[float, float, float] = (80.0, 80.0, 170.0)
    cell: float = Field(2.5, gt=0)

    @model_validator(mode="after")
    def _box(self):
        for lo, hi in zip(self.lower, self.upper):
            n = (hi - lo) / self.cell
            if hi <= lo or abs(n - round(n)) > 1e-6 * max(1.0, n):
                raise ValueError("box extent must be a positive multiple of the cell size")
        return self

    def build(self, ensemble, probe, r_min) -> CartesianGrid:
        return CartesianGrid.for_ensemble(self.lower, self.upper, self.cell, ensemble, probe, r_min)


GridSection = Union[RadialGridSection, CartesianGridSection]


class SolverSection(_Strict):
    dt: float = Field(1.0, gt=0)
    scheme: Literal["StrangSplit", "ImplicitEuler"] = "StrangSplit"
    boundary: dict[str, Literal["ZeroFlux", "FixedZero"]] = {}
    steady_tolerance: float = Field(1e-8, gt=0, lt=1)
    max_iterations: int = Field(20000, ge=1)
    dt_growth: float = Field(1.0, ge=1)
    dt_max: Optional[float] = Field(None, gt=0)
    duty: float = Field(1.0, gt=0, le=1)

    def build(self) -> SolverConfig:
        return SolverConfig(self.dt, self.scheme, dict(self.boundary), self.steady_tolerance,
                            self.max_iterations, dt_growth=self.dt_growth,
                            dt_max=math.inf if self.dt_max is None else self.dt_max)


class ScheduleSection(_Strict):
    times: list[float] = Field(default_factory=lambda: [1.0], min_length=1)
    initial_polarization: float = Field(0.0, ge=0, le=1)
    snapshots: bool = False

    @field_validator("times")
    @classmethod
    def _positive(cls, v):
        if any(t < 0 for t in v):
            raise ValueError("times must be >= 0")
        return v


class AnalysisSection(_Strict):
    """Post-processing shared by the physics experiments."""

    temperature: float = Field(300.0, gt=0)
    front_level: float = Field(0.99, gt=0, lt=1)
    count_threshold: float = Field(0.5, gt=0, le=1)
    region_mean: float = Field(0.5, gt=0, lt=1)
    enhancement_radius: Optional[float] = Field(None, gt=0)


class SpectrumSection(_Strict):
    span_hz: float = Field(2.0e6, gt=0)
    n_points: int = Field(401, ge=3)
    tau: float = Field(4e-6, gt=0)
    polarized: Literal["steady", "evolve"] = "steady"
    polarize_time: float = Field(3600.0, ge=0)
    baseline: float = 1.0
    amplitude: float = 0.1


class RelaxationSection(_Strict):
    tau_max: Optional[float] = Field(None, gt=0, description="s; default 5 / Gamma_tot per curve")
    n_points: int = Field(41, ge=4)
    noise: float = Field(0.0, ge=0)
    off_resonance_hz: float = Field(5.0e7, gt=0)
    polarized: Literal["steady", "evolve"] = "steady"
    polarize_time: float = Field(3600.0, ge=0)
    baseline: float = 1.0
    amplitude: float = 0.1


class OracleSection(_Strict):
    count: int = Field(500, ge=1)
    seeds: int = Field(20, ge=2)
    r_inner: float = Field(1.5, gt=0)
    times: list[float] = Field(default_factory=lambda: [1e-5, 5.62e-5, 3.16e-4, 1.78e-3, 1e-2], min_length=1)
    continuum: Literal["radial", "cartesian"] = "cartesian"
    cell: float = Field(0.1, gt=0)
    radial_cells: int = Field(200, ge=8)


class AgentSection(_Strict):
    name: str
    species: Optional[str] = None
    spins_per_molecule: Optional[int] = Field(None, ge=1)
    molarity: float = Field(1.0, gt=0)
    spin_lattice_rate: float = Field(1.0 / 60.0, ge=0)

    def build(self) -> ContrastAgent:
        if self.species is None or self.spins_per_molecule is None:
            base = get_agent(self.name)
            species = base.species if self.species is None else spins.get_species(self.species)
            n = base.spins_per_molecule if self.spins_per_molecule is None else self.spins_per_molecule
        else:
            species, n = spins.get_species(self.species), self.spins_per_molecule
        return ContrastAgent(self.name, species, n, self.molarity, self.spin_lattice_rate)


class CellSection(_Strict):
    area_mm2: float = Field(16.0, gt=0)
    channel_height_um: float = Field(1.0, gt=0)
    nv_surface_density_cm2: float = Field(4e11, gt=0)
    nv_layer_count: Literal[1, 2] = 2
    per_nv_cap: float = Field(1.0 / 22e-6, gt=0)


class StackSection(_Strict):
    cells: int = Field(10, ge=1)
    dilution_factor: float = Field(1000.0, ge=1)


class ScaleupSection(_Strict):
    cell: CellSection = CellSection()
    stack: StackSection = StackSection()
    agents: list[AgentSection] = Field(
        default_factory=lambda: [AgentSection(name=n) for n in ("HEP", "H2O", "15N-TMPA")], min_length=1)
    t_max: float = Field(60.0, gt=0)
    n_times: int = Field(121, ge=2)
    targets: list[float] = Field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    outputs: list[Literal["curves", "delivery"]] = Field(default_factory=lambda: ["curves", "delivery"])

    @field_validator("targets")
    @classmethod
    def _targets(cls, v):
        if any(not 0 < p < 1 for p in v):
            raise ValueError("targets must lie in (0, 1)")
        return v


_NEEDS_ENSEMBLE = {"spectrum", "relax-curve", "evolve", "steady-state", "oracle-compare"}


class ExperimentConfig(_Strict):
    kind: Literal["spectrum", "relax-curve", "evolve", "steady-state", "oracle-compare", "scaleup"]
    name: str = "experiment"
    description: str = ""
    seed: int = 0
    species: list[SpeciesSection] = []
    probe: Optional[ProbeSection] = None
    ensemble: Optional[EnsembleSection] = None
    coupling: CouplingSection = CouplingSection()
    grid: Optional[GridSection] = Field(None, discriminator="type")
    solver: SolverSection = SolverSection()
    schedule: Optional[ScheduleSection] = None
    analysis: AnalysisSection = AnalysisSection()
    spectrum: Optional[SpectrumSection] = None
    relaxation: Optional[RelaxationSection] = None
    oracle: Optional[OracleSection] = None
    scaleup: Optional[ScaleupSection] = None

    @model_validator(mode="after")
    def _resolve(self):
        if self.probe is None:
            self.probe = ProbeSection(depth=5.0, dephasing_rate=450.0, axis="100") if self.kind == "scaleup" \
                else ProbeSection()
        if self.kind in _NEEDS_ENSEMBLE and self.ensemble is None:
            raise ValueError(f"kind {self.kind!r} requires an 'ensemble' section")
        if self.grid is None and self.ensemble is not None:
            self.grid = RadialGridSection() if self.ensemble.geometry.type == "full_space" \
                else CartesianGridSection()
        defaults = {"evolve": ("schedule", ScheduleSection), "spectrum": ("spectrum", SpectrumSection),
                    "relax-curve": ("relaxation", RelaxationSection), "oracle-compare": ("oracle", OracleSection),
                    "scaleup": ("scaleup", ScaleupSection)}
        if self.kind in defaults:
            attr, cls = defaults[self.kind]
            if getattr(self, attr) is None:
                setattr(self, attr, cls())
        return self


def _loc(err) -> str:
    parts = [str(p) for p in err["loc"] if not (isinstance(p, str) and p in ("radial", "cartesian"))]
    return ".".join(parts) or "<root>"


def _semantic_checks(cfg: ExperimentConfig) -> list[str]:
    errors = []
    known = {s.name.lower() for s in spins.registered_species()} | {s.name.lower() for s in cfg.species}
    if cfg.ensemble is not None and cfg.ensemble.species.lower() not in known:
        errors.append(f"ensemble.species: unknown species {cfg.ensemble.species!r}")
    if cfg.grid is not None:
        names = RadialGrid.boundary_names if cfg.grid.type == "radial" else CartesianGrid.boundary_names
        for face in cfg.solver.boundary:
            if face not in names:
                errors.append(f"solver.boundary.{face}: not a face of a {cfg.grid.type} grid {names}")
    if cfg.kind == "oracle-compare" and cfg.ensemble is not None and cfg.ensemble.geometry.type != "full_space":
        errors.append("ensemble.geometry.type: oracle-compare uses spherical shells and needs full_space")
    if cfg.scaleup is not None:
        for i, a in enumerate(cfg.scaleup.agents):
            if (a.species is None or a.spins_per_molecule is None) and a.name not in ("HEP", "H2O", "15N-TMPA"):
                errors.append(f"scaleup.agents.{i}.name: unknown agent {a.name!r} needs species and "
                              "spins_per_molecule")
            if a.species is not None and a.species.lower() not in known:
                errors.append(f"scaleup.agents.{i}.species: unknown species {a.species!r}")
    return errors


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate YAML config text; raises :class:`ConfigError`."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark is not None else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError([f"syntax error at {where}{problem}"]) from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: config must be a mapping"])
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError([f"{_loc(e)}: {e['msg']}" for e in exc.errors()]) from None
    errors = _semantic_checks(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_dict(cfg: ExperimentConfig) -> dict:
    return cfg.model_dump(mode="json")


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_dict(cfg), sort_keys=False)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()


class Built:
    """Domain objects assembled from a validated config."""

    def __init__(self, cfg: ExperimentConfig):
        for s in cfg.species:
            spins.register_species(s.name, s.gamma)
        self.cfg = cfg
        self.probe = cfg.probe.build()
        self.solver = cfg.solver.build()
        self.ensemble = cfg.ensemble.build() if cfg.ensemble is not None else None
        if self.ensemble is not None:
            self.model = cfg.coupling.build(self.ensemble.species, self.probe)
            r_min = self.model.r_min
            self.grid = cfg.grid.build(self.ensemble, self.probe, r_min)
        else:
            self.model = None
            self.grid = None
        if cfg.scaleup is not None:
            c = cfg.scaleup.cell
            self.cell = PolarizationCell(c.area_mm2, c.channel_height_um, c.nv_surface_density_cm2,
                                         c.nv_layer_count, self.probe, c.per_nv_cap,
                                         cfg.coupling.kernel, cfg.coupling.normalized)
            self.stack = StackConfig(cfg.scaleup.stack.cells, cfg.scaleup.stack.dilution_factor)
            self.agents = [a.build() for a in cfg.scaleup.agents]
