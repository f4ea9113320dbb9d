"""Throughput model for a flow cell lined with NV arrays, and stacks of cells.

The solution in the channel is treated as perfectly mixed, so a single
average polarisation P(t) describes it.  Each NV pumps spins out of the
half-space above it at a rate limited by one polarisation quantum per
sequence cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as sc
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .spins import CouplingModel, NvProbe, SpinSpecies, get_species, half_space_cooling_integral

TAU_DEFAULT = 20e-6  # s, interaction time per cycle
T_INIT_DEFAULT = 2e-6  # s, optical re-initialisation
DEFAULT_CAP = 1.0 / (TAU_DEFAULT + T_INIT_DEFAULT)
_TILT = math.acos(1.0 / math.sqrt(3.0))
AXIS_100 = (math.sin(_TILT), 0.0, math.cos(_TILT))  # NV axis under a (100) surface


class UnreachablePolarization(ValueError):
    pass


@dataclass(frozen=True)
class ContrastAgent:
    name: str
    species: SpinSpecies
    spins_per_molecule: int
    molarity: float = 1.0  # mol/L
    spin_lattice_rate: float = 1.0 / 60.0  # 1/s

    def __post_init__(self):
        if self.spins_per_molecule < 1:
            raise ValueError("spins_per_molecule must be >= 1")
        if not self.molarity > 0:
            raise ValueError("molarity must be > 0")
        if not self.spin_lattice_rate >= 0:
            raise ValueError("spin_lattice_rate must be >= 0")

    @property
    def spin_density(self) -> float:
        """Target spins per nm^3."""
        return self.molarity * 1e3 * sc.N_A * self.spins_per_molecule * 1e-27


AGENTS = {
    "HEP": ContrastAgent("HEP", get_species("13C"), 5),
    "H2O": ContrastAgent("H2O", get_species("1H"), 2),
    "15N-TMPA": ContrastAgent("15N-TMPA", get_species("15N"), 1),
}


def get_agent(name: str) -> ContrastAgent:
    try:
        return AGENTS[name]
    except KeyError:
        raise KeyError(f"unknown contrast agent {name!r}; known: {sorted(AGENTS)}") from None


def _default_probe():
    return NvProbe(dephasing_rate=450.0, depth=5.0, axis=AXIS_100)


@dataclass(frozen=True)
class PolarizationCell:
    area_mm2: float = 16.0
    channel_height_um: float = 1.0
    nv_surface_density_cm2: float = 4e11
    nv_layer_count: int = 2
    probe: NvProbe = field(default_factory=_default_probe)
    per_nv_cap: float = DEFAULT_CAP
    kernel: str = "transverse"
    normalized: bool = True

    def __post_init__(self):
        for name in ("area_mm2", "channel_height_um", "nv_surface_density_cm2", "per_nv_cap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.nv_layer_count not in (1, 2):
            raise ValueError("nv_layer_count must be 1 or 2")

    @property
    def volume_ul(self) -> float:
        return self.area_mm2 * self.channel_height_um * 1e-3

    def coupling(self, agent: ContrastAgent) -> CouplingModel:
        return CouplingModel.dipolar(agent.species, self.probe, self.kernel, normalized=self.normalized)


@dataclass(frozen=True)
class StackConfig:
    cells: int = 10
    dilution_factor: float = 1000.0

    def __post_init__(self):
        if self.cells < 1:
            raise ValueError("a stack needs at least one cell")
        if not self.dilution_factor >= 1:
            raise ValueError("dilution_factor must be >= 1")


def per_nv_pump_rate(probe: NvProbe, model: CouplingModel, agent: ContrastAgent, P_avg: float,
                     cap: float = math.inf) -> float:
    """Spins polarised per second by one NV: min(n_s (1 - P) int u dV, cap)."""
    if not 0 <= P_avg <= 1:
        raise ValueError("P_avg must lie in [0, 1]")
    uncapped = agent.spin_density * (1.0 - P_avg) * half_space_cooling_integral(model, probe)
    return min(uncapped, cap)


def _pump_coefficient(cell: PolarizationCell, agent: ContrastAgent):
    """Return (k_uncapped, k_cap) with dP/dt = min(k_uncapped (1 - P), k_cap) - Gamma_SL P."""
    sigma = cell.nv_surface_density_cm2 * 1e-14  # nm^-2
    h = cell.channel_height_um * 1e3  # nm
    per_spin = cell.nv_layer_count * sigma / (agent.spin_density * h)
    int_u = half_space_cooling_integral(cell.coupling(agent), cell.probe)
    return per_spin * agent.spin_density * int_u, per_spin * cell.per_nv_cap


def _rhs_factory(cell, agent):
    k_u, k_cap = _pump_coefficient(cell, agent)
    gamma = agent.spin_lattice_rate

    def rhs(t, y):
        p = y[0]
        return [min(k_u * (1.0 - p), k_cap) - gamma * p]

    return rhs


def steady_polarization(cell: PolarizationCell, agent: ContrastAgent) -> float:
    k_u, k_cap = _pump_coefficient(cell, agent)
    gamma = agent.spin_lattice_rate
    if k_u == 0:
        return 0.0
    if gamma == 0:
        return 1.0
    g = lambda p: min(k_u * (1.0 - p), k_cap) - gamma * p
    return brentq(g, 0.0, 1.0, xtol=1e-15, rtol=1e-14)


def cell_polarization_curve(cell: PolarizationCell, agent: ContrastAgent, t_grid) -> np.ndarray:
    """Average polarisation at each time in ``t_grid`` starting from P = 0.
    Returns an (n, 2) array of (t, P)."""
    t = np.asarray(t_grid, dtype=float)
    if t.size == 0 or t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be increasing and start at t >= 0")
    if t[-1] == 0:
        return np.column_stack([t, np.zeros_like(t)])
    sol = solve_ivp(_rhs_factory(cell, agent), (0.0, float(t[-1])), [0.0], method="LSODA",
                    t_eval=t, rtol=1e-10, atol=1e-13)
    if not sol.success:
        raise RuntimeError(sol.message)
    p = np.clip(sol.y[0], 0.0, 1.0)
    return np.column_stack([t, np.maximum.accumulate(p)])


def time_to_polarization(cell: PolarizationCell, agent: ContrastAgent, P_target: float) -> float:
    p_inf = steady_polarization(cell, agent)
    if not 0 < P_target < p_inf:
        raise UnreachablePolarization(
            f"target polarisation {P_target} outside (0, {p_inf:.6g}) for {agent.name}")
    rhs = _rhs_factory(cell, agent)
    k_u, k_cap = _pump_coefficient(cell, agent)
    t_hi = P_target / max(min(k_u, k_cap), 1e-300)
    for _ in range(200):
        sol = solve_ivp(rhs, (0.0, t_hi), [0.0], method="LSODA", dense_output=True, rtol=1e-10, atol=1e-13)
        if sol.y[0, -1] >= P_target:
            return brentq(lambda s: sol.sol(s)[0] - P_target, 0.0, t_hi, xtol=1e-12 * t_hi)
        t_hi *= 2.0
    raise UnreachablePolarization(f"{agent.name} did not reach P = {P_target}")


def flow_rate_for_polarization(cell: PolarizationCell, agent: ContrastAgent, P_target: float) -> float:
    """Concentrate outflow (uL/s) of one cell at outlet polarisation ``P_target``."""
    return cell.volume_ul / time_to_polarization(cell, agent, P_target)


def stack_delivery_rate(stack: StackConfig, cell: PolarizationCell, agent: ContrastAgent,
                        P_target: float) -> float:
    """Diluted delivery rate (uL/s) of a whole stack."""
    return stack.cells * flow_rate_for_polarization(cell, agent, P_target) * stack.dilution_factor
