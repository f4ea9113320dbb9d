"""Spin species, the NV probe, resonance conditions and dipolar couplings.

Units used throughout the package: lengths in nm, times in s, rates in 1/s,
fields in tesla.  Gyromagnetic ratios are stored in Hz/T (cycles); the only
place cycles become radians is :func:`to_angular`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import constants as sc

# Default probe / species constants.
D_NV = 2.870e9  # Hz
GAMMA_NV = 28.02495e9  # Hz/T
GAMMA_1H = 42.5775e6
GAMMA_13C = 10.7084e6
GAMMA_15N = -4.3163e6

R_MIN_DIAMOND = 0.154  # nm, C-C nearest neighbour


def to_angular(freq_hz):
    """Convert a frequency (or gyromagnetic ratio) from Hz to rad/s."""
    return 2.0 * math.pi * freq_hz


@dataclass(frozen=True)
class SpinSpecies:
    name: str
    gamma: float  # Hz/T, signed

    def __post_init__(self):
        if not math.isfinite(self.gamma) or self.gamma == 0.0:
            raise ValueError(f"gyromagnetic ratio of {self.name!r} must be finite and nonzero")


_REGISTRY: dict[str, SpinSpecies] = {}


def register_species(name: str, gamma: float) -> SpinSpecies:
    s = SpinSpecies(name, float(gamma))
    _REGISTRY[name.lower()] = s
    return s


for _name, _gamma in (("1H", GAMMA_1H), ("13C", GAMMA_13C), ("15N", GAMMA_15N), ("NV", GAMMA_NV)):
    register_species(_name, _gamma)


def get_species(name: str) -> SpinSpecies:
    try:
        return _REGISTRY[name.lower()]
    except KeyError:
        raise KeyError(f"unknown spin species {name!r}; known: {sorted(s.name for s in _REGISTRY.values())}") from None


def registered_species() -> list[SpinSpecies]:
    return sorted(_REGISTRY.values(), key=lambda s: s.name)


@dataclass(frozen=True)
class NvProbe:
    """A single NV centre used as the polarising probe.

    ``axis`` is the NV symmetry axis, taken parallel to the applied field.
    The NV sits at the origin and the diamond surface is at ``z = depth``.
    """

    zero_field_splitting: float = D_NV
    gamma_nv: float = GAMMA_NV
    dephasing_rate: float = 1.0e6
    background_rate: float = 200.0
    depth: float = 10.0
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        errors = []
        if not self.zero_field_splitting > 0:
            errors.append("zero_field_splitting must be > 0")
        if not self.dephasing_rate > 0:
            errors.append("dephasing_rate must be > 0")
        if not self.background_rate >= 0:
            errors.append("background_rate must be >= 0")
        if not self.depth > 0:
            errors.append("depth must be > 0")
        axis = tuple(float(a) for a in self.axis)
        if len(axis) != 3 or abs(math.sqrt(sum(a * a for a in axis)) - 1.0) > 1e-12:
            errors.append("axis must be a unit 3-vector")
        if errors:
            raise ValueError("; ".join(errors))
        object.__setattr__(self, "axis", axis)

    @property
    def axis_array(self) -> np.ndarray:
        return np.asarray(self.axis, dtype=float)


# --- target geometry -------------------------------------------------------

@dataclass(frozen=True)
class FullSpace:
    """Spins everywhere around the probe (e.g. 13C inside diamond)."""

    def contains(self, points, depth: float):
        points = np.asarray(points, dtype=float)
        return np.ones(points.shape[:-1], dtype=bool)


@dataclass(frozen=True)
class HalfSpaceAboveSurface:
    """Spins fill ``z > depth``, i.e. a layer on top of the diamond."""

    def contains(self, points, depth: float):
        points = np.asarray(points, dtype=float)
        return points[..., 2] > depth


@dataclass(frozen=True)
class Slab:
    z_lo: float
    z_hi: float

    def __post_init__(self):
        if not self.z_hi > self.z_lo:
            raise ValueError("slab needs z_hi > z_lo")

    def contains(self, points, depth: float):
        points = np.asarray(points, dtype=float)
        z = points[..., 2]
        return (z > self.z_lo) & (z < self.z_hi)


Geometry = Union[FullSpace, HalfSpaceAboveSurface, Slab]


@dataclass(frozen=True)
class TargetEnsemble:
    species: SpinSpecies
    number_density: float  # nm^-3
    diffusion_coefficient: float = 0.0  # nm^2/s
    spin_lattice_rate: float = 0.0  # 1/s
    geometry: Geometry = field(default_factory=FullSpace)

    def __post_init__(self):
        if not self.number_density > 0:
            raise ValueError("number_density must be > 0")
        if not self.diffusion_coefficient >= 0:
            raise ValueError("diffusion_coefficient must be >= 0")
        if not self.spin_lattice_rate >= 0:
            raise ValueError("spin_lattice_rate must be >= 0")


# --- dipolar coupling ------------------------------------------------------

KERNELS = ("isotropic", "secular", "transverse")

# Sphere averages of f(theta)^2 for each kernel.
KERNEL_MEAN_SQUARE = {
    "isotropic": 1.0,
    "secular": 1.0 / 5.0,
    "transverse": 9.0 / 4.0 * 2.0 / 15.0,
}


def dipolar_prefactor(gamma_a: float, gamma_b: float) -> float:
    """mu0 hbar gamma_a gamma_b / 4 pi in rad/s nm^3, with gammas given in Hz/T."""
    c_si = sc.mu_0 / (4 * math.pi) * sc.hbar * to_angular(gamma_a) * to_angular(gamma_b)
    return abs(c_si) * 1e27


def kernel_value(kernel: str, cos_theta):
    c = np.asarray(cos_theta, dtype=float)
    if kernel == "isotropic":
        return np.ones_like(c)
    if kernel == "secular":
        return 0.5 * (3.0 * c * c - 1.0)
    if kernel == "transverse":
        s = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
        return 1.5 * s * c
    raise ValueError(f"unknown angular kernel {kernel!r}")


@dataclass(frozen=True)
class CouplingModel:
    """A(R) = prefactor * f(theta) / max(|R|, r_min)^3.

    With ``normalized`` the kernel is rescaled to unit mean square over the
    sphere, so switching kernels changes only the angular shape and not the
    orientation-averaged coupling strength.
    """

    prefactor: float  # rad/s nm^3
    kernel: str = "transverse"
    r_min: float = R_MIN_DIAMOND
    normalized: bool = False

    def __post_init__(self):
        if not self.prefactor >= 0:
            raise ValueError("prefactor must be >= 0")
        if not self.r_min > 0:
            raise ValueError("r_min must be > 0")
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")

    @classmethod
    def dipolar(cls, species: SpinSpecies, probe: NvProbe | None = None, kernel: str = "transverse",
                r_min: float = R_MIN_DIAMOND, normalized: bool = False) -> "CouplingModel":
        gamma_nv = probe.gamma_nv if probe is not None else GAMMA_NV
        return cls(dipolar_prefactor(gamma_nv, species.gamma), kernel, r_min, normalized)

    @property
    def mean_square_kernel(self) -> float:
        return 1.0 if self.normalized else KERNEL_MEAN_SQUARE[self.kernel]

    def angular(self, cos_theta):
        f = kernel_value(self.kernel, cos_theta)
        if self.normalized:
            f = f / math.sqrt(KERNEL_MEAN_SQUARE[self.kernel])
        return f


def hyperfine_coupling(model: CouplingModel, R, axis) -> np.ndarray:
    """Coupling A(R) in rad/s for displacement(s) ``R`` (..., 3) in nm.

    Inside ``r_min`` the radial factor is clamped; at R = 0 the angle is
    taken along the axis.
    """
    R = np.asarray(R, dtype=float)
    axis = np.asarray(axis, dtype=float)
    r = np.linalg.norm(R, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_t = np.where(r > 0, (R @ axis) / np.where(r > 0, r, 1.0), 1.0)
    f = model.angular(np.clip(cos_t, -1.0, 1.0))
    return model.prefactor * f / np.maximum(r, model.r_min) ** 3


def cooling_coefficient(model: CouplingModel, probe: NvProbe, R) -> np.ndarray:
    """Pumping rate u(R) = A(R)^2 / (2 Gamma_2) in 1/s."""
    A = hyperfine_coupling(model, R, probe.axis_array)
    return A * A / (2.0 * probe.dephasing_rate)


def angular_averaged_cooling(model: CouplingModel, probe: NvProbe, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be > 0")
    c2 = model.prefactor ** 2 * model.mean_square_kernel
    return c2 / (2.0 * probe.dephasing_rate * np.maximum(r, model.r_min) ** 6)


def shell_integral_a2(model: CouplingModel, r_lo, r_hi) -> np.ndarray:
    """Exact integral of A^2 over spherical shells [r_lo, r_hi] (rad^2/s^2 nm^3)."""
    r_lo = np.asarray(r_lo, dtype=float)
    r_hi = np.asarray(r_hi, dtype=float)
    rm = model.r_min
    c2 = model.prefactor ** 2 * model.mean_square_kernel
    # clamped core: A^2 constant = c2 / rm^6
    a = np.minimum(r_lo, rm)
    b = np.minimum(r_hi, rm)
    core = (b ** 3 - a ** 3) / rm ** 6 / 3.0
    a = np.maximum(r_lo, rm)
    b = np.maximum(r_hi, rm)
    tail = (a ** -3 - b ** -3) / 3.0
    return 4.0 * math.pi * c2 * (core + tail)


def half_space_angular_factor(model: CouplingModel, axis, n_mu: int = 96, n_phi: int = 192) -> float:
    """Integral over the upper hemisphere of f(theta)^2 cos(alpha)^3 dOmega.

    ``alpha`` is measured from the surface normal (+z).  With it, the
    integral of A^2 over ``z > d`` equals prefactor^2 * factor / (3 d^3).
    """
    mu, w_mu = np.polynomial.legendre.leggauss(n_mu)
    mu = 0.5 * (mu + 1.0)
    w_mu = 0.5 * w_mu
    phi = (np.arange(n_phi) + 0.5) * (2 * math.pi / n_phi)
    M, PHI = np.meshgrid(mu, phi, indexing="ij")
    s = np.sqrt(1.0 - M * M)
    dirs = np.stack([s * np.cos(PHI), s * np.sin(PHI), M], axis=-1)
    cos_t = dirs @ np.asarray(axis, dtype=float)
    f2 = model.angular(np.clip(cos_t, -1, 1)) ** 2
    return float(np.sum(w_mu[:, None] * f2 * M ** 3) * (2 * math.pi / n_phi))


def half_space_cooling_integral(model: CouplingModel, probe: NvProbe) -> float:
    """Integral of u over the half-space above the surface, in nm^3/s."""
    if probe.depth <= model.r_min:
        raise ValueError("depth must exceed r_min for the half-space integral")
    factor = half_space_angular_factor(model, probe.axis)
    return model.prefactor ** 2 * factor / (3.0 * probe.depth ** 3) / (2.0 * probe.dephasing_rate)


# --- resonance and thermal physics -----------------------------------------

def resonance_field(probe: NvProbe, species: SpinSpecies) -> float:
    """Field (T) at which the NV |0>-|-1> splitting equals the target Larmor frequency."""
    if species.gamma >= probe.gamma_nv:
        raise ValueError(f"no level crossing for {species.name}: gamma_n >= gamma_NV")
    return probe.zero_field_splitting / (probe.gamma_nv - species.gamma)


def nv_transition_frequency(probe: NvProbe, B: float) -> float:
    if B < 0:
        raise ValueError("B must be >= 0")
    return abs(probe.gamma_nv * B - probe.zero_field_splitting)


def larmor_frequency(species: SpinSpecies, B: float) -> float:
    if B < 0:
        raise ValueError("B must be >= 0")
    return abs(species.gamma) * B


def thermal_polarization(species: SpinSpecies, B, T):
    B = np.asarray(B, dtype=float)
    if np.any(np.asarray(T) <= 0):
        raise ValueError("temperature must be > 0")
    x = sc.h * abs(species.gamma) * B / (2.0 * sc.k * np.asarray(T, dtype=float))
    out = np.tanh(x)
    return float(out) if out.ndim == 0 else out


def equivalent_field(P: float, species: SpinSpecies, T: float) -> float:
    """Field that would give polarisation ``P`` thermally at temperature ``T``."""
    if not 0 <= P < 1:
        raise ValueError("P must satisfy 0 <= P < 1")
    if T <= 0:
        raise ValueError("temperature must be > 0")
    return 2.0 * sc.k * T * math.atanh(P) / (sc.h * abs(species.gamma))
