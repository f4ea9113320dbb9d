"""Measurable quantities derived from a polarisation field.

The probe sees the unpolarised part of the bath as a fluctuating field of
variance A_P^2; cross-relaxation is a Lorentzian in the probe-target
detuning, and the readout signal decays as exp(-Gamma_tot tau).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .grids import CartesianGrid, PolarizationField, RadialGrid, radial_profile
from .pde import cell_a2_weight
from .spins import (
    CouplingModel,
    NvProbe,
    TargetEnsemble,
    larmor_frequency,
    resonance_field,
    thermal_polarization,
    to_angular,
)

DEFAULT_BASELINE = 1.0
DEFAULT_AMPLITUDE = 0.1


class FitError(RuntimeError):
    pass


class TailWarning(UserWarning):
    pass


def _outer_tail_fraction(field, ensemble, probe, model, integrand) -> float:
    grid = field.grid
    total = float(np.sum(integrand))
    if total <= 0:
        return 0.0
    if isinstance(grid, RadialGrid):
        c2 = model.prefactor ** 2 * model.mean_square_kernel
        # beyond r_max the bath is unpolarised
        tail = 4.0 * math.pi * c2 / (3.0 * grid.r_max ** 3)
        return tail / (total + tail)
    edge = 0.0
    h = grid.cell
    for axis in range(3):
        n = grid.shape[axis]
        for idx, sign in ((0, -1), (n - 1, 1)):
            s = [slice(None)] * 3
            s[axis] = idx
            s = tuple(s)
            ghost = grid.centers[s].copy()
            ghost[..., axis] += sign * h
            open_face = ensemble.geometry.contains(ghost, probe.depth) & grid.active[s]
            edge += float(np.sum(integrand[s][open_face]))
    return edge / total


def hyperfine_variance(field: PolarizationField, ensemble: TargetEnsemble, model: CouplingModel,
                       probe: NvProbe, a2_weight=None, warn: bool = True) -> float:
    """A_P^2 = (n_t / 2) * sum over cells of (1 - P) * integral of A^2 (rad^2/s^2)."""
    w = cell_a2_weight(field.grid, probe, model) if a2_weight is None else a2_weight
    integrand = np.where(field.grid.active, (1.0 - field.values) * w, 0.0)
    if warn:
        frac = _outer_tail_fraction(field, ensemble, probe, model, integrand)
        if frac > 0.01:
            warnings.warn(f"{100 * frac:.1f}% of the hyperfine variance sits at the outer boundary",
                          TailWarning, stacklevel=2)
    return 0.5 * ensemble.number_density * float(np.sum(integrand))


def cross_relaxation_rate(A_P2, gamma2: float, detuning):
    """Gamma_CR = A_P^2 Gamma_2 / (2 Gamma_2^2 + 2 detuning^2); detuning in rad/s."""
    if not gamma2 > 0:
        raise ValueError("dephasing rate must be > 0")
    detuning = np.asarray(detuning, dtype=float)
    out = A_P2 * gamma2 / (2.0 * gamma2 ** 2 + 2.0 * detuning ** 2)
    return float(out) if np.ndim(out) == 0 else out


def total_rate(gamma_cr, probe: NvProbe):
    if np.any(np.asarray(gamma_cr) < 0):
        raise ValueError("rates must be >= 0")
    return probe.background_rate + gamma_cr


@dataclass(frozen=True, eq=False)
class RelaxationCurve:
    taus: np.ndarray
    signal: np.ndarray
    rate: float
    baseline: float
    amplitude: float


def relaxation_curve(gamma_tot: float, taus, baseline: float = DEFAULT_BASELINE,
                     amplitude: float = DEFAULT_AMPLITUDE) -> RelaxationCurve:
    taus = np.asarray(taus, dtype=float)
    if taus.size > 1 and np.any(np.diff(taus) <= 0):
        raise ValueError("taus must be strictly increasing")
    signal = baseline + amplitude * np.exp(-gamma_tot * taus)
    return RelaxationCurve(taus, signal, float(gamma_tot), float(baseline), float(amplitude))


@dataclass(frozen=True)
class FitResult:
    rate: float
    baseline: float
    amplitude: float
    residual_norm: float
    rate_stderr: float = math.nan
    identifiable: bool = True


def _decay(t, rate, baseline, amplitude):
    return baseline + amplitude * np.exp(-rate * t)


def fit_rate(taus, signal) -> FitResult:
    """Least-squares fit of baseline + amplitude * exp(-rate * tau).

    Flat data leaves the rate undetermined; the result then has
    ``identifiable=False`` and ``rate=nan``.
    """
    t = np.asarray(taus, dtype=float)
    y = np.asarray(signal, dtype=float)
    if t.size < 4 or t.size != y.size:
        raise ValueError("need at least 4 (tau, signal) samples")
    scale = max(1.0, float(np.max(np.abs(y))))
    if np.ptp(y) <= 1e-12 * scale:
        return FitResult(math.nan, float(np.mean(y)), 0.0, 0.0, math.nan, identifiable=False)

    # Start from a log-linear fit against the last sample as a baseline guess.
    b0 = y[-1]
    a0 = y[0] - y[-1]
    z = (y - b0) / a0
    ok = z > 0.05
    if ok.sum() >= 2 and np.ptp(t[ok]) > 0:
        k0 = max(-np.polyfit(t[ok], np.log(z[ok]), 1)[0], 1e-12)
    else:
        k0 = 1.0 / max(np.ptp(t), 1e-300)
    k0 = max(k0, 1.0 / max(np.ptp(t), 1e-300))
    # fit in units of the initial decay time so the rate parameter is O(1)
    s = t * k0
    try:
        popt, pcov = curve_fit(_decay, s, y, p0=(1.0, b0, a0), maxfev=20000)
    except RuntimeError as exc:
        raise FitError(str(exc)) from exc
    if not np.all(np.isfinite(popt)):
        raise FitError("fit produced non-finite parameters")
    baseline, amplitude = float(popt[1]), float(popt[2])
    rate = float(popt[0]) * k0
    resid = float(np.linalg.norm(y - _decay(s, *popt)))
    stderr = float(np.sqrt(pcov[0, 0])) * k0 if np.all(np.isfinite(pcov)) else math.nan
    return FitResult(rate, baseline, amplitude, resid, stderr, identifiable=True)


@dataclass(frozen=True, eq=False)
class CrSpectrum:
    probe_frequencies: np.ndarray  # Hz
    rates: np.ndarray  # Gamma_tot, 1/s
    pl: np.ndarray | None
    target_frequency: float  # Hz


def spectrum(field: PolarizationField, ensemble: TargetEnsemble, model: CouplingModel, probe: NvProbe,
             omega_grid, tau_fixed: float | None = None, B: float | None = None,
             baseline: float = DEFAULT_BASELINE, amplitude: float = DEFAULT_AMPLITUDE,
             A_P2: float | None = None) -> CrSpectrum:
    """Cross-relaxation spectrum over probe frequencies ``omega_grid`` (Hz).

    The target Larmor frequency is taken at ``B`` (default: the resonance
    field for the ensemble species).
    """
    freqs = np.asarray(omega_grid, dtype=float)
    if B is None:
        B = resonance_field(probe, ensemble.species)
    f_n = larmor_frequency(ensemble.species, B)
    if A_P2 is None:
        A_P2 = hyperfine_variance(field, ensemble, model, probe)
    detuning = to_angular(freqs - f_n)
    rates = total_rate(cross_relaxation_rate(A_P2, probe.dephasing_rate, detuning), probe)
    pl = None if tau_fixed is None else baseline + amplitude * np.exp(-rates * tau_fixed)
    return CrSpectrum(freqs, np.asarray(rates, dtype=float), pl, f_n)


def spectral_fwhm(freqs, values, floor: float = 0.0) -> float:
    """Full width at half maximum of a single peak above ``floor``, by linear
    interpolation between samples (same units as ``freqs``)."""
    x = np.asarray(freqs, dtype=float)
    y = np.asarray(values, dtype=float) - floor
    k = int(np.argmax(y))
    half = 0.5 * y[k]
    left = k
    while left > 0 and y[left] > half:
        left -= 1
    right = k
    while right < y.size - 1 and y[right] > half:
        right += 1
    if y[left] > half or y[right] > half:
        raise ValueError("peak is not resolved within the frequency grid")
    xl = np.interp(half, [y[left], y[left + 1]], [x[left], x[left + 1]])
    xr = np.interp(half, [y[right], y[right - 1]], [x[right], x[right - 1]])
    return float(xr - xl)


def polarized_spin_count(field: PolarizationField, ensemble: TargetEnsemble, threshold: float) -> float:
    """Number of target spins in cells with P >= threshold."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    grid = field.grid
    sel = grid.active & (field.values >= threshold)
    return float(ensemble.number_density * np.sum(np.broadcast_to(grid.volumes, grid.shape)[sel]))


def mean_polarization_region(field: PolarizationField, ensemble: TargetEnsemble,
                             target_mean: float = 0.5) -> tuple[float, float]:
    """Largest set of most-polarised cells whose volume-averaged P is still
    at least ``target_mean``.  Returns (volume nm^3, spin count)."""
    grid = field.grid
    act = grid.active
    p = field.values[act]
    v = np.broadcast_to(grid.volumes, grid.shape)[act]
    order = np.argsort(-p, kind="stable")
    cum_v = np.cumsum(v[order])
    cum_m = np.cumsum((v * p)[order])
    ok = cum_m >= target_mean * cum_v
    if not ok[0]:
        return 0.0, 0.0
    last = int(np.nonzero(ok)[0][-1])
    vol = float(cum_v[last])
    return vol, vol * ensemble.number_density


def region_mask(field: PolarizationField, region) -> np.ndarray:
    """Boolean cell mask from an explicit mask, a radius (sphere about the
    probe, nm) or a callable on cell centres."""
    grid = field.grid
    if callable(region):
        centers = grid.centers if isinstance(grid, CartesianGrid) else grid.centers[:, None] * [0, 0, 1]
        mask = np.asarray(region(centers), dtype=bool)
    elif np.ndim(region) == 0:
        mask = grid.radii <= float(region)
    else:
        mask = np.asarray(region, dtype=bool)
    return mask & grid.active


def enhancement_factor(field: PolarizationField, ensemble: TargetEnsemble, region, B: float, T: float) -> float:
    """Mean polarisation over ``region`` divided by the thermal polarisation."""
    mask = region_mask(field, region)
    if not mask.any():
        raise ValueError("region contains no cells")
    v = np.broadcast_to(field.grid.volumes, field.grid.shape)[mask]
    mean_p = float(np.sum(v * field.values[mask]) / np.sum(v))
    return mean_p / thermal_polarization(ensemble.species, B, T)


def front_radius(field: PolarizationField, level: float = 0.99) -> float:
    """Radius where the (shell-averaged) polarisation first drops below
    ``level``, linearly interpolated.  0 if it never reaches ``level``,
    the outermost radius if it never drops below it."""
    r, p = radial_profile(field)
    if p[0] < level:
        return 0.0
    below = np.nonzero(p < level)[0]
    if below.size == 0:
        return float(r[-1])
    i = int(below[0])
    return float(np.interp(level, [p[i], p[i - 1]], [r[i], r[i - 1]]))
