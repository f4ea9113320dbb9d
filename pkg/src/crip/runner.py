"""Experiment pipelines: one function per config ``kind``.

Each runner writes its datasets into ``out`` and returns a JSON-ready
summary dict.  All randomness flows from ``cfg.seed``.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from . import io
from .config import Built, ExperimentConfig
from .grids import CartesianGrid, RadialGrid, init_field, radial_profile
from .observables import (
    cross_relaxation_rate,
    enhancement_factor,
    fit_rate,
    front_radius,
    hyperfine_variance,
    mean_polarization_region,
    polarized_spin_count,
    relaxation_curve,
    spectral_fwhm,
    spectrum,
    total_rate,
)
from .oracle import Shell, oracle_variance_curve
from .pde import CripProblem, SolverConfig
from .scaleup import (
    UnreachablePolarization,
    _pump_coefficient,
    cell_polarization_curve,
    stack_delivery_rate,
    steady_polarization,
    time_to_polarization,
)
from .spins import larmor_frequency, resonance_field, thermal_polarization, to_angular


def _problem(b: Built) -> CripProblem:
    return CripProblem(b.grid, b.ensemble, b.probe, b.model, b.solver, b.cfg.solver.duty)


def _polarized_field(b: Built, mode: str, t: float):
    prob = _problem(b)
    if mode == "steady":
        return prob.steady_state()
    return prob.evolve(prob.init_field(0.0), t)


def _field_summary(b: Built, field) -> dict:
    """Observables shared by the evolve / steady-state / spectrum runs."""
    cfg, ens = b.cfg, b.ensemble
    an = cfg.analysis
    B = resonance_field(b.probe, ens.species)
    unpol = init_field(b.grid, 0.0)
    a2_unpol = hyperfine_variance(unpol, ens, b.model, b.probe, warn=False)
    a2_pol = hyperfine_variance(field, ens, b.model, b.probe)
    g2 = b.probe.dephasing_rate
    cr_unpol = cross_relaxation_rate(a2_unpol, g2, 0.0)
    cr_pol = cross_relaxation_rate(a2_pol, g2, 0.0)
    vol, count = mean_polarization_region(field, ens, an.region_mean)
    out = {
        "resonance_field_T": B,
        "A_P2_unpolarized_rad2_per_s2": a2_unpol,
        "A_P2_polarized_rad2_per_s2": a2_pol,
        "gamma_cr_unpolarized_per_s": cr_unpol,
        "gamma_cr_polarized_per_s": cr_pol,
        "ratio_unpol_over_pol": cr_unpol / cr_pol if cr_pol > 0 else math.inf,
        "front_radius_nm": front_radius(field, an.front_level),
        "front_level": an.front_level,
        "polarized_spin_count": polarized_spin_count(field, ens, an.count_threshold),
        "mean_region_volume_nm3": vol,
        "mean_region_spin_count": count,
        "thermal_polarization": thermal_polarization(ens.species, B, an.temperature),
    }
    if an.enhancement_radius is not None:
        out["enhancement_factor"] = enhancement_factor(field, ens, an.enhancement_radius, B, an.temperature)
    return out


def _profile_columns(field):
    r, p = radial_profile(field)
    return {"r_nm": r, "P_mean": p}


def run_steady_state(b: Built, out) -> dict:
    field = _problem(b).steady_state()
    io.write_csv(out / "profile_steady.csv", _profile_columns(field))
    return _field_summary(b, field)


def run_evolve(b: Built, out) -> dict:
    sched = b.cfg.schedule
    prob = _problem(b)
    field = prob.init_field(sched.initial_polarization)
    snaps = {}

    def keep(f):
        snaps[f.time] = f

    times = sorted(set(sched.times))
    prob.evolve(field, times[-1], observers=[keep], observe_at=times)
    rows = []
    for t in times:
        f = snaps[t] if t > 0 else prob.init_field(sched.initial_polarization)
        io.write_csv(out / f"profile_t{t:g}s.csv", _profile_columns(f))
        if sched.snapshots:
            io.write_snapshot(out / f"snapshot_t{t:g}s.csv", f)
        s = _field_summary(b, f)
        s["time_s"] = t
        rows.append(s)
    cols = ["time_s", "front_radius_nm", "A_P2_polarized_rad2_per_s2", "gamma_cr_polarized_per_s",
            "polarized_spin_count"]
    io.write_csv(out / "evolution.csv", {c: [r[c] for r in rows] for c in cols})
    return {"snapshots": rows}


def run_spectrum(b: Built, out) -> dict:
    sp = b.cfg.spectrum
    ens, probe = b.ensemble, b.probe
    B = resonance_field(probe, ens.species)
    f_n = larmor_frequency(ens.species, B)
    freqs = f_n + np.linspace(-0.5 * sp.span_hz, 0.5 * sp.span_hz, sp.n_points)
    field = _polarized_field(b, sp.polarized, sp.polarize_time)
    unpol = init_field(b.grid, 0.0)
    a2u = hyperfine_variance(unpol, ens, b.model, probe, warn=False)
    a2p = hyperfine_variance(field, ens, b.model, probe)
    su = spectrum(unpol, ens, b.model, probe, freqs, sp.tau, B, sp.baseline, sp.amplitude, A_P2=a2u)
    sp_ = spectrum(field, ens, b.model, probe, freqs, sp.tau, B, sp.baseline, sp.amplitude, A_P2=a2p)
    io.write_csv(out / "spectrum.csv", {
        "probe_frequency_Hz": freqs,
        "detuning_Hz": freqs - f_n,
        "gamma_tot_unpolarized_per_s": su.rates,
        "gamma_tot_polarized_per_s": sp_.rates,
        "pl_unpolarized": su.pl,
        "pl_polarized": sp_.pl,
    })
    fwhm = spectral_fwhm(freqs, su.rates, floor=probe.background_rate)
    summary = _field_summary(b, field)
    summary.update({
        "larmor_frequency_Hz": f_n,
        "peak_frequency_Hz": float(freqs[int(np.argmax(su.rates))]),
        "fwhm_Hz": fwhm,
        "expected_fwhm_Hz": 2.0 * probe.dephasing_rate / (2.0 * math.pi),
        "grid_step_Hz": float(freqs[1] - freqs[0]),
    })
    return summary


def run_relaxation(b: Built, out) -> dict:
    rc = b.cfg.relaxation
    ens, probe = b.ensemble, b.probe
    field = _polarized_field(b, rc.polarized, rc.polarize_time)
    a2u = hyperfine_variance(init_field(b.grid, 0.0), ens, b.model, probe, warn=False)
    a2p = hyperfine_variance(field, ens, b.model, probe)
    g2 = probe.dephasing_rate
    off = to_angular(rc.off_resonance_hz)
    rates = {
        "unpolarized": total_rate(cross_relaxation_rate(a2u, g2, 0.0), probe),
        "polarized": total_rate(cross_relaxation_rate(a2p, g2, 0.0), probe),
        "off_resonance": total_rate(cross_relaxation_rate(a2u, g2, off), probe),
    }
    rng = np.random.default_rng(b.cfg.seed)
    cols = {"curve": [], "tau_s": [], "signal": []}
    fits = {}
    for name, g in rates.items():
        taus = np.linspace(0.0, rc.tau_max if rc.tau_max is not None else 5.0 / g, rc.n_points)
        sig = relaxation_curve(g, taus, rc.baseline, rc.amplitude).signal
        if rc.noise > 0:
            sig = sig + rng.normal(0.0, rc.noise * rc.amplitude, taus.size)
        cols["curve"] += [name] * taus.size
        cols["tau_s"] += taus.tolist()
        cols["signal"] += sig.tolist()
        fits[name] = fit_rate(taus, sig)
    io.write_csv(out / "relaxation.csv", cols)
    bg = fits["off_resonance"].rate
    summary = {f"gamma_tot_{k}_per_s": v for k, v in rates.items()}
    for k, f in fits.items():
        summary[f"fit_rate_{k}_per_s"] = f.rate
        summary[f"fit_rate_{k}_stderr_per_s"] = f.rate_stderr
    summary["fit_gamma_cr_unpolarized_per_s"] = fits["unpolarized"].rate - bg
    summary["fit_gamma_cr_polarized_per_s"] = fits["polarized"].rate - bg
    return summary


def run_oracle_compare(b: Built, out, threads: int = 1) -> dict:
    oc = b.cfg.oracle
    ens, probe, model = b.ensemble, b.probe, b.model
    r_in = oc.r_inner
    r_out = (oc.count / ens.number_density / (4.0 / 3.0 * math.pi) + r_in ** 3) ** (1.0 / 3.0)
    times = np.asarray(oc.times, dtype=float)
    seeds = [b.cfg.seed + k for k in range(oc.seeds)]
    curve = oracle_variance_curve(ens, Shell(r_in, r_out), probe, model, times, seeds,
                                  count=oc.count, threads=threads)
    # Continuum on the same shell with transport switched off.
    still = type(ens)(ens.species, ens.number_density, 0.0, ens.spin_lattice_rate, ens.geometry)
    if oc.continuum == "radial":
        grid = RadialGrid(r_in, r_out, oc.radial_cells, "linear")
    else:
        half = math.ceil(r_out / oc.cell) * oc.cell
        box = CartesianGrid((-half,) * 3, (half,) * 3, oc.cell)
        grid = CartesianGrid(box.lower, box.upper, oc.cell, (box.radii >= r_in) & (box.radii <= r_out))
    prob = CripProblem(grid, still, probe, model, SolverConfig(dt=float(times[-1])))
    cont = []
    for t in times:
        f = prob.init_field(0.0)
        prob.evolve(f, float(t))
        cont.append(hyperfine_variance(f, still, model, probe, warn=False))
    cont = np.array(cont)
    rel = curve.mean / cont - 1.0
    io.write_csv(out / "oracle_compare.csv", {
        "time_s": times,
        "oracle_A_P2_rad2_per_s2": curve.mean,
        "oracle_stderr_rad2_per_s2": curve.stderr,
        "continuum_A_P2_rad2_per_s2": cont,
        "relative_difference": rel,
    })
    return {"shell_inner_nm": r_in, "shell_outer_nm": r_out, "seeds": len(seeds), "spins": oc.count,
            "continuum": oc.continuum, "max_abs_relative_difference": float(np.max(np.abs(rel)))}


def run_scaleup(b: Built, out) -> dict:
    sc = b.cfg.scaleup
    cell, stack = b.cell, b.stack
    t = np.linspace(0.0, sc.t_max, sc.n_times)
    summary = {"cell_volume_uL": cell.volume_ul, "cells": stack.cells,
               "dilution_factor": stack.dilution_factor, "agents": {}}
    delivery = {"P_target": list(sc.targets)}
    for agent in b.agents:
        tag = agent.name.replace(" ", "_")
        k_u, k_cap = _pump_coefficient(cell, agent)
        p_inf = steady_polarization(cell, agent)
        entry = {"steady_polarization": p_inf, "uncapped_rate_per_s": k_u, "capped_rate_per_s": k_cap,
                 "pump_limited": k_u > k_cap}
        if "curves" in sc.outputs:
            curve = cell_polarization_curve(cell, agent, t)
            io.write_csv(out / f"polarization_{tag}.csv", {"t_s": curve[:, 0], "P_avg": curve[:, 1]})
        try:
            t80 = time_to_polarization(cell, agent, 0.8)
            entry["t80_s"] = t80
            entry["concentrate_rate_at_80pct_nL_per_s"] = 1e3 * cell.volume_ul / t80
        except UnreachablePolarization:
            entry["t80_s"] = None
        col = []
        for p in sc.targets:
            try:
                col.append(stack_delivery_rate(stack, cell, agent, p))
            except UnreachablePolarization:
                col.append(math.nan)
        delivery[f"delivery_{tag}_uL_per_s"] = col
        summary["agents"][agent.name] = entry
    if "delivery" in sc.outputs:
        io.write_csv(out / "stack_delivery.csv", delivery)
    return summary


def run(cfg: ExperimentConfig, out, threads: int = 1) -> dict:
    b = Built(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if cfg.kind == "steady-state":
            summary = run_steady_state(b, out)
        elif cfg.kind == "evolve":
            summary = run_evolve(b, out)
        elif cfg.kind == "spectrum":
            summary = run_spectrum(b, out)
        elif cfg.kind == "relax-curve":
            summary = run_relaxation(b, out)
        elif cfg.kind == "oracle-compare":
            summary = run_oracle_compare(b, out, threads)
        else:
            summary = run_scaleup(b, out)
    summary["warnings"] = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    return summary
