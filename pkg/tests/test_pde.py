import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crip.grids import CartesianGrid, PolarizationField, RadialGrid, init_field, radial_profile
from crip.observables import hyperfine_variance
from crip.pde import (
    CripProblem,
    DegenerateSteadyStateWarning,
    SolverConfig,
    diffusion_update,
    make_operator,
    reaction_update,
    step,
)
from crip.spins import CouplingModel, FullSpace, NvProbe, TargetEnsemble, get_species

AXIS_100 = (math.sqrt(2.0 / 3.0), 0.0, 1.0 / math.sqrt(3.0))


def _radial_problem(beta=781.0, gamma_sl=1.0, n=120, config=None, kernel="isotropic"):
    h = get_species("1H")
    ens = TargetEnsemble(h, 57.0, beta, gamma_sl, FullSpace())
    probe = NvProbe(dephasing_rate=450.0)
    model = CouplingModel.dipolar(h, probe, kernel, r_min=2.0)
    grid = RadialGrid(2.0, 300.0, n, "log")
    return CripProblem(grid, ens, probe, model, config or SolverConfig(dt=0.01))


# --- reaction ---------------------------------------------------------------

def test_reaction_no_rates_unchanged():
    g = RadialGrid(0.2, 1.0, 8)
    f = init_field(g, 0.3)
    reaction_update(f, np.zeros(8), 0.0, 5.0)
    assert np.all(f.values == 0.3)


def test_reaction_half_life():
    g = RadialGrid(0.2, 1.0, 8)
    f = init_field(g, 0.0)
    reaction_update(f, np.full(8, 2.0), 0.0, math.log(2) / 2.0)
    np.testing.assert_allclose(f.values, 0.5, atol=1e-15)


def test_reaction_balance():
    g = RadialGrid(0.2, 1.0, 8)
    f = init_field(g, 0.0)
    reaction_update(f, np.full(8, 3.0), 3.0, 20.0 / 3.0)
    np.testing.assert_allclose(f.values, 0.5, atol=1e-8)


def test_reaction_rejects_bad_dt():
    g = RadialGrid(0.2, 1.0, 8)
    with pytest.raises(ValueError):
        reaction_update(init_field(g), np.ones(8), 0.0, 0.0)


# --- diffusion ---------------------------------------------------------------

def test_diffusion_trivial_cases():
    g = RadialGrid(0.5, 10.0, 32)
    cfg = SolverConfig()
    op = make_operator(g, cfg)
    f = PolarizationField(g, np.linspace(0, 1, 32))
    before = f.values.copy()
    diffusion_update(f, 0.0, 1.0, cfg, op)
    assert np.array_equal(f.values, before)
    u = init_field(g, 0.7)
    diffusion_update(u, 5.0, 1.0, cfg, op)
    np.testing.assert_allclose(u.values, 0.7, rtol=1e-12)


def _gaussian_variance(scheme):
    beta, h = 1.0, 0.5
    g = CartesianGrid((-12.0,) * 3, (12.0,) * 3, h)
    values = np.zeros(g.shape)
    c = g.shape[0] // 2
    values[c - 1:c + 1, c - 1:c + 1, c - 1:c + 1] = 1.0  # point-like bump on the centre 2x2x2 block
    f = PolarizationField(g, values)
    cfg = SolverConfig(dt=0.01, scheme=scheme)
    op = make_operator(g, cfg)
    m0 = f.values.sum()
    var0 = float(np.sum(f.values * g.radii ** 2) / m0)
    dt, steps = 0.05, 100
    for _ in range(steps):
        diffusion_update(f, beta, dt, cfg, op)
    var = float(np.sum(f.values * g.radii ** 2) / f.values.sum())
    return var - var0, 6 * beta * dt * steps


@pytest.mark.parametrize("scheme", ["StrangSplit", "ImplicitEuler"])
def test_gaussian_spreading(scheme):
    got, expected = _gaussian_variance(scheme)
    assert got == pytest.approx(expected, rel=0.02)


@pytest.mark.parametrize("grid", [
    RadialGrid(0.3, 20.0, 64, "log"),
    CartesianGrid((-4.0, -4.0, 0.0), (4.0, 4.0, 6.0), 0.5),
])
def test_conservation_per_step(grid):
    rng = np.random.default_rng(1)
    f = PolarizationField(grid, rng.random(grid.shape))
    cfg = SolverConfig(dt=0.3)
    op = make_operator(grid, cfg)
    for _ in range(10):
        before = f.total()
        diffusion_update(f, 2.0, 0.3, cfg, op)
        assert abs(f.total() - before) <= 1e-10 * before


def test_masked_cells_do_not_exchange():
    g0 = CartesianGrid((0.0, 0.0, 0.0), (4.0, 4.0, 4.0), 1.0)
    mask = np.ones(g0.shape, dtype=bool)
    mask[:, :, 2] = False  # wall splitting the box in two
    g = CartesianGrid(g0.lower, g0.upper, 1.0, mask)
    vals = np.zeros(g.shape)
    vals[:, :, :2] = 1.0
    f = PolarizationField(g, vals)
    cfg = SolverConfig()
    diffusion_update(f, 10.0, 5.0, cfg, make_operator(g, cfg))
    np.testing.assert_allclose(f.values[:, :, 3], 0.0, atol=1e-12)
    np.testing.assert_allclose(f.values[:, :, :2], 1.0, atol=1e-9)


# --- stepping ------------------------------------------------------------------

def test_step_without_diffusion_is_reaction():
    prob = _radial_problem(beta=0.0)
    f = prob.init_field(0.0)
    g = f.copy()
    prob.step(f, 0.01)
    reaction_update(g, prob.u, prob.gamma_sl, 0.01)
    np.testing.assert_allclose(f.values, g.values, atol=1e-12)


def test_module_level_step_matches_problem():
    prob = _radial_problem()
    a = prob.init_field()
    b = prob.init_field()
    prob.step(a)
    step(b, prob.ensemble, prob.probe, prob.model, prob.config)
    np.testing.assert_array_equal(a.values, b.values)


@pytest.mark.parametrize("scheme", ["StrangSplit", "ImplicitEuler"])
def test_monotone_pumping_and_bounds(scheme):
    prob = _radial_problem(gamma_sl=0.0, config=SolverConfig(dt=0.5, scheme=scheme))
    f = prob.init_field(0.0)
    prev = f.values.copy()
    for _ in range(20):
        prob.step(f)
        assert np.all(f.values >= prev - 1e-12)
        assert f.values.min() >= 0.0 and f.values.max() <= 1.0
        prev = f.values.copy()


def test_strang_second_order_in_time():
    # steps small enough to sit in the asymptotic range; at much larger dt the
    # stiff core (u dt >> 1) reduces the observed order
    sols = []
    for dt in (1e-3, 5e-4, 2.5e-4, 1.25e-4):
        prob = _radial_problem(config=SolverConfig(dt=dt, scheme="StrangSplit"))
        sols.append(prob.evolve(prob.init_field(0.0), 0.1).values)
    e1 = np.linalg.norm(sols[0] - sols[1])
    e2 = np.linalg.norm(sols[1] - sols[2])
    e3 = np.linalg.norm(sols[2] - sols[3])
    assert math.log2(e1 / e2) >= 1.8
    assert math.log2(e2 / e3) >= 1.8


def test_evolve_noop_and_observers():
    prob = _radial_problem()
    f = prob.init_field(0.2)
    assert prob.evolve(f, 0.0).values is f.values
    np.testing.assert_array_equal(f.values, 0.2)
    seen = []
    prob.evolve(f, 0.05, observers=[seen.append], observe_at=[0.01, 0.03, 0.05])
    assert [s.time for s in seen] == [0.01, 0.03, 0.05]
    assert seen[0].values is not f.values
    with pytest.raises(ValueError):
        prob.evolve(f, 0.01)


def test_dt_growth_respects_observation_times():
    cfg = SolverConfig(dt=0.001, dt_growth=1.5, dt_max=0.05)
    prob = _radial_problem(config=cfg)
    seen = []
    prob.evolve(prob.init_field(), 1.0, [seen.append], [0.1234, 1.0])
    assert [s.time for s in seen] == [0.1234, 1.0]


# --- steady state -------------------------------------------------------------

def test_steady_state_without_diffusion_is_local():
    prob = _radial_problem(beta=0.0)
    f = prob.steady_state()
    np.testing.assert_allclose(f.values, prob.u / (prob.u + prob.gamma_sl), rtol=1e-14)


def test_steady_state_without_pumping_is_zero():
    h = get_species("1H")
    ens = TargetEnsemble(h, 57.0, 781.0, 1.0, FullSpace())
    probe = NvProbe()
    prob = CripProblem(RadialGrid(2.0, 50.0, 32), ens, probe, CouplingModel(0.0, "isotropic", 2.0))
    assert np.all(prob.steady_state().values == 0.0)


def test_steady_state_degenerate_warns():
    prob = _radial_problem(gamma_sl=0.0)
    with pytest.warns(DegenerateSteadyStateWarning):
        f = prob.steady_state()
    assert np.all(f.values == 1.0)


def test_evolution_reaches_steady_state():
    prob = _radial_problem(config=SolverConfig(dt=0.01, scheme="ImplicitEuler", dt_growth=1.2, dt_max=0.5))
    steady = prob.steady_state()
    f = prob.evolve(prob.init_field(0.0), 10.0)
    ens, model, probe = prob.ensemble, prob.model, prob.probe
    a = hyperfine_variance(f, ens, model, probe, warn=False)
    b = hyperfine_variance(steady, ens, model, probe, warn=False)
    assert a == pytest.approx(b, rel=0.01)


def test_pmma_evolve_reaches_steady_state_3d(pmma):
    probe = NvProbe(dephasing_rate=450.0, axis=AXIS_100)
    model = CouplingModel.dipolar(pmma.species, probe, "transverse", normalized=True)
    grid = CartesianGrid.for_ensemble((-40.0, -40.0, 10.0), (40.0, 40.0, 90.0), 2.5, pmma, probe)
    cfg = SolverConfig(dt=0.01, scheme="ImplicitEuler", dt_growth=1.2, dt_max=0.5, linear_tolerance=1e-10)
    prob = CripProblem(grid, pmma, probe, model, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        steady = prob.steady_state()
        f = prob.evolve(prob.init_field(0.0), 10.0)
        a = hyperfine_variance(f, pmma, model, probe)
        b = hyperfine_variance(steady, pmma, model, probe)
    assert a == pytest.approx(b, rel=0.01)


def test_implicit_euler_fixed_point_is_steady_state():
    prob = _radial_problem(config=SolverConfig(dt=0.7, scheme="ImplicitEuler"))
    steady = prob.steady_state()
    f = steady.copy()
    prob.step(f)
    np.testing.assert_allclose(f.values, steady.values, atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31), scale=st.floats(1.0, 20.0))
def test_comparison_principle(seed, scale):
    prob = _radial_problem(n=48)
    low = prob.steady_state()
    rng = np.random.default_rng(seed)
    prob.u = prob.u * (1.0 + (scale - 1.0) * rng.random(prob.u.shape))
    high = prob.steady_state()
    assert np.all(high.values >= low.values - 1e-12)


def test_grid_convergence_order():
    q = []
    for n in (50, 100, 200, 400):
        prob = _radial_problem(n=n)
        f = prob.steady_state()
        q.append(hyperfine_variance(f, prob.ensemble, prob.model, prob.probe, warn=False))
    d = np.abs(np.diff(q))
    assert math.log2(d[0] / d[1]) >= 1.8
    assert math.log2(d[1] / d[2]) >= 1.8


@pytest.mark.slow
def test_radial_matches_shell_averaged_3d_isotropic(diamond):
    probe = NvProbe(dephasing_rate=1.0e4, axis=AXIS_100)
    model = CouplingModel.dipolar(diamond.species, probe, "isotropic", normalized=True)
    cfg = SolverConfig(dt=0.05)
    g1 = RadialGrid(0.154, 100.0, 400, "log")
    p1 = CripProblem(g1, diamond, probe, model, cfg)
    f1 = p1.evolve(p1.init_field(), 1.0)
    L, h = 12.0, 0.2
    g3 = CartesianGrid.for_ensemble((-L,) * 3, (L,) * 3, h, diamond, probe, model.r_min)
    p3 = CripProblem(g3, diamond, probe, model, cfg)
    f3 = p3.evolve(p3.init_field(), 1.0)
    r, p = radial_profile(f3, np.arange(2 * model.r_min, 0.8 * L, h))
    expected = np.interp(r, g1.centers, f1.values)
    np.testing.assert_allclose(p, expected, rtol=0.05)


def test_suggest_dt():
    prob = _radial_problem()
    dt = prob.suggest_dt()
    assert dt <= 0.1 / (prob.u.max() + prob.gamma_sl) + 1e-18
    with pytest.raises(ValueError):
        CripProblem(prob.grid, prob.ensemble, prob.probe, prob.model, duty=0.0)


def test_boundary_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(boundary={"outer": "Periodic"})
    with pytest.raises(ValueError):
        SolverConfig(scheme="RK4")
