import math

import numpy as np
import pytest

from crip.grids import CartesianGrid, PolarizationField, RadialGrid, init_field, radial_profile
from crip.spins import HalfSpaceAboveSurface, NvProbe, TargetEnsemble, get_species


def test_radial_grid_volumes_sum_to_shell():
    g = RadialGrid(0.5, 20.0, 64, "log")
    assert g.volumes.sum() == pytest.approx(4 / 3 * math.pi * (20.0 ** 3 - 0.5 ** 3), rel=1e-12)
    assert np.all(np.diff(g.centers) > 0)


@pytest.mark.parametrize("args", [(0.0, 1.0, 10), (2.0, 1.0, 10), (0.1, 1.0, 4)])
def test_radial_grid_rejects(args):
    with pytest.raises(ValueError):
        RadialGrid(*args)


def test_cartesian_grid_shape_and_extent():
    g = CartesianGrid((-1, -1, 0), (1, 1, 3), 0.5)
    assert g.shape == (4, 4, 6)
    assert g.centers[0, 0, 0] == pytest.approx([-0.75, -0.75, 0.25])
    with pytest.raises(ValueError):
        CartesianGrid((0, 0, 0), (1, 1, 1.1), 0.3)


def test_for_ensemble_masks_diamond():
    ens = TargetEnsemble(get_species("1H"), 57.0, 781.0, 1.0, HalfSpaceAboveSurface())
    probe = NvProbe(depth=3.0)
    g = CartesianGrid.for_ensemble((-2, -2, 0), (2, 2, 6), 1.0, ens, probe)
    assert not g.active[:, :, :3].any()
    assert g.active[:, :, 3:].all()


def test_init_field():
    g = RadialGrid(0.2, 10.0, 16)
    assert np.all(init_field(g, 0.0).values == 0)
    assert init_field(g, 0.5).mean() == 0.5
    with pytest.raises(ValueError):
        init_field(g, 1.5)


def test_field_shape_checked():
    g = RadialGrid(0.2, 10.0, 16)
    with pytest.raises(ValueError):
        PolarizationField(g, np.zeros(15))


def test_radial_profile_of_radial_function():
    g = CartesianGrid((-5, -5, -5), (5, 5, 5), 0.25)
    f = PolarizationField(g, np.exp(-g.radii / 3.0))
    r, p = radial_profile(f, edges=np.arange(1.0, 5.0, 0.5))
    np.testing.assert_allclose(p, np.exp(-r / 3.0), rtol=0.03)
