import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ferrovolt.field import (
    FIXED_VALUE,
    INTERFACE_COUPLED,
    MU0,
    PLANAR_EXCLUDED,
    BoundaryCondition,
    CellVectorField,
    MaterialSpec,
    MaterialWarning,
    chi_from_mu_r,
    default_conditions,
    magnetization_from_B,
    map_config_to_fields,
    mu_r_from_chi,
    uniform_field_potential,
)

from conftest import disc_in_box, square_mesh


def test_susceptibility_of_reference_material():
    # mu_r = 30: chi = 29 / (30 mu0)
    assert np.isclose(chi_from_mu_r(30.0), 29.0 / (30.0 * MU0))
    assert chi_from_mu_r(1.0) == 0.0
    with pytest.raises(ValueError):
        chi_from_mu_r(0.0)


@given(st.floats(1e-3, 1e5))
def test_mu_r_chi_round_trip(mu_r):
    assert np.isclose(mu_r_from_chi(chi_from_mu_r(mu_r)), mu_r, rtol=1e-9)


def test_induced_magnetization_scales_B():
    chi = np.array([0.0, 2.0])
    B = np.array([[1.0, 0, 0], [0, 3.0, 0]])
    assert np.allclose(magnetization_from_B(chi, B), [[0, 0, 0], [0, 6.0, 0]])


def test_uniform_potential_has_requested_curl():
    xy = np.random.default_rng(1).uniform(-1, 1, (20, 3))
    A = uniform_field_potential(xy, (0.3, -0.2, 0.0))
    # A_z = Bx y - By x  ->  curl = (dAz/dy, -dAz/dx, 0) = (Bx, By, 0)
    assert np.allclose(A[:, :2], 0.0)
    assert np.allclose(A[:, 2], 0.3 * xy[:, 1] + 0.2 * xy[:, 0])


def test_default_conditions_fill_automatic_patches():
    r = disc_in_box().region("air")
    bcs = default_conditions(r, {"outer": BoundaryCondition.fixed("outer")})
    kinds = {k: v.kind for k, v in bcs.items()}
    assert kinds["outer"] == FIXED_VALUE
    assert kinds["frontAndBack"] == PLANAR_EXCLUDED
    assert INTERFACE_COUPLED in kinds.values()
    with pytest.raises(KeyError, match="outer"):
        default_conditions(r, {})


def test_field_validation():
    r = square_mesh(2).regions[0]
    with pytest.raises(ValueError):
        CellVectorField(r.name, np.full((r.n_cells, 3), np.nan), np.zeros((r.n_boundary, 3)))
    with pytest.raises(ValueError):
        BoundaryCondition("left", FIXED_VALUE)
    with pytest.raises(ValueError):
        BoundaryCondition("left", "robin")
    with pytest.raises(ValueError):
        MaterialSpec(mu_r=-1.0)


def test_map_config_to_fields():
    m = disc_in_box()
    mats = {"air": MaterialSpec(), "disc": MaterialSpec(mu_r=30.0)}
    f = map_config_to_fields(mats, m, {"air": {"outer": BoundaryCondition.fixed("outer")}})
    assert np.allclose(f["disc"].chi.values, chi_from_mu_r(30.0))
    assert np.allclose(f["air"].chi.values, 0.0)
    assert np.all(f["disc"].A.values == 0.0)
    with pytest.raises(KeyError, match="disc"):
        map_config_to_fields({"air": MaterialSpec()}, m, {})
    with pytest.raises(KeyError, match="iron"):
        map_config_to_fields({**mats, "iron": MaterialSpec()}, m, {})


def test_magnetized_permeable_material_warns():
    m = disc_in_box()
    mats = {"air": MaterialSpec(), "disc": MaterialSpec(mu_r=2.0, M=(0, 1.0, 0))}
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        map_config_to_fields(mats, m, {"air": {"outer": BoundaryCondition.fixed("outer")}})
    assert any(issubclass(x.category, MaterialWarning) for x in w)
