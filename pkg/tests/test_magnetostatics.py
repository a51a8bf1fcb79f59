import functools

import numpy as np
import pytest

from ferrovolt import magnetostatics as ms
from ferrovolt.cases import DISC_RADIUS, MAGNETIZATION, oracle_spec
from ferrovolt.field import MU0, BoundaryCondition, MaterialSpec, map_config_to_fields, uniform_field_potential
from ferrovolt.linalg import SolverConfig, SolverConfigError
from ferrovolt.mesh import BOUNDARY, PlanarMesh
from ferrovolt.meshgen import unit_square
from ferrovolt.oracles import CURRENT_WIRE, MAGNETIZED_CYLINDER

from conftest import disc_in_box, square_mesh

COARSE = 0.02  # near-body edge length of the quick cylinder runs
DIRECT = SolverConfig(method="direct")


def solve(mesh, materials, **control):
    """Outer loop with A = 0 on every outer patch."""
    zero = {r.name: {p.name: BoundaryCondition.fixed(p.name) for p in r.patches if p.kind == BOUNDARY} for r in mesh.regions}
    fields = map_config_to_fields(materials, mesh, zero)
    return ms.bgs_outer_loop(mesh, fields, ms.OuterIterationControl(solver=DIRECT, **control))


@functools.lru_cache(maxsize=None)
def magnetized_disc(**control):
    mesh = disc_in_box(COARSE)
    return solve(mesh, {"air": MaterialSpec(), "disc": MaterialSpec(M=(0.0, MAGNETIZATION, 0.0))}, **control)


def split_square(n: int = 8) -> PlanarMesh:
    """Unit square cut at x = 1/2 into regions ``left`` and ``right``."""
    pm = unit_square(n)
    centres = [pm.points[c].mean(axis=0) for c in pm.cells]
    regions = ["left" if x < 0.5 else "right" for x, _ in centres]
    tags = dict(pm.edge_tags)
    owner: dict[tuple[int, int], set] = {}
    for c, r in zip(pm.cells, regions):
        for a, b in zip(c, np.roll(c, -1)):
            owner.setdefault((min(a, b), max(a, b)), set()).add(r)
    tags.update({e: "cut" for e, rs in owner.items() if len(rs) == 2})
    return PlanarMesh(pm.points, pm.cells, regions, tags, region_order=["left", "right"])


# ---------------------------------------------------------------------------
# null and reduction cases
# ---------------------------------------------------------------------------


def test_null_case_converges_in_one_iteration():
    sol = solve(square_mesh(6, "tri", shear=0.3), {"domain": MaterialSpec()})
    assert sol.status == ms.STATUS_CONVERGED
    assert sol.iterations == 1
    for st in sol.states.values():
        assert np.all(st.A == 0) and np.all(st.fields.B.values == 0)


def test_free_current_only_has_no_bound_sources():
    spec, _ = oracle_spec(CURRENT_WIRE, h_near=COARSE)
    spec.lattice = 0.0
    mesh = spec.planar_mesh().to_mesh()
    sol = solve(mesh, {"air": MaterialSpec(), "cylinder": MaterialSpec(J=(0.0, 0.0, 2.5e7))}, max_outer_iterations=5)
    for st in sol.states.values():
        parts = ms.assemble_region(st).breakdown
        assert np.max(np.abs(parts["boundSkew"])) <= 1e-12
        assert np.max(np.abs(parts["magnetCurl"])) <= 1e-12
    assert np.max(np.abs(ms.assemble_region(sol.states["cylinder"]).breakdown["freeCurrent"])) > 0


def test_source_decomposition_sums_to_rhs():
    sol = magnetized_disc()
    for st in sol.states.values():
        rs = ms.assemble_region(st)
        total = sum(rs.breakdown[k] for k in ms.SOURCE_TERMS)
        assert np.max(np.abs(total - rs.system.source)) <= 1e-12 * max(np.abs(rs.system.source).max(), 1e-300)


def test_uniform_magnetization_acts_through_the_interface():
    # V curl M vanishes for uniform M; the bound current is the surface current K = M x e_n
    sol = magnetized_disc()
    st = sol.states["disc"]
    curl = ms.assemble_region(st).breakdown["magnetCurl"]
    assert np.max(np.abs(curl)) <= 1e-12 * MU0 * MAGNETIZATION * st.region.geometry.cell_volume.max()
    ifc = sol.interfaces[0]
    K = ifc.K
    expected = MAGNETIZATION * np.abs(ifc.patch.e_n[:, 0])
    assert np.allclose(np.linalg.norm(K, axis=1), expected, rtol=1e-12, atol=1e-9 * MAGNETIZATION)
    assert np.allclose(K[:, :2], 0.0)


# ---------------------------------------------------------------------------
# interfaces between matched media
# ---------------------------------------------------------------------------


def test_matched_interface_reduces_to_internal_face():
    materials = {"left": MaterialSpec(J=(0, 0, 1.0)), "right": MaterialSpec(J=(0, 0, 1.0))}
    split = solve(split_square().to_mesh(), materials, tolerance=1e-10)
    whole = solve(square_mesh(8), {"domain": MaterialSpec(J=(0, 0, 1.0))})
    assert split.converged and whole.converged

    # coefficients: the interface coefficient equals the merged internal coefficient
    merged = ms.assemble_region(whole.states["domain"]).system.matrix.diagonal()
    xc_whole = whole.states["domain"].region.geometry.cell_centre
    for st in split.states.values():
        diag = ms.assemble_region(st).system.matrix.diagonal()
        xc = st.region.geometry.cell_centre
        idx = [int(np.argmin(np.linalg.norm(xc_whole - x, axis=1))) for x in xc]
        assert np.max(np.abs(diag - merged[idx])) <= 1e-12 * merged.max()
        assert np.max(np.abs(st.A[:, 2] - whole.states["domain"].A[idx, 2])) <= 1e-7 * np.abs(st.A).max()


# ---------------------------------------------------------------------------
# magnetized cylinder at coarse resolution
# ---------------------------------------------------------------------------


def test_magnetized_cylinder_interior_field():
    sol = magnetized_disc()
    assert sol.converged
    st = sol.states["disc"]
    r = np.hypot(*st.region.geometry.cell_centre[:, :2].T)
    inner = r < DISC_RADIUS - 2 * COARSE / 2
    B = st.fields.B.values[inner]
    ref = MU0 * MAGNETIZATION / 2
    assert np.max(np.abs(B[:, 1] - ref)) / ref < 0.05
    assert np.max(np.abs(B[:, 0])) / ref < 0.05


def test_outer_loop_is_deterministic():
    a = magnetized_disc(max_outer_iterations=40)
    mesh = disc_in_box(COARSE)
    b = solve(mesh, {"air": MaterialSpec(), "disc": MaterialSpec(M=(0.0, MAGNETIZATION, 0.0))}, max_outer_iterations=40)
    assert a.history == b.history
    assert a.log_text() == b.log_text()


def test_iteration_log_layout(tmp_path):
    sol = magnetized_disc(max_outer_iterations=3)
    assert sol.status == ms.STATUS_MAX_ITER and sol.iterations == 3
    path = tmp_path / "log.csv"
    sol.write_log(path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == list(ms.LOG_FIELDS)
    assert len(lines) == 1 + 3 * len(sol.states)


@pytest.mark.parametrize("control", [
    dict(relaxation_application=ms.REGION_WISE),
    dict(relaxation_mode=ms.EXPLICIT),
    dict(lambda_div=1.0),
])
def test_relaxation_variants_reach_the_same_field(control):
    ref = magnetized_disc()
    sol = magnetized_disc(**control)
    assert sol.converged
    for name, st in sol.states.items():
        B, B_ref = st.fields.B.values, ref.states[name].fields.B.values
        assert np.max(np.abs(B - B_ref)) <= 1e-4 * np.abs(B_ref).max()


def test_region_order_validation():
    with pytest.raises(KeyError, match="region order"):
        magnetized_disc(region_order=("disc",))


# ---------------------------------------------------------------------------
# controls and the divergence guard
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("kw", [
    dict(lambda_div=0.0), dict(lambda_div=1.2), dict(lambda_K=-0.1),
    dict(relaxation_mode="sometimes"), dict(relaxation_application="random"),
    dict(n_non_orth_correctors=-1), dict(max_outer_iterations=0),
    dict(non_orth_limiter=1.5), dict(gradient_scheme="spectral"),
])
def test_control_validation(kw):
    with pytest.raises(SolverConfigError):
        ms.OuterIterationControl(**kw)


def test_corrector_default_follows_mesh_quality():
    ctl = ms.OuterIterationControl()
    assert ctl.correctors_for(square_mesh(4)) == 0
    assert ctl.correctors_for(square_mesh(4, "tri")) == ms.DEFAULT_CORRECTORS
    assert ms.OuterIterationControl(n_non_orth_correctors=5).correctors_for(square_mesh(4)) == 5


def _guard(history, **kw):
    return ms._diverging(list(history), ms.OuterIterationControl(**kw))


def test_guard_stops_on_non_finite_residual():
    assert _guard([1.0, float("nan")]) == "non-finite residual"
    assert _guard([1.0, float("inf")]) == "non-finite residual"


def test_guard_ignores_warm_up_transients():
    early = [1e-3 * 2**k for k in range(15)]  # steep rise within the warm-up
    assert _guard(early) is None


def test_guard_flags_sustained_growth():
    settled = [1.0] * 25 + [0.1]
    rising = settled + [0.2, 0.4, 0.8, 1.6, 3.2]
    assert "rose over 5" in _guard(rising)
    assert _guard(rising[:-1]) is None  # only four rises so far
    assert _guard(settled + [0.11, 0.12, 0.13, 0.14, 0.15]) is None  # rising but below 10x the minimum


def test_guard_respects_custom_window_and_factor():
    hist = [1.0] * 25 + [0.1, 0.3, 0.9, 2.7]
    assert _guard(hist, divergence_window=3) is not None
    assert _guard(hist, divergence_window=3, divergence_guard=100.0) is None


def test_compute_B_of_uniform_potential():
    r = square_mesh(5, "tri", shear=0.2).regions[0]
    g = r.geometry
    B0 = np.array([0.2, -0.1, 0.0])
    Ac = uniform_field_potential(g.cell_centre, B0)
    Ab = uniform_field_potential(g.face_centre[r.n_internal :], B0)
    assert np.allclose(ms.compute_B(r, Ac, Ab), B0, atol=1e-12)


def test_surface_current_orientation():
    e_n = np.array([[1.0, 0.0, 0.0]])
    K = ms.compute_surface_current(e_n, [[0.0, 1.0, 0.0]], [[0.0, 0.0, 0.0]])
    assert np.allclose(K, [[0.0, 0.0, -1.0]])
    K = ms.compute_surface_current(e_n, [[0.0, 1.0, 0.0]], [[0.0, 0.0, 0.0]], K_f=[[0.0, 0.0, 2.0]])
    assert np.allclose(K, [[0.0, 0.0, -3.0]])


def test_magnetized_oracle_spec_matches_cases():
    spec, oracle = oracle_spec(MAGNETIZED_CYLINDER)
    assert oracle.a == DISC_RADIUS
    assert spec.materials["cylinder"]["M"][1] == MAGNETIZATION
