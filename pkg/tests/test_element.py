import json

import numpy as np
import pytest
import scipy.linalg

from hexdiv import element as el
from hexdiv.errors import SingularCnuMatrix
from hexdiv.geometry import face_point_to_cube, face_scaled_normals, random_hexahedron, unit_cube
from hexdiv.polyalg import gauss_rule
from hexdiv.verify import random_stack_instance, smooth_field, trace_fit_residual

DIMS = {"at0": (6, 1), "at0g": (6, 1), "at1": (21, 4), "at1red": (18, 1), "rt0": (6, 1),
        "rt1": (36, 8), "bddf1": (18, 1), "atr:2": (45, 10), "atr:2:red": (39, 4)}


@pytest.fixture
def hexa(rng):
    return random_hexahedron(rng, 0.2)


@pytest.mark.parametrize("name", sorted(DIMS))
def test_dimensions(name, hexa):
    sp = el.build_space(hexa, name)
    assert (sp.dim, sp.dim_W) == DIMS[name]
    assert sp.dim == el.expected_dimension(sp.family, sp.r)


def test_at0_structure_is_four_polynomials_and_two_supplements(hexa):
    sp = el.build_space(hexa, "at0")
    tags = [f.tag for f in sp.raw]
    assert sum("sigma" in t for t in tags) == 2
    assert sp.dofs.counts == {"flux": 6, "div": 0, "interior": 0}


def test_at0_closed_form_matches_nodal_shapes(hexa):
    sp = el.build_AT0_simple(hexa)
    areas = np.array([sp.frame.hexa.face(i).area for i in range(6)])
    closed = sp.info["closed_form"]
    # closed-form rows use pointwise traces; nodal DOFs are fluxes, hence the area scaling
    np.testing.assert_allclose(sp.shape_coeffs, closed.T / areas, atol=1e-12)


def test_shape_functions_have_unit_flux_on_their_face(hexa):
    sp = el.build_space(hexa, "at0")
    rule = gauss_rule(2, 5)
    for i in range(6):
        fd = hexa.face(i)
        phys = sp.shape_values(face_point_to_cube(i, rule.points))
        n = face_scaled_normals(hexa, i, rule.points)
        flux = np.einsum("q,qjd,qd->j", rule.weights, phys, n)
        np.testing.assert_allclose(flux, np.eye(6)[i], atol=1e-12)
        assert fd.area > 0


@pytest.mark.parametrize("name", ["at0", "at1", "at1red", "rt1", "bddf1"])
def test_dofs_of_shape_functions_are_identity(name, hexa):
    sp = el.build_space(hexa, name)
    np.testing.assert_allclose(sp.dofs_of_dense(sp.shape_dense), np.eye(sp.dim), atol=1e-9)


@pytest.mark.parametrize("name", ["at0", "at1", "at1red", "atr:2"])
def test_at_normal_traces_are_polynomials_of_degree_r(name, hexa):
    sp = el.build_space(hexa, name)
    assert trace_fit_residual(sp, sp.r) < 1e-10


# general AT0 --------------------------------------------------------------

def test_at0_general_orthogonality(hexa):
    info = el.build_AT0_general(hexa).info
    M, N, S, phi = info["M"], info["N"], info["S"], info["phi"]
    assert np.abs(M @ N.T).max() < 1e-12
    assert np.abs(S @ phi).max() < 1e-12 * np.abs(phi).max()


def test_at0_general_flux_matrix_nonsingular_on_perturbed_cubes(rng):
    for _ in range(100):
        info = el.build_AT0_general(random_hexahedron(rng, 0.1)).info
        assert np.isfinite(np.linalg.cond(np.vstack([info["M"], info["S"]])))


def _shared_dimension(a, b, tol=1e-8):
    ang = scipy.linalg.subspace_angles(a.shape_dense.reshape(a.dim, -1).T,
                                       b.shape_dense.reshape(b.dim, -1).T)
    return int((ang < tol).sum())


def _n_sigma(sp):
    return sum("sigma" in f.tag for f in sp.raw)


def test_at0_general_shares_polynomial_part_with_simple_at0(hexa):
    a = el.build_space(hexa, "at0")
    b = el.build_space(hexa, "at0g")
    # supplement choices differ; the polynomial part and one supplement direction agree
    assert _shared_dimension(a, b) >= a.dim - _n_sigma(a)


def test_projected_stack_random_instances(rng):
    for _ in range(50):
        assert el.lemma51_check(*random_stack_instance(rng))


def test_projected_stack_singular_when_phi_in_null_space_of_M(rng):
    M, N, _ = random_stack_instance(rng)
    # x = φ is then annihilated by both M and the projected N
    phi = scipy.linalg.null_space(M)[:, 0]
    assert not el.lemma51_check(M, N, phi)


# geometry report -------------------------------------------------------------

def test_affine_normalize_round_trip(hexa):
    A, tilde = el.affine_normalize(hexa)
    v = hexa.vertices
    np.testing.assert_allclose(tilde.vertices @ A.T + v[0], v, atol=1e-12)
    np.testing.assert_allclose(tilde.vertices[[0, 1, 2, 4]],
                               [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], atol=1e-12)


def test_unit_cube_report():
    rep = el.geometry_report(unit_cube())
    np.testing.assert_allclose(rep.C * rep.H, np.eye(3), atol=1e-14)
    assert rep.parallel_pairs == 3
    assert rep.is_truncated_pillar
    assert rep.recommended_mode == "symmetric"
    assert rep.cnu_det == pytest.approx(1.0)


@pytest.mark.parametrize("kind,pairs", [("parallel1", 1), ("parallel2", 2), ("generic", 0)])
def test_parallel_pair_count(rng, kind, pairs):
    assert el.count_parallel_pairs(random_hexahedron(rng, 0.2, kind)) == pairs


def test_pillar_classification(rng):
    assert el.is_truncated_pillar(random_hexahedron(rng, 0.2, "pillar"))
    assert not el.is_truncated_pillar(random_hexahedron(rng, 0.2, "generic"))


def test_selection_gap(rng):
    for _ in range(20):
        _, tilde = el.affine_normalize(random_hexahedron(rng, 0.2))
        diff, pred = el.selection_gap(tilde)
        assert diff == pytest.approx(pred, abs=1e-10 * max(1.0, abs(pred)))


# AT1 ------------------------------------------------------------------------

def test_at1_symmetric_flux_block_matches_cnu_determinant(hexa):
    sp = el.build_AT1(hexa, "symmetric")
    rep = el.geometry_report(hexa)
    assert abs(np.linalg.det(el.odd_face_flux_block(sp))) == pytest.approx(abs(rep.cnu_det), rel=1e-9)


def test_at1_nonsymmetric_mode(hexa):
    sp = el.build_AT1(hexa, "nonsymmetric")
    assert sp.dim == 21
    assert abs(sp.info["d"]) > 0
    assert trace_fit_residual(sp, 1) < 1e-10


def test_at1_modes_share_polynomial_part(hexa):
    a = el.build_AT1(hexa, "symmetric")
    b = el.build_AT1(hexa, "nonsymmetric")
    assert _shared_dimension(a, b) >= a.dim - _n_sigma(a)


def test_symmetric_mode_refused_below_threshold(hexa):
    with pytest.raises(SingularCnuMatrix):
        el.build_AT1(hexa, "symmetric", threshold=2.0)


def test_general_r1_matches_at1_on_cube():
    a = el.build_space(unit_cube(), "at1")
    b = el.build_space(unit_cube(), "atr:1")
    assert a.dim == b.dim
    assert scipy.linalg.subspace_angles(a.shape_dense.reshape(a.dim, -1).T,
                                        b.shape_dense.reshape(b.dim, -1).T).max() < 1e-8


# comparison spaces ----------------------------------------------------------

def test_rt0_equals_at0_on_cube(rng):
    a = el.build_space(unit_cube(), "at0")
    b = el.build_space(unit_cube(), "rt0")
    x = rng.random((20, 3))
    np.testing.assert_allclose(a.shape_values(x), b.shape_values(x), atol=1e-13)


def test_bddf1_span_equals_at1red_on_cube():
    a = el.build_space(unit_cube(), "bddf1").shape_dense.reshape(18, -1)
    b = el.build_space(unit_cube(), "at1red").shape_dense.reshape(18, -1)
    assert np.linalg.matrix_rank(np.vstack([a, b]), tol=1e-9) == 18


# projection -----------------------------------------------------------------

@pytest.mark.parametrize("name", ["at0", "at1", "at1red", "atr:2"])
def test_projection_reproduces_degree_r_fields(name, hexa, rng):
    sp = el.build_space(hexa, name)
    if sp.r == 0:
        c0 = rng.standard_normal(3)

        def v(x):
            return np.tile(c0, (len(x), 1))

        def dv(x):
            return np.zeros(len(x))
    else:
        B = rng.standard_normal((3, 3))
        c0 = rng.standard_normal(3)

        def v(x):
            return x @ B.T + c0

        def dv(x):
            return np.full(len(x), np.trace(B))
    coeffs = el.pi_project(sp, v, dv)
    x = rng.random((10, 3))
    np.testing.assert_allclose(sp.evaluate(coeffs, x), v(hexa.map(x)), atol=1e-11)


@pytest.mark.parametrize("name", ["at0", "at0g", "at1", "at1red", "rt0", "rt1", "bddf1"])
def test_commuting_diagram(name, hexa):
    v, div = smooth_field()
    assert el.commuting_residual(el.build_space(hexa, name), v, div) < 1e-10


def test_dump_round_trip(tmp_path, hexa):
    sp = el.build_space(hexa, "at1")
    path = tmp_path / "at1.json"
    sp.dump(path)
    data = json.loads(path.read_text())
    assert data["dim"] == 21 and data["dim_W"] == 4
    np.testing.assert_allclose(data["shape_from_raw"], sp.shape_coeffs)
    np.testing.assert_allclose(data["vertices"], hexa.vertices)


def test_parse_space():
    assert el.parse_space(" AT1 ") == "at1"
    assert el.parse_space("atr:2:red") == "atr:2:red"
    for bad in ("at3", "atr:0:red", "atr:3", "atr:1:full"):
        with pytest.raises(ValueError):
            el.parse_space(bad)
