import numpy as np
import pytest

from hexdiv.element import count_parallel_pairs, is_truncated_pillar
from hexdiv.errors import NonConforming, NonFlatFace, OddSubdivision
from hexdiv.mesh import (Mesh, cube_pattern, face_count, gen_cube, gen_pillar, gen_trapezoid,
                         generate, refine, shape_regularity)


@pytest.mark.parametrize("n,faces", [(1, 6), (2, 36), (3, 108), (6, 756)])
def test_cube_counts(n, faces):
    m = gen_cube(n)
    assert m.n_cells == n ** 3
    assert m.n_faces == faces == face_count(n)
    assert m.boundary.sum() == 6 * n * n


def test_pillar_cell_count():
    assert gen_pillar(6).n_cells == 216


@pytest.mark.parametrize("family", ["cube", "trapezoid", "pillar"])
def test_meshes_fill_unit_cube(family):
    m = generate(family, 4)
    assert sum(h.volume for h in m.hexahedra) == pytest.approx(1.0, abs=1e-12)
    assert m.vertices.min() == pytest.approx(0.0) and m.vertices.max() == pytest.approx(1.0)
    assert m.check_conforming()


@pytest.mark.parametrize("n", [2, 4])
def test_trapezoid_cells_have_two_parallel_pairs(n):
    m = gen_trapezoid(n)
    assert all(count_parallel_pairs(h) == 2 for h in m.hexahedra)


@pytest.mark.parametrize("n", [2, 4])
def test_pillar_cells(n):
    m = gen_pillar(n)
    assert all(count_parallel_pairs(h) == 0 for h in m.hexahedra)
    assert all(is_truncated_pillar(h) for h in m.hexahedra)


def test_cube_cells_have_three_pairs():
    assert all(count_parallel_pairs(h) == 3 for h in gen_cube(2).hexahedra)


@pytest.mark.parametrize("n", [0, 3, 5])
def test_refine_rejects_odd(n):
    with pytest.raises(OddSubdivision):
        refine(cube_pattern(), n)
    if n:
        with pytest.raises(OddSubdivision):
            gen_pillar(n)


@pytest.mark.parametrize("family", ["cube", "trapezoid", "pillar"])
def test_refinement_halves_diameters_and_keeps_regularity(family):
    a, b = generate(family, 2), generate(family, 4)
    assert b.diameters().max() == pytest.approx(a.diameters().max() / 2, rel=1e-12)
    assert shape_regularity(b) == pytest.approx(shape_regularity(a), rel=1e-12)


def test_json_round_trip(tmp_path):
    m = gen_pillar(2)
    path = tmp_path / "mesh.json"
    m.save(path)
    m2 = Mesh.load(path)
    np.testing.assert_array_equal(m2.cells, m.cells)
    np.testing.assert_allclose(m2.vertices, m.vertices)
    assert m2.n_faces == m.n_faces


def test_face_links_are_signed_permutations():
    m = gen_pillar(2)
    for link in m.face_links.values():
        assert np.abs(np.abs(link.T).sum(0) - 1).max() == 0
        assert abs(abs(np.linalg.det(link.T)) - 1) < 1e-14


def test_face_shared_by_three_cells_rejected():
    m = gen_cube(2)
    cells = np.vstack([m.cells, m.cells[:1]])
    with pytest.raises(NonConforming):
        Mesh(m.vertices, cells)


def test_moved_node_rejected():
    m = gen_cube(2)
    v = m.vertices.copy()
    v[m.cells[0][7]] += [0.05, 0.0, 0.0]
    with pytest.raises(NonFlatFace):
        Mesh(v, m.cells)


def test_unknown_family():
    with pytest.raises(ValueError):
        generate("tetra", 2)
