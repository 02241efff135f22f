from fractions import Fraction

import numpy as np
import pytest

from hexdiv.geometry import random_hexahedron, unit_cube
from hexdiv.polyalg import MultiPoly, VectorPoly, gauss_rule
from hexdiv.supplement import (face_bubble, factory, presupplement, pullback_vector,
                               supplement_monomial, supplement_pair)
from hexdiv.verify import SuiteReport, check_supplements

PAIRS = [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1)]


@pytest.mark.parametrize("i", range(6))
@pytest.mark.parametrize("ell,m", PAIRS)
def test_presupplement_divergence_free_with_monomial_trace(i, ell, m):
    f = presupplement(i, ell, m)
    assert f.divergence.is_zero()
    want = MultiPoly.monomial((ell, m)) - Fraction(1, (ell + 1) * (m + 1))
    for k in range(6):
        if k == i:
            assert f.traces[k] == want
        else:
            assert f.traces[k].is_zero()


@pytest.mark.parametrize("i", range(6))
def test_constant_presupplement(i):
    f = presupplement(i, 0, 0)
    assert f.divergence == MultiPoly.const(Fraction(1))
    for k in range(6):
        assert f.traces[k] == (MultiPoly.const(Fraction(1), 2) if k == i else MultiPoly.zero(2))


def test_face_bubble_has_no_traces():
    b = face_bubble(MultiPoly.monomial((1, 0)) + 2, face=3)
    assert b.divergence.is_zero()
    assert all(t.is_zero() for t in b.traces)


def test_flux_coefficients_reconstruct_the_product(rng):
    h = random_hexahedron(rng, 0.2)
    fac = factory(h)
    for i in range(6):
        lv = h.face(i).local_vars
        fc = fac.flux_coeffs(i, 1, 1)
        fm = fac.face_map(i)
        assert fc.reconstruct() == h.face(i).face_jacobian * fm[lv[0]] * fm[lv[1]]
        assert float(fac.area(i)) == pytest.approx(h.face(i).area, rel=1e-14)


def test_supplement_contracts_on_random_hexes(rng):
    report = SuiteReport("supplements")
    for _ in range(5):
        check_supplements(random_hexahedron(rng, 0.2), report, max_degree=2)
    assert report.ok, report.failures


def test_supplement_monomial_average_is_face_mean(rng):
    h = random_hexahedron(rng, 0.2)
    f, c = supplement_monomial(h, 2, 1, 0)
    rule = gauss_rule(2, 5)
    tr = f.physical_trace(h, 2, rule.points)
    K = h.face(2).face_jacobian.evaluate(rule.points)
    # the trace has zero mean over the physical face
    assert abs(rule.weights @ (tr * K)) < 1e-13


def test_pair_carries_unit_and_opposite_flux():
    h = unit_cube()
    f = supplement_pair(h, 1, 4)
    st = np.array([[0.3, 0.6]])
    assert f.physical_trace(h, 1, st)[0] == pytest.approx(1.0)
    assert f.physical_trace(h, 4, st)[0] == pytest.approx(-1.0)
    assert f.physical_trace(h, 0, st)[0] == pytest.approx(0.0)


def test_pullback_reproduces_physical_polynomial(rng):
    h = random_hexahedron(rng, 0.2)
    X, Y, Z = (MultiPoly.var(k) for k in range(3))
    v = VectorPoly([X * Y, Z - 1, X + Y + Z])
    f = pullback_vector(h, v)
    xh = rng.random((5, 3))
    np.testing.assert_allclose(f.physical_values(h, xh), v.evaluate(h.map(xh)), atol=1e-12)
