from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hexdiv.polyalg import (MultiPoly, VectorPoly, basis_curl_P, dense_coefficients,
                            dense_divergence, dim_curl_P, dim_P, eval_dense_vector, exact,
                            exponents, gauss_rule, independent_subset, polynomial_part_dim,
                            position_vector)

X, Y, Z = (MultiPoly.var(k) for k in range(3))

small_int = st.integers(-4, 4)
terms = st.dictionaries(st.tuples(st.integers(0, 2), st.integers(0, 2), st.integers(0, 2)),
                        small_int, max_size=5)


def poly(d):
    return MultiPoly({e: Fraction(c) for e, c in d.items()})


def test_exact_converts_floats_without_rounding():
    assert exact(0.1) == Fraction(0.1)
    assert exact(3) == 3
    assert isinstance(exact(np.float64(0.5)), Fraction)


def test_arithmetic_and_derivatives():
    p = X * X * Y + 3 * Z - 1
    assert p.diff(0) == 2 * X * Y
    assert p.diff(2) == MultiPoly.const(Fraction(3))
    assert p.degree() == 3
    assert p.degrees() == (2, 1, 1)
    assert (p - p).is_zero()
    assert (X + 1) ** 2 == X * X + 2 * X + 1


def test_integrate_over_unit_cube():
    assert (X * Y * Z).integrate_unit() == Fraction(1, 8)
    assert (X ** 2 + Y).integrate_unit() == Fraction(1, 3) + Fraction(1, 2)


def test_restrict_extend_and_substitute():
    p = X * Y + Z
    q = p.restrict(0, Fraction(1))
    assert q.nvars == 2
    assert q.evaluate(np.array([[0.5, 0.25]]))[0] == pytest.approx(0.75)
    s = MultiPoly.monomial((1, 1))
    lifted = s.extend([0, 2], 3)
    assert lifted == X * Z
    comp = p.substitute([Y, X, Z + 1])
    assert comp == X * Y + Z + 1


@settings(max_examples=60, deadline=None)
@given(terms, terms)
def test_product_evaluates_as_product(a, b):
    p, q = poly(a), poly(b)
    pts = np.array([[0.3, -0.7, 1.1], [2.0, 0.5, -1.0]])
    np.testing.assert_allclose((p * q).evaluate(pts), p.evaluate(pts) * q.evaluate(pts),
                               rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(terms, terms, terms)
def test_divergence_of_curl_vanishes(a, b, c):
    v = VectorPoly([poly(a), poly(b), poly(c)])
    assert v.curl().divergence().is_zero()


def test_exponent_counts():
    for r in range(5):
        assert len(exponents(r)) == dim_P(r)
        assert len(exponents(r, 2)) == dim_P(r, 2)
    assert exponents(1) == [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]


@pytest.mark.parametrize("s", [1, 2, 3])
def test_curl_basis_dimension(s):
    basis = basis_curl_P(s)
    assert len(basis) == dim_curl_P(s)
    assert all(b.divergence().is_zero() for b in basis)
    assert len(independent_subset(basis)) == len(basis)


@pytest.mark.parametrize("r", [0, 1, 2])
def test_polynomial_part_dimension(r):
    fields = basis_curl_P(r + 1) + [position_vector()]
    assert len(independent_subset(fields)) == polynomial_part_dim(r)


def test_independent_subset_drops_dependent_fields():
    a = VectorPoly([X, Y, Z])
    b = VectorPoly([Y, Z, X])
    assert independent_subset([a, b, a * 2 - b, b]) == [0, 1]


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("degree", [1, 4, 9])
def test_gauss_rule_exactness(k, degree):
    rule = gauss_rule(k, degree)
    assert rule.degree >= degree
    assert rule.weights.sum() == pytest.approx(1.0)
    e = degree
    assert rule.weights @ rule.points[:, 0] ** e == pytest.approx(1 / (e + 1))


def test_dense_evaluation_matches_sparse():
    v = [VectorPoly([X * Y, Z ** 2, X + 1]), VectorPoly([Y, X * Y * Z, Z])]
    coeffs, _ = dense_coefficients(v)
    pts = np.random.default_rng(0).random((7, 3))
    dense = eval_dense_vector(coeffs, pts)
    for m, vp in enumerate(v):
        np.testing.assert_allclose(dense[:, m], vp.evaluate(pts), atol=1e-14)
    div = dense_divergence(coeffs)
    from hexdiv.polyalg import eval_dense_scalar
    np.testing.assert_allclose(eval_dense_scalar(div, pts)[:, 1], v[1].divergence().evaluate(pts),
                               atol=1e-14)
