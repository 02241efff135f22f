"""Exact-coefficient multivariate polynomials and tensor Gauss rules.

Polynomials store a sparse ``{exponent tuple: coefficient}`` map.  Coefficients
are normally :class:`fractions.Fraction`, so identities such as a vanishing
divergence hold exactly; floats are accepted too and then arithmetic is plain
floating point.  Evaluation always returns float arrays.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Number

import numpy as np


def exact(value):
    """Convert a number (float, int, numpy scalar) to an exact Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return Fraction(float(value))


class MultiPoly:
    """Sparse polynomial in ``nvars`` variables."""

    __slots__ = ("nvars", "terms")

    def __init__(self, terms=None, nvars=3):
        self.nvars = nvars
        clean = {}
        if terms:
            for exp, c in terms.items():
                if c != 0:
                    if len(exp) != nvars:
                        raise ValueError(f"exponent {exp} does not match nvars={nvars}")
                    clean[tuple(exp)] = c
        self.terms = clean

    # constructors -----------------------------------------------------
    @classmethod
    def const(cls, c, nvars=3):
        return cls({(0,) * nvars: c}, nvars)

    @classmethod
    def var(cls, k, nvars=3, coeff=Fraction(1)):
        exp = [0] * nvars
        exp[k] = 1
        return cls({tuple(exp): coeff}, nvars)

    @classmethod
    def monomial(cls, exp, coeff=Fraction(1)):
        return cls({tuple(exp): coeff}, len(exp))

    @classmethod
    def zero(cls, nvars=3):
        return cls({}, nvars)

    # arithmetic -------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, MultiPoly):
            if other.nvars != self.nvars:
                raise ValueError("mismatched number of variables")
            return other
        if isinstance(other, Number):
            return MultiPoly.const(other, self.nvars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return MultiPoly(out, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly({e: -c for e, c in self.terms.items()}, self.nvars)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Number):
            if other == 0:
                return MultiPoly.zero(self.nvars)
            return MultiPoly({e: c * other for e, c in self.terms.items()}, self.nvars)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return MultiPoly(out, self.nvars)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Number):
            return NotImplemented
        if isinstance(other, (int, Fraction)):
            other = Fraction(other)
            return MultiPoly({e: c / other for e, c in self.terms.items()}, self.nvars)
        return MultiPoly({e: c / other for e, c in self.terms.items()}, self.nvars)

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers")
        result = MultiPoly.const(Fraction(1), self.nvars)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other):
        if isinstance(other, Number):
            other = MultiPoly.const(other, self.nvars)
        if not isinstance(other, MultiPoly):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for e, c in sorted(self.terms.items()):
            mono = "*".join(f"x{k + 1}^{p}" if p > 1 else f"x{k + 1}" for k, p in enumerate(e) if p)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)

    # calculus ---------------------------------------------------------
    def is_zero(self):
        return not self.terms

    def diff(self, k):
        out = {}
        for e, c in self.terms.items():
            if e[k]:
                ne = list(e)
                ne[k] -= 1
                out[tuple(ne)] = c * e[k]
        return MultiPoly(out, self.nvars)

    def degree(self):
        return max((sum(e) for e in self.terms), default=0)

    def degrees(self):
        """Maximal exponent per variable."""
        if not self.terms:
            return (0,) * self.nvars
        return tuple(max(e[k] for e in self.terms) for k in range(self.nvars))

    def integrate_unit(self):
        """Exact integral over the unit cube ``[0, 1]^nvars``."""
        total = 0
        for e, c in self.terms.items():
            denom = 1
            for p in e:
                denom *= p + 1
            total += c / denom if isinstance(c, float) else Fraction(c) / denom
        return total

    def restrict(self, k, value):
        """Fix variable ``k`` to ``value``; returns a polynomial in the remaining variables."""
        out = {}
        for e, c in self.terms.items():
            ne = e[:k] + e[k + 1:]
            out[ne] = out.get(ne, 0) + c * value ** e[k]
        return MultiPoly(out, self.nvars - 1)

    def extend(self, positions, nvars):
        """Embed into ``nvars`` variables; variable ``j`` becomes ``positions[j]``."""
        out = {}
        for e, c in self.terms.items():
            ne = [0] * nvars
            for j, p in enumerate(e):
                ne[positions[j]] += p
            out[tuple(ne)] = out.get(tuple(ne), 0) + c
        return MultiPoly(out, nvars)

    def substitute(self, polys):
        """Compose: replace variable ``k`` by ``polys[k]`` (all sharing one variable count)."""
        if len(polys) != self.nvars:
            raise ValueError("need one polynomial per variable")
        nv = polys[0].nvars
        powers = [[MultiPoly.const(Fraction(1), nv)] for _ in polys]
        result = MultiPoly.zero(nv)
        for e, c in self.terms.items():
            term = MultiPoly.const(c, nv)
            for k, p in enumerate(e):
                while len(powers[k]) <= p:
                    powers[k].append(powers[k][-1] * polys[k])
                if p:
                    term = term * powers[k][p]
            result = result + term
        return result

    def map_coeffs(self, fn):
        return MultiPoly({e: fn(c) for e, c in self.terms.items()}, self.nvars)

    def to_float(self):
        return self.map_coeffs(float)

    def evaluate(self, points):
        """Evaluate at ``points`` of shape ``(N, nvars)`` (or a single point)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[0])
        for e, c in self.terms.items():
            term = np.full(pts.shape[0], float(c))
            for k, p in enumerate(e):
                if p:
                    term = term * pts[:, k] ** p
            out += term
        return out

    def to_dense(self, shape):
        arr = np.zeros(shape)
        for e, c in self.terms.items():
            arr[e] += float(c)
        return arr

    __call__ = evaluate


#: bivariate polynomials on a face, in that face's two local variables
FacePoly = MultiPoly


def face_poly(terms):
    return MultiPoly(terms, nvars=2)


class VectorPoly:
    """A 3-vector of :class:`MultiPoly` components."""

    __slots__ = ("comps",)

    def __init__(self, comps):
        comps = tuple(comps)
        if len(comps) != 3:
            raise ValueError("VectorPoly needs three components")
        self.comps = comps

    @classmethod
    def zero(cls, nvars=3):
        return cls([MultiPoly.zero(nvars)] * 3)

    @classmethod
    def constant(cls, vec, nvars=3):
        return cls([MultiPoly.const(exact(v), nvars) for v in vec])

    @property
    def nvars(self):
        return self.comps[0].nvars

    def __getitem__(self, k):
        return self.comps[k]

    def __iter__(self):
        return iter(self.comps)

    def __add__(self, other):
        return VectorPoly([a + b for a, b in zip(self.comps, other.comps)])

    def __sub__(self, other):
        return VectorPoly([a - b for a, b in zip(self.comps, other.comps)])

    def __neg__(self):
        return VectorPoly([-a for a in self.comps])

    def __mul__(self, s):
        # scalar or scalar polynomial
        return VectorPoly([a * s for a in self.comps])

    __rmul__ = __mul__

    def __truediv__(self, s):
        return VectorPoly([a / s for a in self.comps])

    def __eq__(self, other):
        if not isinstance(other, VectorPoly):
            return NotImplemented
        return self.comps == other.comps

    def __repr__(self):
        return "VectorPoly(" + ", ".join(repr(c) for c in self.comps) + ")"

    def is_zero(self):
        return all(c.is_zero() for c in self.comps)

    def dot(self, vec):
        """Dot with a constant 3-vector of numbers."""
        out = MultiPoly.zero(self.nvars)
        for c, v in zip(self.comps, vec):
            if v != 0:
                out = out + c * v
        return out

    def divergence(self):
        return self.comps[0].diff(0) + self.comps[1].diff(1) + self.comps[2].diff(2)

    def curl(self):
        f = self.comps
        return VectorPoly([
            f[2].diff(1) - f[1].diff(2),
            f[0].diff(2) - f[2].diff(0),
            f[1].diff(0) - f[0].diff(1),
        ])

    def substitute(self, polys):
        return VectorPoly([c.substitute(polys) for c in self.comps])

    def degrees(self):
        ds = [c.degrees() for c in self.comps]
        return tuple(max(d[k] for d in ds) for k in range(self.nvars))

    def degree(self):
        return max(c.degree() for c in self.comps)

    def map_coeffs(self, fn):
        return VectorPoly([c.map_coeffs(fn) for c in self.comps])

    def evaluate(self, points):
        return np.stack([c.evaluate(points) for c in self.comps], axis=-1)

    __call__ = evaluate


def matvec(mat, vec):
    """Product of a 3x3 nested list of MultiPoly with a VectorPoly."""
    return VectorPoly([sum((mat[i][j] * vec[j] for j in range(3)), MultiPoly.zero(vec.nvars))
                       for i in range(3)])


def compose_with_trilinear(p, map_components):
    """Substitute the components of a trilinear map into a physical polynomial."""
    return p.substitute(list(map_components))


# ---------------------------------------------------------------------------
# polynomial bases
# ---------------------------------------------------------------------------

def exponents(r, nvars=3, homogeneous=False):
    """Exponent tuples of total degree <= r (or == r), graded then lexicographic."""
    out = []
    degs = [r] if homogeneous else range(r + 1)
    for d in degs:
        for e in itertools.product(range(d + 1), repeat=nvars):
            if sum(e) == d:
                out.append(e)
    # graded, with higher powers of earlier variables first
    out.sort(key=lambda e: (sum(e), tuple(-p for p in e)))
    return out


def dim_P(r, nvars=3):
    if r < 0:
        return 0
    return math.comb(r + nvars, nvars)


def basis_P(r, nvars=3):
    return [MultiPoly.monomial(e) for e in exponents(r, nvars)]


def basis_tilde_P(r, nvars=3):
    return [MultiPoly.monomial(e) for e in exponents(r, nvars, homogeneous=True)]


def basis_vec_P(r):
    out = []
    for m in basis_P(r):
        for k in range(3):
            comps = [MultiPoly.zero()] * 3
            comps[k] = m
            out.append(VectorPoly(comps))
    return out


def position_vector(nvars=3):
    return VectorPoly([MultiPoly.var(k, nvars) for k in range(3)])


def basis_x_tildeP(r):
    """x * (homogeneous polynomials of degree r)."""
    x = position_vector()
    return [x * m for m in basis_tilde_P(r)]


def _coefficient_vector(vp, index):
    return {(k, e): c for k, comp in enumerate(vp.comps) for e, c in comp.terms.items()}


def independent_subset(vpolys):
    """Indices of a maximal linearly independent subset (exact elimination)."""
    pivots = []  # list of (pivot key, reduced row)
    keep = []
    for idx, vp in enumerate(vpolys):
        row = {(k, e): Fraction(c) for k, comp in enumerate(vp.comps) for e, c in comp.terms.items()}
        for key, prow in pivots:
            c = row.get(key)
            if c:
                for k2, v2 in prow.items():
                    nv = row.get(k2, 0) - c * v2
                    if nv:
                        row[k2] = nv
                    else:
                        row.pop(k2, None)
        if row:
            key = min(row)
            piv = row[key]
            pivots.append((key, {k2: v2 / piv for k2, v2 in row.items()}))
            keep.append(idx)
    return keep


@lru_cache(maxsize=None)
def _curl_basis_cached(s):
    fields = []
    for vp in basis_vec_P(s):
        c = vp.curl()
        if not c.is_zero():
            fields.append(c)
    keep = independent_subset(fields)
    return tuple(fields[i] for i in keep)


def basis_curl_P(s):
    """A basis of Curl (P_s)^3 built from curls of monomial vector fields."""
    return list(_curl_basis_cached(s))


def dim_curl_P(s):
    return 3 * dim_P(s) - (dim_P(s + 1) - 1)


def polynomial_part_dim(r):
    """dim(Curl P_{r+1}^3 + x P_0) = (r+2)(r+1)(2r+9)/6 + 1."""
    return (r + 2) * (r + 1) * (2 * r + 9) // 6 + 1


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (N, k) in [0, 1]^k
    weights: np.ndarray  # (N,), sum to 1
    degree: int  # exact for polynomials of this degree in each variable

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def _gauss_1d(npts):
    x, w = np.polynomial.legendre.leggauss(npts)
    return (x + 1) / 2, w / 2


@lru_cache(maxsize=None)
def gauss_rule(k, degree):
    """Tensor Gauss-Legendre rule on ``[0,1]^k`` exact to ``degree`` in each variable."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    npts = max(1, (degree + 2) // 2)
    x, w = _gauss_1d(npts)
    pts = np.array(list(itertools.product(x, repeat=k)))
    wts = np.array([np.prod(c) for c in itertools.product(w, repeat=k)])
    # build-time exactness check on the top monomial in each variable
    top = pts[:, 0] ** degree if k else np.ones(1)
    if k and abs(wts @ top - 1.0 / (degree + 1)) > 1e-13:
        raise AssertionError("Gauss rule failed its exactness check")
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, 2 * npts - 1)


def tensor_powers(points, degs):
    """List of (N, d_k + 1) power tables for each coordinate."""
    pts = np.asarray(points, dtype=float)
    return [pts[:, k, None] ** np.arange(d + 1) for k, d in enumerate(degs)]


def dense_coefficients(vpolys, degs=None):
    """Stack VectorPolys into a float array of shape (m, 3, d1+1, d2+1, d3+1)."""
    if degs is None:
        ds = [vp.degrees() for vp in vpolys]
        degs = tuple(max(d[k] for d in ds) for k in range(3)) if ds else (0, 0, 0)
    shape = tuple(d + 1 for d in degs)
    arr = np.zeros((len(vpolys), 3) + shape)
    for i, vp in enumerate(vpolys):
        for k, comp in enumerate(vp.comps):
            for e, c in comp.terms.items():
                arr[(i, k) + e] += float(c)
    return arr, degs


def dense_scalar_coefficients(polys, degs=None):
    if degs is None:
        ds = [p.degrees() for p in polys]
        degs = tuple(max(d[k] for d in ds) for k in range(3)) if ds else (0, 0, 0)
    shape = tuple(d + 1 for d in degs)
    arr = np.zeros((len(polys),) + shape)
    for i, p in enumerate(polys):
        for e, c in p.terms.items():
            arr[(i,) + e] += float(c)
    return arr, degs


def eval_dense_vector(coeffs, points):
    """Evaluate a dense (m, 3, ...) coefficient stack at (N, 3) points -> (N, m, 3)."""
    degs = [s - 1 for s in coeffs.shape[2:]]
    p0, p1, p2 = tensor_powers(points, degs)
    return np.einsum("mkabc,na,nb,nc->nmk", coeffs, p0, p1, p2, optimize=True)


def eval_dense_scalar(coeffs, points):
    degs = [s - 1 for s in coeffs.shape[1:]]
    p0, p1, p2 = tensor_powers(points, degs)
    return np.einsum("mabc,na,nb,nc->nm", coeffs, p0, p1, p2, optimize=True)


def dense_divergence(coeffs):
    """Dense coefficients (m, ...) of the divergence of a dense vector stack."""
    m = coeffs.shape[0]
    shape = coeffs.shape[2:]
    out = np.zeros((m,) + shape)
    for k in range(3):
        c = coeffs[:, k]
        n = shape[k]
        if n < 2:
            continue
        idx = [slice(None)] * 4
        src = [slice(None)] * 4
        idx[k + 1] = slice(0, n - 1)
        src[k + 1] = slice(1, n)
        factors = np.arange(1, n).reshape([-1 if j == k else 1 for j in range(3)])
        out[tuple(idx)] += c[tuple(src)] * factors
    return out
