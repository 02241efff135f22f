"""Reference-cube pre-supplements and divergence-free supplements on hexahedra.

A pre-supplement is a polynomial field on the unit cube whose normal trace is a
prescribed monomial (minus its mean) on one face and zero on the others, with
zero divergence.  Combining pre-supplements with the flux expansion of the face
Jacobian times a physical monomial gives supplements: after the Piola map they
are divergence free and carry the monomial (minus its face average) as normal
flux on one face of the physical element.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np

from .geometry import Hexahedron, face_axes, face_point_to_cube, face_scaled_normals
from .polyalg import MultiPoly, VectorPoly, matvec


class RefVectorFunction:
    """A reference-cube vector polynomial with Piola semantics."""

    def __init__(self, vpoly, tag="", **meta):
        self.vpoly = vpoly
        self.tag = tag
        self.meta = meta

    def __repr__(self):
        return f"RefVectorFunction({self.tag!r})"

    # exact derived data ----------------------------------------------
    @cached_property
    def divergence(self):
        return self.vpoly.divergence()

    @cached_property
    def traces(self):
        """Reference normal traces ``v̂ . ν̂`` on the six faces as bivariate polynomials."""
        out = []
        for i in range(6):
            a, side, _ = face_axes(i)
            t = self.vpoly[a].restrict(a, Fraction(side))
            out.append(t if side else -t)
        return tuple(out)

    # linear combinations ---------------------------------------------
    def __add__(self, other):
        return RefVectorFunction(self.vpoly + other.vpoly, f"({self.tag})+({other.tag})")

    def __sub__(self, other):
        return RefVectorFunction(self.vpoly - other.vpoly, f"({self.tag})-({other.tag})")

    def __mul__(self, s):
        return RefVectorFunction(self.vpoly * s, f"{s}*({self.tag})")

    __rmul__ = __mul__

    def __truediv__(self, s):
        return RefVectorFunction(self.vpoly / s, f"({self.tag})/{s}")

    # numerical evaluation --------------------------------------------
    def evaluate(self, xhat):
        return self.vpoly.evaluate(xhat)

    def physical_values(self, hexa, xhat):
        return hexa.piola_values(self.vpoly.evaluate(xhat), xhat)

    def physical_divergence(self, hexa, xhat):
        _, J = hexa.jacobian(np.atleast_2d(xhat))
        return self.divergence.evaluate(xhat) / J

    def physical_trace(self, hexa, i, st):
        """``v . ν`` on physical face ``i`` at face parameters ``st``."""
        pts = face_point_to_cube(i, st)
        n = face_scaled_normals(hexa, i, st)
        K = np.linalg.norm(n, axis=1)
        v = self.physical_values(hexa, pts)
        return np.einsum("qk,qk->q", v, n) / K


def combine(funcs, coeffs, tag="combination"):
    """Exact linear combination of RefVectorFunctions."""
    total = None
    for f, c in zip(funcs, coeffs):
        if c == 0:
            continue
        term = f.vpoly * c
        total = term if total is None else total + term
    if total is None:
        total = VectorPoly.zero()
    return RefVectorFunction(total, tag)


# ---------------------------------------------------------------------------
# pull-backs of physical polynomials
# ---------------------------------------------------------------------------

def pullback_scalar(hexa, w):
    """``w ∘ F`` for a polynomial ``w`` in the hexahedron's physical coordinates."""
    return w.substitute(list(hexa.map_polys))


def pullback_vector(hexa, v, tag="polynomial"):
    """Reference field whose Piola image is the physical polynomial field ``v``."""
    composed = v.substitute(list(hexa.map_polys))
    return RefVectorFunction(matvec(hexa.adjugate_polys, composed), tag)


# ---------------------------------------------------------------------------
# pre-supplements
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _presupplement_vpoly(i, ell, m):
    a, side, (p, q) = face_axes(i)
    X = [MultiPoly.var(k) for k in range(3)]
    one = MultiPoly.const(Fraction(1))
    xa = X[a] if side else one - X[a]
    sgn = 1 if side else -1
    comps = [MultiPoly.zero()] * 3
    if ell == 0 and m == 0:
        comps[a] = xa * sgn
        return VectorPoly(comps)
    xp, xq = X[p], X[q]
    xpl, xqm = xp ** ell, xq ** m
    comps[a] = (xa * xpl * xqm - xa * Fraction(1, (ell + 1) * (m + 1))) * sgn
    comps[p] = xp * (one - xpl) * (xqm + Fraction(1, m + 1)) * Fraction(1, 2 * (ell + 1))
    comps[q] = xq * (one - xqm) * (xpl + Fraction(1, ell + 1)) * Fraction(1, 2 * (m + 1))
    return VectorPoly(comps)


def presupplement(i, ell, m):
    """Pre-supplement for face ``i`` and face monomial ``s^ell t^m`` of the reference parameters."""
    if ell < 0 or m < 0:
        raise ValueError("exponents must be non-negative")
    return RefVectorFunction(_presupplement_vpoly(i, ell, m), f"psi^{i}_{ell},{m}", face=i, exps=(ell, m))


def face_bubble(p, face=1):
    """Divergence-free field with zero normal trace on every face of the cube.

    ``p`` is a bivariate polynomial in the two reference parameters of ``face``.
    """
    a, _, (pa, qa) = face_axes(face)
    if p.is_zero():
        return RefVectorFunction(VectorPoly.zero(), "bubble(0)")
    X = [MultiPoly.var(k) for k in range(3)]
    one = MultiPoly.const(Fraction(1))
    lifted = p.extend([pa, qa], 3)
    b = X[pa] * (one - X[pa]) * X[qa] * (one - X[qa]) * lifted
    comps = [MultiPoly.zero()] * 3
    comps[pa] = b.diff(qa)
    comps[qa] = -b.diff(pa)
    return RefVectorFunction(VectorPoly(comps), "bubble")


# ---------------------------------------------------------------------------
# flux expansions and supplements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FluxCoeffs:
    """Expansion ``K_i (x_i∘F)^ℓ (x_j∘F)^m = Σ α_ab (s^a t^b - 1/((a+1)(b+1))) + α_00``."""

    face: int
    exps: tuple
    alpha: dict  # (a, b) -> Fraction
    local_vars: tuple

    @property
    def alpha00(self):
        return self.alpha.get((0, 0), Fraction(0))

    def matrix(self):
        n = self.exps[0] + self.exps[1] + 2
        M = np.zeros((n, n))
        for (a, b), c in self.alpha.items():
            M[a, b] = float(c)
        return M

    def reconstruct(self):
        """Rebuild the expanded bivariate polynomial from the coefficients."""
        out = MultiPoly.zero(2)
        for (a, b), c in self.alpha.items():
            if (a, b) == (0, 0):
                out = out + MultiPoly.const(c, 2)
            else:
                out = out + (MultiPoly.monomial((a, b)) - Fraction(1, (a + 1) * (b + 1))) * c
        return out


class SupplementFactory:
    """Cached construction of supplements on one hexahedron."""

    def __init__(self, hexa):
        self.hexa = hexa
        self._cache = {}

    def local_vars(self, i, local_vars=None):
        return tuple(local_vars) if local_vars is not None else self.hexa.face(i).local_vars

    def face_map(self, i):
        """Physical coordinates restricted to reference face ``i`` (bivariate polynomials)."""
        key = ("fmap", i)
        if key not in self._cache:
            a, side, _ = face_axes(i)
            self._cache[key] = tuple(c.restrict(a, Fraction(side)) for c in self.hexa.map_polys)
        return self._cache[key]

    def flux_coeffs(self, i, ell, m, local_vars=None):
        lv = self.local_vars(i, local_vars)
        key = ("alpha", i, ell, m, lv)
        if key not in self._cache:
            fm = self.face_map(i)
            G = self.hexa.face(i).face_jacobian * (fm[lv[0]] ** ell) * (fm[lv[1]] ** m)
            alpha = {e: c for e, c in G.terms.items() if e != (0, 0)}
            alpha[(0, 0)] = G.integrate_unit()
            self._cache[key] = FluxCoeffs(i, (ell, m), alpha, lv)
        return self._cache[key]

    def area(self, i):
        """Exact face area (integral of the face Jacobian)."""
        return self.flux_coeffs(i, 0, 0).alpha00

    def const(self, i):
        key = ("const", i)
        if key not in self._cache:
            fc = self.flux_coeffs(i, 0, 0)
            f = combine([presupplement(i, a, b) for (a, b) in fc.alpha],
                        list(fc.alpha.values()), tag=f"sigma^{i}_0,0")
            self._cache[key] = f
        return self._cache[key]

    def monomial(self, i, ell, m, local_vars=None):
        if ell + m < 1:
            raise ValueError("use const() or pair() for the constant flux")
        lv = self.local_vars(i, local_vars)
        key = ("mono", i, ell, m, lv)
        if key not in self._cache:
            fc = self.flux_coeffs(i, ell, m, lv)
            f0 = self.flux_coeffs(i, 0, 0)
            c = fc.alpha00 / f0.alpha00
            coeffs = dict(fc.alpha)
            for e, v in f0.alpha.items():
                coeffs[e] = coeffs.get(e, 0) - c * v
            coeffs.pop((0, 0), None)
            keys = [e for e in coeffs if coeffs[e] != 0]
            f = combine([presupplement(i, *e) for e in keys], [coeffs[e] for e in keys],
                        tag=f"sigma^{i}_{ell},{m}")
            f.meta.update(face=i, exps=(ell, m), c=c, local_vars=lv)
            self._cache[key] = f
        return self._cache[key]

    def pair(self, i, j):
        if i == j:
            raise ValueError("pair needs two distinct faces")
        key = ("pair", i, j)
        if key not in self._cache:
            f = combine([self.const(i), self.const(j)],
                        [1 / self.area(i), -1 / self.area(j)], tag=f"sigma^{i},{j}")
            self._cache[key] = f
        return self._cache[key]


_FACTORIES = weakref.WeakKeyDictionary()


def factory(hexa):
    f = _FACTORIES.get(hexa)
    if f is None:
        f = SupplementFactory(hexa)
        _FACTORIES[hexa] = f
    return f


def expand_flux_coeffs(hexa, i, ell, m, local_vars=None):
    return factory(hexa).flux_coeffs(i, ell, m, local_vars)


def supplement_const(hexa, i):
    return factory(hexa).const(i)


def supplement_monomial(hexa, i, ell, m, local_vars=None):
    """Supplement with physical flux ``x_i^ℓ x_j^m - c`` on face ``i``; returns ``(function, c)``."""
    f = factory(hexa).monomial(i, ell, m, local_vars)
    return f, f.meta["c"]


def supplement_pair(hexa, i, j):
    return factory(hexa).pair(i, j)
