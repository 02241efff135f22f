"""Local H(div) element spaces on flat-faced hexahedra.

Every space is stored as a list of reference-cube vector polynomials (the
construction basis) together with its degrees of freedom.  Shape functions are
obtained by inverting the DOF matrix.  Physical polynomials are pulled back
exactly, so the Piola image of a pulled-back field is the original polynomial.

Spaces are built in a *frame*: an affine copy of the element whose coordinates
keep coefficients of moderate size.  Reference functions do not depend on the
frame, and every face moment uses test functions written in frame coordinates,
so the DOFs of similar elements coincide.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (DegenerateCorner, DegenerateElement, RankDeficiency, SingularCnuMatrix,
                     SingularDofMatrix, SupplementSelectionFailed)
from .geometry import (CORNERS, Hexahedron, face_axes, face_point_to_cube, face_scaled_normals)
from .polyalg import (MultiPoly, VectorPoly, basis_curl_P, dense_coefficients,
                      dense_divergence, dense_scalar_coefficients, eval_dense_scalar,
                      eval_dense_vector, exact, exponents, gauss_rule, position_vector)
from .supplement import RefVectorFunction, combine, factory, pullback_scalar, pullback_vector

FAMILIES = ("AT_full", "AT_red", "RT", "BDDF")


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    """Affine coordinates ``x = A ξ + b`` together with the element written in ``ξ``."""

    A: np.ndarray
    b: np.ndarray
    hexa: Hexahedron

    def to_frame(self, x):
        return np.linalg.solve(self.A, (np.atleast_2d(x) - self.b).T).T


def scaled_frame(hexa):
    """Translate the first vertex to the origin and scale by the main diagonal."""
    v = hexa.vertices
    h = float(np.linalg.norm(v[7] - v[0]))
    local = (v - v[0]) / h
    return Frame(h * np.eye(3), v[0].copy(), Hexahedron(local, hexa.flat_tol, check=False))


def affine_normalize(hexa):
    """Affine frame in which ``x024 = 0`` and ``x124, x034, x025`` are the unit vectors.

    Returns ``(A, Ẽ)`` with ``x = A x̃ + x024``.
    """
    v = hexa.vertices
    A = np.column_stack([v[1] - v[0], v[2] - v[0], v[4] - v[0]])
    scale = np.linalg.norm(A, axis=0).prod()
    if abs(np.linalg.det(A)) <= 1e-12 * scale:
        raise DegenerateCorner("edges leaving the first vertex are linearly dependent")
    local = np.linalg.solve(A, (v - v[0]).T).T
    local[0] = 0.0
    local[1] = [1.0, 0.0, 0.0]
    local[2] = [0.0, 1.0, 0.0]
    local[4] = [0.0, 0.0, 1.0]
    return A, Hexahedron(local, hexa.flat_tol * 10, check=False)


def normalized_frame(hexa):
    A, tilde = affine_normalize(hexa)
    return Frame(A, hexa.vertices[0].copy(), tilde)


# ---------------------------------------------------------------------------
# face test functions
# ---------------------------------------------------------------------------

class PhysicalFaceBasis:
    """Polynomials in frame coordinates, restricted to a face."""

    def __init__(self, frame_hexa, face, polys, labels=None):
        self.frame_hexa = frame_hexa
        self.face = face
        self.polys = list(polys)
        self.labels = labels or [repr(p) for p in self.polys]
        self.degree = max((p.degree() for p in self.polys), default=0)

    def __len__(self):
        return len(self.polys)

    def values(self, st):
        x = self.frame_hexa.map(face_point_to_cube(self.face, st))
        return np.stack([p.evaluate(x) for p in self.polys], axis=1)


class ReferenceFaceBasis:
    """Polynomials in the two reference parameters of a face."""

    def __init__(self, face, polys, labels=None):
        self.face = face
        self.polys = list(polys)
        self.labels = labels or [repr(p) for p in self.polys]
        self.degree = max((max(p.degrees()) for p in self.polys), default=0)

    def __len__(self):
        return len(self.polys)

    def values(self, st):
        return np.stack([p.evaluate(st) for p in self.polys], axis=1)


def local_monomial_exponents(r):
    """Exponent pairs ``(a, b)`` with ``a + b <= r``, constant first."""
    return [(0, 0)] + [e for e in exponents(r, 2) if sum(e) >= 1]


def face_basis_P(frame_hexa, i, r, local_vars=None, centered=True):
    """``{1} ∪ {x_i^a x_j^b - c_ab}`` on face ``i`` with ``c_ab`` the exact face average."""
    fac = factory(frame_hexa)
    lv = tuple(local_vars) if local_vars is not None else frame_hexa.face(i).local_vars
    polys, labels = [], []
    for a, b in local_monomial_exponents(r):
        exp = [0, 0, 0]
        exp[lv[0]] += a
        exp[lv[1]] += b
        p = MultiPoly.monomial(exp)
        if (a, b) != (0, 0) and centered:
            c = fac.flux_coeffs(i, a, b, lv).alpha00 / fac.area(i)
            p = p - c
        polys.append(p)
        labels.append(f"x{lv[0] + 1}^{a} x{lv[1] + 1}^{b}")
    return PhysicalFaceBasis(frame_hexa, i, polys, labels)


def reference_face_Q(r, face):
    polys = [MultiPoly.monomial((a, b)) for b in range(r + 1) for a in range(r + 1)]
    return ReferenceFaceBasis(face, polys)


def reference_face_P(r, face):
    polys = [MultiPoly.monomial(e) for e in local_monomial_exponents(r)]
    return ReferenceFaceBasis(face, polys)


# ---------------------------------------------------------------------------
# numerical functionals of reference fields
# ---------------------------------------------------------------------------

def _face_rule(degree):
    return gauss_rule(2, max(degree, 1))


def face_traces(coeffs, i, st):
    """Reference normal traces ``(Q, m)`` of a dense vector stack on face ``i``."""
    a, side, _ = face_axes(i)
    vals = eval_dense_vector(coeffs, face_point_to_cube(i, st))
    return vals[:, :, a] * (1.0 if side else -1.0)


def flux_moments(coeffs, face_basis):
    """``∫_f v.ν μ dA`` for each field (columns) and face test function (rows)."""
    deg = max(coeffs.shape[2:]) - 1 + face_basis.degree + 2
    rule = _face_rule(deg)
    tr = face_traces(coeffs, face_basis.face, rule.points)
    mu = face_basis.values(rule.points)
    return np.einsum("q,qm,qj->mj", rule.weights, mu, tr)


def face_gram(hexa_frame, face_basis):
    """``∫_f μ_k μ_l dA`` on the physical (frame) face."""
    deg = 2 * face_basis.degree + 3
    rule = _face_rule(deg)
    mu = face_basis.values(rule.points)
    K = np.linalg.norm(face_scaled_normals(hexa_frame, face_basis.face, rule.points), axis=1)
    return np.einsum("q,qk,ql->kl", rule.weights * K, mu, mu)


def divergence_moments(coeffs, w_coeffs):
    """``∫_E div v w dx = ∫ div̂ v̂ ŵ dx̂`` (rows: tests, columns: fields)."""
    div = dense_divergence(coeffs)
    deg = max(div.shape[1:]) - 1 + max(w_coeffs.shape[1:]) - 1 + 1
    rule = gauss_rule(3, max(deg, 1))
    dv = eval_dense_scalar(div, rule.points)
    wv = eval_dense_scalar(w_coeffs, rule.points)
    return np.einsum("q,qk,qj->kj", rule.weights, wv, dv)


def reference_moments(coeffs, q_coeffs):
    """``∫ v̂ . q̂ dx̂`` against reference test fields."""
    deg = max(coeffs.shape[2:]) + max(q_coeffs.shape[2:])
    rule = gauss_rule(3, deg)
    v = eval_dense_vector(coeffs, rule.points)
    q = eval_dense_vector(q_coeffs, rule.points)
    return np.einsum("q,qkd,qjd->kj", rule.weights, q, v)


# ---------------------------------------------------------------------------
# the element space
# ---------------------------------------------------------------------------

@dataclass
class DofSet:
    flux: list
    div: list
    interior: list

    @property
    def counts(self):
        return {"flux": len(self.flux), "div": len(self.div), "interior": len(self.interior)}

    def __len__(self):
        return len(self.flux) + len(self.div) + len(self.interior)


@dataclass
class ElementSpace:
    """A local mixed space: vector basis, scalar space ``W`` and DOFs."""

    family: str
    r: int
    hexa: Hexahedron
    frame: Frame
    raw: list  # RefVectorFunction construction basis
    W: list  # reference scalar polynomials ŵ
    face_bases: list  # six face test-function sets for the flux DOFs
    div_tests: list = field(default_factory=list)  # reference scalar polynomials
    interior_tests: list = field(default_factory=list)  # reference VectorPolys
    name: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.raw_dense, _ = dense_coefficients([f.vpoly for f in self.raw])
        self.W_dense, _ = dense_scalar_coefficients(self.W)
        self.dofs = DofSet(
            [(i, k) for i in range(6) for k in range(len(self.face_bases[i]))],
            list(range(len(self.div_tests))),
            list(range(len(self.interior_tests))),
        )
        self.dof_matrix = self.dofs_of_dense(self.raw_dense)
        n = len(self.raw)
        if self.dof_matrix.shape != (n, n):
            raise SingularDofMatrix(
                f"{self.name}: {self.dof_matrix.shape[0]} DOFs for {n} basis functions")
        s = np.linalg.svd(self.dof_matrix, compute_uv=False)
        self.condition = float(s[0] / s[-1]) if s[-1] > 0 else np.inf
        if not np.isfinite(self.condition) or self.condition > 1e13:
            raise SingularDofMatrix(f"{self.name}: DOF matrix condition {self.condition:.3e}")
        self.shape_coeffs = np.linalg.inv(self.dof_matrix)
        self.shape_dense = np.einsum("jk,j...->k...", self.shape_coeffs, self.raw_dense)

    # ------------------------------------------------------------------
    @property
    def dim(self):
        return len(self.raw)

    @property
    def dim_W(self):
        return len(self.W)

    def dofs_of_dense(self, coeffs):
        """Apply all DOF functionals to a dense stack of reference fields."""
        rows = [flux_moments(coeffs, fb) for fb in self.face_bases]
        if self.div_tests:
            wd, _ = dense_scalar_coefficients(self.div_tests)
            rows.append(divergence_moments(coeffs, wd))
        if self.interior_tests:
            qd, _ = dense_coefficients(self.interior_tests)
            rows.append(reference_moments(coeffs, qd))
        return np.vstack(rows)

    def flux_matrix(self, face_bases=None, shape=False):
        """Trace coefficients: rows are fields, columns are (face, face-basis) pairs."""
        face_bases = face_bases or self.face_bases
        coeffs = self.shape_dense if shape else self.raw_dense
        blocks = []
        for fb in face_bases:
            G = face_gram(self.frame.hexa, fb)
            blocks.append(np.linalg.solve(G, flux_moments(coeffs, fb)).T)
        return np.hstack(blocks)

    # evaluation of shape functions ------------------------------------
    def shape_values(self, xhat):
        """Physical values ``(N, dim, 3)`` of the shape functions on the real element."""
        ref = eval_dense_vector(self.shape_dense, xhat)
        DF, J = self.hexa.jacobian_batch(xhat)
        return np.einsum("qkd,qjd->qjk", DF, ref) / J[:, None, None]

    def shape_divergence(self, xhat):
        _, J = self.hexa.jacobian_batch(xhat)
        return eval_dense_scalar(dense_divergence(self.shape_dense), xhat) / J[:, None]

    def W_values(self, xhat):
        return eval_dense_scalar(self.W_dense, xhat)

    def evaluate(self, coeffs, xhat):
        return np.einsum("qjk,j->qk", self.shape_values(xhat), coeffs)

    # physical-field DOFs ------------------------------------------------
    def dofs_of_field(self, v, div_v=None, npts=8):
        """DOF values of a smooth physical field ``v`` (callable on ``(N, 3)`` points)."""
        hexa = self.hexa
        rows = []
        for fb in self.face_bases:
            rule = gauss_rule(2, 2 * npts - 1)
            pts = face_point_to_cube(fb.face, rule.points)
            n = face_scaled_normals(hexa, fb.face, rule.points)
            flux = np.einsum("qk,qk->q", v(hexa.map(pts)), n)
            rows.append(np.einsum("q,qm,q->m", rule.weights, fb.values(rule.points), flux))
        rule = gauss_rule(3, 2 * npts - 1)
        x = hexa.map(rule.points)
        DF, J = hexa.jacobian_batch(rule.points)
        if self.div_tests:
            if div_v is None:
                raise ValueError("this space has divergence DOFs; pass div_v")
            wd, _ = dense_scalar_coefficients(self.div_tests)
            wv = eval_dense_scalar(wd, rule.points)
            rows.append(np.einsum("q,qk,q->k", rule.weights * J, wv, div_v(x)))
        if self.interior_tests:
            vhat = J[:, None] * np.linalg.solve(DF, v(x)[:, :, None])[:, :, 0]
            qd, _ = dense_coefficients(self.interior_tests)
            qv = eval_dense_vector(qd, rule.points)
            rows.append(np.einsum("q,qkd,qd->k", rule.weights, qv, vhat))
        return np.concatenate(rows)

    def to_dict(self):
        """Serializable summary with reference coefficient tables of the shape functions."""
        def vp_table(vp):
            return [[[list(e), str(c)] for e, c in sorted(comp.terms.items())] for comp in vp.comps]

        return {
            "family": self.family,
            "r": self.r,
            "name": self.name,
            "vertices": self.hexa.vertices.tolist(),
            "dim": self.dim,
            "dim_W": self.dim_W,
            "dof_counts": self.dofs.counts,
            "condition": self.condition,
            "raw_basis": [{"tag": f.tag, "coefficients": vp_table(f.vpoly)} for f in self.raw],
            "shape_from_raw": self.shape_coeffs.tolist(),
            "W": [[[list(e), str(c)] for e, c in sorted(w.terms.items())] for w in self.W],
        }

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


# ---------------------------------------------------------------------------
# helpers shared by the builders
# ---------------------------------------------------------------------------

def _pull_polys(frame, fields, tag):
    return [pullback_vector(frame.hexa, f, f"{tag}[{k}]") for k, f in enumerate(fields)]


def _scalar_monomials(degrees):
    out = []
    for d in degrees:
        out += [MultiPoly.monomial(e) for e in exponents(d, 3, homogeneous=True)]
    return out


def _W_polynomial(frame, r):
    """``P_r`` in frame coordinates pulled back; the first entry is the constant."""
    if r < 0:
        return []
    return [pullback_scalar(frame.hexa, w) for w in _scalar_monomials(range(r + 1))]


def _x_times_homogeneous(degrees):
    x = position_vector()
    return [x * m for m in _scalar_monomials(degrees)]


def _pair_realization(fac, consts, areas, pivot=None):
    """Exact divergence-free field with face-constant fluxes ``consts`` (up to round-off).

    Uses pairs with a pivot face so the divergence is exactly zero.
    """
    if pivot is None:
        pivot = int(np.argmax(areas))
    funcs, cs = [], []
    for k, s in enumerate(consts):
        if k == pivot or s == 0:
            continue
        funcs.append(fac.pair(k, pivot))
        cs.append(exact(s) * fac.area(k))
    return combine(funcs, cs, tag="pair-combination")


def lemma51_check(M, N, phi, tol=1e-10):
    """Invertibility of ``[M; N (I - φφᵀ/φᵀφ)]``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    N = np.atleast_2d(np.asarray(N, dtype=float))
    phi = np.asarray(phi, dtype=float)
    S = N @ (np.eye(len(phi)) - np.outer(phi, phi) / (phi @ phi))
    stacked = np.vstack([M, S])
    if stacked.shape[0] != stacked.shape[1]:
        return False
    s = np.linalg.svd(stacked, compute_uv=False)
    return bool(s[-1] > tol * s[0])


# ---------------------------------------------------------------------------
# AT0
# ---------------------------------------------------------------------------

def _at0_polynomial_part(frame):
    v = frame.hexa.vertices
    x = position_vector()
    fields = [x - VectorPoly.constant(v[k]) for k in (1, 2, 4, 0)]
    names = ["x-x124", "x-x034", "x-x025", "x-x024"]
    return [pullback_vector(frame.hexa, f, n) for f, n in zip(fields, names)]


def _constant_face_bases(frame):
    one = MultiPoly.const(Fraction(1))
    return [PhysicalFaceBasis(frame.hexa, i, [one], ["1"]) for i in range(6)]


def build_AT0_simple(hexa):
    """AT0 with the two supplements ``σ^{1,3}`` and ``σ^{3,5}``."""
    frame = scaled_frame(hexa)
    fac = factory(frame.hexa)
    raw = _at0_polynomial_part(frame) + [fac.pair(1, 3), fac.pair(3, 5)]
    space = ElementSpace("AT_full", 0, hexa, frame, raw, _W_polynomial(frame, 0),
                         _constant_face_bases(frame), name="AT0")
    space.info["closed_form"] = at0_simple_closed_form(frame)
    return space


def at0_simple_closed_form(frame):
    """Explicit shape functions as coefficient rows over the AT0 construction basis.

    Row ``i`` has unit normal flux density on face ``i`` and zero on the others;
    the construction basis is ``[x-x124, x-x034, x-x025, x-x024, σ^{1,3}, σ^{3,5}]``.
    """
    h = frame.hexa
    F = h.faces
    nu = [f.normal for f in F]
    ar = [f.area for f in F]
    v = h.vertices
    alpha = (F[1].centroid - v[0]) @ nu[1]
    beta = (F[3].centroid - v[0]) @ nu[3]
    gamma = (F[5].centroid - v[0]) @ nu[5]
    den = ar[1] * alpha + ar[3] * beta + ar[5] * gamma
    if den <= 0:
        raise DegenerateElement("non-positive closed-form denominator")
    rows = np.zeros((6, 6))
    rows[1] = ar[1] * np.array([0, 0, 0, 1, ar[3] * beta + ar[5] * gamma, ar[5] * gamma]) / den
    rows[3] = ar[3] * np.array([0, 0, 0, 1, -ar[1] * alpha, ar[5] * gamma]) / den
    rows[5] = ar[5] * np.array([0, 0, 0, 1, -ar[1] * alpha, -(ar[1] * alpha + ar[3] * beta)]) / den
    # constant vectors d_k = x024 - x_k  (k = 124, 034, 025) as raw-basis combinations
    D = np.column_stack([v[0] - v[1], v[0] - v[2], v[0] - v[4]])
    const_rows = np.array([[1, 0, 0, -1, 0, 0], [0, 1, 0, -1, 0, 0], [0, 0, 1, -1, 0, 0]], float)
    for target, (a, b) in ((0, (2, 4)), (2, (0, 4)), (4, (0, 2))):
        w = np.cross(nu[a], nu[b])
        denom = w @ nu[target]
        if abs(denom) <= 1e-12:
            raise DegenerateElement(f"vanishing normal triple product for face {target}")
        coef = np.linalg.solve(D, w) @ const_rows
        row = coef - sum((w @ nu[k]) * rows[k] for k in (1, 3, 5))
        rows[target] = row / denom
    return rows


def at0_flux_matrix_M(space):
    """Pointwise normal fluxes of the AT0 polynomial part, columns in face order 0,2,4,1,3,5."""
    order = [0, 2, 4, 1, 3, 5]
    areas = np.array([space.frame.hexa.face(i).area for i in range(6)])
    mom = space.dof_matrix[:, :4].T  # (4 basis, 6 faces) integrated fluxes
    return (mom / areas)[:, order]


def at0_general_N(M):
    """Explicit basis of the orthogonal complement of the rows of ``M``."""
    a1, b1, c1 = M[0, 0], M[0, 4], M[0, 5]
    b2, a2, c2 = M[1, 1], M[1, 3], M[1, 5]
    c3, a3, b3 = M[2, 2], M[2, 3], M[2, 4]
    al, be, ga = M[3, 3], M[3, 4], M[3, 5]
    return np.array([
        [al * b1 / a1, -be * a2 / b2, (al * b3 - be * a3) / c3, be, -al, 0.0],
        [(be * c1 - ga * b1) / a1, be * c2 / b2, -ga * b3 / c3, 0.0, ga, -be],
    ])


def build_AT0_general(hexa):
    """AT0 whose supplements have fluxes orthogonal to the polynomial part."""
    frame = scaled_frame(hexa)
    fac = factory(frame.hexa)
    poly = _at0_polynomial_part(frame)
    order = [0, 2, 4, 1, 3, 5]
    M = _FluxProbe(frame, _constant_face_bases(frame)).flux_matrix(poly)[:, order]
    if np.linalg.matrix_rank(M, tol=1e-10 * np.abs(M).max()) < 4:
        raise RankDeficiency("polynomial flux matrix lost rank", np.linalg.svd(M, compute_uv=False))
    N = at0_general_N(M)
    areas = np.array([frame.hexa.face(i).area for i in range(6)])
    phi = areas[order]
    S = N @ (np.eye(6) - np.outer(phi, phi) / (phi @ phi))
    if np.linalg.matrix_rank(np.vstack([M, S]), tol=1e-10) < 6:
        raise RankDeficiency("stacked flux matrix is singular", np.linalg.svd(np.vstack([M, S]), compute_uv=False))
    sup = []
    for row in S:
        consts = np.zeros(6)
        consts[order] = row
        f = _pair_realization(fac, consts, areas)
        f.tag = "sigma_general"
        sup.append(f)
    space = ElementSpace("AT_full", 0, hexa, frame, poly + sup, _W_polynomial(frame, 0),
                         _constant_face_bases(frame), name="AT0g")
    space.info.update(M=M, N=N, S=S, phi=phi)
    return space


# ---------------------------------------------------------------------------
# geometry classification
# ---------------------------------------------------------------------------

@dataclass
class GeometryReport:
    parallel_pairs: int
    is_truncated_pillar: bool
    H: np.ndarray
    C: np.ndarray
    H_minors: dict
    cnu_det: float
    cnu_condition: float
    cnu_relative_det: float
    recommended_mode: str

    def to_dict(self):
        return {
            "parallel_pairs": self.parallel_pairs,
            "is_truncated_pillar": self.is_truncated_pillar,
            "H": self.H.tolist(),
            "C": self.C.tolist(),
            "H_minors": {k: float(v) for k, v in self.H_minors.items()},
            "cnu_det": self.cnu_det,
            "cnu_condition": self.cnu_condition,
            "cnu_relative_det": self.cnu_relative_det,
            "recommended_mode": self.recommended_mode,
        }


EDGE_FAMILIES = {
    d: [(v, v + 2 ** d) for v in range(8) if not (v >> d) & 1] for d in range(3)
}


def count_parallel_pairs(hexa, tol=1e-12):
    return sum(abs(hexa.face(2 * a).normal @ hexa.face(2 * a + 1).normal) > 1 - tol for a in range(3))


def is_truncated_pillar(hexa, tol=1e-12):
    v = hexa.vertices
    for edges in EDGE_FAMILIES.values():
        dirs = [v[b] - v[a] for a, b in edges]
        dirs = [d / np.linalg.norm(d) for d in dirs]
        if all(abs(dirs[0] @ d) > 1 - tol for d in dirs[1:]):
            return True
    return False


def cnu_matrices(hexa):
    """``(H, C)`` on the normalized element: columns are ν and centroid of faces 1, 3, 5."""
    _, tilde = affine_normalize(hexa)
    H = np.column_stack([tilde.face(i).normal for i in (1, 3, 5)])
    C = np.column_stack([tilde.face(i).centroid for i in (1, 3, 5)])
    return H, C, tilde


def geometry_report(hexa, threshold=1e-8):
    H, C, _ = cnu_matrices(hexa)
    minors = {}
    for k in range(1, 4):
        for idx in itertools.combinations(range(3), k):
            minors[idx] = float(np.linalg.det(H[np.ix_(idx, idx)]))
    CH = C * H
    det = float(np.linalg.det(CH))
    s = np.linalg.svd(CH, compute_uv=False)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else np.inf
    rel = abs(det) / np.prod(np.linalg.norm(CH, axis=1))
    mode = "symmetric" if rel > threshold else "nonsymmetric"
    return GeometryReport(count_parallel_pairs(hexa), is_truncated_pillar(hexa), H, C,
                          minors, det, cond, float(rel), mode)


# ---------------------------------------------------------------------------
# AT1
# ---------------------------------------------------------------------------

AT1_LOCAL_VARS = {1: (1, 2), 3: (0, 2), 5: (0, 1)}


def _curl_lambda(li, lj, nk):
    """``curl(λ_i λ_j ν_k)`` for affine λ (MultiPoly) and a constant vector ``ν_k``."""
    prod = li * lj
    return VectorPoly([prod * exact(c) for c in nk]).curl()


def at1_polynomial_fields():
    """``ψ0..ψ8`` and ``ψ*9..ψ*11`` in normalized coordinates."""
    X = [MultiPoly.var(k) for k in range(3)]
    lam = {0: X[0], 2: X[1], 4: X[2], 6: X[0] + X[1] + X[2] - 1}
    nu = {0: (-1, 0, 0), 2: (0, -1, 0), 4: (0, 0, -1)}
    x = position_vector()
    E = np.eye(3)
    psi = [
        x - VectorPoly.constant(E[0]), _curl_lambda(lam[2], lam[6], nu[4]), _curl_lambda(lam[4], lam[6], nu[2]),
        x - VectorPoly.constant(E[1]), _curl_lambda(lam[0], lam[6], nu[4]), _curl_lambda(lam[4], lam[6], nu[0]),
        x - VectorPoly.constant(E[2]), _curl_lambda(lam[0], lam[6], nu[2]), _curl_lambda(lam[2], lam[6], nu[0]),
    ]
    for k in range(3):
        comps = [MultiPoly.zero()] * 3
        comps[k] = X[k]
        psi.append(VectorPoly(comps))
    return psi


def selection_determinant(tilde, s, t):
    """Bilinear determinant ``d(s, t)`` governing the non-symmetric supplements."""
    F = tilde.faces
    c1, c3, c5 = F[1].centroid, F[3].centroid, F[5].centroid
    n1, n3, n5 = F[1].normal, F[3].normal, F[5].normal
    a1, a3, a5 = F[1].area, F[3].area, F[5].area
    m = np.array([
        [c1[0] * n1[0] + n5[0] * (a5 * c5[0] - t) / a1, c3[0] * n3[0] + t * n5[0] / a3],
        [c1[1] * n1[1] + s * n5[1] / a1, c3[1] * n3[1] + n5[1] * (a5 * c5[1] - s) / a3],
    ])
    return float(np.linalg.det(m))


def select_st(tilde, rel_tol=1e-10):
    """Pick ``(s, t)`` maximizing ``|d(s, t)|`` over the corners of ``{0, |f5| c^5_2}^2``."""
    F = tilde.faces
    s2 = F[5].area * F[5].centroid[1]
    probes = [(0.0, 0.0), (s2, 0.0), (0.0, s2), (s2, s2)]
    vals = [abs(selection_determinant(tilde, s, t)) for s, t in probes]
    k = int(np.argmax(vals))
    if vals[k] <= rel_tol * max(1.0, abs(s2)):
        raise SupplementSelectionFailed(f"max |d(s,t)| = {vals[k]:.3e} over probes {probes}")
    return probes[k], vals[k]


def build_AT1(hexa, mode="auto", reduced=False, threshold=1e-8):
    """AT1 (full or reduced) with symmetric or non-symmetric supplements."""
    if mode not in ("auto", "symmetric", "nonsymmetric"):
        raise ValueError(f"unknown AT1 mode {mode!r}")
    report = geometry_report(hexa, threshold)
    if mode == "auto":
        mode = report.recommended_mode
    elif mode == "symmetric" and report.recommended_mode != "symmetric":
        raise SingularCnuMatrix(
            f"det(C∘H) = {report.cnu_det:.3e}: relative value {report.cnu_relative_det:.3e} "
            f"is not above the threshold {threshold:.1e}")
    frame = normalized_frame(hexa)
    tilde = frame.hexa
    fac = factory(tilde)
    poly = _pull_polys(frame, at1_polynomial_fields(), "psi")
    lv = AT1_LOCAL_VARS
    sig = [fac.monomial(1, 1, 0, lv[1]), fac.monomial(1, 0, 1, lv[1]),
           fac.monomial(3, 1, 0, lv[3]), fac.monomial(3, 0, 1, lv[3]),
           fac.monomial(5, 1, 0, lv[5]), fac.monomial(5, 0, 1, lv[5])]
    info = {"mode": mode, "report": report}
    if mode == "nonsymmetric":
        (s, t), dval = select_st(tilde)
        a5 = fac.area(5)
        c51, c52 = sig[4].meta["c"], sig[5].meta["c"]
        s4 = combine([sig[4], fac.pair(5, 1), fac.pair(1, 3)], [1, a5 * c51, exact(t)], "sigma4*")
        s5 = combine([sig[5], fac.pair(5, 3), fac.pair(3, 1)], [1, a5 * c52, exact(s)], "sigma5*")
        sig = sig[:4] + [s4, s5]
        info.update(s=s, t=t, d=dval)
    raw = poly + sig
    if not reduced:
        raw += _pull_polys(frame, _x_times_homogeneous([1]), "xP1")
    W = _W_polynomial(frame, 0 if reduced else 1)
    face_bases = [face_basis_P(tilde, i, 1) for i in range(6)]
    space = ElementSpace("AT_red" if reduced else "AT_full", 1, hexa, frame, raw, W, face_bases,
                         div_tests=W[1:], name="AT1red" if reduced else "AT1", info=info)
    return space


def odd_face_flux_block(space):
    """Fluxes of ``ψ*9..ψ*11`` and the six supplements on faces 1, 3, 5 in ``{1, x_i, x_j}``."""
    tilde = space.frame.hexa
    bases = [face_basis_P(tilde, i, 1, AT1_LOCAL_VARS[i], centered=False) for i in (1, 3, 5)]
    F = space.flux_matrix(bases)
    return F[9:18]


# ---------------------------------------------------------------------------
# general order
# ---------------------------------------------------------------------------

def n_supplements(r):
    return 2 if r == 0 else 3 * (r + 1)


def build_general_r(hexa, r, reduced=False):
    """AT_r by the null-space construction (``0 <= r <= 2``)."""
    if r < 0 or r > 2:
        raise ValueError("general construction supports 0 <= r <= 2")
    if reduced and r == 0:
        raise ValueError("the reduced space needs r >= 1")
    frame = scaled_frame(hexa)
    fh = frame.hexa
    fac = factory(fh)
    fields = basis_curl_P(r + 1) + [position_vector()]
    poly = _pull_polys(frame, fields, "curl")
    n = len(poly)
    face_bases = [face_basis_P(fh, i, r) for i in range(6)]
    probe = _FluxProbe(frame, face_bases)
    Mfull = probe.flux_matrix(poly)
    npf = len(face_bases[0])
    ncols = 6 * npf
    k = ncols - n_supplements(r)
    _, sv, Vt = np.linalg.svd(Mfull)
    if k > n or sv[k - 1] <= 1e-10 * sv[0]:
        raise RankDeficiency(f"flux matrix rank below {k}", sv)
    M = Vt[:k]
    N = Vt[k:]
    phi = np.zeros(ncols)
    areas = np.array([fh.face(i).area for i in range(6)])
    phi[::npf] = areas
    S = N @ (np.eye(ncols) - np.outer(phi, phi) / (phi @ phi))
    exps = local_monomial_exponents(r)
    sup = []
    for row in S:
        funcs, cs = [], []
        for i in range(6):
            for j, (a, b) in enumerate(exps[1:], start=1):
                c = row[i * npf + j]
                if c != 0:
                    funcs.append(fac.monomial(i, a, b))
                    cs.append(exact(c))
        const = _pair_realization(fac, row[::npf], areas)
        f = combine(funcs + [const], cs + [1], tag="sigma_general")
        sup.append(f)
    top = r if not reduced else r - 1
    divreps = _pull_polys(frame, _x_times_homogeneous(range(1, top + 1)), "xP") if top >= 1 else []
    W = _W_polynomial(frame, top)
    fam = "AT_red" if reduced else "AT_full"
    space = ElementSpace(fam, r, hexa, frame, poly + sup + divreps, W, face_bases,
                         div_tests=W[1:], name=f"AT{r}{'red' if reduced else ''}(general)")
    space.info.update(M_full=Mfull, M=M, N=N, S=S, phi=phi, singular_values=sv,
                      discarded=sv[k:])
    return space


class _FluxProbe:
    """Flux coefficients of arbitrary reference fields before a space exists."""

    def __init__(self, frame, face_bases):
        self.frame = frame
        self.face_bases = face_bases
        self.grams = [face_gram(frame.hexa, fb) for fb in face_bases]

    def flux_matrix(self, funcs):
        coeffs, _ = dense_coefficients([f.vpoly for f in funcs])
        return np.hstack([np.linalg.solve(G, flux_moments(coeffs, fb)).T
                          for G, fb in zip(self.grams, self.face_bases)])


# ---------------------------------------------------------------------------
# mapped comparison spaces
# ---------------------------------------------------------------------------

def _reference_W_Q(r):
    return [MultiPoly.monomial(e) for e in itertools.product(range(r + 1), repeat=3)]


def build_RT(hexa, r):
    """Mapped Raviart-Thomas space of index ``r`` (0 or 1)."""
    if r not in (0, 1):
        raise ValueError("RT is available for r = 0, 1")
    frame = scaled_frame(hexa)
    raw = []
    for k in range(3):
        degs = [r] * 3
        degs[k] = r + 1
        for e in itertools.product(*(range(d + 1) for d in degs)):
            comps = [MultiPoly.zero()] * 3
            comps[k] = MultiPoly.monomial(e)
            raw.append(RefVectorFunction(VectorPoly(comps), f"e{k + 1}*x^{e}"))
    W = _reference_W_Q(r)
    interior = []
    if r == 1:
        for k in range(3):
            degs = [1, 1, 1]
            degs[k] = 0
            for e in itertools.product(*(range(d + 1) for d in degs)):
                comps = [MultiPoly.zero()] * 3
                comps[k] = MultiPoly.monomial(e)
                interior.append(VectorPoly(comps))
    face_bases = [reference_face_Q(r, i) for i in range(6)]
    return ElementSpace("RT", r, hexa, frame, raw, W, face_bases,
                        interior_tests=interior, name=f"RT{r}")


def bddf1_augmentation():
    """The six fields ``curl(x̂_i x̂_j² e_k)`` for distinct ``i, j, k``."""
    X = [MultiPoly.var(k) for k in range(3)]
    out = []
    for i, j, k in itertools.permutations(range(3)):
        comps = [MultiPoly.zero()] * 3
        comps[k] = X[i] * X[j] * X[j]
        out.append(VectorPoly(comps).curl())
    return out


def build_BDDF1(hexa):
    """Mapped BDDF1: reference ``P1^3`` plus six divergence-free curl fields."""
    frame = scaled_frame(hexa)
    raw = []
    for e in exponents(1, 3):
        for k in range(3):
            comps = [MultiPoly.zero()] * 3
            comps[k] = MultiPoly.monomial(e)
            raw.append(RefVectorFunction(VectorPoly(comps), f"e{k + 1}*x^{e}"))
    raw += [RefVectorFunction(f, "curl-aug") for f in bddf1_augmentation()]
    face_bases = [reference_face_P(1, i) for i in range(6)]
    return ElementSpace("BDDF", 1, hexa, frame, raw, [MultiPoly.const(Fraction(1))], face_bases,
                        name="BDDF1")


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def pi_project(space, v, div_v=None):
    """Coefficients (in the shape basis) of the canonical projection of ``v``."""
    vals = space.dofs_of_field(v, div_v)
    return vals


def commuting_residual(space, v, div_v, npts=8):
    """``max_k |∫ (div π v - div v) w_k| / max_k ∫ |div v w_k|`` over the ``W`` basis."""
    c = pi_project(space, v, div_v)
    rule = gauss_rule(3, 2 * npts - 1)
    x = space.hexa.map(rule.points)
    _, J = space.hexa.jacobian_batch(rule.points)
    divpi = space.shape_divergence(rule.points) @ c
    w = space.W_values(rule.points)
    res = np.einsum("q,qk,q->k", rule.weights * J, w, divpi - div_v(x))
    ref = np.einsum("q,qk,q->k", rule.weights * J, np.abs(w), np.abs(div_v(x)))
    return float(np.abs(res).max() / max(ref.max(), 1e-300))


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def expected_dimension(family, r):
    """Dimension of the local vector space for the supported families."""
    if family == "AT_full":
        return (r + 1) * (r + 2) * (r + 4) // 2 + n_supplements(r)
    if family == "AT_red":
        return (r + 1) * (r + 2) * (r + 3) // 2 + 3 * (r + 1)
    if family == "RT":
        return 3 * (r + 2) * (r + 1) ** 2
    if family == "BDDF":
        return 18
    raise ValueError(family)


SPACE_NAMES = ("at0", "at0g", "at1", "at1red", "rt0", "rt1", "bddf1")


def parse_space(name):
    """Normalize a space name; ``atr:<r>`` and ``atr:<r>:red`` select the general builder."""
    name = name.strip().lower()
    if name in SPACE_NAMES:
        return name
    if name.startswith("atr:"):
        parts = name.split(":")
        r = int(parts[1])
        red = len(parts) > 2 and parts[2] == "red"
        if not 0 <= r <= 2 or (red and r == 0) or len(parts) > 3 or (len(parts) == 3 and not red):
            raise ValueError(f"unsupported space {name!r}")
        return name
    raise ValueError(f"unknown space {name!r}")


def space_degree(name):
    name = parse_space(name)
    if name.startswith("atr:"):
        return int(name.split(":")[1])
    return {"at0": 0, "at0g": 0, "rt0": 0, "at1": 1, "at1red": 1, "rt1": 1, "bddf1": 1}[name]


def space_family(name):
    name = parse_space(name)
    if name.startswith("rt"):
        return "RT"
    if name == "bddf1":
        return "BDDF"
    if name == "at1red" or name.endswith(":red"):
        return "AT_red"
    return "AT_full"


def build_space(hexa, name, at1_mode="auto", cnu_threshold=1e-8):
    """Build a space by name; ``cnu_threshold`` is the AT1 symmetric-mode cut-off."""
    name = parse_space(name)
    if name == "at0":
        return build_AT0_simple(hexa)
    if name == "at0g":
        return build_AT0_general(hexa)
    if name == "at1":
        return build_AT1(hexa, at1_mode, reduced=False, threshold=cnu_threshold)
    if name == "at1red":
        return build_AT1(hexa, at1_mode, reduced=True, threshold=cnu_threshold)
    if name == "rt0":
        return build_RT(hexa, 0)
    if name == "rt1":
        return build_RT(hexa, 1)
    if name == "bddf1":
        return build_BDDF1(hexa)
    parts = name.split(":")
    return build_general_r(hexa, int(parts[1]), reduced=len(parts) > 2)


def unit_cube_vertices():
    return CORNERS.copy()


def selection_gap(tilde):
    """``(a - b, predicted)`` with ``a = d(0, 0)`` and ``b = d(|f5| c^5_2, 0)``."""
    F = tilde.faces
    s = F[5].area * F[5].centroid[1]
    diff = selection_determinant(tilde, 0.0, 0.0) - selection_determinant(tilde, s, 0.0)
    pred = F[5].normal[1] * s * tilde.volume / (F[1].area * F[3].area)
    return diff, pred
