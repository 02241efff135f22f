"""Flat-faced convex hexahedra, the trilinear reference map and per-face data.

Vertices follow the ordering ``[x024, x124, x034, x134, x025, x125, x035, x135]``:
vertex ``d1 + 2*d2 + 4*d3`` is the image of the reference corner ``(d1, d2, d3)``.
Face ``k`` lies on the reference plane ``x̂_a = side`` with ``a = k // 2`` and
``side = k % 2``; its two reference parameters are the remaining axes in
increasing order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NoConvergence, NonFlatFace, NonPositiveJacobian
from .polyalg import MultiPoly, exact, gauss_rule

#: corner signs (d1, d2, d3) of each vertex
CORNERS = np.array([[(v >> k) & 1 for k in range(3)] for v in range(8)], dtype=float)


def face_axes(i):
    """Return ``(axis, side, (p, q))`` for reference face ``i``."""
    a, side = divmod(i, 2)
    p, q = [k for k in range(3) if k != a]
    return a, side, (p, q)


def face_vertex_ids(i):
    """Local vertex indices of face ``i`` at parameter corners (0,0), (1,0), (0,1), (1,1)."""
    a, side, (p, q) = face_axes(i)
    return tuple(side * 2 ** a + u * 2 ** p + v * 2 ** q for v in (0, 1) for u in (0, 1))


def reference_normal(i):
    a, side, _ = face_axes(i)
    n = np.zeros(3)
    n[a] = 2 * side - 1
    return n


def face_orientation_sign(i):
    """Sign turning ``dF/dp x dF/dq`` into the outward normal on face ``i``."""
    a, side, _ = face_axes(i)
    return (1 if a != 1 else -1) * (1 if side else -1)


def face_point_to_cube(i, st):
    """Embed face parameters ``(N, 2)`` into reference-cube points ``(N, 3)``."""
    a, side, (p, q) = face_axes(i)
    st = np.atleast_2d(np.asarray(st, dtype=float))
    out = np.empty((st.shape[0], 3))
    out[:, a] = side
    out[:, p] = st[:, 0]
    out[:, q] = st[:, 1]
    return out


def shape_values(xhat):
    """Trilinear blending weights ``(N, 8)`` at reference points ``(N, 3)``."""
    x = np.atleast_2d(np.asarray(xhat, dtype=float))
    w = np.ones((x.shape[0], 8))
    for v in range(8):
        for k in range(3):
            w[:, v] *= x[:, k] if CORNERS[v, k] else 1.0 - x[:, k]
    return w


def shape_gradients(xhat):
    """Gradients ``(N, 8, 3)`` of the trilinear blending weights."""
    x = np.atleast_2d(np.asarray(xhat, dtype=float))
    g = np.ones((x.shape[0], 8, 3))
    for v in range(8):
        for d in range(3):
            for k in range(3):
                if k == d:
                    g[:, v, d] *= 1.0 if CORNERS[v, k] else -1.0
                else:
                    g[:, v, d] *= x[:, k] if CORNERS[v, k] else 1.0 - x[:, k]
    return g


def batch_map(vertices, xhat):
    """Map reference points ``(Q, 3)`` through many cells ``(C, 8, 3)`` -> ``(C, Q, 3)``."""
    return np.einsum("qv,cvk->cqk", shape_values(xhat), vertices)


def batch_jacobian(vertices, xhat):
    """Jacobian matrices ``(C, Q, 3, 3)`` with ``DF[..., k, d] = dF_k / dx̂_d``."""
    return np.einsum("qvd,cvk->cqkd", shape_gradients(xhat), vertices)


@dataclass(frozen=True)
class FaceData:
    """Geometric data of one flat face of a hexahedron."""

    index: int
    normal: np.ndarray
    area: float
    centroid: np.ndarray
    local_vars: tuple  # 0-based physical coordinate indices (i, j), i < j
    face_jacobian: MultiPoly  # bilinear in the two reference face parameters
    corner_jacobians: np.ndarray  # K at parameter corners (0,0), (1,0), (0,1), (1,1)
    vertex_ids: tuple
    diameter: float = field(default=0.0)

    @property
    def omitted_var(self):
        return ({0, 1, 2} - set(self.local_vars)).pop()


def choose_local_vars(normal, tie_tol=1e-13):
    """Drop the coordinate with the largest normal component (the larger index on a tie)."""
    mag = np.abs(np.asarray(normal, dtype=float))
    top = mag.max()
    drop = max(m for m in range(3) if mag[m] >= top - tie_tol)
    return tuple(k for k in range(3) if k != drop)


class Hexahedron:
    """A convex hexahedron with flat faces, immutable after construction."""

    def __init__(self, vertices, flat_tol=1e-10, check=True):
        v = np.array(vertices, dtype=float)
        if v.shape != (8, 3):
            raise ValueError(f"expected 8x3 vertices, got shape {v.shape}")
        v.setflags(write=False)
        self.vertices = v
        self.flat_tol = flat_tol
        if check:
            self.validate()

    # ------------------------------------------------------------------
    def __repr__(self):
        return f"Hexahedron({self.vertices.tolist()})"

    def validate(self):
        for i in range(6):
            self.face(i)
        pts = np.vstack([CORNERS, [[0.5, 0.5, 0.5]]])
        _, J = self.jacobian_batch(pts)
        scale = self.diameter ** 3
        if np.any(J <= 1e-14 * scale):
            raise NonPositiveJacobian(f"non-positive Jacobian {J.min():.3e} on {self!r}")
        for i in range(6):
            if np.any(self.face(i).corner_jacobians <= 1e-14 * self.diameter ** 2):
                raise NonPositiveJacobian(f"degenerate face {i}")

    @cached_property
    def diameter(self):
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    @cached_property
    def monomial_coefficients(self):
        """Array ``C[e1, e2, e3, k]`` with ``F_k = sum C[e] x̂^e``."""
        C = np.zeros((2, 2, 2, 3))
        for v in range(8):
            d = CORNERS[v].astype(int)
            # prod over k of (x̂_k if d_k else 1 - x̂_k)
            for e in itertools.product((0, 1), repeat=3):
                sign = 1.0
                ok = True
                for k in range(3):
                    if d[k] == 1 and e[k] == 0:
                        ok = False
                        break
                    if d[k] == 0 and e[k] == 1:
                        sign = -sign
                if ok:
                    C[e] += sign * self.vertices[v]
        return C

    @cached_property
    def map_polys(self):
        """The three components of the trilinear map as exact polynomials."""
        C = self.monomial_coefficients
        polys = []
        for k in range(3):
            terms = {e: exact(C[e][k]) for e in itertools.product((0, 1), repeat=3)}
            polys.append(MultiPoly(terms, 3))
        return tuple(polys)

    @cached_property
    def jacobian_polys(self):
        """Exact entries ``DF[k][d]`` as polynomials."""
        return tuple(tuple(self.map_polys[k].diff(d) for d in range(3)) for k in range(3))

    @cached_property
    def adjugate_polys(self):
        """Exact adjugate of ``DF`` (so that ``adj(DF) DF = J I``)."""
        D = self.jacobian_polys

        def cof(r, c):
            rows = [i for i in range(3) if i != r]
            cols = [j for j in range(3) if j != c]
            m = D[rows[0]][cols[0]] * D[rows[1]][cols[1]] - D[rows[0]][cols[1]] * D[rows[1]][cols[0]]
            return m if (r + c) % 2 == 0 else -m

        return tuple(tuple(cof(c, r) for c in range(3)) for r in range(3))

    @cached_property
    def jacobian_det_poly(self):
        D = self.jacobian_polys
        adj = self.adjugate_polys
        return D[0][0] * adj[0][0] + D[0][1] * adj[1][0] + D[0][2] * adj[2][0]

    # ------------------------------------------------------------------
    def map(self, xhat):
        x = np.asarray(xhat, dtype=float)
        out = shape_values(x) @ self.vertices
        return out[0] if x.ndim == 1 else out

    def jacobian_batch(self, xhat):
        x = np.atleast_2d(np.asarray(xhat, dtype=float))
        DF = np.einsum("qvd,vk->qkd", shape_gradients(x), self.vertices)
        return DF, np.linalg.det(DF)

    def jacobian(self, xhat):
        x = np.asarray(xhat, dtype=float)
        DF, J = self.jacobian_batch(x)
        if np.any(J <= 0):
            raise NonPositiveJacobian(f"J={J.min():.3e} at {x}")
        return (DF[0], float(J[0])) if x.ndim == 1 else (DF, J)

    def piola_values(self, vhat_values, xhat):
        """Physical values ``DF v̂ / J`` from reference values ``(N, 3)`` at points ``(N, 3)``."""
        DF, J = self.jacobian(np.atleast_2d(xhat))
        return np.einsum("qkd,qd->qk", DF, np.atleast_2d(vhat_values)) / J[:, None]

    @cached_property
    def volume(self):
        rule = gauss_rule(3, 2)
        _, J = self.jacobian_batch(rule.points)
        return float(rule.weights @ J)

    # ------------------------------------------------------------------
    def face(self, i):
        return self._faces[i]

    @property
    def faces(self):
        return self._faces

    @cached_property
    def _faces(self):
        return tuple(self._build_face(i) for i in range(6))

    def _build_face(self, i):
        ids = face_vertex_ids(i)
        y = self.vertices[list(ids)]
        diam = max(np.linalg.norm(y[a] - y[b]) for a in range(4) for b in range(a + 1, 4))
        n = np.cross(y[3] - y[0], y[2] - y[1]) * face_orientation_sign(i)
        nn = np.linalg.norm(n)
        if nn <= 1e-300:
            raise NonFlatFace(f"face {i} is degenerate")
        nu = n / nn
        off = np.abs((y - y.mean(axis=0)) @ nu)
        if off.max() > self.flat_tol * diam:
            raise NonFlatFace(f"face {i} is not flat: out-of-plane offset {off.max():.3e}")
        Kc = np.array([
            np.linalg.norm(np.cross(y[2] - y[0], y[1] - y[0])),
            np.linalg.norm(np.cross(y[3] - y[1], y[0] - y[1])),
            np.linalg.norm(np.cross(y[3] - y[2], y[0] - y[2])),
            np.linalg.norm(np.cross(y[2] - y[3], y[1] - y[3])),
        ])
        K = bilinear_from_corners(Kc)
        area = float(Kc.mean())
        rule = gauss_rule(2, 2)
        s, t = rule.points[:, 0], rule.points[:, 1]
        w = np.stack([(1 - s) * (1 - t), s * (1 - t), (1 - s) * t, s * t], axis=1)
        pts = w @ y
        Kq = w @ Kc
        centroid = (rule.weights * Kq) @ pts / area
        nu.setflags(write=False)
        centroid.setflags(write=False)
        Kc.setflags(write=False)
        return FaceData(i, nu, area, centroid, choose_local_vars(nu), K, Kc, ids, float(diam))

    # ------------------------------------------------------------------
    def inverse_map(self, x, tol=1e-13, maxit=50):
        x = np.asarray(x, dtype=float)
        xh = np.full(3, 0.5)
        scale = self.diameter
        for _ in range(maxit):
            r = self.map(xh) - x
            if np.linalg.norm(r) <= tol * scale:
                return xh
            DF, _ = self.jacobian_batch(xh)
            step = np.linalg.solve(DF[0], r)
            lam = 1.0
            while lam > 1e-4:
                trial = xh - lam * step
                if np.linalg.norm(self.map(trial) - x) < np.linalg.norm(r):
                    break
                lam /= 2
            xh = xh - lam * step
        r = self.map(xh) - x
        if np.linalg.norm(r) <= 1e-10 * scale:
            return xh
        raise NoConvergence(f"inverse map did not converge for {x}")

    def affine_image(self, A, b=None):
        """The hexahedron with vertices ``A x + b``."""
        b = np.zeros(3) if b is None else np.asarray(b, dtype=float)
        return Hexahedron(self.vertices @ np.asarray(A, dtype=float).T + b, self.flat_tol)


def bilinear_from_corners(vals):
    """Bilinear polynomial in (s, t) with given values at (0,0), (1,0), (0,1), (1,1)."""
    k0, k1, k2, k3 = (exact(v) for v in vals)
    return MultiPoly({
        (0, 0): k0,
        (1, 0): k1 - k0,
        (0, 1): k2 - k0,
        (1, 1): k0 - k1 - k2 + k3,
    }, 2)


def unit_cube():
    return Hexahedron(CORNERS.copy())


# functional interface ------------------------------------------------------

def trilinear_map(hexa, xhat):
    return hexa.map(xhat)


def jacobian(hexa, xhat):
    return hexa.jacobian(xhat)


def piola(hexa, vhat, xhat):
    """Physical value of the Piola image of reference field ``vhat`` at ``xhat``."""
    xh = np.atleast_2d(np.asarray(xhat, dtype=float))
    vals = vhat.evaluate(xh) if hasattr(vhat, "evaluate") else np.atleast_2d(vhat)
    out = hexa.piola_values(vals, xh)
    return out[0] if np.ndim(xhat) == 1 else out


def face_jacobian_poly(hexa, i):
    return hexa.face(i).face_jacobian


def face_data(hexa, i):
    return hexa.face(i)


def inverse_map(hexa, x):
    return hexa.inverse_map(x)


def face_cross_jacobian(hexa, i, st):
    """Norm of ``dF/dp x dF/dq`` at face parameters ``st`` (cross-product definition)."""
    a, side, (p, q) = face_axes(i)
    pts = face_point_to_cube(i, st)
    DF, _ = hexa.jacobian_batch(pts)
    return np.linalg.norm(np.cross(DF[:, :, p], DF[:, :, q]), axis=1)


def face_scaled_normals(hexa, i, st):
    """Outward ``K nu`` at face parameter points, for flux integrals ``∫ v.nu dA``."""
    a, side, (p, q) = face_axes(i)
    pts = face_point_to_cube(i, st)
    DF, _ = hexa.jacobian_batch(pts)
    return np.cross(DF[:, :, p], DF[:, :, q]) * face_orientation_sign(i)


def hexahedron_from_planes(normals, offsets):
    """Vertices where the face planes ``normals[k] . x = offsets[k]`` meet.

    Vertex ``v`` lies on faces ``2a + bit_a(v)`` for ``a = 0, 1, 2``.
    """
    normals = np.asarray(normals, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    verts = np.empty((8, 3))
    for v in range(8):
        ks = [2 * a + ((v >> a) & 1) for a in range(3)]
        verts[v] = np.linalg.solve(normals[ks], offsets[ks])
    return verts


def random_hexahedron(rng, delta=0.2, kind="generic", max_tries=200):
    """Random admissible hexahedron with exactly flat faces.

    The six face planes of the unit cube are tilted and shifted by up to
    ``delta``.  ``kind`` is ``"generic"``, ``"pillar"`` (faces 0-3 keep
    horizontal normals, so the vertical edges stay parallel) or
    ``"parallel<n>"`` for ``n`` pairs of parallel opposite faces.
    """
    base_n = np.array([[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]], float)
    base_d = np.array([0, 1, 0, 1, 0, 1], float)
    npar = int(kind[8:]) if kind.startswith("parallel") else 0
    for _ in range(max_tries):
        n = base_n + delta * rng.uniform(-1, 1, (6, 3))
        if kind == "pillar":
            n[:4, 2] = 0.0
        for a in range(npar):
            n[2 * a + 1] = -n[2 * a]
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        d = base_d * np.einsum("ij,ij->i", n, base_n) + delta * rng.uniform(-0.5, 0.5, 6)
        try:
            verts = hexahedron_from_planes(n, d)
            return Hexahedron(verts)
        except (np.linalg.LinAlgError, NonPositiveJacobian, NonFlatFace):
            continue
    raise NonPositiveJacobian("could not draw an admissible hexahedron")
