"""Hybridized mixed method for ``u = -grad p, div u = f`` on the unit cube.

Each cell carries a local mixed space; normal-flux continuity is imposed by
face Lagrange multipliers.  The cell unknowns are eliminated locally and the
multiplier Schur complement is solved globally.

Local matrices depend only on the cell shape up to translation and scaling,
so they are computed once per shape on the copy ``(x - x024) / h`` and scaled:
with ``h`` the cell's main diagonal, the mass matrix scales like ``1/h``
while the divergence and face coupling matrices are unchanged.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .element import build_space, local_monomial_exponents, parse_space, space_degree, space_family
from .errors import ElementBuildFailure, HexDivError, SingularLocalBlock, SolverDivergence
from .geometry import Hexahedron, face_axes, face_point_to_cube, face_scaled_normals
from .polyalg import eval_dense_vector, gauss_rule

DENSE_LIMIT = 2000


# ---------------------------------------------------------------------------
# manufactured solution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExactSolution:
    p: callable
    u: callable
    f: callable


def manufactured_solution():
    """``p = cos(πx) cos(πy) cos(πz)``, ``u = -grad p``, ``f = div u = 3π² p``."""
    pi = math.pi

    def p(x):
        return np.cos(pi * x[:, 0]) * np.cos(pi * x[:, 1]) * np.cos(pi * x[:, 2])

    def u(x):
        c = np.cos(pi * x)
        s = np.sin(pi * x)
        return pi * np.stack([s[:, 0] * c[:, 1] * c[:, 2],
                              c[:, 0] * s[:, 1] * c[:, 2],
                              c[:, 0] * c[:, 1] * s[:, 2]], axis=1)

    def f(x):
        return 3 * pi ** 2 * p(x)

    return ExactSolution(p, u, f)


# ---------------------------------------------------------------------------
# face multipliers
# ---------------------------------------------------------------------------

def multiplier_count(name):
    fam, r = space_family(name), space_degree(name)
    if fam == "RT":
        return (r + 1) ** 2
    return (r + 1) * (r + 2) // 2


def _reference_multiplier_exponents(name):
    fam, r = space_family(name), space_degree(name)
    if fam == "RT":
        return [(a, b) for b in range(r + 1) for a in range(r + 1)]
    return local_monomial_exponents(r)


def intrinsic_multipliers(hexa, i, st, r):
    """``((x_i - c_i)/d)^a ((x_j - c_j)/d)^b`` on the physical face, ``d = sqrt(area)``."""
    fd = hexa.face(i)
    x = hexa.map(face_point_to_cube(i, st))
    d = math.sqrt(fd.area)
    u = (x[:, fd.local_vars[0]] - fd.centroid[fd.local_vars[0]]) / d
    v = (x[:, fd.local_vars[1]] - fd.centroid[fd.local_vars[1]]) / d
    return np.stack([u ** a * v ** b for a, b in local_monomial_exponents(r)], axis=1)


def reference_multipliers(st, exps):
    s = st[:, 0] - 0.5
    t = st[:, 1] - 0.5
    return np.stack([s ** a * t ** b for a, b in exps], axis=1)


# ---------------------------------------------------------------------------
# per-shape local data
# ---------------------------------------------------------------------------

@dataclass
class LocalShape:
    """Matrices of one cell shape on its scaled copy (main diagonal 1)."""

    space: object
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray  # (6 * nm, n)
    R: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    quad_points: np.ndarray
    quad_weights: np.ndarray  # weights * J on the scaled copy
    mapped: np.ndarray  # quadrature points mapped to the scaled copy
    phi: np.ndarray  # (Q, n, 3) physical shape values on the scaled copy
    div: np.ndarray  # (Q, n)
    w: np.ndarray  # (Q, nW)
    face_rule: object
    face_mu: list  # per face (Qf, nm) multiplier values
    face_K: list  # per face (Qf,) surface measure on the scaled copy
    face_points: list  # per face mapped points on the scaled copy


def shape_key(vertices, digits=9):
    v = np.asarray(vertices, dtype=float)
    h = float(np.linalg.norm(v[7] - v[0]))
    rel = np.round((v - v[0]) / h, digits) + 0.0
    return rel.tobytes(), h


def _quad_points_for(space, extra):
    deg = max(space.shape_dense.shape[2:]) - 1
    return max(deg + extra, 2)


def build_local_shape(scaled, name, at1_mode="auto", error_points=None, cnu_threshold=1e-8):
    space = build_space(scaled, name, at1_mode, cnu_threshold)
    r = space_degree(name)
    # volume quadrature: rational integrands on non-affine cells, so be generous
    npts = _quad_points_for(space, 4)
    rule = gauss_rule(3, 2 * npts - 1)
    _, J = scaled.jacobian_batch(rule.points)
    phi = space.shape_values(rule.points)
    div = space.shape_divergence(rule.points)
    w = space.W_values(rule.points)
    jw = rule.weights * J
    A = np.einsum("q,qid,qjd->ij", jw, phi, phi)
    B = np.einsum("q,qk,qj->kj", jw, w, div)
    # face coupling
    fam = space_family(name)
    nm = multiplier_count(name)
    exps = _reference_multiplier_exponents(name)
    frule = gauss_rule(2, 2 * npts - 1)
    C = np.zeros((6 * nm, space.dim))
    for i in range(6):
        a, side, _ = face_axes(i)
        ref = eval_dense_vector(space.shape_dense, face_point_to_cube(i, frule.points))
        tr = ref[:, :, a] * (1.0 if side else -1.0)
        if fam.startswith("AT"):
            mu = intrinsic_multipliers(scaled, i, frule.points, r)
        else:
            mu = reference_multipliers(frule.points, exps)
        C[i * nm:(i + 1) * nm] = np.einsum("q,qm,qj->mj", frule.weights, mu, tr)
    n, nw = space.dim, space.dim_W
    K = np.block([[A, B.T], [B, np.zeros((nw, nw))]])
    try:
        Kinv = scipy.linalg.inv(K)
    except scipy.linalg.LinAlgError as exc:
        raise SingularLocalBlock(str(exc)) from exc
    if not np.all(np.isfinite(Kinv)) or np.linalg.cond(K) > 1e14:
        raise SingularLocalBlock(f"local saddle-point matrix condition {np.linalg.cond(K):.3e}")
    R, G, Q = Kinv[:n, :n], Kinv[:n, n:], Kinv[n:, n:]
    # error quadrature
    enpts = error_points or (r + 4)
    erule = gauss_rule(3, 2 * enpts - 1)
    _, eJ = scaled.jacobian_batch(erule.points)
    face_mu, face_K, face_pts = [], [], []
    mrule = gauss_rule(2, 2 * (r + 4) - 1)
    for i in range(6):
        if fam.startswith("AT"):
            face_mu.append(intrinsic_multipliers(scaled, i, mrule.points, r))
        else:
            face_mu.append(reference_multipliers(mrule.points, exps))
        face_K.append(np.linalg.norm(face_scaled_normals(scaled, i, mrule.points), axis=1))
        face_pts.append(scaled.map(face_point_to_cube(i, mrule.points)))
    return LocalShape(
        space, A, B, C, R, G, Q, erule.points, erule.weights * eJ, scaled.map(erule.points),
        space.shape_values(erule.points), space.shape_divergence(erule.points),
        space.W_values(erule.points), mrule, face_mu, face_K, face_pts,
    )


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

@dataclass
class HybridSystem:
    mesh: object
    space: str
    nm: int
    shapes: dict
    cell_key: list
    cell_h: np.ndarray
    cell_v0: np.ndarray
    cell_dofs: np.ndarray  # (C, 6 * nm) global multiplier indices
    cell_T: list  # per cell: (6*nm, 6*nm) basis change or None
    S: sp.csr_matrix
    rhs: np.ndarray
    interior: np.ndarray  # global indices of unknown multipliers
    lam_boundary: np.ndarray  # full-length vector with boundary values filled
    F: list  # per-cell load vectors
    exact: ExactSolution
    timings: dict = field(default_factory=dict)

    @property
    def n_multipliers(self):
        return self.nm * self.mesh.n_faces

    def cell_C(self, c):
        C = self.shapes[self.cell_key[c]].C
        T = self.cell_T[c]
        return C if T is None else T @ C


def _link_matrix(link, exps, cache):
    key = (link.T.tobytes(), link.offset.tobytes())
    if key not in cache:
        g = np.linspace(0.05, 0.95, 5)
        st1 = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
        st0 = np.linalg.solve(link.T, (st1 - link.offset).T).T
        owner = reference_multipliers(st0, exps)
        own = reference_multipliers(st1, exps)
        P = np.linalg.lstsq(own, owner, rcond=None)[0].T
        cache[key] = np.where(np.abs(P) < 1e-12, 0.0, P)
    return cache[key]


def assemble(mesh, space, exact=None, at1_mode="auto", cnu_threshold=1e-8):
    """Schur complement of the multipliers and the local data needed for recovery."""
    t0 = time.perf_counter()
    space = parse_space(space)
    exact = exact or manufactured_solution()
    nm = multiplier_count(space)
    fam = space_family(space)
    shapes, keys = {}, []
    hs = np.empty(mesh.n_cells)
    v0 = mesh.vertices[mesh.cells[:, 0]]
    for c in range(mesh.n_cells):
        verts = mesh.vertices[mesh.cells[c]]
        key, h = shape_key(verts)
        hs[c] = h
        if key not in shapes:
            scaled = Hexahedron((verts - verts[0]) / h)
            try:
                shapes[key] = build_local_shape(scaled, space, at1_mode, cnu_threshold=cnu_threshold)
            except HexDivError as exc:
                raise ElementBuildFailure(f"cell {c}: {type(exc).__name__}: {exc}", c) from exc
        keys.append(key)
    t1 = time.perf_counter()

    cell_dofs = (mesh.cell_faces[:, :, None] * nm + np.arange(nm)).reshape(mesh.n_cells, -1)
    cell_T = [None] * mesh.n_cells
    if not fam.startswith("AT"):
        exps = _reference_multiplier_exponents(space)
        cache = {}
        for f, link in mesh.face_links.items():
            c1, l1 = mesh.face_cells[f, 1], mesh.face_local[f, 1]
            P = _link_matrix(link, exps, cache)
            if np.allclose(P, np.eye(nm)):
                continue
            if cell_T[c1] is None:
                cell_T[c1] = np.eye(6 * nm)
            cell_T[c1][l1 * nm:(l1 + 1) * nm, l1 * nm:(l1 + 1) * nm] = P

    # per-cell load vectors  F_k = ∫ f w_k
    Fall = np.empty(mesh.n_cells, dtype=object)
    for key, sh in shapes.items():
        cells = np.array([c for c in range(mesh.n_cells) if keys[c] == key])
        h = hs[cells]
        x = h[:, None, None] * sh.mapped[None] + v0[cells][:, None, :]
        fv = exact.f(x.reshape(-1, 3)).reshape(len(cells), -1)
        loads = np.einsum("q,qk,cq->ck", sh.quad_weights, sh.w, fv) * (h ** 3)[:, None]
        for c, ld in zip(cells, loads):
            Fall[c] = ld
    F = list(Fall)

    # Dirichlet multipliers: face L2 projection of p
    N = nm * mesh.n_faces
    lam = np.zeros(N)
    for f in np.flatnonzero(mesh.boundary):
        c, l = mesh.face_cells[f, 0], mesh.face_local[f, 0]
        sh = shapes[keys[c]]
        h = hs[c]
        x = h * sh.face_points[l] + v0[c]
        wts = sh.face_rule.weights * sh.face_K[l]
        mu = sh.face_mu[l]
        Gm = np.einsum("q,qm,qn->mn", wts, mu, mu)
        b = np.einsum("q,qm,q->m", wts, mu, exact.p(x))
        lam[f * nm:(f + 1) * nm] = np.linalg.solve(Gm, b)

    # Schur complement
    rows, cols, vals = [], [], []
    rhs = np.zeros(N)
    for c in range(mesh.n_cells):
        sh = shapes[keys[c]]
        C = sh.C if cell_T[c] is None else cell_T[c] @ sh.C
        SE = hs[c] * (C @ sh.R @ C.T)
        dofs = cell_dofs[c]
        rows.append(np.repeat(dofs, len(dofs)))
        cols.append(np.tile(dofs, len(dofs)))
        vals.append(SE.ravel())
        rhs[dofs] += C @ (sh.G @ F[c])
    S = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N))
    bnd = np.repeat(mesh.boundary, nm)
    interior = np.flatnonzero(~bnd)
    rhs = rhs - S @ lam
    t2 = time.perf_counter()
    return HybridSystem(mesh, space, nm, shapes, keys, hs, v0, cell_dofs, cell_T, S, rhs,
                        interior, lam, F, exact,
                        {"elements": t1 - t0, "assembly": t2 - t1, "shapes": len(shapes)})


# ---------------------------------------------------------------------------
# solve and recovery
# ---------------------------------------------------------------------------

@dataclass
class Solution:
    system: HybridSystem
    lam: np.ndarray
    u: list  # per-cell shape coefficients
    p: list  # per-cell W coefficients
    iterations: int
    residual: float


def solve(system, rtol=1e-12, dense_limit=DENSE_LIMIT):
    """Solve the Schur complement, then recover ``u_h`` and ``p_h`` cell by cell."""
    t0 = time.perf_counter()
    I = system.interior
    S = system.S[I][:, I].tocsr()
    b = system.rhs[I]
    lam = system.lam_boundary.copy()
    iters = 0
    if len(I) == 0:
        x = np.zeros(0)
    elif len(I) <= dense_limit:
        x = scipy.linalg.solve(S.toarray(), b, assume_a="pos")
    else:
        d = S.diagonal()
        M = spla.LinearOperator(S.shape, matvec=lambda v: v / d)
        count = [0]

        def cb(_):
            count[0] += 1

        maxiter = 20 * len(I)
        x, info = spla.cg(S, b, rtol=rtol, atol=0.0, M=M, maxiter=maxiter, callback=cb)
        iters = count[0]
        if info != 0:
            raise SolverDivergence(f"CG did not reach rtol {rtol} in {maxiter} iterations")
    lam[I] = x
    res = float(np.linalg.norm(S @ x - b) / max(np.linalg.norm(b), 1e-300)) if len(I) else 0.0
    us, ps = [], []
    for c in range(system.mesh.n_cells):
        sh = system.shapes[system.cell_key[c]]
        h = system.cell_h[c]
        C = system.cell_C(c)
        Cl = C.T @ lam[system.cell_dofs[c]]
        u = -h * (sh.R @ Cl) + sh.G @ system.F[c]
        q = -(sh.G.T @ Cl) + sh.Q @ system.F[c] / h
        us.append(u)
        ps.append(-q)
    system.timings["solve"] = time.perf_counter() - t0
    return Solution(system, lam, us, ps, iters, res)


def error_norms(solution, exact=None):
    """``(‖p - p_h‖, ‖u - u_h‖, ‖div(u - u_h)‖)`` by per-cell Gauss quadrature."""
    sysm = solution.system
    exact = exact or sysm.exact
    ep = eu = ed = 0.0
    groups = {}
    for c, key in enumerate(sysm.cell_key):
        groups.setdefault(key, []).append(c)
    for key, cells in groups.items():
        sh = sysm.shapes[key]
        cells = np.array(cells)
        h = sysm.cell_h[cells]
        x = h[:, None, None] * sh.mapped[None] + sysm.cell_v0[cells][:, None, :]
        xf = x.reshape(-1, 3)
        nq = len(sh.quad_weights)
        U = np.stack([solution.u[c] for c in cells])
        P = np.stack([solution.p[c] for c in cells])
        uh = np.einsum("qjd,cj->cqd", sh.phi, U) / (h ** 2)[:, None, None]
        dh = np.einsum("qj,cj->cq", sh.div, U) / (h ** 3)[:, None]
        ph = np.einsum("qk,ck->cq", sh.w, P)
        wq = sh.quad_weights[None, :] * (h ** 3)[:, None]
        pe = exact.p(xf).reshape(-1, nq)
        ue = exact.u(xf).reshape(-1, nq, 3)
        fe = exact.f(xf).reshape(-1, nq)
        ep += float(np.sum(wq * (pe - ph) ** 2))
        eu += float(np.sum(wq * np.sum((ue - uh) ** 2, axis=-1)))
        ed += float(np.sum(wq * (fe - dh) ** 2))
    return math.sqrt(ep), math.sqrt(eu), math.sqrt(ed)


# ---------------------------------------------------------------------------
# residual checks
# ---------------------------------------------------------------------------

def flux_jumps(solution):
    """Max over interior faces of ``|∫ (u_h.ν⁺ + u_h.ν⁻) μ|`` for every multiplier ``μ``."""
    sysm = solution.system
    N = sysm.n_multipliers
    acc = np.zeros(N)
    for c in range(sysm.mesh.n_cells):
        acc[sysm.cell_dofs[c]] += sysm.cell_C(c) @ solution.u[c]
    return float(np.abs(acc[sysm.interior]).max()) if len(sysm.interior) else 0.0


def mass_balance(solution):
    """Max over cells of ``|∫ div u_h - ∫ f|``, using the constant ``W`` function."""
    sysm = solution.system
    worst = 0.0
    for c in range(sysm.mesh.n_cells):
        sh = sysm.shapes[sysm.cell_key[c]]
        lhs = sh.B[0] @ solution.u[c]
        worst = max(worst, abs(lhs - sysm.F[c][0]))
    return worst


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------

COLUMNS = ["mesh", "n", "cells", "mult_dofs", "p_err", "p_ord", "u_err", "u_ord", "div_err", "div_ord"]


@dataclass
class StudyRow:
    mesh: str
    n: int
    cells: int
    mult_dofs: int
    p_err: float
    u_err: float
    div_err: float
    p_ord: float = None
    u_ord: float = None
    div_ord: float = None
    seconds: float = 0.0


@dataclass
class StudyResult:
    space: str
    mesh: str
    rows: list

    def errors(self, which):
        return [getattr(r, f"{which}_err") for r in self.rows]

    def orders(self, which):
        return [getattr(r, f"{which}_ord") for r in self.rows[1:]]

    def to_csv(self):
        lines = [",".join(COLUMNS)]
        for r in self.rows:
            vals = [r.mesh, str(r.n), str(r.cells), str(r.mult_dofs)]
            for k in ("p", "u", "div"):
                vals.append(f"{getattr(r, k + '_err'):.6e}")
                o = getattr(r, k + "_ord")
                vals.append("" if o is None else f"{o:.4f}")
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"

    def to_markdown(self):
        head = ["n", "cells", "mult DOFs", "‖p−p_h‖", "order", "‖u−u_h‖", "order",
                "‖div(u−u_h)‖", "order"]
        body = []
        for r in self.rows:
            row = [str(r.n), str(r.cells), str(r.mult_dofs)]
            for k in ("p", "u", "div"):
                row.append(f"{getattr(r, k + '_err'):.3e}")
                o = getattr(r, k + "_ord")
                row.append("" if o is None else f"{o:.2f}")
            body.append(row)
        widths = [max(len(head[j]), *(len(b[j]) for b in body)) for j in range(len(head))]

        def fmt(cells):
            return "| " + " | ".join(c.rjust(w) for c, w in zip(cells, widths)) + " |"

        out = [f"{self.space} on {self.mesh}", "", fmt(head),
               "|" + "|".join("-" * (w + 1) + ":" for w in widths) + "|"]
        out += [fmt(b) for b in body]
        return "\n".join(out) + "\n"


def convergence_order(e0, e1, n0, n1):
    if e0 <= 0 or e1 <= 0:
        return float("nan")
    return math.log(e0 / e1) / math.log(n1 / n0)


def run_single(mesh, space, at1_mode="auto", rtol=1e-12, cnu_threshold=1e-8):
    t0 = time.perf_counter()
    system = assemble(mesh, space, at1_mode=at1_mode, cnu_threshold=cnu_threshold)
    sol = solve(system, rtol=rtol)
    errs = error_norms(sol)
    return sol, errs, time.perf_counter() - t0


def run_study(space, mesh_family, n_list, at1_mode="auto", rtol=1e-12, mesh_factory=None,
              cnu_threshold=1e-8):
    """Errors and observed orders for a sequence of meshes."""
    from .mesh import generate

    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n values must be strictly increasing")
    rows = []
    for n in n_list:
        mesh = mesh_factory(n) if mesh_factory else generate(mesh_family, n)
        sol, (ep, eu, ed), secs = run_single(mesh, space, at1_mode, rtol, cnu_threshold)
        row = StudyRow(mesh_family, n, mesh.n_cells, sol.system.n_multipliers, ep, eu, ed,
                       seconds=secs)
        if rows:
            prev = rows[-1]
            row.p_ord = convergence_order(prev.p_err, ep, prev.n, n)
            row.u_ord = convergence_order(prev.u_err, eu, prev.n, n)
            row.div_ord = convergence_order(prev.div_err, ed, prev.n, n)
        rows.append(row)
    return StudyResult(parse_space(space), mesh_family, rows)
