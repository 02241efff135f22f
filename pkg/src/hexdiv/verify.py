"""Property suites over fixed and random geometries.

Each suite returns a :class:`SuiteReport` with a pass count and the first few
failure messages.  The command line tool and the tests both use them.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import element as el
from .geometry import face_point_to_cube, random_hexahedron, unit_cube
from .polyalg import gauss_rule
from .supplement import factory

DEFAULT_SEED = 20240611


def seed_from_env(default=DEFAULT_SEED):
    value = os.environ.get("HEXDIV_SEED")
    return int(value) if value not in (None, "") else default


@dataclass
class SuiteReport:
    name: str
    passed: int = 0
    total: int = 0
    failures: list = field(default_factory=list)

    def record(self, ok, message=""):
        self.total += 1
        if ok:
            self.passed += 1
        elif len(self.failures) < 20:
            self.failures.append(message)

    @property
    def ok(self):
        return self.passed == self.total

    def summary(self):
        return f"{self.name}: {self.passed}/{self.total} passed"


def random_hexes(rng, count, delta=0.2):
    kinds = ["generic", "pillar", "parallel1", "parallel2"]
    return [random_hexahedron(rng, delta, kinds[k % len(kinds)]) for k in range(count)]


# ---------------------------------------------------------------------------
# supplements
# ---------------------------------------------------------------------------

def _local_monomial(hexa, i, st, ell, m, lv):
    x = hexa.map(face_point_to_cube(i, st))
    return x[:, lv[0]] ** ell * x[:, lv[1]] ** m


def check_supplements(hexa, report, max_degree=2, tol=1e-10):
    """Exact zero divergence and prescribed traces of every supplement and pair."""
    fac = factory(hexa)
    rule = gauss_rule(2, 7)
    for i in range(6):
        lv = hexa.face(i).local_vars
        for ell, m in el.local_monomial_exponents(max_degree)[1:]:
            f = fac.monomial(i, ell, m)
            report.record(f.divergence.is_zero(), f"σ^{i}_{ell},{m}: non-zero divergence")
            c = float(f.meta["c"])
            for k in range(6):
                tr = f.physical_trace(hexa, k, rule.points)
                want = _local_monomial(hexa, i, rule.points, ell, m, lv) - c if k == i else 0.0
                err = np.abs(tr - want).max()
                report.record(err < tol, f"σ^{i}_{ell},{m} trace on face {k}: error {err:.2e}")
    for i in range(6):
        for j in range(6):
            if i == j:
                continue
            f = fac.pair(i, j)
            report.record(f.divergence.is_zero(), f"σ^{i},{j}: non-zero divergence")
            for k in range(6):
                tr = f.physical_trace(hexa, k, rule.points)
                want = 1 / hexa.face(i).area if k == i else (-1 / hexa.face(j).area if k == j else 0.0)
                err = np.abs(tr - want).max()
                report.record(err < tol, f"σ^{i},{j} trace on face {k}: error {err:.2e}")


def suite_supplements(seed=None, count=100, max_degree=2):
    rng = np.random.default_rng(seed_from_env() if seed is None else seed)
    report = SuiteReport("supplements")
    for hexa in [unit_cube()] + random_hexes(rng, count):
        check_supplements(hexa, report, max_degree)
    return report


# ---------------------------------------------------------------------------
# spaces
# ---------------------------------------------------------------------------

SUITE_SPACES = ("at0", "at0g", "at1", "at1red", "atr:1", "atr:2", "atr:2:red", "rt0", "rt1", "bddf1")


def trace_fit_residual(space, r, tol_points=4):
    """Max residual of fitting each shape function's physical trace by ``P_r`` on each face."""
    hexa = space.hexa
    g = (np.arange(tol_points) + 0.5) / tol_points
    st = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    worst = 0.0
    for i in range(6):
        fd = hexa.face(i)
        x = hexa.map(face_point_to_cube(i, st))
        u = (x[:, fd.local_vars[0]] - fd.centroid[fd.local_vars[0]]) / fd.diameter
        v = (x[:, fd.local_vars[1]] - fd.centroid[fd.local_vars[1]]) / fd.diameter
        V = np.stack([u ** a * v ** b for a, b in el.local_monomial_exponents(r)], 1)
        pts = face_point_to_cube(i, st)
        n = hexa.face(i).normal
        phys = space.shape_values(pts)
        tr = np.einsum("qjd,d->qj", phys, n)
        coef = np.linalg.lstsq(V, tr, rcond=None)[0]
        res = np.abs(V @ coef - tr).max() / max(1.0, np.abs(tr).max())
        worst = max(worst, res)
    return worst


def check_space(hexa, name, report, tol=1e-10):
    sp = el.build_space(hexa, name)
    r = sp.r
    report.record(sp.dim == el.expected_dimension(sp.family, r),
                  f"{name}: dimension {sp.dim} != {el.expected_dimension(sp.family, r)}")
    ident = sp.dofs_of_dense(sp.shape_dense)
    err = np.abs(ident - np.eye(sp.dim)).max()
    report.record(err < 1e-9, f"{name}: DOFs of shape functions deviate from identity by {err:.2e}")
    if sp.family.startswith("AT"):
        bad = [f.tag for f in sp.raw if "sigma" in f.tag and not f.divergence.is_zero()]
        report.record(not bad, f"{name}: supplements with non-zero divergence {bad}")
        res = trace_fit_residual(sp, r)
        report.record(res < tol, f"{name}: normal trace outside P_r (residual {res:.2e})")
    return sp


def suite_spaces(seed=None, count=10, names=SUITE_SPACES):
    rng = np.random.default_rng(seed_from_env() if seed is None else seed)
    report = SuiteReport("spaces")
    for hexa in [unit_cube()] + random_hexes(rng, count):
        for name in names:
            check_space(hexa, name, report)
    return report


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def smooth_field():
    pi = np.pi

    def v(x):
        return np.stack([np.sin(pi * x[:, 0]) * np.cos(x[:, 1]),
                         np.exp(0.5 * x[:, 2]) * x[:, 0] ** 2,
                         np.cos(pi * x[:, 1] * x[:, 2])], 1)

    def div(x):
        return (pi * np.cos(pi * x[:, 0]) * np.cos(x[:, 1])
                - pi * x[:, 1] * np.sin(pi * x[:, 1] * x[:, 2]))

    return v, div


PROJECTION_SPACES = ("at0", "at0g", "at1", "at1red", "rt0", "rt1", "bddf1")
# mapped RT0 and BDDF1 contain the physical constants only on affine cells
MAPPED_WITHOUT_CONSTANTS = ("rt0", "bddf1")


def suite_projection(seed=None, count=10, names=PROJECTION_SPACES, tol=1e-10):
    rng = np.random.default_rng(seed_from_env() if seed is None else seed)
    report = SuiteReport("projection")
    v, div = smooth_field()
    const = np.array([0.3, -1.2, 0.7])
    rule = gauss_rule(3, 5)
    for k, hexa in enumerate([unit_cube()] + random_hexes(rng, count)):
        for name in names:
            sp = el.build_space(hexa, name)
            res = el.commuting_residual(sp, v, div)
            report.record(res < tol, f"{name}: commuting residual {res:.2e}")
            if k > 0 and name in MAPPED_WITHOUT_CONSTANTS:
                continue
            c = el.pi_project(sp, lambda x: np.tile(const, (len(x), 1)), lambda x: np.zeros(len(x)))
            err = np.abs(sp.evaluate(c, rule.points) - const).max()
            report.record(err < tol, f"{name}: constant field not reproduced ({err:.2e})")
    return report


# ---------------------------------------------------------------------------
# projected flux stack
# ---------------------------------------------------------------------------

def random_stack_instance(rng, m=4, n=2):
    while True:
        M = rng.standard_normal((m, m + n))
        N = rng.standard_normal((n, m + n))
        phi = rng.standard_normal(m + n)
        if np.linalg.cond(np.vstack([M, N])) > 1e8:
            continue
        # keep φ away from the row space of N
        coef = np.linalg.lstsq(N.T, phi, rcond=None)[0]
        if np.linalg.norm(N.T @ coef - phi) < 1e-3 * np.linalg.norm(phi):
            continue
        return M, N, phi


def suite_lemma51(seed=None, count=1000):
    rng = np.random.default_rng(seed_from_env() if seed is None else seed)
    report = SuiteReport("lemma51")
    for k in range(count):
        M, N, phi = random_stack_instance(rng)
        report.record(el.lemma51_check(M, N, phi), f"instance {k} singular")
    return report


# ---------------------------------------------------------------------------
# normal and centroid matrices
# ---------------------------------------------------------------------------

def suite_appendix(seed=None, count=100, tol=1e-10):
    rng = np.random.default_rng(seed_from_env() if seed is None else seed)
    report = SuiteReport("appendix")
    rep = el.geometry_report(unit_cube())
    report.record(np.allclose(rep.C * rep.H, np.eye(3), atol=1e-14), "unit cube: C∘H is not the identity")
    for k, hexa in enumerate(random_hexes(rng, count)):
        rep = el.geometry_report(hexa)
        report.record(min(rep.H_minors.values()) > 0, f"hex {k}: non-positive minor of H")
        if rep.parallel_pairs >= 1 or rep.is_truncated_pillar:
            report.record(abs(rep.cnu_det) > 1e-8, f"hex {k}: det(C∘H) = {rep.cnu_det:.2e}")
        _, tilde = el.affine_normalize(hexa)
        diff, pred = el.selection_gap(tilde)
        report.record(abs(diff - pred) < tol * max(1.0, abs(pred)),
                      f"hex {k}: a-b = {diff:.15e}, predicted {pred:.15e}")
        if rep.recommended_mode == "symmetric":
            sp = el.build_AT1(hexa, "symmetric")
            dB = np.linalg.det(el.odd_face_flux_block(sp))
            report.record(abs(abs(dB) - abs(rep.cnu_det)) < 1e-9 * max(1.0, abs(rep.cnu_det)),
                          f"hex {k}: |det F*135| = {abs(dB):.6e} vs |det C∘H| = {abs(rep.cnu_det):.6e}")
    return report


SUITES = {
    "supplements": suite_supplements,
    "spaces": suite_spaces,
    "projection": suite_projection,
    "lemma51": suite_lemma51,
    "appendix": suite_appendix,
}

