"""Structured hexahedral meshes of the unit cube and their face connectivity.

Meshes are built from a 2x2x2 base pattern of cells (a 3x3x3 array of nodes
in pattern coordinates ``[0, 1]^3``).  The pattern is scaled to blocks of side
``2/n`` and mirrored in every axis for odd blocks, so neighbouring blocks share
their boundary nodes exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NonConforming, OddSubdivision
from .geometry import CORNERS, Hexahedron, face_scaled_normals, face_vertex_ids


@dataclass(frozen=True)
class FaceLink:
    """Map from the owner's face parameters to the neighbour's: ``st' = T st + o``."""

    T: np.ndarray
    offset: np.ndarray


class Mesh:
    """Vertices, cells in the canonical vertex order, and unique faces."""

    def __init__(self, vertices, cells, name="mesh", check=True):
        self.vertices = np.asarray(vertices, dtype=float)
        self.cells = np.asarray(cells, dtype=np.int64)
        if self.cells.ndim != 2 or self.cells.shape[1] != 8:
            raise ValueError("cells must be an (N, 8) index array")
        self.name = name
        self._build_faces()
        if check:
            self.check_conforming()

    def __repr__(self):
        return f"Mesh({self.name!r}, cells={self.n_cells}, faces={self.n_faces})"

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_faces(self):
        return len(self.face_cells)

    # ------------------------------------------------------------------
    def _build_faces(self):
        index = {}
        cells, local = [], []
        cell_faces = np.empty((self.n_cells, 6), dtype=np.int64)
        for c, cell in enumerate(self.cells):
            for i in range(6):
                key = tuple(sorted(cell[list(face_vertex_ids(i))]))
                f = index.get(key)
                if f is None:
                    f = len(cells)
                    index[key] = f
                    cells.append([c, -1])
                    local.append([i, -1])
                elif cells[f][1] == -1:
                    cells[f][1] = c
                    local[f][1] = i
                else:
                    raise NonConforming(f"face {key} shared by more than two cells")
                cell_faces[c, i] = f
        self.face_cells = np.array(cells, dtype=np.int64)
        self.face_local = np.array(local, dtype=np.int64)
        self.cell_faces = cell_faces
        self.boundary = self.face_cells[:, 1] < 0

    @cached_property
    def hexahedra(self):
        return [Hexahedron(self.vertices[c]) for c in self.cells]

    def hexa(self, c):
        return self.hexahedra[c]

    def face_link(self, f):
        """Parameter map between the two sides of interior face ``f``."""
        c0, c1 = self.face_cells[f]
        l0, l1 = self.face_local[f]
        ids0 = self.cells[c0][list(face_vertex_ids(l0))]
        ids1 = list(self.cells[c1][list(face_vertex_ids(l1))])
        corners = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], float)
        img = np.array([corners[ids1.index(v)] for v in ids0])
        offset = img[0]
        T = np.column_stack([img[1] - offset, img[2] - offset])
        return FaceLink(T, offset)

    @cached_property
    def face_links(self):
        return {f: self.face_link(f) for f in np.flatnonzero(~self.boundary)}

    def check_conforming(self, tol=1e-10):
        """Every cell admissible; shared faces agree in geometry and surface measure."""
        for c in range(self.n_cells):
            self.hexa(c)
        st = np.array([[0.2, 0.3], [0.7, 0.1], [0.5, 0.9]])
        for f, link in self.face_links.items():
            c0, c1 = self.face_cells[f]
            l0, l1 = self.face_local[f]
            st1 = st @ link.T.T + link.offset
            n0 = face_scaled_normals(self.hexa(c0), l0, st)
            n1 = face_scaled_normals(self.hexa(c1), l1, st1)
            if np.abs(n0 + n1).max() > tol * max(1.0, np.abs(n0).max()):
                raise NonConforming(f"face {f}: surface measure differs between cells {c0} and {c1}")
        return True

    def diameters(self):
        return np.array([h.diameter for h in self.hexahedra])

    # I/O ------------------------------------------------------------------
    def to_dict(self):
        return {"vertices": self.vertices.tolist(), "cells": self.cells.tolist()}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path, name=None):
        with open(path) as fh:
            data = json.load(fh)
        return cls(data["vertices"], data["cells"], name or str(path))


# ---------------------------------------------------------------------------
# base patterns
# ---------------------------------------------------------------------------

def cube_pattern():
    g = np.linspace(0.0, 1.0, 3)
    return np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1)


TRAPEZOID_NODES_2D = np.array([
    [[0.0, 0.0], [0.0, 0.5], [0.0, 1.0]],
    [[0.5, 0.0], [0.5, 0.75], [0.5, 1.0]],
    [[1.0, 0.0], [1.0, 0.5], [1.0, 1.0]],
])

PILLAR_NODES_2D = np.array([
    [[0.0, 0.0], [0.0, 0.4], [0.0, 1.0]],
    [[0.6, 0.0], [0.45, 0.6], [0.4, 1.0]],
    [[1.0, 0.0], [1.0, 0.55], [1.0, 1.0]],
])


def trapezoid_pattern():
    """Trapezoids in the x-y plane (vertical edges parallel), extruded in z."""
    P = np.empty((3, 3, 3, 3))
    for k, z in enumerate((0.0, 0.5, 1.0)):
        P[:, :, k, :2] = TRAPEZOID_NODES_2D
        P[:, :, k, 2] = z
    return P


def pillar_middle_height(x, y):
    return 0.5 + 0.15 * (x - 0.5) + 0.1 * (y - 0.5)


def pillar_pattern():
    """Vertical pillars over a general quadrilateral grid, cut by a tilted middle plane."""
    P = np.empty((3, 3, 3, 3))
    xy = PILLAR_NODES_2D
    P[..., :2] = xy[:, :, None, :]
    P[:, :, 0, 2] = 0.0
    P[:, :, 1, 2] = pillar_middle_height(xy[..., 0], xy[..., 1])
    P[:, :, 2, 2] = 1.0
    return P


PATTERNS = {"cube": cube_pattern, "trapezoid": trapezoid_pattern, "pillar": pillar_pattern}


def refine(pattern, n, name="mesh"):
    """Tile ``[0, 1]^3`` with ``(n/2)^3`` mirrored copies of a 3x3x3 node pattern."""
    if n < 2 or n % 2:
        raise OddSubdivision(f"n must be a positive even number, got {n}")
    nb = n // 2
    idx = np.arange(n + 1)
    block = np.minimum(idx // 2, nb - 1)
    loc = idx - 2 * block
    odd = block % 2 == 1
    loc = np.where(odd, 2 - loc, loc)
    I, J, K = np.meshgrid(idx, idx, idx, indexing="ij")
    q = pattern[loc[I], loc[J], loc[K]].copy()
    for d, G in enumerate((I, J, K)):
        flip = odd[G]
        q[..., d] = np.where(flip, 1.0 - q[..., d], q[..., d])
        q[..., d] = (block[G] + q[..., d]) * (2.0 / n)
    vertices = q.reshape(-1, 3)

    def nid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    cells = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                cells.append([nid(i + d1, j + d2, k + d3)
                              for d3 in (0, 1) for d2 in (0, 1) for d1 in (0, 1)])
    return Mesh(vertices, cells, name)


def gen_cube(n):
    """``n^3`` axis-aligned cubes of side ``1/n``."""
    if n == 1:
        return Mesh(CORNERS.copy(), [list(range(8))], "cube")
    if n % 2:
        g = np.linspace(0.0, 1.0, n + 1)
        P = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)

        def nid(i, j, k):
            return (i * (n + 1) + j) * (n + 1) + k

        cells = [[nid(i + d1, j + d2, k + d3) for d3 in (0, 1) for d2 in (0, 1) for d1 in (0, 1)]
                 for i in range(n) for j in range(n) for k in range(n)]
        return Mesh(P, cells, "cube")
    return refine(cube_pattern(), n, "cube")


def gen_trapezoid(n):
    """Trapezoid mesh: every cell has exactly two pairs of parallel faces."""
    return refine(trapezoid_pattern(), n, "trapezoid")


def gen_pillar(n):
    """Truncated vertical pillars with no parallel faces in any cell."""
    return refine(pillar_pattern(), n, "pillar")


def generate(family, n):
    try:
        gen = {"cube": gen_cube, "trapezoid": gen_trapezoid, "pillar": gen_pillar}[family]
    except KeyError:
        raise ValueError(f"unknown mesh family {family!r}") from None
    return gen(n)


def face_count(n):
    return 3 * n * n * (n + 1)


def shape_regularity(mesh):
    """Minimum ratio of the smallest corner-Jacobian cube root to the diameter."""
    from .geometry import CORNERS
    worst = np.inf
    for h in mesh.hexahedra:
        _, J = h.jacobian_batch(CORNERS)
        worst = min(worst, np.cbrt(J.min()) / h.diameter)
    return float(worst)


