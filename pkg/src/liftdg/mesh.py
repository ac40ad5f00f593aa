"""Triangular meshes with hanging nodes, face enumeration, face regularity.

A mesh is a flat array of 2D vertices plus counterclockwise vertex-index
triples.  Mesh faces are the maximal straight segments of the mesh skeleton
shared by exactly two cells (interior faces) or lying on the domain boundary
(boundary faces).  At a hanging node a coarse element edge is covered by
several mesh faces, so mesh faces and element edges are distinct notions.  A
face is *regular* with respect to an adjacent cell when it coincides with a
full edge of that cell, and a mesh is *face regular* when every face is
regular with respect to at least one adjacent cell.  Any matching
(conforming) mesh is face regular.

Mesh files are plain text::

    dim 2
    <n_vertices>
    x y        (one vertex per line)
    <n_cells>
    i j k      (one cell per line, 0-based vertex indices)
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

#: Relative geometric tolerance; scaled by the local cell diameter in all
#: collinearity and coincidence tests.
GEOM_TOL = 1e-12

_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


class MeshError(ValueError):
    """Invalid mesh geometry or topology."""


class MeshRegularityError(MeshError):
    """Raised when an operation requires a face-regular mesh."""


class FaceCase(str, Enum):
    """Classification of a mesh face by its regularity pattern."""

    BOUNDARY = "case1"
    INTERIOR_REGULAR_BOTH = "case2"
    INTERIOR_REGULAR_ONE = "case3"


@dataclass
class Face:
    """One mesh face: a maximal straight segment of the skeleton.

    ``n_F`` is the unit normal pointing out of ``K_ext``; for interior faces
    it points into ``K_int``.  ``case`` is None only for interior faces that
    are regular with respect to neither cell (the mesh is then not face
    regular).
    """

    index: int
    endpoints: np.ndarray  # (2, 2), a then b
    h_F: float
    kind: str  # "interior" | "boundary"
    K_ext: int
    K_int: Optional[int]
    n_F: np.ndarray  # (2,)
    regular_wrt_ext: bool = True
    regular_wrt_int: Optional[bool] = None
    case: Optional[FaceCase] = None
    # local edge of K_ext / K_int containing this face (set at enumeration)
    edge_ext: int = -1
    edge_int: int = -1

    @property
    def is_interior(self) -> bool:
        return self.kind == "interior"

    def point_at(self, t) -> np.ndarray:
        """Physical points for parameters t in [0, 1] along the segment."""
        t = np.asarray(t, dtype=float)
        a, b = self.endpoints
        return a[None, :] + t[:, None] * (b - a)[None, :]


class Mesh:
    """Immutable triangle mesh with per-cell affine maps precomputed."""

    def __init__(self, vertices: np.ndarray, cells: np.ndarray):
        self.vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
        self.cells = np.asarray(cells, dtype=int).reshape(-1, 3)
        self._validate()

        v0 = self.vertices[self.cells[:, 0]]
        v1 = self.vertices[self.cells[:, 1]]
        v2 = self.vertices[self.cells[:, 2]]
        # columns of the Jacobian are the edge vectors from vertex 0
        self.jacobians = np.stack([v1 - v0, v2 - v0], axis=-1)  # (nc, 2, 2)
        self.origins = v0
        self.dets = (
            self.jacobians[:, 0, 0] * self.jacobians[:, 1, 1]
            - self.jacobians[:, 0, 1] * self.jacobians[:, 1, 0]
        )
        if np.any(self.dets <= 0):
            bad = int(np.argmin(self.dets))
            raise MeshError(f"cell {bad} has nonpositive area {self.dets[bad] / 2}")
        self.inv_jacobians = np.linalg.inv(self.jacobians)
        self.areas = 0.5 * self.dets
        self.centroids = (v0 + v1 + v2) / 3.0

        e01 = np.linalg.norm(v1 - v0, axis=1)
        e12 = np.linalg.norm(v2 - v1, axis=1)
        e20 = np.linalg.norm(v0 - v2, axis=1)
        self.h_K = np.maximum(np.maximum(e01, e12), e20)
        self.h = float(self.h_K.max())
        perim = e01 + e12 + e20
        self.inradii = 2.0 * self.areas / perim

        self._faces: Optional[list[Face]] = None
        self._face_regular: Optional[bool] = None
        self._edge_face_map: Optional[dict] = None

    # -- validation -------------------------------------------------------

    def _validate(self) -> None:
        if len(self.cells) < 1:
            raise MeshError("mesh needs at least one cell")
        if self.cells.min() < 0 or self.cells.max() >= len(self.vertices):
            raise MeshError("cell vertex index out of range")
        seen = set()
        for c, tri in enumerate(self.cells):
            if len(set(tri)) != 3:
                raise MeshError(f"cell {c} repeats a vertex")
            key = tuple(sorted(tri))
            if key in seen:
                raise MeshError(f"duplicate cell {c}")
            seen.add(key)

    # -- geometry helpers --------------------------------------------------

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def cell_points(self, cell: int) -> np.ndarray:
        return self.vertices[self.cells[cell]]

    def to_reference(self, cell: int, points) -> np.ndarray:
        """Map physical points (n, 2) to reference coordinates of ``cell``."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return (points - self.origins[cell]) @ self.inv_jacobians[cell].T

    def from_reference(self, cell: int, ref_points) -> np.ndarray:
        ref_points = np.asarray(ref_points, dtype=float).reshape(-1, 2)
        return ref_points @ self.jacobians[cell].T + self.origins[cell]

    def shape_ratios(self) -> np.ndarray:
        """Per-cell diameter / inradius (shape regularity measure)."""
        return self.h_K / self.inradii

    def edge_endpoints(self, cell: int, local_edge: int) -> tuple[np.ndarray, np.ndarray]:
        i, j = _LOCAL_EDGES[local_edge]
        tri = self.cells[cell]
        return self.vertices[tri[i]], self.vertices[tri[j]]

    def outward_normal(self, cell: int, local_edge: int) -> np.ndarray:
        """Unit outward normal of a cell on one of its edges (cell is CCW)."""
        p0, p1 = self.edge_endpoints(cell, local_edge)
        t = p1 - p0
        n = np.array([t[1], -t[0]])
        return n / np.linalg.norm(n)

    # -- faces -------------------------------------------------------------

    @property
    def faces(self) -> list[Face]:
        if self._faces is None:
            self._faces = enumerate_faces(self)
        return self._faces

    @property
    def is_face_regular(self) -> bool:
        if self._face_regular is None:
            _, self._face_regular = classify_regularity(self, self.faces)
        return self._face_regular

    @property
    def edge_face_map(self) -> dict:
        """(cell, local_edge) -> face index, for edges that are mesh faces."""
        if self._edge_face_map is None:
            mapping = {}
            for f in self.faces:
                if f.regular_wrt_ext:
                    mapping[(f.K_ext, f.edge_ext)] = f.index
                if f.is_interior and f.regular_wrt_int:
                    mapping[(f.K_int, f.edge_int)] = f.index
            self._edge_face_map = mapping
        return self._edge_face_map


def build_mesh(vertices, cells) -> Mesh:
    """Construct a mesh, reordering clockwise cells to counterclockwise."""
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
    cells = np.asarray(cells, dtype=int).reshape(-1, 3).copy()
    for c, (i, j, k) in enumerate(cells):
        if i < 0 or j < 0 or k < 0 or max(i, j, k) >= len(vertices):
            raise MeshError(f"cell {c} has an out-of-range vertex index")
        a, b, d = vertices[i], vertices[j], vertices[k]
        area2 = (b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0])
        if area2 == 0.0:
            raise MeshError(f"cell {c} is degenerate (zero area)")
        if area2 < 0.0:
            cells[c] = (i, k, j)
    return Mesh(vertices, cells)


# ---------------------------------------------------------------------------
# face enumeration


@dataclass
class _EdgeEntry:
    cell: int
    local_edge: int
    a: np.ndarray
    b: np.ndarray
    length: float = field(init=False)

    def __post_init__(self):
        self.length = float(np.linalg.norm(self.b - self.a))


def _collinear_overlap(e1: _EdgeEntry, e2: _EdgeEntry, tol: float) -> bool:
    d = (e1.b - e1.a) / e1.length
    for p in (e2.a, e2.b):
        off = p - e1.a
        if abs(d[0] * off[1] - d[1] * off[0]) > tol:
            return False
    s = sorted((float((e2.a - e1.a) @ d), float((e2.b - e1.a) @ d)))
    return min(e1.length, s[1]) - max(0.0, s[0]) > tol


def enumerate_faces(mesh: Mesh) -> list[Face]:
    """Enumerate the mesh faces, with regularity flags and cases filled in.

    Edges matched by their vertex-index pair give conforming faces directly.
    The remaining edges are clustered by collinear positive-measure overlap
    and each cluster is split at the projected endpoints into maximal runs
    with a constant set of owning cells: one face per run.  Raises MeshError
    when a segment would be shared by more than two cells.
    """
    entries_by_pair: dict[tuple[int, int], list[_EdgeEntry]] = {}
    for c, tri in enumerate(mesh.cells):
        for e, (i, j) in enumerate(_LOCAL_EDGES):
            vi, vj = int(tri[i]), int(tri[j])
            entry = _EdgeEntry(c, e, mesh.vertices[vi].copy(), mesh.vertices[vj].copy())
            entries_by_pair.setdefault((min(vi, vj), max(vi, vj)), []).append(entry)

    raw_faces: list[tuple[np.ndarray, np.ndarray, list[_EdgeEntry]]] = []
    leftovers: list[_EdgeEntry] = []
    for pair, lst in entries_by_pair.items():
        if len(lst) == 2:
            if lst[0].cell == lst[1].cell:
                raise MeshError(f"cell {lst[0].cell} is degenerate (repeated edge)")
            raw_faces.append((lst[0].a, lst[0].b, lst))
        elif len(lst) == 1:
            leftovers.append(lst[0])
        else:
            raise MeshError(f"edge {pair} shared by more than two cells")

    raw_faces.extend(_geometric_faces(mesh, leftovers))

    faces: list[Face] = []
    for a, b, owners in raw_faces:
        faces.append(_make_face(mesh, len(faces), a, b, owners))
    # deterministic order: by midpoint, then by extent
    order = sorted(
        range(len(faces)),
        key=lambda i: (
            round(float(faces[i].endpoints.mean(axis=0)[0]), 9),
            round(float(faces[i].endpoints.mean(axis=0)[1]), 9),
            faces[i].h_F,
        ),
    )
    faces = [faces[i] for i in order]
    for i, f in enumerate(faces):
        f.index = i
    _apply_regularity(mesh, faces)
    return faces


def _geometric_faces(mesh: Mesh, leftovers: list[_EdgeEntry]):
    """Resolve unpaired edges: boundary faces and hanging-node splits."""
    n = len(leftovers)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if leftovers[i].cell == leftovers[j].cell:
                continue
            tol = GEOM_TOL * max(mesh.h_K[leftovers[i].cell], mesh.h_K[leftovers[j].cell])
            if _collinear_overlap(leftovers[i], leftovers[j], tol):
                parent[find(i)] = find(j)

    clusters: dict[int, list[_EdgeEntry]] = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(leftovers[i])

    out = []
    for group in clusters.values():
        if len(group) == 1:
            e = group[0]
            out.append((e.a, e.b, [e]))
            continue
        ref = max(group, key=lambda e: e.length)
        origin = ref.a
        d = (ref.b - ref.a) / ref.length
        tol = GEOM_TOL * max(mesh.h_K[e.cell] for e in group)
        spans = []
        for e in group:
            for p in (e.a, e.b):
                off = p - origin
                if abs(d[0] * off[1] - d[1] * off[0]) > tol:
                    raise MeshError(
                        "partially overlapping element edges are not collinear "
                        f"(cells {sorted({g.cell for g in group})})"
                    )
            s0, s1 = float((e.a - origin) @ d), float((e.b - origin) @ d)
            spans.append((min(s0, s1), max(s0, s1), e))

        breaks = sorted({s for lo, hi, _ in spans for s in (lo, hi)})
        merged = [breaks[0]]
        for s in breaks[1:]:
            if s - merged[-1] > tol:
                merged.append(s)

        runs: list[tuple[float, float, tuple[int, ...], list[_EdgeEntry]]] = []
        for lo, hi in zip(merged[:-1], merged[1:]):
            mid = 0.5 * (lo + hi)
            owners = [e for s0, s1, e in spans if s0 - tol <= mid <= s1 + tol]
            if not owners:
                continue
            if len(owners) > 2:
                raise MeshError(
                    f"segment shared by more than two cells: {sorted(e.cell for e in owners)}"
                )
            key = tuple(sorted(e.cell for e in owners))
            if runs and runs[-1][2] == key and abs(runs[-1][1] - lo) <= tol:
                prev = runs.pop()
                runs.append((prev[0], hi, key, prev[3]))
            else:
                runs.append((lo, hi, key, owners))

        for lo, hi, _key, owners in runs:
            out.append((origin + lo * d, origin + hi * d, owners))
    return out


def _make_face(mesh: Mesh, index: int, a, b, owners: list[_EdgeEntry]) -> Face:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    owners = sorted(owners, key=lambda e: e.cell)
    ext = owners[0]
    n = mesh.outward_normal(ext.cell, ext.local_edge)
    if len(owners) == 1:
        return Face(
            index=index, endpoints=np.vstack([a, b]), h_F=float(np.linalg.norm(b - a)),
            kind="boundary", K_ext=ext.cell, K_int=None, n_F=n, edge_ext=ext.local_edge,
        )
    inner = owners[1]
    return Face(
        index=index, endpoints=np.vstack([a, b]), h_F=float(np.linalg.norm(b - a)),
        kind="interior", K_ext=ext.cell, K_int=inner.cell, n_F=n,
        edge_ext=ext.local_edge, edge_int=inner.local_edge,
    )


# ---------------------------------------------------------------------------
# regularity classification


def _segment_is_edge(mesh: Mesh, face: Face, cell: int, local_edge: int) -> bool:
    p0, p1 = mesh.edge_endpoints(cell, local_edge)
    a, b = face.endpoints
    tol = GEOM_TOL * mesh.h_K[cell]
    straight = np.linalg.norm(a - p0) <= tol and np.linalg.norm(b - p1) <= tol
    flipped = np.linalg.norm(a - p1) <= tol and np.linalg.norm(b - p0) <= tol
    return bool(straight or flipped)


def classify_regularity(mesh: Mesh, faces: list[Face]) -> tuple[list[tuple[bool, Optional[bool]]], bool]:
    """Per-face regularity flags (w.r.t. K_ext, K_int) and the mesh verdict.

    A face is regular with respect to a cell when its segment coincides with
    the convex hull of two of the cell's vertices, i.e. a full element edge.
    The mesh is face regular when every face is regular with respect to at
    least one adjacent cell.
    """
    flags = []
    regular_mesh = True
    for f in faces:
        r_ext = _segment_is_edge(mesh, f, f.K_ext, f.edge_ext)
        r_int = None
        if f.is_interior:
            r_int = _segment_is_edge(mesh, f, f.K_int, f.edge_int)
            if not (r_ext or r_int):
                regular_mesh = False
        flags.append((r_ext, r_int))
    return flags, regular_mesh


def _apply_regularity(mesh: Mesh, faces: list[Face]) -> None:
    flags, _ = classify_regularity(mesh, faces)
    for f, (r_ext, r_int) in zip(faces, flags):
        f.regular_wrt_ext = r_ext
        f.regular_wrt_int = r_int
        if not f.is_interior:
            f.case = FaceCase.BOUNDARY
        elif r_ext and r_int:
            f.case = FaceCase.INTERIOR_REGULAR_BOTH
        elif r_ext or r_int:
            f.case = FaceCase.INTERIOR_REGULAR_ONE
        else:
            f.case = None


def require_face_regular(mesh: Mesh) -> None:
    if not mesh.is_face_regular:
        raise MeshRegularityError("mesh not face regular")


# ---------------------------------------------------------------------------
# refinement and built-in meshes


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: split every triangle into four via edge midpoints."""
    verts = [tuple(p) for p in mesh.vertices]
    lookup = {p: i for i, p in enumerate(verts)}

    def midpoint(i: int, j: int) -> int:
        m = tuple((mesh.vertices[i] + mesh.vertices[j]) / 2.0)
        idx = lookup.get(m)
        if idx is None:
            idx = len(verts)
            verts.append(m)
            lookup[m] = idx
        return idx

    cells = []
    for a, b, c in mesh.cells:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        cells.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
    return build_mesh(np.array(verts, dtype=float), np.array(cells, dtype=int))


_UNIT_SQUARE_RE = re.compile(r"^unit_square\((\d+)\)$")

BUILTIN_MESH_NAMES = ("two_triangle", "criss_cross", "fig1_left", "fig1_right", "unit_square(n)")


def builtin_mesh(name: str) -> Mesh:
    """Construct a built-in mesh by name.

    Names: ``two_triangle`` (unit square split by one diagonal),
    ``criss_cross`` (the square (-1,1)^2 split by both diagonals),
    ``fig1_left`` (diamond with a one-level hanging node; face regular),
    ``fig1_right`` (diamond with offset hanging nodes; not face regular),
    ``unit_square(n)`` (n x n squares, each split by a diagonal).
    """
    m = _UNIT_SQUARE_RE.match(name.replace(" ", ""))
    if m:
        return _unit_square(int(m.group(1)))
    if name == "two_triangle":
        return _unit_square(1)
    if name == "criss_cross":
        verts = [(-1, -1), (1, -1), (1, 1), (-1, 1), (0, 0)]
        cells = [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)]
        return build_mesh(verts, cells)
    if name == "fig1_left":
        verts = [(0, 1), (1, 0), (0, -1), (-1, 0), (0, 0)]
        cells = [(2, 1, 0), (3, 4, 0), (3, 2, 4)]
        return build_mesh(verts, cells)
    if name == "fig1_right":
        verts = [(0, 1), (1, 0), (0, -1), (-1, 0), (0, -0.2), (0, 0.2)]
        cells = [(3, 2, 4), (3, 4, 0), (5, 1, 0), (2, 1, 5)]
        return build_mesh(verts, cells)
    raise MeshError(f"unknown built-in mesh {name!r}")


def _unit_square(n: int) -> Mesh:
    if n < 1:
        raise MeshError("unit_square(n) needs n >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    verts = [(xs[i], xs[j]) for j in range(n + 1) for i in range(n + 1)]

    def vid(i, j):
        return j * (n + 1) + i
    cells = []
    for j in range(n):
        for i in range(n):
            cells.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
            cells.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))
    return build_mesh(np.array(verts, dtype=float), np.array(cells, dtype=int))


# ---------------------------------------------------------------------------
# mesh file IO


def read_mesh(path) -> Mesh:
    """Read the plain-text mesh format described in the module docstring."""
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    try:
        it = iter(tokens)
        if next(it) != "dim" or next(it) != "2":
            raise MeshError(f"{path}: expected header 'dim 2'")
        nv = int(next(it))
        verts = [(float(next(it)), float(next(it))) for _ in range(nv)]
        nc = int(next(it))
        cells = [(int(next(it)), int(next(it)), int(next(it))) for _ in range(nc)]
    except (StopIteration, ValueError) as exc:
        raise MeshError(f"{path}: malformed mesh file ({exc})") from exc
    return build_mesh(np.array(verts, dtype=float), np.array(cells, dtype=int))


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("dim 2\n")
        fh.write(f"{mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x!r} {y!r}\n")
        fh.write(f"{mesh.n_cells}\n")
        for i, j, k in mesh.cells:
            fh.write(f"{i} {j} {k}\n")
