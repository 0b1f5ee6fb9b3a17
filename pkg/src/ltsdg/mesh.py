"""Meshes for the DG solvers.

Two flavours are supported: a 1D interval mesh (usually the graded
electrode-layer mesh) and a 2D conforming triangle mesh read from the plain
text ``MESH2D`` format or produced by the tensor-product generators below.
Both expose the same small topology surface (``n_elements``,
``face_pairs``, ``vertex_pairs``) so that partitioning code does not care
about the dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BOUNDARY_TAGS = ("inflow", "outflow", "wall", "electrode", "far-field")


class MeshError(ValueError):
    """Invalid mesh parameters or topology."""


class MeshFormatError(MeshError):
    """Malformed mesh file; the message names the offending line."""


class DegenerateGeometryError(MeshError):
    pass


def _check_tag(tag: str) -> str:
    if tag not in BOUNDARY_TAGS:
        raise MeshError(f"unknown boundary tag {tag!r}; expected one of {BOUNDARY_TAGS}")
    return tag


@dataclass(frozen=True)
class Mesh1D:
    nodes: np.ndarray
    degree: np.ndarray
    left_tag: str = "electrode"
    right_tag: str = "far-field"

    dim = 1

    def __post_init__(self):
        z = np.asarray(self.nodes, dtype=float)
        if z.ndim != 1 or z.size < 2:
            raise MeshError("need at least two nodes")
        if not np.all(np.isfinite(z)):
            raise MeshError("non-finite node coordinate")
        if np.any(np.diff(z) <= 0):
            raise MeshError("nodes must be strictly increasing")
        deg = np.broadcast_to(np.asarray(self.degree, dtype=int), (z.size - 1,)).copy()
        if np.any(deg < 0):
            raise MeshError("polynomial degree must be >= 0")
        _check_tag(self.left_tag)
        _check_tag(self.right_tag)
        z.setflags(write=False)
        deg.setflags(write=False)
        object.__setattr__(self, "nodes", z)
        object.__setattr__(self, "degree", deg)

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def centroids(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    @property
    def volumes(self) -> np.ndarray:
        return self.sizes

    def face_pairs(self) -> np.ndarray:
        """Element pairs sharing an interior node, left element first."""
        e = np.arange(self.n_elements - 1)
        return np.column_stack([e, e + 1])

    def vertex_pairs(self) -> np.ndarray:
        # in 1D faces are vertices
        return self.face_pairs()


def build_graded_mesh_1d(delta_len: float, z_max: float, q: float, r: int,
                         degree: int = 1, left_tag: str = "electrode",
                         right_tag: str = "far-field") -> Mesh1D:
    """Geometric grading on ``[0, delta_len]`` followed by a uniform section.

    The first ``r`` sizes are ``h*q**(i-1)`` with ``h`` chosen so that they
    sum to ``delta_len``; the last geometric element absorbs the rounding so
    the layer boundary sits exactly at ``delta_len``. The remaining elements
    all have the size of the last geometric one, and there are just enough of
    them to reach ``z_max``.
    """
    for name, val in (("delta_len", delta_len), ("z_max", z_max), ("q", q)):
        if not math.isfinite(val) or val <= 0:
            raise MeshError(f"{name} must be finite and positive, got {val!r}")
    if not q > 1:
        raise MeshError(f"grading factor q must exceed 1, got {q!r}")
    if int(r) != r or r < 1:
        raise MeshError(f"r must be a positive integer, got {r!r}")
    if not z_max > delta_len:
        raise MeshError("z_max must exceed delta_len")
    r = int(r)

    h = delta_len * (q - 1.0) / (q**r - 1.0)
    sizes = h * q ** np.arange(r)
    nodes = np.concatenate([[0.0], np.cumsum(sizes)])
    nodes[-1] = delta_len
    h_r = nodes[-1] - nodes[-2]

    ratio = (z_max - delta_len) / h_r
    nearest = round(ratio)
    n_uniform = int(nearest) if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio) else math.ceil(ratio)
    tail = delta_len + h_r * np.arange(1, n_uniform + 1)
    return Mesh1D(np.concatenate([nodes, tail]), degree, left_tag, right_tag)


def graded_step(delta_len: float, q: float, r: int) -> float:
    """Smallest element size ``h`` of the geometric section."""
    return delta_len * (q - 1.0) / (q**r - 1.0)


def incircle_radius(tri) -> float:
    """Radius of the inscribed circle, ``area / semi-perimeter``."""
    p = np.asarray(tri, dtype=float).reshape(3, 2)
    a = np.linalg.norm(p[1] - p[2])
    b = np.linalg.norm(p[2] - p[0])
    c = np.linalg.norm(p[0] - p[1])
    d1, d2 = p[1] - p[0], p[2] - p[0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    scale = max(a, b, c)
    if not np.isfinite(area) or area <= 1e-14 * scale * scale:
        raise DegenerateGeometryError(f"degenerate triangle {p.tolist()}")
    return area / (0.5 * (a + b + c))


@dataclass(frozen=True)
class Mesh2D:
    """Conforming triangle mesh with tagged boundary edges.

    ``edges`` holds unique vertex pairs; ``edge_elements[e] = (k0, k1)`` with
    ``k1 = -1`` on the boundary. ``edge_tags[e]`` is ``None`` for interior
    edges. Triangles are stored counter-clockwise.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_elements: np.ndarray
    edge_tags: tuple
    degree: np.ndarray
    areas: np.ndarray = field(repr=False)
    inradius: np.ndarray = field(repr=False)

    dim = 2

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def volumes(self) -> np.ndarray:
        return self.areas

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_elements[:, 1] >= 0)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_elements[:, 1] < 0)

    def face_pairs(self) -> np.ndarray:
        return self.edge_elements[self.interior_edges]

    def vertex_pairs(self) -> np.ndarray:
        """All element pairs sharing at least one vertex."""
        nt = self.n_elements
        rows = np.repeat(np.arange(nt), 3)
        cols = self.triangles.ravel()
        import scipy.sparse as sp

        inc = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(nt, self.n_vertices))
        adj = (inc @ inc.T).tocoo()
        keep = adj.row < adj.col
        return np.column_stack([adj.row[keep], adj.col[keep]])

    def edge_geometry(self):
        """Lengths and unit normals pointing out of ``edge_elements[:, 0]``."""
        p = self.vertices[self.edges]
        t = p[:, 1] - p[:, 0]
        length = np.hypot(t[:, 0], t[:, 1])
        normal = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
        # orient away from the first element
        c = self.centroids[self.edge_elements[:, 0]]
        mid = p.mean(axis=1)
        flip = np.einsum("ij,ij->i", normal, mid - c) < 0
        normal[flip] *= -1
        return length, normal

    def boundary_polygon_area(self) -> float:
        """Signed-area sum over boundary edges oriented by their element."""
        total = 0.0
        for e in self.boundary_edges:
            k = self.edge_elements[e, 0]
            a, b = self.edges[e]
            tri = list(self.triangles[k])
            ia, ib = tri.index(a), tri.index(b)
            if (ib - ia) % 3 != 1:
                a, b = b, a
            (x0, y0), (x1, y1) = self.vertices[a], self.vertices[b]
            total += x0 * y1 - x1 * y0
        return 0.5 * total


def _signed_areas(vertices, triangles):
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def make_mesh_2d(vertices, triangles, tagged_edges: dict, degree: int = 1) -> Mesh2D:
    """Build connectivity from raw arrays.

    ``tagged_edges`` maps ``frozenset({i, j})`` to a boundary tag and must
    cover every boundary edge.
    """
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
    triangles = np.asarray(triangles, dtype=int).reshape(-1, 3).copy()
    if len(triangles) == 0:
        raise MeshError("mesh has no triangles")
    if triangles.min() < 0 or triangles.max() >= len(vertices):
        raise MeshError("triangle references a vertex index outside the vertex list")

    area = _signed_areas(vertices, triangles)
    neg = area < 0
    triangles[neg] = triangles[neg][:, [0, 2, 1]]
    area = np.abs(area)

    inradius = np.empty(len(triangles))
    for k, tri in enumerate(triangles):
        inradius[k] = incircle_radius(vertices[tri])

    edge_index: dict = {}
    edges, owners = [], []
    for k, tri in enumerate(triangles):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            e = edge_index.get(key)
            if e is None:
                edge_index[key] = len(edges)
                edges.append(key)
                owners.append([k, -1])
            elif owners[e][1] < 0:
                owners[e][1] = k
            else:
                raise MeshError(f"non-manifold edge {key}: more than two incident triangles")

    edges = np.array(edges, dtype=int)
    owners = np.array(owners, dtype=int)
    tags = [None] * len(edges)
    for key, tag in tagged_edges.items():
        a, b = sorted(key)
        e = edge_index.get((a, b))
        if e is None:
            raise MeshError(f"tagged edge ({a}, {b}) is not an edge of the mesh")
        if owners[e, 1] >= 0:
            raise MeshError(f"tagged edge ({a}, {b}) is an interior edge")
        tags[e] = _check_tag(tag)
    missing = [tuple(edges[e]) for e in np.flatnonzero(owners[:, 1] < 0) if tags[e] is None]
    if missing:
        raise MeshError(f"{len(missing)} boundary edges carry no tag, e.g. {missing[0]}")

    deg = np.full(len(triangles), int(degree))
    return Mesh2D(vertices, triangles, edges, owners, tuple(tags), deg, area, inradius)


def load_mesh_2d(path, degree: int = 1) -> Mesh2D:
    """Read the ``MESH2D nv nt nb`` plain-text format."""
    lines = Path(path).read_text().splitlines()
    rows = [(i + 1, ln.split()) for i, ln in enumerate(lines) if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise MeshFormatError(f"{path}: empty file")
    lineno, head = rows[0]
    if len(head) != 4 or head[0] != "MESH2D":
        raise MeshFormatError(f"{path}:{lineno}: expected 'MESH2D <nv> <nt> <nb>'")
    try:
        nv, nt, nb = (int(x) for x in head[1:])
    except ValueError:
        raise MeshFormatError(f"{path}:{lineno}: counts must be integers") from None
    body = rows[1:]
    if len(body) != nv + nt + nb:
        raise MeshFormatError(f"{path}: expected {nv + nt + nb} data lines after the header, found {len(body)}")

    vertices = np.empty((nv, 2))
    for k, (lineno, tok) in enumerate(body[:nv]):
        try:
            if len(tok) != 2:
                raise ValueError
            vertices[k] = [float(tok[0]), float(tok[1])]
        except ValueError:
            raise MeshFormatError(f"{path}:{lineno}: expected 'x y'") from None
        if not np.all(np.isfinite(vertices[k])):
            raise MeshFormatError(f"{path}:{lineno}: non-finite coordinate")

    triangles = np.empty((nt, 3), dtype=int)
    for k, (lineno, tok) in enumerate(body[nv:nv + nt]):
        try:
            if len(tok) != 3:
                raise ValueError
            triangles[k] = [int(t) for t in tok]
        except ValueError:
            raise MeshFormatError(f"{path}:{lineno}: expected 'i j k'") from None
        if triangles[k].min() < 0 or triangles[k].max() >= nv:
            raise MeshFormatError(f"{path}:{lineno}: vertex index out of range 0..{nv - 1}")

    tagged = {}
    for lineno, tok in body[nv + nt:]:
        if len(tok) != 3:
            raise MeshFormatError(f"{path}:{lineno}: expected 'i j TAG'")
        try:
            a, b = int(tok[0]), int(tok[1])
        except ValueError:
            raise MeshFormatError(f"{path}:{lineno}: expected integer vertex indices") from None
        if tok[2] not in BOUNDARY_TAGS:
            raise MeshFormatError(f"{path}:{lineno}: unknown boundary tag {tok[2]!r}")
        if not (0 <= a < nv and 0 <= b < nv):
            raise MeshFormatError(f"{path}:{lineno}: vertex index out of range 0..{nv - 1}")
        tagged[frozenset((a, b))] = tok[2]

    try:
        return make_mesh_2d(vertices, triangles, tagged, degree)
    except MeshFormatError:
        raise
    except MeshError as exc:
        raise MeshFormatError(f"{path}: {exc}") from None


def write_mesh_2d(mesh: Mesh2D, path) -> None:
    bnd = mesh.boundary_edges
    out = [f"MESH2D {mesh.n_vertices} {mesh.n_elements} {len(bnd)}"]
    out += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    out += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    out += [f"{mesh.edges[e, 0]} {mesh.edges[e, 1]} {mesh.edge_tags[e]}" for e in bnd]
    Path(path).write_text("\n".join(out) + "\n")


def rectangle_mesh(xs, ys, tags=None, degree: int = 1) -> Mesh2D:
    """Tensor-product triangulation of the rectangle spanned by ``xs`` x ``ys``.

    Every cell is cut along the same diagonal. ``tags`` maps the sides
    ``left/right/bottom/top`` to boundary tags (walls by default).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
        raise MeshError("grid lines must be strictly increasing")
    side = {"left": "wall", "right": "wall", "bottom": "wall", "top": "wall"}
    side.update(tags or {})
    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * ny + j

    tris = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    tagged = {}
    for j in range(ny - 1):
        tagged[frozenset((vid(0, j), vid(0, j + 1)))] = side["left"]
        tagged[frozenset((vid(nx - 1, j), vid(nx - 1, j + 1)))] = side["right"]
    for i in range(nx - 1):
        tagged[frozenset((vid(i, 0), vid(i + 1, 0)))] = side["bottom"]
        tagged[frozenset((vid(i, ny - 1), vid(i + 1, ny - 1)))] = side["top"]
    return make_mesh_2d(vertices, tris, tagged, degree)


def unit_square_mesh(n: int, degree: int = 1, tags=None) -> Mesh2D:
    g = np.linspace(0.0, 1.0, n + 1)
    return rectangle_mesh(g, g, tags, degree)
