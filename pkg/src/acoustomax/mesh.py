"""Triangular meshes of the disk with oriented edge tables.

The built-in generator starts from a hexagon fan (6 triangles around the
origin) and quadrisects uniformly, projecting new boundary vertices onto
the circle, so level L carries exactly 6*4**L triangles.  Global edges are
oriented from the lower to the higher vertex index; boundary tangents
follow the counterclockwise traversal t = z x n with n the outward normal.

The ASCII mesh format (also accepted by ``load_mesh``)::

    # comment lines and trailing comments allowed
    V T B
    x y          (V vertex lines, cm)
    i j k        (T triangle lines, 0-based, counterclockwise)
    i j          (B boundary edge lines)
"""

from dataclasses import dataclass, field

import numpy as np


class MeshError(Exception):
    """Base class for mesh construction/validation failures."""


class MeshParseError(MeshError):
    """Malformed mesh file; carries the offending line number."""

    def __init__(self, line_no, message):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class MeshValidationError(MeshError):
    """Topological or geometric invariant violated."""


class ResourceLimitError(MeshError):
    """Requested refinement exceeds the supported range."""


MAX_REFINEMENT = 10


@dataclass
class Mesh2D:
    """Conforming triangle mesh with oriented edges and boundary data.

    vertices            (V,2) float, cm
    triangles           (T,3) int, counterclockwise
    edges               (E,2) int, oriented low index -> high index
    triangle_edges      (T,3) int, global edge per local edge (a, a+1)
    triangle_edge_signs (T,3) int, +1 if local orientation matches global
    boundary_edges      (B,)  int, edge indices on the boundary
    boundary_tri        (B,)  int, the single incident triangle
    boundary_local      (B,)  int, local edge index within that triangle
    boundary_normals    (B,2) outward unit normals
    boundary_tangents   (B,2) unit tangents t = z x n (counterclockwise)
    boundary_signs      (B,)  +1 if global edge orientation runs along t
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray = field(init=False)
    triangle_edges: np.ndarray = field(init=False)
    triangle_edge_signs: np.ndarray = field(init=False)
    boundary_edges: np.ndarray = field(init=False)
    boundary_tri: np.ndarray = field(init=False)
    boundary_local: np.ndarray = field(init=False)
    boundary_normals: np.ndarray = field(init=False)
    boundary_tangents: np.ndarray = field(init=False)
    boundary_signs: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self._build_edges()
        self._build_boundary()
        self._validate()

    # -- construction ------------------------------------------------------

    def _build_edges(self):
        tri = self.triangles
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise MeshValidationError("triangle array must be (T,3)")
        raw = np.concatenate(
            [tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]], axis=0
        )  # (3T,2) local edges in traversal order, grouped by local index
        lo = np.minimum(raw[:, 0], raw[:, 1])
        hi = np.maximum(raw[:, 0], raw[:, 1])
        if np.any(lo == hi):
            raise MeshValidationError("degenerate edge (repeated vertex) found")
        pairs = np.stack([lo, hi], axis=1)
        edges, inv = np.unique(pairs, axis=0, return_inverse=True)
        T = tri.shape[0]
        self.edges = edges
        self.triangle_edges = inv.reshape(3, T).T.copy()
        signs = np.where(raw[:, 0] == lo, 1, -1).astype(np.int64)
        self.triangle_edge_signs = signs.reshape(3, T).T.copy()

    def _build_boundary(self):
        E = self.edges.shape[0]
        counts = np.bincount(self.triangle_edges.ravel(), minlength=E)
        if np.any(counts > 2):
            bad = int(np.nonzero(counts > 2)[0][0])
            raise MeshValidationError(
                f"non-manifold connectivity: edge {bad} shared by {counts[bad]} triangles"
            )
        if np.any(counts == 0):
            raise MeshValidationError("orphan edge in edge table")
        b_ids = np.nonzero(counts == 1)[0]
        # locate the unique (triangle, local edge) owning each boundary edge
        owner = np.full(E, -1, dtype=np.int64)
        local = np.full(E, -1, dtype=np.int64)
        for a in range(3):
            ids = self.triangle_edges[:, a]
            mask = counts[ids] == 1
            owner[ids[mask]] = np.nonzero(mask)[0]
            local[ids[mask]] = a
        self.boundary_edges = b_ids
        self.boundary_tri = owner[b_ids]
        self.boundary_local = local[b_ids]
        # tangent follows the owning triangle's (counterclockwise) traversal
        tri = self.triangles
        a = self.boundary_local
        va = tri[self.boundary_tri, a]
        vb = tri[self.boundary_tri, (a + 1) % 3]
        start = self.vertices[va]
        end = self.vertices[vb]
        seg = end - start
        length = np.linalg.norm(seg, axis=1)
        t_hat = seg / length[:, None]
        self.boundary_tangents = t_hat
        self.boundary_normals = np.stack([t_hat[:, 1], -t_hat[:, 0]], axis=1)
        self.boundary_signs = np.where(va < vb, 1, -1).astype(np.int64)

    def _validate(self):
        areas = self.signed_areas()
        if np.any(areas <= 0.0):
            bad = int(np.nonzero(areas <= 0.0)[0][0])
            raise MeshValidationError(
                f"triangle {bad} has non-positive signed area {areas[bad]:.3e} "
                "(inconsistent winding)"
            )
        V, E, T = len(self.vertices), len(self.edges), len(self.triangles)
        if V - E + T != 1:
            raise MeshValidationError(
                f"Euler relation violated: V-E+T = {V - E + T} != 1"
            )
        centroid = self.vertices.mean(axis=0)
        mids = self.boundary_midpoints()
        outward = np.einsum("bi,bi->b", self.boundary_normals, mids - centroid)
        if np.any(outward <= 0.0):
            raise MeshValidationError("boundary normal points into the mesh")

    # -- derived geometry ---------------------------------------------------

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self):
        seg = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(seg, axis=1)

    def boundary_midpoints(self):
        e = self.edges[self.boundary_edges]
        return 0.5 * (self.vertices[e[:, 0]] + self.vertices[e[:, 1]])

    def boundary_lengths(self):
        return self.edge_lengths()[self.boundary_edges]

    @property
    def radius(self):
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))

    def stats(self):
        return {
            "vertices": int(len(self.vertices)),
            "triangles": int(len(self.triangles)),
            "edges": int(len(self.edges)),
            "boundary_edges": int(len(self.boundary_edges)),
            "max_edge_length": float(np.max(self.edge_lengths())),
            "radius": self.radius,
        }


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _harmonic_smooth(verts, tris, boundary_mask):
    """Relocate interior vertices to graph-harmonic positions (boundary pinned)."""
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    V = len(verts)
    raw = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=0)
    lo = np.minimum(raw[:, 0], raw[:, 1])
    hi = np.maximum(raw[:, 0], raw[:, 1])
    e = np.unique(np.stack([lo, hi], axis=1), axis=0)
    ones = np.ones(2 * len(e))
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    adj = sp.coo_matrix((ones, (rows, cols)), shape=(V, V)).tocsr()
    lap = sp.diags(np.asarray(adj.sum(axis=1)).ravel()) - adj
    interior = np.nonzero(~boundary_mask)[0]
    boundary = np.nonzero(boundary_mask)[0]
    if len(interior) == 0:
        return verts
    lu = spla.splu(lap[interior][:, interior].tocsc())
    lap_ib = lap[interior][:, boundary]
    out = verts.copy()
    for d in range(2):
        out[interior, d] = lu.solve(-lap_ib @ verts[boundary, d])
    return out


def gen_disk_mesh(radius=1.0, refinement_level=0):
    """Uniform mesh of the disk: hexagon fan quadrisected L times.

    New boundary vertices (midpoints of boundary edges) land on the circle
    (angular midpoints) at every level, and interior vertices are finally
    relaxed to graph-harmonic positions with the boundary pinned.  Level L
    carries exactly 6*4**L triangles and a 6*2**L-gon boundary; the max
    edge stays within 1.30x of the per-segment boundary arc 2*(pi/6)/2**L.
    """
    if radius <= 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    if not 0 <= int(refinement_level) == refinement_level:
        raise ValueError("refinement_level must be a nonnegative integer")
    if refinement_level > MAX_REFINEMENT:
        raise ResourceLimitError(
            f"refinement_level {refinement_level} exceeds supported maximum "
            f"{MAX_REFINEMENT} (6*4**{refinement_level} triangles)"
        )
    ang = np.arange(6) * (np.pi / 3.0)
    verts = np.concatenate(
        [[[0.0, 0.0]], radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)]
    )
    tris = np.array([[0, k + 1, (k + 1) % 6 + 1] for k in range(6)], dtype=np.int64)
    on_circle = np.zeros(7, dtype=bool)
    on_circle[1:] = True

    for _ in range(int(refinement_level)):
        raw = np.concatenate(
            [tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=0
        )
        pairs = np.sort(raw, axis=1)
        edges, inv = np.unique(pairs, axis=0, return_inverse=True)
        mid = 0.5 * (verts[edges[:, 0]] + verts[edges[:, 1]])
        mid_on_circle = on_circle[edges[:, 0]] & on_circle[edges[:, 1]]
        norms = np.linalg.norm(mid[mid_on_circle], axis=1)
        mid[mid_on_circle] *= (radius / norms)[:, None]
        mid_ids = len(verts) + np.arange(len(edges))
        verts = np.concatenate([verts, mid])
        on_circle = np.concatenate([on_circle, mid_on_circle])
        T = tris.shape[0]
        m01 = mid_ids[inv[:T]]
        m12 = mid_ids[inv[T : 2 * T]]
        m20 = mid_ids[inv[2 * T :]]
        v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
        tris = np.concatenate(
            [
                np.stack([v0, m01, m20], axis=1),
                np.stack([v1, m12, m01], axis=1),
                np.stack([v2, m20, m12], axis=1),
                np.stack([m01, m12, m20], axis=1),
            ],
            axis=0,
        )
    verts = _harmonic_smooth(verts, tris, on_circle)
    return Mesh2D(verts, tris)


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def save_mesh(mesh, path):
    """Write the ASCII mesh format (see module docstring)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(mesh.vertices)} {len(mesh.triangles)} "
                 f"{len(mesh.boundary_edges)}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        for e in mesh.boundary_edges:
            i, j = mesh.edges[e]
            fh.write(f"{i} {j}\n")


def _token_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if body:
                yield line_no, body.split()


def load_mesh(path):
    """Parse the ASCII mesh format and rebuild the edge table from scratch."""
    lines = _token_lines(path)

    def next_line(what):
        try:
            return next(lines)
        except StopIteration:
            raise MeshParseError(0, f"unexpected end of file, expected {what}")

    line_no, toks = next_line("header 'V T B'")
    if len(toks) != 3:
        raise MeshParseError(line_no, f"header must be 'V T B', got {toks}")
    try:
        V, T, B = (int(t) for t in toks)
    except ValueError:
        raise MeshParseError(line_no, f"non-integer header field in {toks}")
    if V < 3 or T < 1 or B < 3:
        raise MeshParseError(line_no, f"implausible counts V={V} T={T} B={B}")

    verts = np.empty((V, 2))
    for n in range(V):
        line_no, toks = next_line(f"vertex {n}")
        if len(toks) != 2:
            raise MeshParseError(line_no, f"vertex line needs 2 fields, got {len(toks)}")
        try:
            verts[n] = [float(toks[0]), float(toks[1])]
        except ValueError:
            raise MeshParseError(line_no, f"non-numeric vertex coordinate in {toks}")

    tris = np.empty((T, 3), dtype=np.int64)
    for n in range(T):
        line_no, toks = next_line(f"triangle {n}")
        if len(toks) != 3:
            raise MeshParseError(line_no, f"triangle line needs 3 fields, got {len(toks)}")
        try:
            tris[n] = [int(t) for t in toks]
        except ValueError:
            raise MeshParseError(line_no, f"non-integer vertex index in {toks}")
        if np.any(tris[n] < 0) or np.any(tris[n] >= V):
            raise MeshParseError(
                line_no, f"vertex index out of range [0,{V}) in {toks}"
            )

    declared = set()
    for n in range(B):
        line_no, toks = next_line(f"boundary edge {n}")
        if len(toks) != 2:
            raise MeshParseError(line_no, f"boundary line needs 2 fields, got {len(toks)}")
        try:
            i, j = int(toks[0]), int(toks[1])
        except ValueError:
            raise MeshParseError(line_no, f"non-integer boundary index in {toks}")
        if not (0 <= i < V and 0 <= j < V):
            raise MeshParseError(line_no, f"boundary vertex index out of range in {toks}")
        declared.add((min(i, j), max(i, j)))

    mesh = Mesh2D(verts, tris)
    derived = {tuple(mesh.edges[e]) for e in mesh.boundary_edges}
    if declared != derived:
        raise MeshValidationError(
            f"declared boundary edges disagree with triangulation "
            f"({len(declared)} declared, {len(derived)} derived)"
        )
    return mesh


# ---------------------------------------------------------------------------
# boundary quadrature
# ---------------------------------------------------------------------------

@dataclass
class BoundaryQuadrature:
    """Gauss-Legendre points on every boundary segment.

    points  (B,n,2); weights (B,n) summing to each segment length;
    normals/tangents (B,2); bary (B,n,3) barycentric coordinates within
    the owning triangle (for field evaluation on the trace).
    """

    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray
    bary: np.ndarray


def boundary_quadrature(mesh, order=3):
    """Per-boundary-edge Gauss-Legendre rule; `order` = number of points."""
    if not 1 <= order <= 10:
        raise ValueError(f"order must be in 1..10, got {order}")
    xg, wg = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (xg + 1.0)  # (n,) in (0,1) along the CCW traversal
    tri = mesh.triangles
    a = mesh.boundary_local
    va = tri[mesh.boundary_tri, a]
    vb = tri[mesh.boundary_tri, (a + 1) % 3]
    p0 = mesh.vertices[va]
    p1 = mesh.vertices[vb]
    pts = p0[:, None, :] + s[None, :, None] * (p1 - p0)[:, None, :]
    lengths = np.linalg.norm(p1 - p0, axis=1)
    weights = 0.5 * wg[None, :] * lengths[:, None]
    B, n = len(va), order
    bary = np.zeros((B, n, 3))
    rows = np.arange(B)
    bary[rows[:, None], np.arange(n)[None, :], a[:, None]] = 1.0 - s[None, :]
    bary[rows[:, None], np.arange(n)[None, :], ((a + 1) % 3)[:, None]] = s[None, :]
    return BoundaryQuadrature(
        points=pts,
        weights=weights,
        normals=mesh.boundary_normals.copy(),
        tangents=mesh.boundary_tangents.copy(),
        bary=bary,
    )
