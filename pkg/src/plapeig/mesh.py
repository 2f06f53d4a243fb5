"""Conforming 2-D triangle meshes with newest-vertex bisection.

A triangle is stored as three vertex indices ordered so that the edge
opposite the local vertex 0 is its refinement edge.  Bisection inserts the
midpoint of that edge; the two children take the midpoint as local vertex 0,
so their refinement edges are the two remaining edges of the parent.  The
structured generators assign refinement edges to cell hypotenuses, which
makes the assignment globally compatible and keeps the number of triangle
similarity classes finite under repeated refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class MeshConformityError(Exception):
    """Raised when a triangulation is not a conforming 2-manifold mesh."""


@dataclass(frozen=True)
class Mesh:
    """Immutable conforming triangulation.

    vertices        (nv, 2) float64 coordinates
    triangles       (nt, 3) int64, counterclockwise, refinement edge opposite
                    local vertex 0
    boundary_vertex (nv,) bool
    generation      (nt,) int64 bisection depth relative to the root mesh
    parent          (nt,) int64 index of the ancestor triangle in the mesh
                    that was refined to produce this one; -1 for root meshes
    snap_to_unit_circle  boundary vertices created by refinement are pushed
                    radially onto the unit circle (disk meshes)
    vertex_parents  (nv, 2) int64 endpoint indices of the edge whose midpoint
                    created each vertex; (-1, -1) for original vertices
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertex: np.ndarray
    generation: np.ndarray
    parent: np.ndarray
    snap_to_unit_circle: bool = False
    vertex_parents: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        b = np.ascontiguousarray(self.boundary_vertex, dtype=bool)
        g = np.ascontiguousarray(self.generation, dtype=np.int64)
        p = np.ascontiguousarray(self.parent, dtype=np.int64)
        vp = self.vertex_parents
        if vp is None:
            vp = np.full((len(v), 2), -1, dtype=np.int64)
        else:
            vp = np.ascontiguousarray(vp, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("vertices must have shape (nv, 2)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("triangles must have shape (nt, 3)")
        if b.shape != (len(v),):
            raise ValueError("boundary_vertex length must match vertex count")
        if g.shape != (len(t),) or p.shape != (len(t),):
            raise ValueError("generation/parent length must match triangle count")
        if len(t) and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle vertex index out of range")
        for arr, name in ((v, "vertices"), (t, "triangles"), (b, "boundary_vertex"),
                          (g, "generation"), (p, "parent"), (vp, "vertex_parents")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        """Signed area per triangle (positive for counterclockwise)."""
        p0 = self.vertices[self.triangles[:, 0]]
        p1 = self.vertices[self.triangles[:, 1]]
        p2 = self.vertices[self.triangles[:, 2]]
        e1 = p1 - p0
        e2 = p2 - p0
        a = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        a.setflags(write=False)
        return a

    @cached_property
    def areas(self) -> np.ndarray:
        if np.any(self.signed_areas <= 0.0):
            raise MeshConformityError("triangle with non-positive signed area")
        return self.signed_areas

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in radians."""
        pts = self.vertices[self.triangles]  # (nt, 3, 2)
        angles = []
        for i in range(3):
            a = pts[:, (i + 1) % 3] - pts[:, i]
            b = pts[:, (i + 2) % 3] - pts[:, i]
            cosang = (a * b).sum(axis=1) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return float(np.min(angles))


@dataclass(frozen=True)
class EdgeTable:
    """Edge topology of a conforming mesh.

    Interior edge i runs between int_vertices[i] = (a, b) as traversed by
    triangle int_tri_plus[i]; int_normals[i] is the unit normal pointing from
    the plus triangle into int_tri_minus[i].  Boundary edges carry only their
    owning triangle.
    """

    int_vertices: np.ndarray   # (ne_i, 2) int
    int_tri_plus: np.ndarray   # (ne_i,) int
    int_tri_minus: np.ndarray  # (ne_i,) int
    int_normals: np.ndarray    # (ne_i, 2) float
    int_lengths: np.ndarray    # (ne_i,) float
    bnd_vertices: np.ndarray   # (ne_b, 2) int
    bnd_tri: np.ndarray        # (ne_b,) int

    @property
    def num_interior(self) -> int:
        return len(self.int_tri_plus)

    @property
    def num_boundary(self) -> int:
        return len(self.bnd_tri)


def _edge_arrays(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tail and head vertex of local edge j (opposite local vertex j)."""
    a = triangles[:, [1, 2, 0]]
    b = triangles[:, [2, 0, 1]]
    return a, b


def _unique_edges(triangles: np.ndarray, nv: int):
    """Canonical edge ids: codes of the sorted vertex pair of every local edge.

    Returns (codes (n_unique,), edge_id (nt, 3), counts (n_unique,)).
    """
    a, b = _edge_arrays(triangles)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    flat = lo.astype(np.int64) * nv + hi.astype(np.int64)
    codes, edge_id, counts = np.unique(flat.ravel(), return_inverse=True,
                                       return_counts=True)
    return codes, edge_id.reshape(a.shape), counts


def edge_table(mesh: Mesh) -> EdgeTable:
    """Build the edge table, validating conformity.

    Raises MeshConformityError if an edge is shared by more than two
    triangles, the two triangles sharing an edge traverse it in the same
    direction, the boundary is not a 1-manifold (the signature of hanging
    nodes), or the stored boundary flags disagree with the topology.
    """
    nt = mesh.num_triangles
    nv = mesh.num_vertices
    a, b = _edge_arrays(mesh.triangles)
    codes, edge_id, counts = _unique_edges(mesh.triangles, nv)
    if np.any(counts > 2):
        raise MeshConformityError("an edge is shared by more than two triangles")

    # Occurrences of each edge in (triangle, local-edge) order.
    order = np.argsort(edge_id.ravel(), kind="stable")
    tri_of = order // 3
    loc_of = order % 3
    starts = np.concatenate(([0], np.cumsum(counts)))

    interior = counts == 2
    first = starts[:-1]
    int_ids = np.nonzero(interior)[0]
    plus_occ = first[int_ids]
    minus_occ = plus_occ + 1
    t_plus = tri_of[plus_occ]
    t_minus = tri_of[minus_occ]
    a_plus = a[t_plus, loc_of[plus_occ]]
    b_plus = b[t_plus, loc_of[plus_occ]]
    a_minus = a[t_minus, loc_of[minus_occ]]
    b_minus = b[t_minus, loc_of[minus_occ]]
    if np.any(a_plus != b_minus) or np.any(b_plus != a_minus):
        raise MeshConformityError("adjacent triangles traverse a shared edge "
                                  "in the same direction")

    evec = mesh.vertices[b_plus] - mesh.vertices[a_plus]
    lengths = np.linalg.norm(evec, axis=1)
    # Outward normal of the plus triangle: edge vector rotated by -90 degrees.
    normals = np.column_stack((evec[:, 1], -evec[:, 0])) / lengths[:, None]

    bnd_ids = np.nonzero(counts == 1)[0]
    bnd_occ = first[bnd_ids]
    t_bnd = tri_of[bnd_occ]
    a_bnd = a[t_bnd, loc_of[bnd_occ]]
    b_bnd = b[t_bnd, loc_of[bnd_occ]]

    # Boundary must be a 1-manifold: exactly two boundary edges per boundary
    # vertex.  A hanging node leaves its host edge unmatched and shows up here.
    bnd_valence = np.bincount(np.concatenate((a_bnd, b_bnd)), minlength=nv)
    on_boundary = bnd_valence > 0
    if np.any(bnd_valence[on_boundary] != 2):
        raise MeshConformityError("boundary is not a closed polygonal curve "
                                  "(hanging node or pinched vertex)")
    if np.any(on_boundary != mesh.boundary_vertex):
        raise MeshConformityError("stored boundary flags disagree with the "
                                  "mesh topology")

    return EdgeTable(
        int_vertices=np.column_stack((a_plus, b_plus)),
        int_tri_plus=t_plus,
        int_tri_minus=t_minus,
        int_normals=normals,
        int_lengths=lengths,
        bnd_vertices=np.column_stack((a_bnd, b_bnd)),
        bnd_tri=t_bnd,
    )


def mesh_sizes(mesh: Mesh, edges: EdgeTable | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-triangle size h_T = sqrt(area) and per-interior-edge size h_F = |F|.

    The edge sizes are aligned with edge_table(mesh) ordering.
    """
    if edges is None:
        edges = edge_table(mesh)
    return np.sqrt(mesh.areas), edges.int_lengths.copy()


def _derive_boundary_flags(triangles: np.ndarray, nv: int) -> np.ndarray:
    codes, edge_id, counts = _unique_edges(triangles, nv)
    bnd_codes = codes[counts == 1]
    flags = np.zeros(nv, dtype=bool)
    flags[bnd_codes // nv] = True
    flags[bnd_codes % nv] = True
    return flags


def _root_mesh(vertices, triangles, snap=False) -> Mesh:
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    nt = len(triangles)
    return Mesh(
        vertices=vertices,
        triangles=triangles,
        boundary_vertex=_derive_boundary_flags(triangles, len(vertices)),
        generation=np.zeros(nt, dtype=np.int64),
        parent=np.full(nt, -1, dtype=np.int64),
        snap_to_unit_circle=snap,
    )


def generate_unit_square(n: int) -> Mesh:
    """Structured mesh of (0,1)^2 with (n+1)^2 vertices and 2 n^2 triangles.

    Every cell is split along its SW-NE diagonal and both triangles use that
    hypotenuse as refinement edge.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack((xx.ravel(), yy.ravel()))

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            sw, se = vid(i, j), vid(i + 1, j)
            ne, nw = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((se, ne, sw))  # lower triangle, hypotenuse (ne, sw)
            tris.append((nw, sw, ne))  # upper triangle, hypotenuse (sw, ne)
    return _root_mesh(vertices, tris)


def generate_lshape(n: int) -> Mesh:
    """Structured mesh of the L-shape (0,2)^2 minus the closed top-right
    unit square, with n cells per unit length (area 3 exactly)."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    m = 2 * n  # cells per side of the bounding square
    h = 1.0 / n

    index = {}
    vertices = []

    def vid(i, j):
        key = (i, j)
        if key not in index:
            index[key] = len(vertices)
            vertices.append((i * h, j * h))
        return index[key]

    tris = []
    for j in range(m):
        for i in range(m):
            cx, cy = (i + 0.5) * h, (j + 0.5) * h
            if cx > 1.0 and cy > 1.0:
                continue  # removed quadrant
            sw, se = vid(i, j), vid(i + 1, j)
            ne, nw = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((se, ne, sw))
            tris.append((nw, sw, ne))
    return _root_mesh(np.array(vertices), tris)


def generate_disk(levels: int) -> Mesh:
    """Fan of 6 triangles around the origin, uniformly bisected `levels`
    rounds, with boundary vertices kept on the unit circle."""
    if levels < 0:
        raise ValueError("levels must be nonnegative")
    ang = np.arange(6) * (np.pi / 3.0)
    vertices = np.vstack(([0.0, 0.0], np.column_stack((np.cos(ang), np.sin(ang)))))
    tris = [(0, 1 + k, 1 + (k + 1) % 6) for k in range(6)]  # chord opposite center
    mesh = _root_mesh(vertices, tris, snap=True)
    for _ in range(levels):
        mesh = refine(mesh, np.arange(mesh.num_triangles))
    return mesh


def refine(mesh: Mesh, marked) -> Mesh:
    """Bisect every marked triangle, then close the mesh to conformity.

    Marked triangles have their refinement edge split; conformity closure
    extends the split set so that any triangle touching a split edge also
    splits its own refinement edge (recursively).  Each triangle is bisected
    once or twice depending on how many of its edges end up split.  New
    boundary vertices of disk meshes are projected onto the unit circle.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray)
                                  else marked, dtype=np.int64))
    nt = mesh.num_triangles
    nv = mesh.num_vertices
    if marked.size == 0:
        raise ValueError("marked set must be nonempty")
    if marked.min() < 0 or marked.max() >= nt:
        raise ValueError(f"marked triangle index out of range [0, {nt})")

    codes, edge_id, counts = _unique_edges(mesh.triangles, nv)
    n_edges = len(codes)

    # Closure fixpoint over split edges: refinement edge is local edge 0.
    split = np.zeros(n_edges, dtype=bool)
    split[edge_id[marked, 0]] = True
    while True:
        touched = split[edge_id].any(axis=1)
        need = touched & ~split[edge_id[:, 0]]
        if not need.any():
            break
        split[edge_id[need, 0]] = True

    split_ids = np.nonzero(split)[0]
    midpoint_of = np.full(n_edges, -1, dtype=np.int64)
    midpoint_of[split_ids] = nv + np.arange(len(split_ids))

    ea = codes[split_ids] // nv
    eb = codes[split_ids] % nv
    new_pts = 0.5 * (mesh.vertices[ea] + mesh.vertices[eb])
    new_bnd = counts[split_ids] == 1  # midpoints of boundary edges
    if mesh.snap_to_unit_circle and new_bnd.any():
        r = np.linalg.norm(new_pts[new_bnd], axis=1)
        new_pts[new_bnd] /= r[:, None]

    vertices = np.vstack((mesh.vertices, new_pts))
    boundary = np.concatenate((mesh.boundary_vertex, new_bnd))
    vertex_parents = np.vstack((mesh.vertex_parents,
                                np.column_stack((ea, eb))))

    tri = mesh.triangles
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    m0 = midpoint_of[edge_id[:, 0]]  # midpoint of (v1, v2)
    m1 = midpoint_of[edge_id[:, 1]]  # midpoint of (v2, v0)
    m2 = midpoint_of[edge_id[:, 2]]  # midpoint of (v0, v1)
    s0, s1, s2 = m0 >= 0, m1 >= 0, m2 >= 0
    if np.any((s1 | s2) & ~s0):
        raise AssertionError("closure failed to split a refinement edge")

    gen = mesh.generation
    anc = np.arange(nt, dtype=np.int64)

    chunks_tri, chunks_gen, chunks_par = [], [], []

    def emit(mask, cols, extra_gen):
        if not mask.any():
            return
        chunks_tri.append(np.column_stack([c[mask] for c in cols]))
        chunks_gen.append(gen[mask] + extra_gen)
        chunks_par.append(anc[mask])

    emit(~s0, (v0, v1, v2), 0)

    # First bisection at m0: children (m0, v0, v1) and (m0, v2, v0); the
    # child holding edge (v0, v1) resp. (v2, v0) is bisected again at m2
    # resp. m1 when that edge is split.
    emit(s0 & ~s2, (m0, v0, v1), 1)
    emit(s0 & s2, (m2, m0, v0), 2)
    emit(s0 & s2, (m2, v1, m0), 2)
    emit(s0 & ~s1, (m0, v2, v0), 1)
    emit(s0 & s1, (m1, m0, v2), 2)
    emit(s0 & s1, (m1, v0, m0), 2)

    return Mesh(
        vertices=vertices,
        triangles=np.vstack(chunks_tri),
        boundary_vertex=boundary,
        generation=np.concatenate(chunks_gen),
        parent=np.concatenate(chunks_par),
        snap_to_unit_circle=mesh.snap_to_unit_circle,
        vertex_parents=vertex_parents,
    )


def refine_uniform(mesh: Mesh, rounds: int = 1) -> Mesh:
    """Refine with all triangles marked, `rounds` times."""
    for _ in range(rounds):
        mesh = refine(mesh, np.arange(mesh.num_triangles))
    return mesh


def prolong_vertex_values(fine: Mesh, coarse_values: np.ndarray) -> np.ndarray:
    """Transfer piecewise-linear vertex values from a mesh to one of its
    refinements (the fine mesh must descend from the coarse one, so that its
    leading vertices coincide with the coarse vertices)."""
    coarse_values = np.asarray(coarse_values, dtype=np.float64)
    nv_c = len(coarse_values)
    if nv_c > fine.num_vertices:
        raise ValueError("fine mesh has fewer vertices than the source values")
    out = np.empty(fine.num_vertices)
    out[:nv_c] = coarse_values
    parents = fine.vertex_parents
    for i in range(nv_c, fine.num_vertices):
        a, b = parents[i]
        if a < 0:
            raise ValueError(f"vertex {i} has no recorded parent edge")
        out[i] = 0.5 * (out[a] + out[b])
    return out
