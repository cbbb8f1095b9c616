"""Conforming triangulations of the unit square.

The solver operates on meshes of the unit square made of positively
oriented triangles.  Structured meshes split every grid cell along the
lower-left to upper-right diagonal, so all elements are congruent right
isoceles triangles and the square is covered exactly.

External meshes use a small text format::

    vertices <N>
    x y          (N lines)
    triangles <M>
    i j k        (M lines, 0-based, counter-clockwise)
    boundary <B> (optional section; without it, boundary vertices are
    v             inferred as those with a coordinate in {0, 1})

A mesh is immutable after construction and safe to share between
concurrent readers.
"""

import numpy as np

__all__ = [
    "Mesh",
    "MeshFormatError",
    "generate_structured_unit_square",
    "read_mesh",
    "write_mesh",
    "mesh_metrics",
]

# local edge i of a triangle (v0, v1, v2) is the edge opposite vertex i
_LOCAL_EDGES = ((1, 2), (2, 0), (0, 1))

_COORD_TOL = 1e-12


class MeshFormatError(ValueError):
    """Raised for malformed mesh files or non-conforming triangulations."""


class Mesh:
    """Triangulation with edge topology, boundary data and size metrics.

    Parameters
    ----------
    vertices : (N, 2) float array of vertex coordinates.
    triangles : (M, 3) int array of vertex indices, counter-clockwise.
    boundary_vertex_flags : optional (N,) bool array; inferred from the
        coordinates (a coordinate equal to 0 or 1) when omitted.

    Construction validates positive orientation, edge conformity (every
    edge shared by one or two triangles) and boundary consistency, and
    precomputes the edge table used for quadratic dof numbering.
    """

    def __init__(self, vertices, triangles, boundary_vertex_flags=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshFormatError("vertices must be an (N, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshFormatError("triangles must be an (M, 3) array")
        nv = len(self.vertices)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= nv):
            raise MeshFormatError("triangle vertex index out of range")

        self._check_orientation()
        self._build_edges()

        used = np.zeros(nv, dtype=bool)
        used[self.triangles.ravel()] = True
        self.unused_vertices = np.flatnonzero(~used)

        if boundary_vertex_flags is None:
            on_line = (np.abs(self.vertices) < _COORD_TOL) | (np.abs(self.vertices - 1.0) < _COORD_TOL)
            boundary_vertex_flags = on_line.any(axis=1)
        self.boundary_vertex_flags = np.asarray(boundary_vertex_flags, dtype=bool)
        if self.boundary_vertex_flags.shape != (nv,):
            raise MeshFormatError("boundary flags must have one entry per vertex")
        self._check_boundary_consistency()
        self._compute_metrics()

    # -- validation ----------------------------------------------------------

    def _signed_areas(self):
        v = self.vertices
        t = self.triangles
        d1 = v[t[:, 1]] - v[t[:, 0]]
        d2 = v[t[:, 2]] - v[t[:, 0]]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def _check_orientation(self):
        areas = self._signed_areas()
        bad = np.flatnonzero(areas <= 0.0)
        if bad.size:
            raise MeshFormatError(
                "triangle %d has non-positive signed area %.3e "
                "(vertices must be counter-clockwise)" % (bad[0], areas[bad[0]])
            )
        self.areas = areas

    def _build_edges(self):
        # first-seen traversal order keeps the edge numbering deterministic
        index = {}
        pairs = []
        triangle_edges = np.empty_like(self.triangles)
        count = []
        for c, tri in enumerate(self.triangles):
            for le, (a, b) in enumerate(_LOCAL_EDGES):
                key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
                e = index.get(key)
                if e is None:
                    e = len(pairs)
                    index[key] = e
                    pairs.append(key)
                    count.append(0)
                count[e] += 1
                triangle_edges[c, le] = e
        self.edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        self.edge_index = index
        self.triangle_edges = triangle_edges
        count = np.array(count)
        bad = np.flatnonzero(count > 2)
        if bad.size:
            raise MeshFormatError(
                "edge %s is shared by %d triangles; a conforming mesh allows 1 or 2"
                % (tuple(self.edges[bad[0]]), count[bad[0]])
            )
        self.boundary_edge_flags = count == 1
        self.boundary_edges = self.edges[self.boundary_edge_flags]

    def _check_boundary_consistency(self):
        # every endpoint of a topological boundary edge must be flagged
        ends = np.unique(self.boundary_edges.ravel())
        missing = ends[~self.boundary_vertex_flags[ends]]
        if missing.size:
            raise MeshFormatError(
                "vertex %d lies on a boundary edge but is not marked as a "
                "boundary vertex; add a boundary section to the mesh file" % missing[0]
            )

    def _compute_metrics(self):
        v = self.vertices
        t = self.triangles
        sides = np.stack(
            [np.linalg.norm(v[t[:, b]] - v[t[:, a]], axis=1) for a, b in _LOCAL_EDGES], axis=1
        )
        self.diameters = sides.max(axis=1) if len(t) else np.zeros(0)
        self.h = float(self.diameters.max()) if len(t) else 0.0
        # inscribed-circle diameter 2r with r = area / semiperimeter
        if len(t):
            incircle = 2.0 * self.areas / (0.5 * sides.sum(axis=1))
            self.quasi_uniformity = float(self.h / incircle.min())
            # law of cosines per corner, smallest angle over all elements
            a, b, c = sides[:, 0], sides[:, 1], sides[:, 2]
            angles = []
            for opp, e1, e2 in ((a, b, c), (b, c, a), (c, a, b)):
                cosv = np.clip((e1**2 + e2**2 - opp**2) / (2 * e1 * e2), -1.0, 1.0)
                angles.append(np.arccos(cosv))
            self.min_angle = float(np.degrees(np.min(angles)))
        else:
            self.quasi_uniformity = 0.0
            self.min_angle = 0.0

    # -- queries -------------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def total_area(self):
        return float(self.areas.sum())


def generate_structured_unit_square(n):
    """Uniform n-by-n grid of the unit square, each cell split along the
    lower-left to upper-right diagonal.

    Produces (n+1)^2 vertices and 2 n^2 congruent right isoceles triangles
    with mesh size h = sqrt(2)/n.
    """
    if int(n) != n or n < 1:
        raise ValueError("grid resolution n must be a positive integer, got %r" % (n,))
    n = int(n)
    side = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(side, side, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    triangles = []
    for iy in range(n):
        for ix in range(n):
            v00 = iy * (n + 1) + ix
            v10 = v00 + 1
            v01 = v00 + (n + 1)
            v11 = v01 + 1
            triangles.append((v00, v10, v11))
            triangles.append((v00, v11, v01))
    return Mesh(vertices, np.array(triangles, dtype=np.int64))


def mesh_metrics(mesh):
    """Size metrics of a mesh: h is the longest edge over all triangles,
    min_angle is in degrees, quasi_uniformity is h divided by the smallest
    inscribed-circle diameter.  Unused vertices are reported but excluded
    from the geometric quantities (those are per-triangle)."""
    return {
        "h": mesh.h,
        "min_angle": mesh.min_angle,
        "quasi_uniformity": mesh.quasi_uniformity,
        "n_vertices": mesh.n_vertices,
        "n_triangles": mesh.n_triangles,
        "n_unused_vertices": int(len(mesh.unused_vertices)),
    }


def read_mesh(path):
    """Read a mesh from the text format, validating conformity.

    Parse errors carry the 1-based line number; non-conforming meshes
    (flipped triangles, over-shared edges) are rejected with the offending
    element named.  Vertices not referenced by any triangle are accepted
    and reported through ``mesh.unused_vertices``.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()

    pos = 0

    def next_content():
        nonlocal pos
        while pos < len(lines):
            stripped = lines[pos].strip()
            pos += 1
            if stripped and not stripped.startswith("#"):
                return stripped, pos
        return None, pos

    def expect_header(keyword):
        text, ln = next_content()
        if text is None:
            raise MeshFormatError("line %d: expected '%s <count>', got end of file" % (ln, keyword))
        parts = text.split()
        if len(parts) != 2 or parts[0] != keyword:
            raise MeshFormatError("line %d: expected '%s <count>', got %r" % (ln, keyword, text))
        try:
            return int(parts[1])
        except ValueError:
            raise MeshFormatError("line %d: malformed count in %r" % (ln, text)) from None

    nv = expect_header("vertices")
    vertices = np.empty((nv, 2))
    for i in range(nv):
        text, ln = next_content()
        if text is None:
            raise MeshFormatError("line %d: expected vertex %d of %d" % (ln, i, nv))
        parts = text.split()
        if len(parts) != 2:
            raise MeshFormatError("line %d: expected 'x y', got %r" % (ln, text))
        try:
            vertices[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshFormatError("line %d: malformed coordinate in %r" % (ln, text)) from None

    nt = expect_header("triangles")
    triangles = np.empty((nt, 3), dtype=np.int64)
    for i in range(nt):
        text, ln = next_content()
        if text is None:
            raise MeshFormatError("line %d: expected triangle %d of %d" % (ln, i, nt))
        parts = text.split()
        if len(parts) != 3:
            raise MeshFormatError("line %d: expected 'i j k', got %r" % (ln, text))
        try:
            triangles[i] = [int(p) for p in parts]
        except ValueError:
            raise MeshFormatError("line %d: malformed index in %r" % (ln, text)) from None

    flags = None
    text, ln = next_content()
    if text is not None:
        parts = text.split()
        if len(parts) != 2 or parts[0] != "boundary":
            raise MeshFormatError("line %d: expected 'boundary <count>' or end of file, got %r" % (ln, text))
        nb = int(parts[1])
        flags = np.zeros(nv, dtype=bool)
        for i in range(nb):
            text, ln = next_content()
            if text is None:
                raise MeshFormatError("line %d: expected boundary vertex %d of %d" % (ln, i, nb))
            try:
                idx = int(text)
            except ValueError:
                raise MeshFormatError("line %d: malformed boundary index %r" % (ln, text)) from None
            if not 0 <= idx < nv:
                raise MeshFormatError("line %d: boundary vertex %d out of range" % (ln, idx))
            flags[idx] = True

    return Mesh(vertices, triangles, boundary_vertex_flags=flags)


def write_mesh(mesh, path):
    """Serialize a mesh in the text format (always with an explicit
    boundary section, so round trips are exact)."""
    with open(path, "w") as fh:
        fh.write("vertices %d\n" % mesh.n_vertices)
        for vx, vy in mesh.vertices:
            fh.write("%.17g %.17g\n" % (vx, vy))
        fh.write("triangles %d\n" % mesh.n_triangles)
        for a, b, c in mesh.triangles:
            fh.write("%d %d %d\n" % (a, b, c))
        marked = np.flatnonzero(mesh.boundary_vertex_flags)
        fh.write("boundary %d\n" % len(marked))
        for idx in marked:
            fh.write("%d\n" % idx)
