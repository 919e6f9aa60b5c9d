"""Triangle-mesh geometry: loading, signed distance, sampling, convex hulls.

Units are meters throughout. Meshes are triangles only. Signed distance uses a
nearest-triangle query (AABB tree, see :mod:`dualgrasp._meshquery`) with the sign
taken from angle-weighted pseudonormals, which is exact for watertight meshes with
outward-consistent winding. Non-watertight meshes are accepted but flagged
``sign_reliable=False`` and all distances are reported unsigned (positive).
"""

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from . import _meshquery

DEGENERATE_AREA = 1e-12
_SURFACE_EPS = 1e-12


class MeshLoadError(ValueError):
    """Raised when a mesh file cannot be parsed or validates to nothing usable."""


@dataclass
class SurfacePoint:
    """A point on a mesh surface with its face normal and source face index."""
    position: np.ndarray
    normal: np.ndarray
    face_index: int


@dataclass
class PointCloud:
    """Points (N, 3) with optional per-point normals (N, 3)."""
    points: np.ndarray
    normals: np.ndarray | None = None

    def __len__(self):
        return len(self.points)


class TriangleMesh:
    """Validated triangle mesh with cached acceleration and pseudonormal data.

    Degenerate faces (area <= 1e-12 or repeated vertex indices) are dropped at
    construction; the count is kept in ``dropped_faces``. If the mesh is watertight
    with consistent winding but globally inverted (negative volume), all faces are
    flipped so normals point outward.
    """

    def __init__(self, vertices, faces):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshLoadError("vertices must be (V, 3)")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshLoadError("faces must be (F, 3) triangles")
        if not np.isfinite(vertices).all():
            raise MeshLoadError("non-finite vertex coordinates")
        if len(faces) and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise MeshLoadError("face index out of range")

        # drop degenerate faces
        a = vertices[faces[:, 0]]
        b = vertices[faces[:, 1]]
        c = vertices[faces[:, 2]]
        cross = np.cross(b - a, c - a)
        area2 = np.linalg.norm(cross, axis=1)
        repeated = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) \
            | (faces[:, 2] == faces[:, 0])
        good = (area2 > 2.0 * DEGENERATE_AREA) & ~repeated
        self.dropped_faces = int(len(faces) - good.sum())
        faces = faces[good]
        if len(faces) == 0:
            raise MeshLoadError("no valid faces after validation")

        self.vertices = vertices
        self.faces = faces
        self.watertight, consistent = self._check_watertight()
        if self.watertight and consistent and self._signed_volume() < 0.0:
            self.faces = self.faces[:, [0, 2, 1]].copy()
        self.sign_reliable = self.watertight and consistent

        tri = self.vertices[self.faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        norms = np.linalg.norm(cross, axis=1)
        self.face_normals = cross / norms[:, None]
        self.face_areas = 0.5 * norms
        self._vertex_pseudonormals = None
        self._edge_pseudonormals = None
        self._bvh = None
        self._canon_tables = None
        self._diameter = None

    # -- derived quantities ----------------------------------------------------

    def _check_watertight(self):
        """(watertight, consistently_wound): every undirected edge shared by
        exactly two faces, traversed once in each direction."""
        f = self.faces
        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        und = np.sort(directed, axis=1)
        keys = und[:, 0] * (len(self.vertices) + 1) + und[:, 1]
        uniq, counts = np.unique(keys, return_counts=True)
        if not (counts == 2).all():
            return False, False
        dkeys = directed[:, 0] * (len(self.vertices) + 1) + directed[:, 1]
        consistent = len(np.unique(dkeys)) == len(dkeys)
        return consistent, consistent

    def _signed_volume(self):
        tri = self.vertices[self.faces]
        return float(np.einsum("ij,ij->", tri[:, 0],
                               np.cross(tri[:, 1], tri[:, 2])) / 6.0)

    @property
    def volume(self):
        """Enclosed volume by the divergence theorem (reliable when watertight)."""
        return abs(self._signed_volume())

    @property
    def centroid(self):
        """Volume centroid by the divergence theorem."""
        tri = self.vertices[self.faces]
        d = np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])) / 6.0
        v = d.sum()
        if abs(v) < 1e-18:
            return self.vertices.mean(axis=0)
        return (d[:, None] * tri.sum(axis=1) / 4.0).sum(axis=0) / v

    @property
    def diameter(self):
        """Point-set diameter: max pairwise vertex distance (via the hull)."""
        if self._diameter is None:
            pts = self.vertices
            try:
                pts = pts[ConvexHull(pts).vertices]
            except Exception:
                pass
            d2 = 0.0
            for i in range(len(pts) - 1):
                d2 = max(d2, float(((pts[i + 1:] - pts[i]) ** 2).sum(axis=1).max()))
            self._diameter = float(np.sqrt(d2))
        return self._diameter

    def _pseudonormals(self):
        if self._vertex_pseudonormals is not None:
            return self._vertex_pseudonormals, self._edge_pseudonormals
        v, f, fn = self.vertices, self.faces, self.face_normals
        # angle-weighted vertex normals
        vp = np.zeros_like(v)
        tri = v[f]
        for corner in range(3):
            e1 = tri[:, (corner + 1) % 3] - tri[:, corner]
            e2 = tri[:, (corner + 2) % 3] - tri[:, corner]
            e1 = e1 / np.linalg.norm(e1, axis=1, keepdims=True)
            e2 = e2 / np.linalg.norm(e2, axis=1, keepdims=True)
            ang = np.arccos(np.clip(np.einsum("ij,ij->i", e1, e2), -1.0, 1.0))
            np.add.at(vp, f[:, corner], ang[:, None] * fn)
        n = np.linalg.norm(vp, axis=1)
        n[n == 0.0] = 1.0
        vp = vp / n[:, None]
        # edge pseudonormals: mean of the two adjacent face normals
        edge_map = {}
        for fi in range(len(f)):
            for e in range(3):
                key = (min(f[fi, e], f[fi, (e + 1) % 3]),
                       max(f[fi, e], f[fi, (e + 1) % 3]))
                edge_map.setdefault(key, []).append((fi, e))
        ep = np.repeat(fn[:, None, :], 3, axis=1).copy()
        for key, owners in edge_map.items():
            if len(owners) == 2:
                (fa, ea), (fb, eb) = owners
                n = fn[fa] + fn[fb]
                nn = np.linalg.norm(n)
                if nn > 0.0:
                    n = n / nn
                ep[fa, ea] = n
                ep[fb, eb] = n
        self._vertex_pseudonormals = vp
        self._edge_pseudonormals = ep
        return vp, ep

    def query_args(self):
        """Kernel argument tuple shared by all query entry points."""
        if self._bvh is None:
            bvh = _meshquery.build_bvh(self.vertices, self.faces)
            size = float((self.vertices.max(axis=0) - self.vertices.min(axis=0)).max())
            vox = _meshquery.build_voxel_table(
                bvh, self.vertices, self.faces, self.face_normals,
                margin=0.1 * size + 0.02)
            vp, ep = self._pseudonormals()
            self._bvh = (
                bvh["tri_pts"], bvh["leaf_pts"], bvh["leaf_ids"], bvh["node_min"],
                bvh["node_max"], bvh["node_child"], bvh["node_range"],
                vox["grid_origin"], vox["grid_h"], vox["grid_dims"],
                vox["cell_start"], vox["cell_tris"], vox["cand_lb2"],
                vox["tri_min"], vox["tri_max"],
                np.ascontiguousarray(self.faces),
                np.ascontiguousarray(self.face_normals),
                np.ascontiguousarray(vp), np.ascontiguousarray(ep),
                1 if self.sign_reliable else 0,
            )
        return self._bvh

    # -- queries ----------------------------------------------------------------

    def nearest(self, points, parallel=False):
        """Batch nearest-surface query.

        Returns (signed_distance (N,), closest_point (N, 3), face (N,), feature (N,)).
        Distances are unsigned (positive) when ``sign_reliable`` is False.
        """
        points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        kernel = _meshquery.query_full_parallel if parallel else _meshquery.query_full
        return kernel(points, *self.query_args())

    def _feature_tables(self):
        """Lazy lowest-index incident-triangle tables for edge/vertex features."""
        if self._canon_tables is None:
            faces = self.faces
            nf = len(faces)
            vert_min = np.full(len(self.vertices), nf, dtype=np.int64)
            np.minimum.at(vert_min, faces.reshape(-1),
                          np.repeat(np.arange(nf, dtype=np.int64), 3))
            ends = np.stack([faces, np.roll(faces, -1, axis=1)], axis=-1)
            ends.sort(axis=-1)
            flat = ends.reshape(-1, 2)
            tri_of = np.repeat(np.arange(nf, dtype=np.int64), 3)
            order = np.lexsort((tri_of, flat[:, 1], flat[:, 0]))
            fs, ts = flat[order], tri_of[order]
            grp = np.concatenate([[0], np.cumsum(np.any(np.diff(fs, axis=0) != 0,
                                                        axis=1))])
            gmin = np.full(int(grp[-1]) + 1, nf, dtype=np.int64)
            np.minimum.at(gmin, grp, ts)
            edge_min = np.empty(3 * nf, dtype=np.int64)
            edge_min[order] = gmin[grp]
            self._canon_tables = (vert_min, edge_min.reshape(nf, 3))
        return self._canon_tables

    def assigned_triangles(self, tri, feature):
        """Deterministic triangle assignment for nearest-feature query results.

        At an edge or vertex feature every incident triangle is equidistant from
        the query point, so which one a traversal reports depends on visit order
        and rounding. This maps such results to the lowest-index incident
        triangle, making the assigned face (and its normal) locally constant as
        the query point moves within one feature region.
        """
        tri = np.asarray(tri)
        feature = np.asarray(feature)
        vert_min, edge_min = self._feature_tables()
        canon = tri.copy()
        vm = (feature >= 1) & (feature <= 3)
        if vm.any():
            local = np.where(vm, feature - 1, 0)
            canon = np.where(vm, vert_min[
                np.take_along_axis(self.faces[tri], local[..., None],
                                   axis=-1)[..., 0]], canon)
        em = feature >= 4
        if em.any():
            local = np.where(em, feature - 4, 0)
            canon = np.where(em, np.take_along_axis(edge_min[tri],
                                                    local[..., None],
                                                    axis=-1)[..., 0], canon)
        return canon

    def assigned_normals(self, tri, feature):
        """Face normals of the deterministically assigned triangles."""
        return self.face_normals[self.assigned_triangles(tri, feature)]


def signed_distance(mesh, point):
    """Signed distance from one point; also returns the nearest surface point.

    Positive outside, negative inside (watertight meshes); |distance| is the
    Euclidean distance to the nearest point on the surface.
    """
    d, q, tri, _ = mesh.nearest(np.asarray(point, dtype=float)[None, :])
    sp = SurfacePoint(position=q[0], normal=mesh.face_normals[tri[0]].copy(),
                      face_index=int(tri[0]))
    return float(d[0]), sp


def signed_distance_batch(mesh, points, parallel=False):
    """Signed distances plus nearest points/faces for a batch of query points."""
    d, q, tri, _ = mesh.nearest(points, parallel=parallel)
    return d, q, tri


def sample_surface(mesh, count, seed):
    """Area-weighted uniform surface samples; deterministic per seed.

    Returns a :class:`PointCloud` whose normals are the source face normals.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    p = mesh.face_areas / mesh.face_areas.sum()
    fidx = rng.choice(len(mesh.faces), size=count, p=p)
    u = rng.random(count)
    v = rng.random(count)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    tri = mesh.vertices[mesh.faces[fidx]]
    pts = tri[:, 0] + u[:, None] * (tri[:, 1] - tri[:, 0]) \
        + v[:, None] * (tri[:, 2] - tri[:, 0])
    return PointCloud(points=pts, normals=mesh.face_normals[fidx].copy())


def inflated_convex_hull(mesh, offset):
    """Convex hull of the mesh, inflated along angle-weighted vertex normals.

    The result contains the input mesh for any offset >= 0.
    """
    if offset < 0.0:
        raise ValueError("offset must be nonnegative")
    hull = ConvexHull(mesh.vertices)
    verts = mesh.vertices[hull.vertices]
    remap = np.full(len(mesh.vertices), -1, dtype=np.int64)
    remap[hull.vertices] = np.arange(len(hull.vertices))
    faces = remap[hull.simplices]
    # orient faces outward using qhull's plane equations
    tri = verts[faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.einsum("ij,ij->i", n, hull.equations[:, :3]) < 0.0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    hull_mesh = TriangleMesh(verts, faces)
    if offset == 0.0:
        return hull_mesh
    vp, _ = hull_mesh._pseudonormals()
    return TriangleMesh(hull_mesh.vertices + offset * vp, hull_mesh.faces)


def ray_mesh_intersections(mesh, origin, direction):
    """Sorted ray parameters t > 0 where origin + t*direction crosses the surface.

    Vectorized Moller-Trumbore over all faces; intended for hull-sized meshes.
    """
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    tri = mesh.vertices[mesh.faces]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    h = np.cross(direction[None, :], e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = origin[None, :] - tri[:, 0]
    u = np.einsum("ij,ij->i", s, h) * inv
    q = np.cross(s, e1)
    v = np.einsum("ij,j->i", q, direction) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (u >= -1e-12) & (v >= -1e-12) & (u + v <= 1.0 + 1e-12) & (t > 1e-12)
    return np.sort(t[hit])


# -- loading / writing -----------------------------------------------------------


def load_mesh(path):
    """Load a triangle mesh from .obj or .ply (ascii or binary little-endian)."""
    path = str(path)
    low = path.lower()
    if low.endswith(".obj"):
        return _load_obj(path)
    if low.endswith(".ply"):
        return _load_ply(path)
    raise MeshLoadError(f"unsupported mesh format: {path}")


def _load_obj(path):
    verts, faces = [], []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshLoadError(f"{path}:{ln}: malformed vertex")
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                idx = [p.split("/")[0] for p in parts[1:]]
                if len(idx) != 3:
                    raise MeshLoadError(
                        f"{path}:{ln}: only triangle faces are supported "
                        f"(got {len(idx)} vertices)")
                face = []
                for tok in idx:
                    i = int(tok)
                    face.append(i - 1 if i > 0 else len(verts) + i)
                faces.append(face)
    if not verts:
        raise MeshLoadError(f"{path}: no vertices")
    return TriangleMesh(np.array(verts, dtype=float),
                        np.array(faces, dtype=np.int64).reshape(-1, 3))


_PLY_TYPES = {
    "char": ("b", 1), "int8": ("b", 1), "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2), "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4), "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4), "double": ("d", 8), "float64": ("d", 8),
}


def _load_ply(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"ply"):
        raise MeshLoadError(f"{path}: not a PLY file")
    end = raw.find(b"end_header")
    if end < 0:
        raise MeshLoadError(f"{path}: missing end_header")
    body_start = raw.find(b"\n", end) + 1
    header = raw[:end].decode("ascii", errors="replace").splitlines()

    fmt = None
    elements = []          # (name, count, [(prop_kind, ...), ...])
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append([parts[1], int(parts[2]), []])
        elif parts[0] == "property":
            if not elements:
                raise MeshLoadError(f"{path}: property before element")
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append(("scalar", parts[1], parts[2]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshLoadError(f"{path}: unsupported PLY format {fmt!r}")

    verts, faces = None, []
    if fmt == "ascii":
        tokens = raw[body_start:].decode("ascii", errors="replace").split()
        pos = 0
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                row = {}
                for p in props:
                    if p[0] == "list":
                        n = int(float(tokens[pos])); pos += 1
                        row[p[3]] = [int(float(tokens[pos + k])) for k in range(n)]
                        pos += n
                    else:
                        row[p[2]] = float(tokens[pos]); pos += 1
                rows.append(row)
            if name == "vertex":
                verts = np.array([[r["x"], r["y"], r["z"]] for r in rows])
            elif name == "face":
                faces = [r.get("vertex_indices", r.get("vertex_index"))
                         for r in rows]
    else:
        off = body_start
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                row = {}
                for p in props:
                    if p[0] == "list":
                        cfmt, csz = _PLY_TYPES[p[1]]
                        n = struct.unpack_from("<" + cfmt, raw, off)[0]
                        off += csz
                        ifmt, isz = _PLY_TYPES[p[2]]
                        row[p[3]] = list(struct.unpack_from(f"<{n}{ifmt}", raw, off))
                        off += n * isz
                    else:
                        sfmt, ssz = _PLY_TYPES[p[1]]
                        row[p[2]] = struct.unpack_from("<" + sfmt, raw, off)[0]
                        off += ssz
                rows.append(row)
            if name == "vertex":
                verts = np.array([[r["x"], r["y"], r["z"]] for r in rows])
            elif name == "face":
                faces = [r.get("vertex_indices", r.get("vertex_index"))
                         for r in rows]
    if verts is None:
        raise MeshLoadError(f"{path}: no vertex element")
    for f in faces:
        if f is None or len(f) != 3:
            raise MeshLoadError(f"{path}: only triangle faces are supported")
    return TriangleMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_obj_scene(path, groups):
    """Write named mesh groups to one OBJ file.

    ``groups`` is an iterable of (name, vertices, faces); face indices are local
    to each group and offset on write.
    """
    with open(path, "w", encoding="utf-8") as fh:
        offset = 1
        for name, verts, faces in groups:
            fh.write(f"g {name}\n")
            for v in np.asarray(verts, dtype=float):
                # shortest round-trip decimal form of each coordinate
                fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
            for f in np.asarray(faces, dtype=np.int64):
                fh.write(f"f {f[0] + offset} {f[1] + offset} {f[2] + offset}\n")
            offset += len(verts)


# -- analytic fixtures ------------------------------------------------------------


def make_icosphere(diameter=0.2, subdivisions=2):
    """Icosphere with all vertices at radius diameter/2, centered at the origin."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    for _ in range(subdivisions):
        mid_cache = {}
        new_faces = []
        vlist = list(verts)

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in mid_cache:
                m = vlist[i] + vlist[j]
                m = m / np.linalg.norm(m)
                mid_cache[key] = len(vlist)
                vlist.append(m)
            return mid_cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(vlist)
        faces = np.array(new_faces, dtype=np.int64)
    return TriangleMesh(verts * (diameter / 2.0), faces)


def make_box(extents):
    """Axis-aligned box centered at the origin with the given (x, y, z) extents."""
    e = np.asarray(extents, dtype=float) / 2.0
    sgn = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)],
                   dtype=float)
    verts = sgn * e
    faces = np.array([
        [0, 1, 3], [0, 3, 2],      # -x
        [4, 6, 7], [4, 7, 5],      # +x
        [0, 4, 5], [0, 5, 1],      # -y
        [2, 3, 7], [2, 7, 6],      # +y
        [0, 2, 6], [0, 6, 4],      # -z
        [1, 5, 7], [1, 7, 3],      # +z
    ], dtype=np.int64)
    return TriangleMesh(verts, faces)


def make_cylinder(radius, height, segments=48):
    """Closed cylinder along z, centered at the origin."""
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bot = np.concatenate([ring, np.full((segments, 1), -height / 2.0)], axis=1)
    top = np.concatenate([ring, np.full((segments, 1), height / 2.0)], axis=1)
    verts = np.concatenate([bot, top,
                            [[0.0, 0.0, -height / 2.0], [0.0, 0.0, height / 2.0]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, segments + i], [j, segments + j, segments + i]]
        faces += [[cb, j, i], [ct, segments + i, segments + j]]
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))


def transform_mesh(mesh, R=None, t=None):
    """Rigidly transformed copy of a mesh."""
    v = mesh.vertices
    if R is not None:
        v = v @ np.asarray(R, dtype=float).T
    if t is not None:
        v = v + np.asarray(t, dtype=float)
    return TriangleMesh(v, mesh.faces.copy())


def normalize_diameter(mesh, target):
    """Uniformly rescale about the volume centroid to the target diameter."""
    if target <= 0.0:
        raise ValueError("target diameter must be positive")
    c = mesh.centroid
    s = target / mesh.diameter
    return TriangleMesh((mesh.vertices - c) * s + c, mesh.faces.copy())


# -- object model -----------------------------------------------------------------


@dataclass
class ObjectModel:
    """An object to be grasped: mesh plus the physical parameters used downstream.

    ``mass`` is density times the divergence-theorem mesh volume; ``centroid`` is
    the volume centroid (also the torque origin for the grasp matrix).
    """
    name: str
    mesh: TriangleMesh
    density: float = 2500.0
    mass: float = field(init=False)
    centroid: np.ndarray = field(init=False)
    diameter: float = field(init=False)

    def __post_init__(self):
        if self.density <= 0.0:
            raise ValueError("density must be positive")
        self.mass = self.density * self.mesh.volume
        self.centroid = self.mesh.centroid
        self.diameter = self.mesh.diameter


def segment_segment_distance(p1, q1, p2, q2):
    """Minimum distance between segments [p1,q1] and [p2,q2], vectorized.

    All inputs are (N, 3); returns (N,). Standard clamped closest-point algorithm.
    """
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    denom = a * e - b * b
    s = np.where(denom > 1e-18, np.clip((b * f - c * e)
                                        / np.where(denom > 1e-18, denom, 1.0),
                                        0.0, 1.0), 0.0)
    # t for the chosen s, then re-clamp s
    t = np.where(e > 1e-18, (b * s + f) / np.where(e > 1e-18, e, 1.0), 0.0)
    tc = np.clip(t, 0.0, 1.0)
    s = np.where(a > 1e-18, np.clip((b * tc - c) / np.where(a > 1e-18, a, 1.0),
                                    0.0, 1.0), 0.0)
    closest1 = p1 + s[:, None] * d1
    closest2 = p2 + tc[:, None] * d2
    return np.linalg.norm(closest1 - closest2, axis=1)
