"""Internal nearest-triangle queries.

Two exact query structures are built per mesh:

- a flat AABB tree (median split), used for one-off queries and as the fallback;
- a voxel candidate table: a uniform grid over the mesh bounds plus a margin,
  where each cell stores every triangle that can be the nearest neighbor of any
  point inside that cell (bounded by exact center distance + half cell diagonal).
  Points inside the grid scan a short exact candidate list instead of traversing
  the tree; points outside fall back to the tree. Both routes return exact
  nearest-triangle results.

Feature codes: 0 = face interior, 1..3 = vertex a/b/c, 4..6 = edge ab/bc/ca.
Signs come from angle-weighted pseudonormals (valid for watertight meshes).
"""

import numpy as np
from numba import njit, prange

LEAF_SIZE = 4
_STACK_DEPTH = 128


def build_bvh(vertices, faces):
    """Build the flat AABB tree plus id-ordered triangle data."""
    v = np.ascontiguousarray(vertices, dtype=np.float64)
    f = np.ascontiguousarray(faces, dtype=np.int64)
    tri = v[f]                                   # (F, 3, 3)
    tmin = tri.min(axis=1)
    tmax = tri.max(axis=1)
    cent = tri.mean(axis=1)
    nf = len(f)

    node_min, node_max = [], []
    node_child = []                              # (left, right) or (-1, -1) leaf
    node_range = []                              # (start, count) into leaf order
    tri_order = np.arange(nf, dtype=np.int64)

    def rec(start, count):
        idx = len(node_min)
        node_min.append(None)
        node_max.append(None)
        node_child.append((-1, -1))
        node_range.append((start, count))
        sel = tri_order[start:start + count]
        node_min[idx] = tmin[sel].min(axis=0)
        node_max[idx] = tmax[sel].max(axis=0)
        if count <= LEAF_SIZE:
            return idx
        c = cent[sel]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        order = np.argsort(c[:, axis], kind="stable")
        tri_order[start:start + count] = sel[order]
        half = count // 2
        left = rec(start, half)
        right = rec(start + half, count - half)
        node_child[idx] = (left, right)
        node_range[idx] = (-1, 0)
        return idx

    rec(0, nf)
    flat = np.ascontiguousarray(tri.reshape(nf, 9))
    return {
        "tri_pts": flat,                          # original id order
        "leaf_pts": np.ascontiguousarray(flat[tri_order]),
        "leaf_ids": np.ascontiguousarray(tri_order),
        "node_min": np.ascontiguousarray(np.array(node_min)),
        "node_max": np.ascontiguousarray(np.array(node_max)),
        "node_child": np.ascontiguousarray(np.array(node_child, dtype=np.int64)),
        "node_range": np.ascontiguousarray(np.array(node_range, dtype=np.int64)),
    }


@njit(cache=True, inline="always")
def _tri_test(px, py, pz, tp, k):
    """Closest point on triangle row k of flattened (F, 9) vertex data.

    Returns (dist2, v, w, feature) with q = a + v*(b-a) + w*(c-a).
    """
    ax, ay, az = tp[k, 0], tp[k, 1], tp[k, 2]
    abx, aby, abz = tp[k, 3] - ax, tp[k, 4] - ay, tp[k, 5] - az
    acx, acy, acz = tp[k, 6] - ax, tp[k, 7] - ay, tp[k, 8] - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return apx * apx + apy * apy + apz * apz, 0.0, 0.0, 1
    bpx, bpy, bpz = apx - abx, apy - aby, apz - abz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bpx * bpx + bpy * bpy + bpz * bpz, 1.0, 0.0, 2
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        dx, dy, dz = apx - t * abx, apy - t * aby, apz - t * abz
        return dx * dx + dy * dy + dz * dz, t, 0.0, 4
    cpx, cpy, cpz = apx - acx, apy - acy, apz - acz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cpx * cpx + cpy * cpy + cpz * cpz, 0.0, 1.0, 3
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        dx, dy, dz = apx - t * acx, apy - t * acy, apz - t * acz
        return dx * dx + dy * dy + dz * dz, 0.0, t, 6
    va = d3 * d6 - d5 * d4
    d43 = d4 - d3
    d56 = d5 - d6
    if va <= 0.0 and d43 >= 0.0 and d56 >= 0.0:
        t = d43 / (d43 + d56)
        dx = bpx - t * (acx - abx)
        dy = bpy - t * (acy - aby)
        dz = bpz - t * (acz - abz)
        return dx * dx + dy * dy + dz * dz, 1.0 - t, t, 5
    denom = 1.0 / (va + vb + vc)
    s = vb * denom
    t = vc * denom
    dx = apx - abx * s - acx * t
    dy = apy - aby * s - acy * t
    dz = apz - abz * s - acz * t
    return dx * dx + dy * dy + dz * dz, s, t, 0


@njit(cache=True, inline="always")
def _aabb_d2(px, py, pz, node_min, node_max, node):
    d = 0.0
    t = node_min[node, 0] - px
    if t > 0.0:
        d += t * t
    t = px - node_max[node, 0]
    if t > 0.0:
        d += t * t
    t = node_min[node, 1] - py
    if t > 0.0:
        d += t * t
    t = py - node_max[node, 1]
    if t > 0.0:
        d += t * t
    t = node_min[node, 2] - pz
    if t > 0.0:
        d += t * t
    t = pz - node_max[node, 2]
    if t > 0.0:
        d += t * t
    return d


@njit(cache=True, inline="always")
def _traverse(px, py, pz, leaf_pts, leaf_ids, node_min, node_max, node_child,
              node_range, stack, best0):
    """Best-first traversal. Returns (best_d2, v, w, feat, tri).

    ``best0`` is a pruning seed: any value strictly greater than the true
    squared nearest distance (1e300 when no bound is known). A tight seed
    lets whole subtrees be skipped before the first exact triangle test.
    """
    best = best0
    bv = 0.0
    bw = 0.0
    bfeat = 0
    btri = -1
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if _aabb_d2(px, py, pz, node_min, node_max, node) >= best:
            continue
        left = node_child[node, 0]
        if left < 0:
            start = node_range[node, 0]
            stop = start + node_range[node, 1]
            for k in range(start, stop):
                d2, v, w, feat = _tri_test(px, py, pz, leaf_pts, k)
                if d2 < best:
                    best = d2
                    bv, bw, bfeat = v, w, feat
                    btri = leaf_ids[k]
        else:
            right = node_child[node, 1]
            dl = _aabb_d2(px, py, pz, node_min, node_max, left)
            dr = _aabb_d2(px, py, pz, node_min, node_max, right)
            if dl <= dr:
                if dr < best:
                    stack[top] = right
                    top += 1
                if dl < best:
                    stack[top] = left
                    top += 1
            else:
                if dl < best:
                    stack[top] = left
                    top += 1
                if dr < best:
                    stack[top] = right
                    top += 1
    return best, bv, bw, bfeat, btri


# -- voxel candidate table ---------------------------------------------------------


@njit(cache=True, inline="always")
def _cell_tri_lb(ox, oy, oz, half, t, tri_min, tri_max, face_n, plane_off):
    """Lower bound on the distance between cell box and triangle ``t``.

    Combines AABB-AABB separation with the distance from the box to the
    triangle's supporting plane (every triangle point lies on that plane).
    """
    d = 0.0
    s = tri_min[t, 0] - (ox + half)
    if s > 0.0:
        d += s * s
    s = (ox - half) - tri_max[t, 0]
    if s > 0.0:
        d += s * s
    s = tri_min[t, 1] - (oy + half)
    if s > 0.0:
        d += s * s
    s = (oy - half) - tri_max[t, 1]
    if s > 0.0:
        d += s * s
    s = tri_min[t, 2] - (oz + half)
    if s > 0.0:
        d += s * s
    s = (oz - half) - tri_max[t, 2]
    if s > 0.0:
        d += s * s
    lb = np.sqrt(d)
    reach = half * (abs(face_n[t, 0]) + abs(face_n[t, 1]) + abs(face_n[t, 2]))
    sp = abs(face_n[t, 0] * ox + face_n[t, 1] * oy + face_n[t, 2] * oz
             - plane_off[t]) - reach
    if sp > lb:
        lb = sp
    return lb


@njit(cache=True, inline="always")
def _cell_node_lb2(ox, oy, oz, half, n, node_min, node_max):
    """Squared distance between a cell box and BVH node ``n``'s box."""
    d = 0.0
    s = node_min[n, 0] - (ox + half)
    if s > 0.0:
        d += s * s
    s = (ox - half) - node_max[n, 0]
    if s > 0.0:
        d += s * s
    s = node_min[n, 1] - (oy + half)
    if s > 0.0:
        d += s * s
    s = (oy - half) - node_max[n, 1]
    if s > 0.0:
        d += s * s
    s = node_min[n, 2] - (oz + half)
    if s > 0.0:
        d += s * s
    s = (oz - half) - node_max[n, 2]
    if s > 0.0:
        d += s * s
    return d


@njit(cache=True, inline="always")
def _collect_band(ox, oy, oz, half, u, tri_min, tri_max, face_n, plane_off,
                  leaf_ids, node_min, node_max, node_child, node_range, stack,
                  out_t, out_lb):
    """Triangles whose cell-box lower bound is at most ``u``, by tree descent.

    A subtree is skipped when its box is farther than ``u`` from the cell box
    (its triangles' AABB bounds can only be larger). Returns the count; ids
    and bounds land in ``out_t``/``out_lb`` in traversal order — callers
    canonicalize by sorting afterwards.
    """
    u2 = u * u
    c = 0
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if _cell_node_lb2(ox, oy, oz, half, node, node_min, node_max) > u2:
            continue
        left = node_child[node, 0]
        if left < 0:
            start = node_range[node, 0]
            stop = start + node_range[node, 1]
            for k in range(start, stop):
                t = leaf_ids[k]
                lb = _cell_tri_lb(ox, oy, oz, half, t, tri_min, tri_max,
                                  face_n, plane_off)
                if lb <= u:
                    out_t[c] = t
                    out_lb[c] = lb
                    c += 1
        else:
            stack[top] = left
            top += 1
            stack[top] = node_child[node, 1]
            top += 1
    return c


@njit(cache=True, nogil=True)
def _voxel_counts(origin, h, dims, tri_min, tri_max, face_n, plane_off, leaf_pts,
                  leaf_ids, node_min, node_max, node_child, node_range):
    nx, ny, nz = dims[0], dims[1], dims[2]
    ncell = nx * ny * nz
    counts = np.zeros(ncell, dtype=np.int64)
    bounds = np.empty(ncell, dtype=np.float64)
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    scratch_t = np.empty(tri_min.shape[0], dtype=np.int64)
    scratch_lb = np.empty(tri_min.shape[0], dtype=np.float64)
    half = 0.5 * h
    hd = np.sqrt(3.0) * half
    pad = 1e100  # nearest distance at the previous cell center (warm seed)
    pox = poy = poz = 0.0
    for cx in range(nx):
        for cy in range(ny):
            for cz in range(nz):
                cell = (cx * ny + cy) * nz + cz
                ox = origin[0] + (cx + 0.5) * h
                oy = origin[1] + (cy + 0.5) * h
                oz = origin[2] + (cz + 0.5) * h
                dxc, dyc, dzc = ox - pox, oy - poy, oz - poz
                ub = pad + np.sqrt(dxc * dxc + dyc * dyc + dzc * dzc)
                d2c, _, _, _, _ = _traverse(ox, oy, oz, leaf_pts, leaf_ids,
                                            node_min, node_max, node_child,
                                            node_range, stack,
                                            ub * ub * (1.0 + 1e-9) + 1e-30)
                pad = np.sqrt(d2c)
                pox, poy, poz = ox, oy, oz
                u = pad + hd * (1.0 + 1e-9) + 1e-12
                bounds[cell] = u
                counts[cell] = _collect_band(
                    ox, oy, oz, half, u, tri_min, tri_max, face_n, plane_off,
                    leaf_ids, node_min, node_max, node_child, node_range,
                    stack, scratch_t, scratch_lb)
    return counts, bounds


@njit(cache=True, nogil=True)
def _voxel_fill(origin, h, dims, tri_min, tri_max, face_n, plane_off, leaf_ids,
                node_min, node_max, node_child, node_range, bounds, cell_start,
                cell_tris, cand_lb2):
    nx, ny, nz = dims[0], dims[1], dims[2]
    half = 0.5 * h
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    scratch_t = np.empty(tri_min.shape[0], dtype=np.int64)
    scratch_lb = np.empty(tri_min.shape[0], dtype=np.float64)
    for cx in range(nx):
        for cy in range(ny):
            for cz in range(nz):
                cell = (cx * ny + cy) * nz + cz
                ox = origin[0] + (cx + 0.5) * h
                oy = origin[1] + (cy + 0.5) * h
                oz = origin[2] + (cz + 0.5) * h
                c = _collect_band(
                    ox, oy, oz, half, bounds[cell], tri_min, tri_max, face_n,
                    plane_off, leaf_ids, node_min, node_max, node_child,
                    node_range, stack, scratch_t, scratch_lb)
                w = cell_start[cell]
                for k in range(c):
                    cell_tris[w + k] = scratch_t[k]
                    cand_lb2[w + k] = scratch_lb[k] * scratch_lb[k]


def build_voxel_table(bvh, vertices, faces, face_normals, margin, max_cells=240000):
    """Exact per-cell candidate lists over the mesh bounds plus ``margin``.

    Cell size is chosen from the unpadded mesh extent so that the margin does
    not coarsen the grid; ``max_cells`` caps the total cell count. Per-cell
    candidates are sorted by a per-candidate distance lower bound (squared,
    returned as ``cand_lb2``) so queries can stop scanning early.
    """
    v = np.asarray(vertices, dtype=float)
    f = np.asarray(faces, dtype=np.int64)
    tri = v[f]
    tri_min = np.ascontiguousarray(tri.min(axis=1))
    tri_max = np.ascontiguousarray(tri.max(axis=1))
    fn = np.ascontiguousarray(face_normals, dtype=float)
    plane_off = np.ascontiguousarray(np.einsum("ij,ij->i", fn, tri[:, 0]))
    size = float((v.max(axis=0) - v.min(axis=0)).max())
    lo = v.min(axis=0) - margin
    hi = v.max(axis=0) + margin
    h = size / 44.0
    dims = np.maximum(1, np.ceil((hi - lo) / h).astype(np.int64))
    while int(dims.prod()) > max_cells:
        h *= 1.26
        dims = np.maximum(1, np.ceil((hi - lo) / h).astype(np.int64))
    origin = np.ascontiguousarray(lo)
    counts, bounds = _voxel_counts(
        origin, h, dims, tri_min, tri_max, fn, plane_off, bvh["leaf_pts"],
        bvh["leaf_ids"], bvh["node_min"], bvh["node_max"], bvh["node_child"],
        bvh["node_range"])
    cell_start = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=cell_start[1:])
    total = int(cell_start[-1])
    cell_tris = np.empty(total, dtype=np.int64)
    cand_lb2 = np.empty(total, dtype=np.float64)
    _voxel_fill(origin, h, dims, tri_min, tri_max, fn, plane_off,
                bvh["leaf_ids"], bvh["node_min"], bvh["node_max"],
                bvh["node_child"], bvh["node_range"], bounds, cell_start,
                cell_tris, cand_lb2)
    cell_of = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
    order = np.lexsort((cell_tris, cand_lb2, cell_of))
    cell_tris = np.ascontiguousarray(cell_tris[order])
    cand_lb2 = np.ascontiguousarray(cand_lb2[order])
    return {
        "grid_origin": origin,
        "grid_h": h,
        "grid_dims": np.ascontiguousarray(dims),
        "cell_start": cell_start,
        "cell_tris": cell_tris,
        "cand_lb2": cand_lb2,
        "tri_min": tri_min,
        "tri_max": tri_max,
    }


@njit(cache=True, inline="always")
def _query_point(px, py, pz, tri_pts, leaf_pts, leaf_ids, node_min, node_max,
                 node_child, node_range, grid_origin, grid_h, grid_dims,
                 cell_start, cell_tris, cand_lb2, tri_min, tri_max, stack,
                 best0):
    """Exact nearest query: voxel candidate scan inside the grid, tree outside.

    Candidates are pre-sorted by a cell-wide distance lower bound, so the scan
    stops as soon as the bound exceeds the best distance found; each surviving
    candidate is screened with a point-vs-triangle-AABB test first. ``best0``
    is a pruning seed that must be strictly greater than the true squared
    nearest distance (1e300 when no bound is known); since the true nearest
    triangle's lower bound never exceeds its exact distance, it is always
    scanned and the result is identical to an unseeded query.
    """
    cx = int(np.floor((px - grid_origin[0]) / grid_h))
    cy = int(np.floor((py - grid_origin[1]) / grid_h))
    cz = int(np.floor((pz - grid_origin[2]) / grid_h))
    if 0 <= cx < grid_dims[0] and 0 <= cy < grid_dims[1] and 0 <= cz < grid_dims[2]:
        cell = (cx * grid_dims[1] + cy) * grid_dims[2] + cz
        best = best0
        bv = 0.0
        bw = 0.0
        bfeat = 0
        btri = -1
        for k in range(cell_start[cell], cell_start[cell + 1]):
            if cand_lb2[k] >= best:
                break
            t = cell_tris[k]
            d = 0.0
            s = tri_min[t, 0] - px
            if s > 0.0:
                d += s * s
            s = px - tri_max[t, 0]
            if s > 0.0:
                d += s * s
            s = tri_min[t, 1] - py
            if s > 0.0:
                d += s * s
            s = py - tri_max[t, 1]
            if s > 0.0:
                d += s * s
            s = tri_min[t, 2] - pz
            if s > 0.0:
                d += s * s
            s = pz - tri_max[t, 2]
            if s > 0.0:
                d += s * s
            if d >= best:
                continue
            d2, v, w, feat = _tri_test(px, py, pz, tri_pts, t)
            if d2 < best:
                best = d2
                bv, bw, bfeat = v, w, feat
                btri = t
        return best, bv, bw, bfeat, btri
    return _traverse(px, py, pz, leaf_pts, leaf_ids, node_min, node_max,
                     node_child, node_range, stack, best0)


@njit(cache=True, inline="always")
def _signed_result(px, py, pz, d2, v, w, feat, tri, tri_pts, faces, face_n,
                   vert_pn, edge_pn, use_sign):
    """Closest point from barycentric coords plus pseudonormal-signed distance."""
    ax, ay, az = tri_pts[tri, 0], tri_pts[tri, 1], tri_pts[tri, 2]
    qx = ax + v * (tri_pts[tri, 3] - ax) + w * (tri_pts[tri, 6] - ax)
    qy = ay + v * (tri_pts[tri, 4] - ay) + w * (tri_pts[tri, 7] - ay)
    qz = az + v * (tri_pts[tri, 5] - az) + w * (tri_pts[tri, 8] - az)
    d = np.sqrt(d2)
    if use_sign == 1 and d > 1e-12:
        if feat == 0:
            nx, ny, nz = face_n[tri, 0], face_n[tri, 1], face_n[tri, 2]
        elif feat <= 3:
            vid = faces[tri, feat - 1]
            nx, ny, nz = vert_pn[vid, 0], vert_pn[vid, 1], vert_pn[vid, 2]
        else:
            e = feat - 4
            nx, ny, nz = edge_pn[tri, e, 0], edge_pn[tri, e, 1], edge_pn[tri, e, 2]
        if (px - qx) * nx + (py - qy) * ny + (pz - qz) * nz < 0.0:
            d = -d
    return d, qx, qy, qz


@njit(cache=True, nogil=True)
def query_full(points, tri_pts, leaf_pts, leaf_ids, node_min, node_max,
               node_child, node_range, grid_origin, grid_h, grid_dims, cell_start,
               cell_tris, cand_lb2, tri_min, tri_max, faces, face_n, vert_pn,
               edge_pn, use_sign):
    """Batch exact query: (signed d, q, tri, feat).

    Consecutive points seed each other's pruning bound (previous distance plus
    the hop between the points, a valid upper bound by the triangle
    inequality), which pays off on the spatially coherent batches the callers
    pass; results are independent of the ordering.
    """
    n = points.shape[0]
    out_d = np.empty(n, dtype=np.float64)
    out_q = np.empty((n, 3), dtype=np.float64)
    out_tri = np.empty(n, dtype=np.int64)
    out_feat = np.empty(n, dtype=np.int64)
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    pad = 1e100
    ppx = ppy = ppz = 0.0
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        dxc, dyc, dzc = px - ppx, py - ppy, pz - ppz
        ub = pad + np.sqrt(dxc * dxc + dyc * dyc + dzc * dzc)
        d2, v, w, feat, tri = _query_point(
            px, py, pz, tri_pts, leaf_pts, leaf_ids, node_min, node_max,
            node_child, node_range, grid_origin, grid_h, grid_dims, cell_start,
            cell_tris, cand_lb2, tri_min, tri_max, stack,
            ub * ub * (1.0 + 1e-9) + 1e-30)
        pad = np.sqrt(d2)
        ppx, ppy, ppz = px, py, pz
        d, qx, qy, qz = _signed_result(px, py, pz, d2, v, w, feat, tri, tri_pts,
                                       faces, face_n, vert_pn, edge_pn, use_sign)
        out_d[i] = d
        out_q[i, 0] = qx
        out_q[i, 1] = qy
        out_q[i, 2] = qz
        out_tri[i] = tri
        out_feat[i] = feat
    return out_d, out_q, out_tri, out_feat


@njit(cache=True, parallel=True, nogil=True)
def query_full_parallel(points, tri_pts, leaf_pts, leaf_ids, node_min, node_max,
                        node_child, node_range, grid_origin, grid_h, grid_dims,
                        cell_start, cell_tris, cand_lb2, tri_min, tri_max, faces,
                        face_n, vert_pn, edge_pn, use_sign):
    """Parallel variant of :func:`query_full` (identical results)."""
    n = points.shape[0]
    out_d = np.empty(n, dtype=np.float64)
    out_q = np.empty((n, 3), dtype=np.float64)
    out_tri = np.empty(n, dtype=np.int64)
    out_feat = np.empty(n, dtype=np.int64)
    for i in prange(n):
        stack = np.empty(_STACK_DEPTH, dtype=np.int64)
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        d2, v, w, feat, tri = _query_point(
            px, py, pz, tri_pts, leaf_pts, leaf_ids, node_min, node_max,
            node_child, node_range, grid_origin, grid_h, grid_dims, cell_start,
            cell_tris, cand_lb2, tri_min, tri_max, stack, 1e300)
        d, qx, qy, qz = _signed_result(px, py, pz, d2, v, w, feat, tri, tri_pts,
                                       faces, face_n, vert_pn, edge_pn, use_sign)
        out_d[i] = d
        out_q[i, 0] = qx
        out_q[i, 1] = qy
        out_q[i, 2] = qz
        out_tri[i] = tri
        out_feat[i] = feat
    return out_d, out_q, out_tri, out_feat
