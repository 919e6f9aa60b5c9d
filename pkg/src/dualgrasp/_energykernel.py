"""Fused per-point pass shared by energy and gradient evaluation.

For a batch of posed hand instances this kernel transforms every body point to
world frame, runs the exact nearest-triangle query, and accumulates the two
point-sum energies (hand-object distance, hand-object penetration) together
with their gradients, folded into per-link force/torque sums:

    F[b, l]   = Σ over points on link l of w · ∂E/∂p
    Tau[b, l] = Σ over points on link l of p × (w · ∂E/∂p)

Torques are taken about the world origin; the caller shifts them to the root
translation or joint origins when assembling the 56-dim gradient. Penetration
anchors and contact candidates additionally return raw world-frame data for
the pair terms and the contact machinery, which live in numpy.
"""

import numpy as np
from numba import njit

from ._meshquery import _STACK_DEPTH, _query_point, _signed_result


@njit(cache=True, nogil=True)
def fused_point_pass(R, T,
                     sample_local, sample_link,
                     anchor_local, anchor_link,
                     cand_local, cand_link,
                     w_dis, w_objpen, delta,
                     tri_pts, leaf_pts, leaf_ids, node_min, node_max,
                     node_child, node_range, grid_origin, grid_h, grid_dims,
                     cell_start, cell_tris, cand_lb2, tri_min, tri_max,
                     faces, face_n, vert_pn, edge_pn, use_sign):
    bh = R.shape[0]
    nl = R.shape[1]
    ns = sample_local.shape[0]
    na = anchor_local.shape[0]
    nc = cand_local.shape[0]

    e_dis = np.zeros(bh)
    e_objpen = np.zeros(bh)
    F = np.zeros((bh, nl, 3))
    Tau = np.zeros((bh, nl, 3))
    anchor_world = np.empty((bh, na, 3))
    anchor_d = np.empty((bh, na))
    cand_d = np.empty((bh, nc))
    cand_q = np.empty((bh, nc, 3))
    cand_world = np.empty((bh, nc, 3))
    cand_feat = np.empty((bh, nc), dtype=np.int64)
    cand_tri = np.empty((bh, nc), dtype=np.int64)
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)

    # Warm-start carry for the nearest queries: consecutive body points sit
    # millimeters apart, so the previous point's distance plus the hop length
    # is a tight upper bound (triangle inequality) that prunes most of each
    # query. Valid across loop and instance boundaries, just looser there.
    pad = 1e100
    ppx = ppy = ppz = 0.0

    for b in range(bh):
        # -- surface samples: E_dis = Σ max(d, 0), plus their share of
        #    E_objpen = Σ max(δ - d, 0) (samples belong to the penetration
        #    point set; (p - q)/d is ∇d on both sides of the surface) ------------
        link = -1
        r00 = r01 = r02 = r10 = r11 = r12 = r20 = r21 = r22 = 0.0
        tx = ty = tz = 0.0
        for i in range(ns):
            l = sample_link[i]
            if l != link:
                link = l
                r00, r01, r02 = R[b, l, 0, 0], R[b, l, 0, 1], R[b, l, 0, 2]
                r10, r11, r12 = R[b, l, 1, 0], R[b, l, 1, 1], R[b, l, 1, 2]
                r20, r21, r22 = R[b, l, 2, 0], R[b, l, 2, 1], R[b, l, 2, 2]
                tx, ty, tz = T[b, l, 0], T[b, l, 1], T[b, l, 2]
            lx, ly, lz = sample_local[i, 0], sample_local[i, 1], sample_local[i, 2]
            px = r00 * lx + r01 * ly + r02 * lz + tx
            py = r10 * lx + r11 * ly + r12 * lz + ty
            pz = r20 * lx + r21 * ly + r22 * lz + tz
            dxc, dyc, dzc = px - ppx, py - ppy, pz - ppz
            ub = pad + np.sqrt(dxc * dxc + dyc * dyc + dzc * dzc)
            d2, v, w, feat, tri = _query_point(
                px, py, pz, tri_pts, leaf_pts, leaf_ids, node_min, node_max,
                node_child, node_range, grid_origin, grid_h, grid_dims,
                cell_start, cell_tris, cand_lb2, tri_min, tri_max, stack,
                ub * ub * (1.0 + 1e-9) + 1e-30)
            pad = np.sqrt(d2)
            ppx, ppy, ppz = px, py, pz
            d, qx, qy, qz = _signed_result(
                px, py, pz, d2, v, w, feat, tri, tri_pts, faces, face_n,
                vert_pn, edge_pn, use_sign)
            s = 0.0
            if d > 0.0:
                e_dis[b] += d
                s += w_dis / d
            if d < delta:
                e_objpen[b] += delta - d
                if d != 0.0:
                    s -= w_objpen / d
            if s != 0.0:
                gx = s * (px - qx)
                gy = s * (py - qy)
                gz = s * (pz - qz)
                F[b, l, 0] += gx
                F[b, l, 1] += gy
                F[b, l, 2] += gz
                Tau[b, l, 0] += py * gz - pz * gy
                Tau[b, l, 1] += pz * gx - px * gz
                Tau[b, l, 2] += px * gy - py * gx
        # -- penetration anchors: E_objpen = Σ max(δ - d, 0) ---------------------
        for i in range(na):
            l = anchor_link[i]
            lx, ly, lz = anchor_local[i, 0], anchor_local[i, 1], anchor_local[i, 2]
            px = (R[b, l, 0, 0] * lx + R[b, l, 0, 1] * ly + R[b, l, 0, 2] * lz
                  + T[b, l, 0])
            py = (R[b, l, 1, 0] * lx + R[b, l, 1, 1] * ly + R[b, l, 1, 2] * lz
                  + T[b, l, 1])
            pz = (R[b, l, 2, 0] * lx + R[b, l, 2, 1] * ly + R[b, l, 2, 2] * lz
                  + T[b, l, 2])
            anchor_world[b, i, 0] = px
            anchor_world[b, i, 1] = py
            anchor_world[b, i, 2] = pz
            dxc, dyc, dzc = px - ppx, py - ppy, pz - ppz
            ub = pad + np.sqrt(dxc * dxc + dyc * dyc + dzc * dzc)
            d2, v, w, feat, tri = _query_point(
                px, py, pz, tri_pts, leaf_pts, leaf_ids, node_min, node_max,
                node_child, node_range, grid_origin, grid_h, grid_dims,
                cell_start, cell_tris, cand_lb2, tri_min, tri_max, stack,
                ub * ub * (1.0 + 1e-9) + 1e-30)
            pad = np.sqrt(d2)
            ppx, ppy, ppz = px, py, pz
            d, qx, qy, qz = _signed_result(
                px, py, pz, d2, v, w, feat, tri, tri_pts, faces, face_n,
                vert_pn, edge_pn, use_sign)
            anchor_d[b, i] = d
            if d < delta:
                e_objpen[b] += delta - d
                if d != 0.0:
                    gx = -w_objpen * (px - qx) / d
                    gy = -w_objpen * (py - qy) / d
                    gz = -w_objpen * (pz - qz) / d
                    F[b, l, 0] += gx
                    F[b, l, 1] += gy
                    F[b, l, 2] += gz
                    Tau[b, l, 0] += py * gz - pz * gy
                    Tau[b, l, 1] += pz * gx - px * gz
                    Tau[b, l, 2] += px * gy - py * gx
        # -- contact candidates: raw data only -----------------------------------
        for i in range(nc):
            l = cand_link[i]
            lx, ly, lz = cand_local[i, 0], cand_local[i, 1], cand_local[i, 2]
            px = (R[b, l, 0, 0] * lx + R[b, l, 0, 1] * ly + R[b, l, 0, 2] * lz
                  + T[b, l, 0])
            py = (R[b, l, 1, 0] * lx + R[b, l, 1, 1] * ly + R[b, l, 1, 2] * lz
                  + T[b, l, 1])
            pz = (R[b, l, 2, 0] * lx + R[b, l, 2, 1] * ly + R[b, l, 2, 2] * lz
                  + T[b, l, 2])
            cand_world[b, i, 0] = px
            cand_world[b, i, 1] = py
            cand_world[b, i, 2] = pz
            dxc, dyc, dzc = px - ppx, py - ppy, pz - ppz
            ub = pad + np.sqrt(dxc * dxc + dyc * dyc + dzc * dzc)
            d2, v, w, feat, tri = _query_point(
                px, py, pz, tri_pts, leaf_pts, leaf_ids, node_min, node_max,
                node_child, node_range, grid_origin, grid_h, grid_dims,
                cell_start, cell_tris, cand_lb2, tri_min, tri_max, stack,
                ub * ub * (1.0 + 1e-9) + 1e-30)
            pad = np.sqrt(d2)
            ppx, ppy, ppz = px, py, pz
            d, qx, qy, qz = _signed_result(
                px, py, pz, d2, v, w, feat, tri, tri_pts, faces, face_n,
                vert_pn, edge_pn, use_sign)
            cand_d[b, i] = d
            cand_q[b, i, 0] = qx
            cand_q[b, i, 1] = qy
            cand_q[b, i, 2] = qz
            cand_feat[b, i] = feat
            cand_tri[b, i] = tri
    return (e_dis, e_objpen, F, Tau, anchor_world, anchor_d,
            cand_d, cand_q, cand_world, cand_feat, cand_tri)
