"""Grasp energy: seven weighted terms over a bimanual state, and its gradient.

Terms (all nonnegative):

- ``e_dis``: sum over hand surface samples of max(signed distance, 0) — pulls
  the hands onto the object; negative (inside) distances are clamped so the
  term never rewards penetration.
- ``e_fc``: ‖G·c‖₂ where G is the grasp matrix and c the stacked contact
  normals — the differential force-closure residual.
- ``e_vew``: det(G·Gᵀ + λI₆)^(−1/2) — inverse wrench-ellipsoid volume, pushes
  contacts toward well-spread wrench coverage.
- ``e_objpen``: sum over the penetration point set — the surface samples plus
  the sparse penetration anchors — of max(δ − signed distance, 0). Including
  the dense samples makes the restoring push grow with intrusion depth, which
  pins the optimizer's equilibrium at the surface instead of inside it.
- ``e_selfpen``: sum over non-adjacent same-hand anchor pairs of
  max(δ − pair distance, 0), pairs closer than ε skipped.
- ``e_bimpen``: the same over cross-hand anchor pairs.
- ``e_joint``: summed joint-limit violation over all joints of both hands.

Total = Σ w_k · term_k. The gradient lives in the 56-dim flatten() tangent:
translation coordinates are plain derivatives, rotation coordinates are
world-frame axis-angle increments at the current rotation (the optimizer's
retraction), joint coordinates are plain derivatives. Contact selection,
nearest-triangle assignment, and contact normals are frozen within one
gradient evaluation, making the energy piecewise smooth.

Contact torques use contact positions relative to the object volume centroid,
which makes every term invariant under a common rigid motion of object and
hands.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import hand as hand_mod
from . import rotations
from ._energykernel import fused_point_pass


@dataclass(frozen=True)
class EnergyWeights:
    """Term weights and thresholds. Defaults are calibration values.

    ``w_objpen`` is set well above ``w_dis``: with both penalties linear in
    depth, their balance point is a ratio of engaged point counts, and only a
    strongly asymmetric ratio parks the equilibrium at the surface (intrusion
    engages dense surface samples, so the restoring push then grows with
    depth while the attractive pull stays capped).
    """

    w_dis: float = 100.0
    w_fc: float = 1.0
    w_vew: float = 0.01
    w_objpen: float = 3000.0
    w_selfpen: float = 10.0
    w_bimpen: float = 10.0
    w_joint: float = 1.0
    delta: float = 0.005      # penetration margin (m)
    eps: float = 0.001        # pair-distance floor below which pairs are skipped
    ridge: float = 1e-8       # λ added to G·Gᵀ before the determinant

    def as_dict(self):
        return asdict(self)


@dataclass
class EnergyBreakdown:
    """Raw (unweighted) term values plus the weighted total."""

    e_dis: float
    e_fc: float
    e_vew: float
    e_objpen: float
    e_selfpen: float
    e_bimpen: float
    e_joint: float
    total: float

    def as_dict(self):
        return asdict(self)


@dataclass
class ContactSet:
    """Selected grasp contacts: 4 per active hand.

    ``points`` are object-surface points (m), ``normals`` the object outward
    surface normals there; ``hand_flags`` is 0 for left, 1 for right;
    ``anchor_indices`` index the hand's contact-candidate list.
    """

    points: np.ndarray
    normals: np.ndarray
    hand_flags: np.ndarray
    anchor_indices: np.ndarray


def _axial(W):
    """axial(W - Wᵀ) for stacked 3x3 matrices: a with skew(a) = W - Wᵀ."""
    return np.stack([W[..., 2, 1] - W[..., 1, 2],
                     W[..., 0, 2] - W[..., 2, 0],
                     W[..., 1, 0] - W[..., 0, 1]], axis=-1)


class EnergyModel:
    """Batched energy/gradient evaluator bound to one object, hand, weights.

    ``active`` selects hand slots: (True, True) is bimanual; disabling a slot
    removes that hand's points, contacts, pairs, and joints from the energy
    (its 28 state coordinates get zero gradient).
    """

    def __init__(self, obj, hand, weights=None, active=(True, True)):
        self.obj = obj
        self.hand = hand
        self.weights = weights or EnergyWeights()
        self.active = tuple(bool(a) for a in active)
        if not any(self.active):
            raise ValueError("at least one hand must be active")
        self.slots = [s for s in range(2) if self.active[s]]
        self.mesh_args = obj.mesh.query_args()
        self.centroid = obj.centroid

        h = hand
        self._sample_local = np.ascontiguousarray(h.sample_local)
        self._sample_link = np.ascontiguousarray(h.sample_link)
        self._anchor_local = np.ascontiguousarray(h.anchor_local)
        self._anchor_link = np.ascontiguousarray(h.anchor_link)
        self._cand_local = np.ascontiguousarray(h.cand_local)
        self._cand_link = np.ascontiguousarray(h.cand_link)
        na, nl = len(h.anchor_local), h.n_links
        one_hot = np.zeros((na, nl))
        one_hot[np.arange(na), h.anchor_link] = 1.0
        self._anchor_onehot = one_hot
        self._moves = h.joint_moves_link.astype(float)      # (J, L)
        self._pairs = h.selfpen_pairs
        # mesh data for contact normal / tangent projections
        self._faces = self.mesh_args[15]
        self._face_n = self.mesh_args[16]
        self._verts = obj.mesh.vertices
        obj.mesh._feature_tables()          # build the canonical tables up front

    # -- state packing -----------------------------------------------------------

    def state_from_grasps(self, grasps):
        """List of BimanualGrasp → (t (B,2,3), q (B,2,4), th (B,2,J))."""
        b = len(grasps)
        j = self.hand.n_joints
        t = np.zeros((b, 2, 3))
        q = np.zeros((b, 2, 4))
        q[:, :, 0] = 1.0
        th = np.zeros((b, 2, j))
        for i, g in enumerate(grasps):
            for s, cfg in enumerate((g.left, g.right)):
                t[i, s] = cfg.translation
                q[i, s] = cfg.quaternion
                th[i, s] = cfg.thetas
        return t, q, th

    def grasps_from_state(self, t, q, th):
        out = []
        for i in range(t.shape[0]):
            cfgs = [hand_mod.HandConfiguration(
                t[i, s].copy(), rotations.quat_normalize(q[i, s]), th[i, s].copy())
                for s in range(2)]
            out.append(hand_mod.BimanualGrasp(cfgs[0], cfgs[1]))
        return out

    # -- evaluation --------------------------------------------------------------

    def evaluate(self, t, q, th, need_grad=True):
        """Batched energy (and gradient) for states (B,2,3),(B,2,4),(B,2,J).

        Returns a dict of (B,)-arrays for every term plus ``total``; with
        ``need_grad`` also ``grad`` (B, 56) in flatten() layout and per-grasp
        contact data (``contact_points``, ``contact_normals`` …).
        """
        w = self.weights
        hd = self.hand
        b = t.shape[0]
        nj = hd.n_joints
        ns = len(self.slots)

        R = np.zeros((ns * b, hd.n_links, 3, 3))
        T = np.zeros((ns * b, hd.n_links, 3))
        for k, s in enumerate(self.slots):
            Rs, Ts = hand_mod.fk_batch(hd, t[:, s], q[:, s], th[:, s])
            R[k * b:(k + 1) * b] = Rs
            T[k * b:(k + 1) * b] = Ts
        R = np.ascontiguousarray(R)
        T = np.ascontiguousarray(T)

        (e_dis_i, e_obj_i, F, Tau, anchor_w, anchor_d, cand_d, cand_q,
         cand_w, cand_feat, cand_tri) = fused_point_pass(
            R, T, self._sample_local, self._sample_link, self._anchor_local,
            self._anchor_link, self._cand_local, self._cand_link,
            w.w_dis, w.w_objpen, w.delta, *self.mesh_args)

        def per_grasp(x):
            return sum(x[k * b:(k + 1) * b] for k in range(ns))

        e_dis = per_grasp(e_dis_i)
        e_objpen = per_grasp(e_obj_i)

        ganchor = np.zeros_like(anchor_w)       # pair-term gradients per anchor

        # self-penetration: non-adjacent same-hand anchor pairs
        e_selfpen = np.zeros(b)
        if len(self._pairs):
            i0, i1 = self._pairs[:, 0], self._pairs[:, 1]
            dvec = anchor_w[:, i0] - anchor_w[:, i1]        # (ns*b, P, 3)
            dist = np.linalg.norm(dvec, axis=-1)
            act = (dist >= w.eps) & (dist < w.delta)
            e_selfpen = per_grasp(np.sum((w.delta - dist) * act, axis=-1))
            if need_grad and act.any():
                rows, cols = np.nonzero(act)        # few active pairs: scatter those
                g = (-w.w_selfpen / dist[rows, cols])[:, None] * dvec[rows, cols]
                np.add.at(ganchor, (rows, i0[cols]), g)
                np.add.at(ganchor, (rows, i1[cols]), -g)

        # inter-hand penetration: all cross-hand anchor pairs
        e_bimpen = np.zeros(b)
        if ns == 2:
            al, ar = anchor_w[:b], anchor_w[b:]
            dvec = al[:, :, None, :] - ar[:, None, :, :]    # (b, A, A, 3)
            dist = np.linalg.norm(dvec, axis=-1)
            act = (dist >= w.eps) & (dist < w.delta)
            e_bimpen = np.sum((w.delta - dist) * act, axis=(1, 2))
            if need_grad and act.any():
                bi, ai, aj = np.nonzero(act)
                g = (-w.w_bimpen / dist[bi, ai, aj])[:, None] * dvec[bi, ai, aj]
                np.add.at(ganchor, (bi, ai), g)
                np.add.at(ganchor, (bi + b, aj), -g)

        # contact selection: per active hand the 4 candidates of smallest |d|,
        # stable argsort breaks exact ties by ascending candidate index
        order = np.argsort(np.abs(cand_d), axis=1, kind="stable")[:, :4]
        sel_d = np.take_along_axis(cand_d, order, axis=1)
        sel_q = np.take_along_axis(cand_q, order[..., None], axis=1)
        sel_p = np.take_along_axis(cand_w, order[..., None], axis=1)
        sel_feat = np.take_along_axis(cand_feat, order, axis=1)
        sel_tri = np.take_along_axis(cand_tri, order, axis=1)
        sel_link = self._cand_link[order]

        # per grasp: concatenate the active hands' contacts
        def merge(x):
            return np.concatenate([x[k * b:(k + 1) * b] for k in range(ns)],
                                  axis=1)

        cq = merge(sel_q)                       # (b, 4ns, 3) contact points
        cp = merge(sel_p)                       # anchor world positions
        ctri = merge(sel_tri)
        cfeat = merge(sel_feat)
        # contact normal: face normal of the deterministically assigned triangle
        # (lowest-index incident triangle at edge/vertex features, so the normal
        # is locally constant while the nearest point stays on one feature)
        cn = self._face_n[self.obj.mesh.assigned_triangles(ctri, cfeat)]
        x = cq - self.centroid                  # torque arms about the centroid
        nc = cq.shape[1]

        fsum = cn.sum(axis=1)
        tsum = np.cross(x, cn).sum(axis=1)
        v = np.concatenate([fsum, tsum], axis=1)
        e_fc = np.linalg.norm(v, axis=1)

        G = np.zeros((b, 6, 3 * nc))
        eye = np.eye(3)
        for j in range(nc):
            G[:, 0:3, 3 * j:3 * j + 3] = eye
            sk = np.zeros((b, 3, 3))
            sk[:, 0, 1] = -x[:, j, 2]
            sk[:, 0, 2] = x[:, j, 1]
            sk[:, 1, 0] = x[:, j, 2]
            sk[:, 1, 2] = -x[:, j, 0]
            sk[:, 2, 0] = -x[:, j, 1]
            sk[:, 2, 1] = x[:, j, 0]
            G[:, 3:6, 3 * j:3 * j + 3] = sk
        M = G @ np.transpose(G, (0, 2, 1)) + w.ridge * np.eye(6)
        detM = np.linalg.det(M)
        e_vew = 1.0 / np.sqrt(np.maximum(detM, 1e-300))

        # joint-limit violations over active hands
        viol_hi = np.maximum(th - hd.upper, 0.0)
        viol_lo = np.maximum(hd.lower - th, 0.0)
        act_mask = np.array(self.active, dtype=float)[None, :, None]
        e_joint = np.sum((viol_hi + viol_lo) * act_mask, axis=(1, 2))

        total = (w.w_dis * e_dis + w.w_fc * e_fc + w.w_vew * e_vew
                 + w.w_objpen * e_objpen + w.w_selfpen * e_selfpen
                 + w.w_bimpen * e_bimpen + w.w_joint * e_joint)

        out = {
            "e_dis": e_dis, "e_fc": e_fc, "e_vew": e_vew, "e_objpen": e_objpen,
            "e_selfpen": e_selfpen, "e_bimpen": e_bimpen, "e_joint": e_joint,
            "total": total,
            "contact_points": cq, "contact_normals": cn,
            "contact_anchor_positions": cp,
            "contact_order": order, "contact_distances": sel_d,
        }
        if not need_grad:
            return out

        # -- contact-term gradients w.r.t. contact points ---------------------------
        # E_fc: ∂/∂x_j = n_j × v_t (v normalized); frozen normals
        safe = np.maximum(e_fc, 1e-300)[:, None]
        vt = v[:, 3:6] / safe
        g_fc_x = np.cross(cn, vt[:, None, :])
        g_fc_x = np.where((e_fc > 0.0)[:, None, None], g_fc_x, 0.0)
        # E_vew: dE/dG = −E·M⁻¹G; per contact the skew sub-block maps to axial()
        Minv = np.linalg.inv(M)
        dEdG = -e_vew[:, None, None] * (Minv @ G)
        Wb = dEdG[:, 3:6, :].reshape(b, 3, nc, 3).transpose(0, 2, 1, 3)  # (b,nc,3,3)
        g_vew_x = _axial(Wb)
        g_x = w.w_fc * g_fc_x + w.w_vew * g_vew_x

        # project through the frozen nearest-feature map dq/dp
        P = np.zeros((b, nc, 3, 3))
        face = cfeat == 0
        nhat = self._face_n[ctri]
        P += (np.eye(3) - nhat[..., :, None] * nhat[..., None, :]) * \
            face[..., None, None]
        edge = cfeat >= 4
        if edge.any():
            tv = self._verts[self._faces[ctri]]         # (b, nc, 3verts, 3)
            e_id = np.maximum(cfeat - 4, 0)
            a_idx = e_id                                  # edge k: verts k, (k+1)%3
            b_idx = (e_id + 1) % 3
            va = np.take_along_axis(tv, a_idx[..., None, None].repeat(3, -1),
                                    axis=2)[:, :, 0]
            vb = np.take_along_axis(tv, b_idx[..., None, None].repeat(3, -1),
                                    axis=2)[:, :, 0]
            tvec = vb - va
            tvec /= np.maximum(np.linalg.norm(tvec, axis=-1, keepdims=True), 1e-300)
            P += (tvec[..., :, None] * tvec[..., None, :]) * edge[..., None, None]
        g_p = np.einsum("bcij,bcj->bci", P, g_x)         # vertex features stay 0

        # scatter contact gradients into per-instance link force/torque sums
        F2 = np.zeros_like(F)
        Tau2 = np.zeros_like(Tau)
        for k in range(ns):
            rows = np.arange(b) + k * b
            links = sel_link[rows]                       # (b, 4)
            gk = g_p[:, k * 4:(k + 1) * 4]
            pk = cp[:, k * 4:(k + 1) * 4]
            np.add.at(F2, (rows[:, None], links), gk)
            np.add.at(Tau2, (rows[:, None], links), np.cross(pk, gk))

        # pair-term anchor gradients → link force/torque sums
        F3 = np.einsum("bad,al->bld", ganchor, self._anchor_onehot)
        Tau3 = np.einsum("bad,al->bld", np.cross(anchor_w, ganchor),
                         self._anchor_onehot)

        Fall = F + F2 + F3
        Tall = Tau + Tau2 + Tau3

        # assemble the 56-dim gradient
        grad = np.zeros((b, 2 * (6 + nj)))
        jl = hd.joint_link
        parent = hd.parent_index[jl]
        for k, s in enumerate(self.slots):
            rows = slice(k * b, (k + 1) * b)
            Fk, Tk = Fall[rows], Tall[rows]
            Rk, Tk_org = R[rows], T[rows]
            f_tot = Fk.sum(axis=1)
            tau_tot = Tk.sum(axis=1)
            rot = tau_tot - np.cross(t[:, s], f_tot)
            f_sub = np.einsum("jl,bld->bjd", self._moves, Fk)
            tau_sub = np.einsum("jl,bld->bjd", self._moves, Tk)
            omega = np.einsum("bjik,jk->bji", Rk[:, parent], hd.joint_axis)
            origins = Tk_org[:, jl]
            g_th = np.einsum("bjd,bjd->bj", omega,
                             tau_sub - np.cross(origins, f_sub))
            g_th += w.w_joint * (np.sign(viol_hi[:, s]) - np.sign(viol_lo[:, s]))
            base = s * (6 + nj)
            grad[:, base:base + 3] = f_tot
            grad[:, base + 3:base + 6] = rot
            grad[:, base + 6:base + 6 + nj] = g_th
        out["grad"] = grad
        return out


# -- single-grasp wrappers -------------------------------------------------------


def _posed_pair_model(obj, hand, weights=None, active=(True, True)):
    return EnergyModel(obj, hand, weights=weights, active=active)


def select_contacts(left, right, obj):
    """Per hand, the 4 contact candidates with smallest |signed distance|.

    Contact point = nearest object surface point; contact normal = the object
    face normal there. Exact ties break toward the lower candidate index.
    """
    points, normals, flags, indices = [], [], [], []
    for flag, posed in ((0, left), (1, right)):
        if posed is None:
            continue
        d, q, tri, feat = obj.mesh.nearest(posed.contact_candidates)
        order = np.argsort(np.abs(d), kind="stable")[:4]
        points.append(q[order])
        normals.append(obj.mesh.assigned_normals(tri[order], feat[order]))
        flags.append(np.full(len(order), flag))
        indices.append(order)
    return ContactSet(np.concatenate(points), np.concatenate(normals),
                      np.concatenate(flags), np.concatenate(indices))


def grasp_matrix(contacts, origin=None):
    """6×3k map from stacked contact forces to the net wrench.

    Torques are taken about ``origin`` (default: the zero point of whatever
    frame the contact points are expressed in; energies pass the object
    centroid).
    """
    pts = np.asarray(contacts.points, dtype=float)
    if origin is not None:
        pts = pts - np.asarray(origin, dtype=float)
    k = len(pts)
    G = np.zeros((6, 3 * k))
    for j, p in enumerate(pts):
        G[0:3, 3 * j:3 * j + 3] = np.eye(3)
        G[3:6, 3 * j:3 * j + 3] = np.array([
            [0.0, -p[2], p[1]], [p[2], 0.0, -p[0]], [-p[1], p[0], 0.0]])
    return G


def force_closure_terms(G, contacts, ridge=1e-8):
    """(E_fc, E_vew) for a grasp matrix and its contact normals."""
    c = np.asarray(contacts.normals, dtype=float).reshape(-1)
    e_fc = float(np.linalg.norm(G @ c))
    M = G @ G.T + ridge * np.eye(6)
    e_vew = float(1.0 / np.sqrt(max(np.linalg.det(M), 1e-300)))
    return e_fc, e_vew


def distance_energy(left, right, obj):
    """Σ max(signed distance, 0) over both hands' surface samples."""
    total = 0.0
    for posed in (left, right):
        if posed is None or len(posed.surface_samples) == 0:
            continue
        d = obj.mesh.nearest(posed.surface_samples)[0]
        total += float(np.maximum(d, 0.0).sum())
    return total


def penetration_energies(left, right, obj, delta=0.005, eps=0.001, hand=None):
    """(E_objpen, E_selfpen, E_bimpen) from posed hands.

    ``hand`` supplies the non-adjacent anchor-pair structure used by the
    self-penetration term and must be the HandKinematics both poses came from.
    """
    if hand is None:
        raise ValueError("penetration_energies needs the HandKinematics (pairs)")
    e_obj = 0.0
    sides = [p for p in (left, right) if p is not None]
    for posed in sides:
        pts = np.concatenate([posed.surface_samples,
                              posed.penetration_anchors])
        d = obj.mesh.nearest(pts)[0]
        e_obj += float(np.maximum(delta - d, 0.0).sum())
    e_self = 0.0
    for posed in sides:
        if len(hand.selfpen_pairs) == 0:
            continue
        a = posed.penetration_anchors
        i0, i1 = hand.selfpen_pairs[:, 0], hand.selfpen_pairs[:, 1]
        dist = np.linalg.norm(a[i0] - a[i1], axis=-1)
        keep = (dist >= eps) & (dist < delta)
        e_self += float(np.sum((delta - dist) * keep))
    e_bim = 0.0
    if len(sides) == 2:
        dist = np.linalg.norm(
            sides[0].penetration_anchors[:, None, :]
            - sides[1].penetration_anchors[None, :, :], axis=-1)
        keep = (dist >= eps) & (dist < delta)
        e_bim = float(np.sum((delta - dist) * keep))
    return e_obj, e_self, e_bim


def total_energy(obj, grasp, hand, weights=None, active=(True, True)):
    """EnergyBreakdown of one bimanual grasp."""
    model = EnergyModel(obj, hand, weights=weights, active=active)
    t, q, th = model.state_from_grasps([grasp])
    r = model.evaluate(t, q, th, need_grad=False)
    return _breakdown_from(r, model.weights, 0)


def energy_gradient(obj, grasp, hand, weights=None, active=(True, True)):
    """(gradient in flatten() coordinates, EnergyBreakdown) of one grasp."""
    model = EnergyModel(obj, hand, weights=weights, active=active)
    t, q, th = model.state_from_grasps([grasp])
    r = model.evaluate(t, q, th, need_grad=True)
    return r["grad"][0], _breakdown_from(r, model.weights, 0)


def _breakdown_from(result, weights, i):
    return EnergyBreakdown(
        e_dis=float(result["e_dis"][i]), e_fc=float(result["e_fc"][i]),
        e_vew=float(result["e_vew"][i]), e_objpen=float(result["e_objpen"][i]),
        e_selfpen=float(result["e_selfpen"][i]),
        e_bimpen=float(result["e_bimpen"][i]),
        e_joint=float(result["e_joint"][i]), total=float(result["total"][i]))
