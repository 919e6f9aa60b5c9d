"""Hand kinematics: description loading, forward kinematics, point bookkeeping.

A hand is a kinematic tree of rigid links connected by revolute joints, plus
three families of body points used by the energy and the verifier:

- ``surface samples``: a dense point set on the hand's collision surface,
  pulled onto the object by the distance energy;
- ``penetration anchors``: sparse interior/surface points used for the three
  penetration energies and the penetration audit;
- ``contact candidates``: points with outward normals, concentrated on the
  distal finger links and palm, from which grasp contacts are selected.

Description schema (JSON, ``"format": "dualgrasp-hand-v1"``)
-------------------------------------------------------------
::

    {
      "format": "dualgrasp-hand-v1",
      "name": str,
      "links": [
        {
          "name": str,
          "parent": str | null,          # exactly one root (parent null)
          "origin": [x, y, z],           # link frame origin in parent frame
          "capsules": [{"p0": [3], "p1": [3], "radius": r}, ...],
          "surface_samples": [[3], ...],
          "penetration_anchors": [[3], ...],       # >= 1 per link
          "contact_candidates": [{"point": [3], "normal": [3]}, ...]
        }, ...
      ],
      "joints": [
        {"name": str, "link": str,       # the (non-root) link it actuates
         "axis": [3],                    # in the parent-aligned link frame
         "lower": rad, "upper": rad}, ...
      ],
      "palm": {"link": str, "center": [3], "normal": [3]}
    }

All geometry is link-local, in meters. At zero joint angles every link frame is
axis-aligned with its parent; a joint rotates its link about ``axis`` through the
link origin. URDF mapping: our ``origin`` is URDF ``<joint><origin xyz>`` (rpy
must be zero or baked into the child geometry), our ``axis`` is URDF
``<joint><axis>``, our per-link point sets replace URDF collision meshes.

The bundled 22-joint hand (``assets/hand22.json``) mirrors a dexterous
five-finger layout: four fingers with 4 joints each (abduction + 3 flexions),
a 5-joint little finger (extra metacarpal fold), and a 5-joint thumb, with the
wrist folded into the root pose. A 2-joint pincer (``assets/pincer.json``)
serves as a test fixture and loads only with ``allow_small=True``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import rotations

EXPECTED_JOINTS = 22
FORMAT_TAG = "dualgrasp-hand-v1"


class HandLoadError(ValueError):
    """Raised when a hand description fails validation."""


def _unit(v, what):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n < 1e-12:
        raise HandLoadError(f"{what} is not a usable direction: {v.tolist()}")
    return v / n


class HandKinematics:
    """Immutable kinematic tree plus body-point bookkeeping.

    Construct via :meth:`load` (or :meth:`from_dict`). Arrays are laid out
    flat with per-row link indices so batched forward kinematics can gather
    transforms without Python loops.
    """

    def __init__(self, spec, allow_small=False):
        self.name = str(spec.get("name", "hand"))
        links = spec.get("links")
        joints = spec.get("joints")
        if not links:
            raise HandLoadError("hand description has no links")
        if joints is None:
            raise HandLoadError("hand description has no joints array")

        self.link_names = [str(l["name"]) for l in links]
        if len(set(self.link_names)) != len(self.link_names):
            raise HandLoadError("duplicate link names")
        index = {n: i for i, n in enumerate(self.link_names)}
        self.n_links = len(links)

        parent = np.full(self.n_links, -1, dtype=np.int64)
        origin = np.zeros((self.n_links, 3))
        roots = []
        for i, l in enumerate(links):
            p = l.get("parent")
            if p is None:
                roots.append(i)
            else:
                if p not in index:
                    raise HandLoadError(f"link {l['name']!r} has unknown parent {p!r}")
                parent[i] = index[p]
            origin[i] = np.asarray(l.get("origin", (0.0, 0.0, 0.0)), dtype=float)
        if len(roots) != 1:
            raise HandLoadError(f"expected exactly one root link, found {len(roots)}")
        self.root_link = roots[0]
        self.parent_index = parent
        self.link_origin = origin

        # topological order (root first); also detects cycles
        order = []
        state = np.zeros(self.n_links, dtype=np.int64)   # 0 new, 1 active, 2 done

        def visit(i):
            if state[i] == 1:
                raise HandLoadError("link graph contains a cycle")
            if state[i] == 2:
                return
            state[i] = 1
            if parent[i] >= 0:
                visit(parent[i])
            state[i] = 2
            order.append(i)

        for i in range(self.n_links):
            visit(i)
        self.topo_order = np.array(order, dtype=np.int64)

        # joints: exactly one revolute joint per actuated link
        self.joint_names = [str(j["name"]) for j in joints]
        if len(set(self.joint_names)) != len(self.joint_names):
            raise HandLoadError("duplicate joint names")
        self.n_joints = len(joints)
        if self.n_joints != EXPECTED_JOINTS and not allow_small:
            raise HandLoadError(
                f"hand has {self.n_joints} joints, expected {EXPECTED_JOINTS} "
                "(pass allow_small=True for toy hands)")
        self.joint_axis = np.zeros((self.n_joints, 3))
        self.joint_link = np.full(self.n_joints, -1, dtype=np.int64)
        self.lower = np.zeros(self.n_joints)
        self.upper = np.zeros(self.n_joints)
        joint_of_link = np.full(self.n_links, -1, dtype=np.int64)
        for k, j in enumerate(joints):
            ln = j["link"]
            if ln not in index:
                raise HandLoadError(f"joint {j['name']!r} actuates unknown link {ln!r}")
            li = index[ln]
            if li == self.root_link:
                raise HandLoadError("root link cannot be actuated")
            if joint_of_link[li] >= 0:
                raise HandLoadError(f"link {ln!r} has more than one joint")
            joint_of_link[li] = k
            self.joint_link[k] = li
            self.joint_axis[k] = _unit(j["axis"], f"joint {j['name']!r} axis")
            self.lower[k] = float(j["lower"])
            self.upper[k] = float(j["upper"])
            if not self.lower[k] < self.upper[k]:
                raise HandLoadError(
                    f"joint {j['name']!r} has lower {self.lower[k]} >= upper "
                    f"{self.upper[k]}")
        self.joint_of_link = joint_of_link

        # body points, flattened with link ids
        def gather(key, min_per_link=0):
            pts, lid = [], []
            for i, l in enumerate(links):
                rows = l.get(key, [])
                if len(rows) < min_per_link:
                    raise HandLoadError(
                        f"link {l['name']!r} needs >= {min_per_link} {key}")
                for r in rows:
                    pts.append(r)
                    lid.append(i)
            if pts:
                return np.asarray(pts, dtype=float), np.asarray(lid, dtype=np.int64)
            return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)

        self.sample_local, self.sample_link = gather("surface_samples")
        self.anchor_local, self.anchor_link = gather("penetration_anchors",
                                                     min_per_link=1)
        cand_pts, cand_n, cand_lid = [], [], []
        for i, l in enumerate(links):
            for c in l.get("contact_candidates", []):
                cand_pts.append(np.asarray(c["point"], dtype=float))
                cand_n.append(_unit(c["normal"], f"candidate normal on {l['name']!r}"))
                cand_lid.append(i)
        if len(cand_pts) < 4:
            raise HandLoadError("hand needs >= 4 contact candidates")
        self.cand_local = np.asarray(cand_pts)
        self.cand_normal_local = np.asarray(cand_n)
        self.cand_link = np.asarray(cand_lid, dtype=np.int64)

        caps, cap_lid = [], []
        for i, l in enumerate(links):
            for c in l.get("capsules", []):
                r = float(c["radius"])
                if r <= 0:
                    raise HandLoadError(f"non-positive capsule radius on {l['name']!r}")
                caps.append((*c["p0"], *c["p1"], r))
                cap_lid.append(i)
        self.capsules = np.asarray(caps, dtype=float).reshape(-1, 7)
        self.capsule_link = np.asarray(cap_lid, dtype=np.int64)

        palm = spec.get("palm")
        if not palm or palm.get("link") not in index:
            raise HandLoadError("palm block missing or names an unknown link")
        self.palm_link = index[palm["link"]]
        self.palm_center_local = np.asarray(palm["center"], dtype=float)
        self.palm_normal_local = _unit(palm["normal"], "palm normal")

        for arr, what in ((self.link_origin, "link origins"),
                          (self.sample_local, "surface samples"),
                          (self.anchor_local, "penetration anchors"),
                          (self.cand_local, "contact candidates"),
                          (self.capsules, "capsules")):
            if arr.size and not np.isfinite(arr).all():
                raise HandLoadError(f"non-finite coordinates in {what}")

        # joint j moves link l iff l lies in the subtree rooted at j's link
        moves = np.zeros((self.n_joints, self.n_links), dtype=bool)
        for l in self.topo_order:
            jl = joint_of_link[l]
            if parent[l] >= 0:
                moves[:, l] = moves[:, parent[l]]
            if jl >= 0:
                moves[jl, l] = True
        self.joint_moves_link = moves

        # link adjacency (same link or parent/child) for self-penetration pairs
        adj = np.eye(self.n_links, dtype=bool)
        for l in range(self.n_links):
            p = parent[l]
            if p >= 0:
                adj[l, p] = adj[p, l] = True
        self.link_adjacent = adj
        ai, aj = np.triu_indices(len(self.anchor_local), k=1)
        keep = ~adj[self.anchor_link[ai], self.anchor_link[aj]]
        self.selfpen_pairs = np.stack([ai[keep], aj[keep]], axis=1)

        self.mid = 0.5 * (self.lower + self.upper)

    # -- construction --------------------------------------------------------------

    @classmethod
    def from_dict(cls, spec, allow_small=False):
        if spec.get("format") != FORMAT_TAG:
            raise HandLoadError(
                f"unsupported hand format {spec.get('format')!r}, expected "
                f"{FORMAT_TAG!r}")
        return cls(spec, allow_small=allow_small)

    @classmethod
    def load(cls, path, allow_small=False):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                spec = json.load(fh)
        except OSError as e:
            raise HandLoadError(f"cannot read hand file {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise HandLoadError(f"hand file {path} is not valid JSON: {e}") from e
        return cls.from_dict(spec, allow_small=allow_small)

    def clamp(self, thetas):
        """Joint angles clamped to limits (broadcasts over leading axes)."""
        return np.clip(thetas, self.lower, self.upper)


def load_hand(path, allow_small=False):
    """Load and validate a hand description file."""
    return HandKinematics.load(path, allow_small=allow_small)


def default_hand_path(name="hand22"):
    """Filesystem path of a bundled hand asset (``hand22`` or ``pincer``)."""
    return str(resources.files("dualgrasp").joinpath(f"assets/{name}.json"))


@dataclass
class HandConfiguration:
    """Root pose (translation + unit quaternion, scalar first) and joint angles."""

    translation: np.ndarray
    quaternion: np.ndarray
    thetas: np.ndarray

    @classmethod
    def identity(cls, hand):
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]),
                   np.zeros(hand.n_joints))

    def copy(self):
        return HandConfiguration(self.translation.copy(), self.quaternion.copy(),
                                 self.thetas.copy())


@dataclass
class BimanualGrasp:
    """A coordinated pair of hand configurations."""

    left: HandConfiguration
    right: HandConfiguration

    def copy(self):
        return BimanualGrasp(self.left.copy(), self.right.copy())


@dataclass
class PosedHand:
    """World-frame quantities of one hand at one configuration."""

    link_rotations: np.ndarray      # (L, 3, 3)
    link_translations: np.ndarray   # (L, 3)
    surface_samples: np.ndarray     # (S, 3)
    penetration_anchors: np.ndarray  # (A, 3)
    contact_candidates: np.ndarray  # (C, 3)
    candidate_normals: np.ndarray   # (C, 3)
    palm_center: np.ndarray         # (3,)
    palm_normal: np.ndarray         # (3,)
    capsules: np.ndarray            # (K, 7): world p0, p1, radius
    joint_origins: np.ndarray       # (J, 3)
    joint_axes: np.ndarray          # (J, 3) world-frame unit axes


def fk_batch(hand, translations, quaternions, thetas):
    """Batched link transforms.

    translations (B, 3), quaternions (B, 4), thetas (B, J) →
    (rotations (B, L, 3, 3), origins (B, L, 3)).
    """
    t = np.atleast_2d(np.asarray(translations, dtype=float))
    q = np.atleast_2d(np.asarray(quaternions, dtype=float))
    th = np.atleast_2d(np.asarray(thetas, dtype=float))
    b = t.shape[0]
    R = np.zeros((b, hand.n_links, 3, 3))
    T = np.zeros((b, hand.n_links, 3))
    root_R = rotations.quat_to_matrix(q)
    for l in hand.topo_order:
        p = hand.parent_index[l]
        if p < 0:
            Rp, Tp = root_R, t
        else:
            Rp, Tp = R[:, p], T[:, p]
        T[:, l] = Tp + np.einsum("bij,j->bi", Rp, hand.link_origin[l])
        j = hand.joint_of_link[l]
        if j >= 0:
            Rj = rotations.rotvec_to_matrix(
                hand.joint_axis[j][None, :] * th[:, j, None])
            R[:, l] = Rp @ Rj
        else:
            R[:, l] = Rp
    return R, T


def transform_points_batch(R, T, local, link_ids):
    """World positions of per-link local points under batched transforms."""
    return np.einsum("bpij,pj->bpi", R[:, link_ids], local) + T[:, link_ids]


def forward_kinematics(hand, cfg):
    """Pose one hand: world transforms plus all world-frame body points."""
    R, T = fk_batch(hand, cfg.translation[None], cfg.quaternion[None],
                    cfg.thetas[None])
    R, T = R[0], T[0]

    def world(local, ids):
        if len(local) == 0:
            return np.zeros((0, 3))
        return np.einsum("pij,pj->pi", R[ids], local) + T[ids]

    samples = world(hand.sample_local, hand.sample_link)
    anchors = world(hand.anchor_local, hand.anchor_link)
    cands = world(hand.cand_local, hand.cand_link)
    cand_n = np.einsum("pij,pj->pi", R[hand.cand_link], hand.cand_normal_local)
    caps = np.empty_like(hand.capsules)
    if len(caps):
        cl = hand.capsule_link
        caps[:, 0:3] = np.einsum("pij,pj->pi", R[cl], hand.capsules[:, 0:3]) + T[cl]
        caps[:, 3:6] = np.einsum("pij,pj->pi", R[cl], hand.capsules[:, 3:6]) + T[cl]
        caps[:, 6] = hand.capsules[:, 6]
    palm_c = R[hand.palm_link] @ hand.palm_center_local + T[hand.palm_link]
    palm_n = R[hand.palm_link] @ hand.palm_normal_local
    jl = hand.joint_link          # actuated links always have a parent link
    axes = np.einsum("jik,jk->ji", R[hand.parent_index[jl]], hand.joint_axis)
    return PosedHand(R, T, samples, anchors, cands, cand_n, palm_c, palm_n,
                     caps, T[jl], axes)


def joint_violation(hand, cfg):
    """Per-joint limit violation: max(θ−upper, 0) + max(lower−θ, 0)."""
    th = np.asarray(cfg.thetas, dtype=float)
    return np.maximum(th - hand.upper, 0.0) + np.maximum(hand.lower - th, 0.0)


def flatten(g):
    """BimanualGrasp → 56-vector [t_L, axis-angle_L, θ_L, t_R, axis-angle_R, θ_R]."""
    parts = []
    for cfg in (g.left, g.right):
        parts.append(cfg.translation)
        parts.append(rotations.quat_to_rotvec(cfg.quaternion))
        parts.append(cfg.thetas)
    return np.concatenate(parts)


def unflatten(v, hand):
    """Inverse of :func:`flatten` for a given hand (fixes the joint count)."""
    v = np.asarray(v, dtype=float)
    j = hand.n_joints
    if v.shape != (2 * (6 + j),):
        raise ValueError(f"expected a {2 * (6 + j)}-vector, got shape {v.shape}")
    half = 6 + j
    cfgs = []
    for h in range(2):
        s = v[h * half:(h + 1) * half]
        cfgs.append(HandConfiguration(
            s[0:3].copy(), rotations.rotvec_to_quat(s[3:6]), s[6:].copy()))
    return BimanualGrasp(cfgs[0], cfgs[1])
