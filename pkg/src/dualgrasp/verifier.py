"""Quasi-static grasp verification.

A grasp is labeled a success when three independent checks pass:

1. **Penetration audit** — three depth classes, each reported as the maximum
   over its point/primitive set, in millimeters:

   - *hand-object*: ``max(0, -signed distance)`` over every hand body point
     (surface samples and penetration anchors) of both hands;
   - *self-penetration*: capsule-capsule overlap ``max(0, r_i + r_j - d)``
     over non-adjacent link pairs within each hand;
   - *inter-hand*: the same overlap over all left x right capsule pairs.

   The grasp passes when the summed class depths stay within a penetration
   budget (default 1.5 mm).

2. **Contact audit** — every active hand must place at least one of its
   selected contacts within the contact margin of the object surface.

3. **Wrench feasibility** — for a set of gravity directions (trial 0 is
   always straight down, the rest deterministic low-discrepancy directions
   derived from the seed), bounded friction-cone contact forces must balance
   the gravity wrench to within residual tolerances.  Each contact's friction
   cone (coefficient mu) is discretized into ``cone_edges`` edge directions;
   nonnegative edge coefficients, capped so the normal component of each
   contact force stays below ``max_normal_force``, are fit by projected
   gradient (FISTA) on the least-squares wrench balance.

Two monotonicity properties hold by construction and are relied on by the
statistics layer: the tangent frames spanning each cone are independent of
mu, so the discretized cone at a smaller mu is contained in the cone at a
larger mu (success rates are non-decreasing in friction), and a force
balance for mass m scales down to any smaller mass with every cap still
satisfied (success rates are non-increasing in density).

Failure categories are attributed in a fixed order: hand-object penetration,
self-penetration, inter-hand penetration, no-contact, wrench-infeasible.
Wrench trials are skipped when an earlier check already failed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .energy import select_contacts
from .hand import forward_kinematics

__all__ = [
    "VerifyConfig",
    "VerificationReport",
    "GravityTrial",
    "penetration_report",
    "gravity_directions",
    "wrench_feasibility",
    "verify",
]

FAILURE_OBJPEN = "hand-object penetration"
FAILURE_SELFPEN = "self-penetration"
FAILURE_INTERPEN = "inter-hand penetration"
FAILURE_NO_CONTACT = "no-contact"
FAILURE_WRENCH = "wrench-infeasible"


@dataclass
class VerifyConfig:
    """Verification parameters.

    ``friction`` is the Coulomb coefficient mu; ``gravity`` the field
    magnitude (m/s^2); ``trials`` the number of gravity directions tested;
    ``budget_mm`` the total penetration budget in millimeters;
    ``cone_edges`` the friction-cone discretization; ``max_normal_force``
    the per-contact cap (N) on the normal force component;
    ``tol_force``/``tol_torque`` the residual tolerances (N, N*m) below
    which a wrench balance counts as feasible; ``contact_margin`` the
    surface distance (m) within which a selected contact is considered
    established; ``solver_iters`` the projected-gradient iteration cap.
    """

    friction: float = 3.0
    gravity: float = 9.8
    trials: int = 6
    budget_mm: float = 1.5
    cone_edges: int = 8
    max_normal_force: float = 20.0
    tol_force: float = 1.0
    tol_torque: float = 0.1
    contact_margin: float = 0.005
    solver_iters: int = 4000

    def __post_init__(self):
        if not self.friction >= 0.0:
            raise ValueError("friction must be >= 0")
        if not self.gravity >= 0.0:
            raise ValueError("gravity must be >= 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.budget_mm > 0.0:
            raise ValueError("budget_mm must be > 0")
        if self.cone_edges < 3:
            raise ValueError("cone_edges must be >= 3")
        if not self.max_normal_force > 0.0:
            raise ValueError("max_normal_force must be > 0")
        if not (self.tol_force > 0.0 and self.tol_torque > 0.0):
            raise ValueError("residual tolerances must be > 0")
        if not self.contact_margin > 0.0:
            raise ValueError("contact_margin must be > 0")
        if self.solver_iters < 1:
            raise ValueError("solver_iters must be >= 1")


@dataclass
class GravityTrial:
    """One gravity direction's wrench-balance outcome."""

    gravity: np.ndarray          # (3,) unit direction the field points along
    residual_force: float        # N
    residual_torque: float       # N*m
    feasible: bool

    def as_dict(self):
        return {
            "gravity": [float(v) for v in self.gravity],
            "residual_force": float(self.residual_force),
            "residual_torque": float(self.residual_torque),
            "feasible": bool(self.feasible),
        }


@dataclass
class VerificationReport:
    """Outcome of one grasp verification.

    ``label`` is ``"success"`` exactly when the summed penetration depths
    stay within the budget, every active hand has a margin contact, and all
    gravity trials are feasible; otherwise ``failure_category`` names the
    first failing check.  ``trials`` is empty when the wrench stage was
    skipped because an earlier check failed.
    """

    objpen_mm: float
    selfpen_mm: float
    interpen_mm: float
    contacts_per_hand: list
    trials: list = field(default_factory=list)
    label: str = "failure"
    failure_category: str | None = None

    @property
    def success(self):
        return self.label == "success"

    @property
    def total_penetration_mm(self):
        return self.objpen_mm + self.selfpen_mm + self.interpen_mm

    def as_dict(self):
        return {
            "objpen_mm": float(self.objpen_mm),
            "selfpen_mm": float(self.selfpen_mm),
            "interpen_mm": float(self.interpen_mm),
            "contacts_per_hand": [int(c) for c in self.contacts_per_hand],
            "trials": [t.as_dict() for t in self.trials],
            "label": self.label,
            "failure_category": self.failure_category,
        }

    @classmethod
    def from_dict(cls, d):
        trials = [GravityTrial(np.asarray(t["gravity"], dtype=float),
                               float(t["residual_force"]),
                               float(t["residual_torque"]),
                               bool(t["feasible"]))
                  for t in d.get("trials", [])]
        return cls(objpen_mm=float(d["objpen_mm"]),
                   selfpen_mm=float(d["selfpen_mm"]),
                   interpen_mm=float(d["interpen_mm"]),
                   contacts_per_hand=[int(c) for c in d["contacts_per_hand"]],
                   trials=trials, label=str(d["label"]),
                   failure_category=d.get("failure_category"))


# -- penetration audit -------------------------------------------------------------


def _segment_segment_distance(p0, p1, q0, q1):
    """Pairwise distances between segments [p0,p1] and [q0,q1], shape (n,)."""
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    denom = a * e - b * b
    # clamped closest-parameter pair; degenerate (point-like) segments fall
    # out of the same formulas because a or e is ~0 and s/t clamp to [0,1]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 0.0, np.clip((b * f - c * e) / denom, 0.0, 1.0), 0.0)
        t = (b * s + f) / np.where(e > 0.0, e, 1.0)
        t_cl = np.clip(t, 0.0, 1.0)
        s = np.where(a > 0.0, np.clip((b * t_cl - c) / np.where(a > 0.0, a, 1.0),
                                      0.0, 1.0), 0.0)
        t = np.where(e > 0.0, np.clip((b * s + f) / np.where(e > 0.0, e, 1.0),
                                      0.0, 1.0), 0.0)
    cp = p0 + s[:, None] * d1
    cq = q0 + t[:, None] * d2
    return np.linalg.norm(cp - cq, axis=1)


def _capsule_overlap(caps_a, caps_b, pairs):
    """Max surface overlap (m) over the given capsule index pairs; 0 if none."""
    if len(pairs) == 0:
        return 0.0
    i, j = pairs[:, 0], pairs[:, 1]
    d = _segment_segment_distance(caps_a[i, 0:3], caps_a[i, 3:6],
                                  caps_b[j, 0:3], caps_b[j, 3:6])
    overlap = caps_a[i, 6] + caps_b[j, 6] - d
    return float(max(overlap.max(), 0.0))


def _capsule_self_pairs(hand):
    """Capsule index pairs on non-adjacent links (adjacent = same/parent/child)."""
    n = len(hand.capsules)
    i, j = np.triu_indices(n, k=1)
    keep = ~hand.link_adjacent[hand.capsule_link[i], hand.capsule_link[j]]
    return np.stack([i[keep], j[keep]], axis=1)


def _posed_hands(g, hand, active):
    left = forward_kinematics(hand, g.left) if active[0] else None
    right = forward_kinematics(hand, g.right) if active[1] else None
    return left, right


def penetration_report(obj, g, hand, active=(True, True)):
    """(objpen_mm, selfpen_mm, interpen_mm): per-class maximum depths.

    Hand-object depth is measured over both hands' surface samples and
    penetration anchors; the hand-pair classes measure capsule overlap
    (sum of radii minus axis distance).
    """
    left, right = _posed_hands(g, hand, active)
    sides = [p for p in (left, right) if p is not None]

    objpen = 0.0
    for posed in sides:
        pts = np.concatenate([posed.surface_samples, posed.penetration_anchors])
        d = obj.mesh.nearest(pts)[0]
        objpen = max(objpen, float(max(-d.min(), 0.0)))

    pairs = _capsule_self_pairs(hand)
    selfpen = max((_capsule_overlap(p.capsules, p.capsules, pairs)
                   for p in sides), default=0.0)

    interpen = 0.0
    if left is not None and right is not None:
        i, j = np.meshgrid(np.arange(len(left.capsules)),
                           np.arange(len(right.capsules)), indexing="ij")
        cross = np.stack([i.ravel(), j.ravel()], axis=1)
        interpen = _capsule_overlap(left.capsules, right.capsules, cross)

    return objpen * 1000.0, selfpen * 1000.0, interpen * 1000.0


# -- gravity directions ------------------------------------------------------------


def gravity_directions(trials, seed):
    """(trials, 3) unit directions; row 0 is always straight down (-z).

    Rows 1.. are a golden-spiral low-discrepancy covering of the sphere,
    rotated as a set by a seed-derived random rotation so different seeds
    probe different (but equally spread) direction sets.
    """
    dirs = np.zeros((trials, 3))
    dirs[0] = (0.0, 0.0, -1.0)
    n = trials - 1
    if n == 0:
        return dirs
    i = np.arange(n, dtype=float)
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    ang = i * math.pi * (3.0 - math.sqrt(5.0))
    pts = np.stack([r * np.cos(ang), r * np.sin(ang), z], axis=1)

    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x6772)))
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, zq = q
    rot = np.array([
        [1 - 2 * (y * y + zq * zq), 2 * (x * y - w * zq), 2 * (x * zq + w * y)],
        [2 * (x * y + w * zq), 1 - 2 * (x * x + zq * zq), 2 * (y * zq - w * x)],
        [2 * (x * zq - w * y), 2 * (y * zq + w * x), 1 - 2 * (x * x + y * y)],
    ])
    dirs[1:] = pts @ rot.T
    dirs[1:] /= np.linalg.norm(dirs[1:], axis=1, keepdims=True)
    return dirs


# -- wrench feasibility ------------------------------------------------------------


def _tangent_frame(n):
    """Two unit tangents per normal, deterministic and friction-independent."""
    n = np.asarray(n, dtype=float)
    a = np.where(np.abs(n[:, 0:1]) > 0.9, [[0.0, 1.0, 0.0]], [[1.0, 0.0, 0.0]])
    t1 = a - np.einsum("ij,ij->i", a, n)[:, None] * n
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)
    return t1, t2


def _wrench_matrix(points, normals, centroid, mu, k):
    """(6, m*k) map from cone-edge coefficients to the net contact wrench.

    Edge directions push into the object (along -normal); tangent frames do
    not depend on mu, so cones nest as mu grows.
    """
    pts = np.asarray(points, dtype=float)
    nrm = np.asarray(normals, dtype=float)
    t1, t2 = _tangent_frame(nrm)
    ang = 2.0 * math.pi * np.arange(k) / k
    # (m, k, 3): -n + mu * (cos*t1 + sin*t2), normalized
    edges = (-nrm[:, None, :]
             + mu * (np.cos(ang)[None, :, None] * t1[:, None, :]
                     + np.sin(ang)[None, :, None] * t2[:, None, :]))
    edges /= np.linalg.norm(edges, axis=2, keepdims=True)
    arms = pts - np.asarray(centroid, dtype=float)
    torques = np.cross(np.broadcast_to(arms[:, None, :], edges.shape), edges)
    A = np.concatenate([edges.reshape(-1, 3).T, torques.reshape(-1, 3).T], axis=0)
    return A


def _project_capped(alpha, k, cap_sum):
    """Project onto {alpha >= 0, per-contact coefficient sums <= cap_sum}."""
    a = np.maximum(alpha, 0.0).reshape(-1, k)
    over = a.sum(axis=1) > cap_sum
    for row in np.nonzero(over)[0]:
        # Euclidean projection onto the simplex {x >= 0, sum x = cap_sum}
        u = np.sort(a[row])[::-1]
        css = np.cumsum(u) - cap_sum
        idx = np.arange(1, k + 1)
        rho = idx[u - css / idx > 0.0][-1]
        tau = css[rho - 1] / rho
        a[row] = np.maximum(a[row] - tau, 0.0)
    return a.ravel()


def _solve_balance(A, b, k, cap_sum, tol_force, tol_torque, iters):
    """Bounded NNLS by FISTA projected gradient; returns (alpha, residual6).

    Stops early once the residual is certified well inside tolerance or the
    iterates are stationary; tracks the best iterate because the accelerated
    sequence is not monotone.
    """
    m = A.shape[1]
    lip = 2.0 * np.linalg.norm(A, 2) ** 2
    step = 1.0 / lip if lip > 0.0 else 1.0
    x = np.zeros(m)
    zv = x.copy()
    t_k = 1.0
    best = x
    best_obj = np.inf
    for it in range(iters):
        r = A @ zv - b
        grad = 2.0 * (A.T @ r)
        x_new = _project_capped(zv - step * grad, k, cap_sum)
        obj = float(np.sum((A @ x_new - b) ** 2))
        if obj < best_obj:
            best_obj = obj
            best = x_new
            rb = A @ best - b
            if (np.linalg.norm(rb[0:3]) <= 0.25 * tol_force
                    and np.linalg.norm(rb[3:6]) <= 0.25 * tol_torque):
                break
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_k * t_k))
        zv = x_new + ((t_k - 1.0) / t_new) * (x_new - x)
        if np.linalg.norm(x_new - x) <= 1e-14 * max(1.0, np.linalg.norm(x_new)):
            x = x_new
            break
        x, t_k = x_new, t_new
    return best, A @ best - b


def wrench_feasibility(obj, contacts, gravity, cfg):
    """(feasible, (residual_force, residual_torque)) for one gravity direction.

    ``gravity`` is the unit direction the field points along; the balance
    target is the object's weight ``mass * cfg.gravity`` in that direction.
    An empty contact set is infeasible with the full gravity residual.
    """
    g = np.asarray(gravity, dtype=float)
    weight = obj.mass * cfg.gravity
    b = np.concatenate([-weight * g, np.zeros(3)])
    if len(contacts.points) == 0:
        return False, (float(weight), 0.0)
    A = _wrench_matrix(contacts.points, contacts.normals, obj.centroid,
                       cfg.friction, cfg.cone_edges)
    cap_sum = cfg.max_normal_force * math.sqrt(1.0 + cfg.friction ** 2)
    _, r = _solve_balance(A, b, cfg.cone_edges, cap_sum,
                          cfg.tol_force, cfg.tol_torque, cfg.solver_iters)
    rf = float(np.linalg.norm(r[0:3]))
    rt = float(np.linalg.norm(r[3:6]))
    return (rf <= cfg.tol_force and rt <= cfg.tol_torque), (rf, rt)


# -- top-level verification --------------------------------------------------------


def _margin_contacts(obj, left, right, margin):
    """Margin-filtered ContactSet plus per-active-hand margin contact counts."""
    contacts = select_contacts(left, right, obj)
    counts = []
    keep_rows = []
    row = 0
    for flag, posed in ((0, left), (1, right)):
        if posed is None:
            continue
        n = int(np.sum(contacts.hand_flags == flag))
        idx = contacts.anchor_indices[row:row + n]
        d = obj.mesh.nearest(posed.contact_candidates[idx])[0]
        within = np.abs(d) <= margin
        counts.append(int(within.sum()))
        keep_rows.extend(row + np.nonzero(within)[0])
        row += n
    keep = np.asarray(keep_rows, dtype=int)
    filtered = type(contacts)(contacts.points[keep], contacts.normals[keep],
                              contacts.hand_flags[keep],
                              contacts.anchor_indices[keep])
    return filtered, counts


def verify(obj, g, hand, cfg=None, seed=0, active=(True, True)):
    """Full verification of one grasp; deterministic given inputs and seed.

    Checks run in a fixed order — penetration classes, contact presence,
    then wrench trials — and the first failure names the category; wrench
    trials are skipped once an earlier check fails.
    """
    cfg = cfg or VerifyConfig()
    active = tuple(bool(a) for a in active)
    if not any(active):
        raise ValueError("at least one hand must be active")

    objpen, selfpen, interpen = penetration_report(obj, g, hand, active=active)
    report = VerificationReport(objpen_mm=objpen, selfpen_mm=selfpen,
                                interpen_mm=interpen, contacts_per_hand=[])

    left, right = _posed_hands(g, hand, active)
    contacts, counts = _margin_contacts(obj, left, right, cfg.contact_margin)
    report.contacts_per_hand = counts

    if report.total_penetration_mm > cfg.budget_mm:
        depths = [(objpen, FAILURE_OBJPEN), (selfpen, FAILURE_SELFPEN),
                  (interpen, FAILURE_INTERPEN)]
        over = [c for d, c in depths if d > cfg.budget_mm]
        nonzero = [c for d, c in depths if d > 0.0]
        report.failure_category = (over or nonzero)[0]
        return report

    if min(counts) < 1:
        report.failure_category = FAILURE_NO_CONTACT
        return report

    dirs = gravity_directions(cfg.trials, seed)
    all_feasible = True
    for u in dirs:
        feasible, (rf, rt) = wrench_feasibility(obj, contacts, u, cfg)
        report.trials.append(GravityTrial(u.copy(), rf, rt, feasible))
        all_feasible = all_feasible and feasible

    if not all_feasible:
        report.failure_category = FAILURE_WRENCH
        return report

    report.label = "success"
    return report
