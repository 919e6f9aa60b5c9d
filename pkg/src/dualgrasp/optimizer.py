"""Annealed MALA over bimanual grasp states.

The proposal is the Langevin discretization x' = x − η∘∇E(x) + √(2ητ)∘ξ with
per-block step sizes η (translation, rotation, joints) and temperature τ,
accepted with the Metropolis ratio min(1, exp((E(x) − E(x'))/τ) ·
q(x|x')/q(x'|x)). Rotations live on the quaternion manifold: their three
state coordinates are tangent-space (axis-angle) increments composed onto the
current quaternion, and the reverse increment of such a move is exactly its
negation, so the Gaussian proposal densities stay valid in increment
coordinates.

Each candidate chain draws from its own generator seeded by (seed, candidate
index) in a fixed per-step order, so results are independent of how
candidates are batched. ``optimize`` runs one chain; ``optimize_batch`` runs
many in lockstep sharing each step's batched energy evaluation.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import rotations as rot
from .energy import EnergyBreakdown, EnergyModel, EnergyWeights, \
    _breakdown_from
from .hand import HandConfiguration, flatten, forward_kinematics


@dataclass(frozen=True)
class OptimizerConfig:
    """MALA settings.

    steps: chain length (100 is used as the post-sampling refinement length)
    step_translation / step_rotation / step_joint: per-block Langevin step
        sizes η (m²-, rad²-scaled; drift is η·gradient, noise std √(2ητ)).
        Calibrated so the largest per-step drift stays below the width of the
        penetration band (δ = 5 mm): near-contact gradients reach ~2e6 on the
        translation block, so η_t = 4e-9 keeps the approach drift under ~2 mm
        per step. Larger steps jump across the band in one move, land deep
        inside, and the barrier gradient then overshoots outward — every
        proposal gets rejected and the chain freezes buried. step_joint
        applies to the lightest joint; heavier joints are Jacobi-scaled down
        (see ``joint_step_scales``).
    temperature: initial τ (τ = 0 disables noise and accepts only decreases)
    anneal: geometric factor applied to τ once per step
    seed: base seed; candidate i draws from substream (seed, i)
    """

    steps: int = 10000
    step_translation: float = 4e-9
    step_rotation: float = 4e-8
    step_joint: float = 2e-5
    temperature: float = 1.0
    anneal: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if min(self.step_translation, self.step_rotation,
               self.step_joint) <= 0.0:
            raise ValueError("step sizes must be positive")
        if self.temperature < 0.0:
            raise ValueError("temperature must be nonnegative")
        if not 0.0 < self.anneal <= 1.0:
            raise ValueError("anneal factor must be in (0, 1]")

    def eta56(self, hand=None, n_joints=22):
        """Per-coordinate step sizes for a two-hand state vector.

        With a HandKinematics the joint block is Jacobi-scaled per joint
        (see ``joint_step_scales``); the configured step_joint applies to the
        lightest joint and heavier joints get proportionally smaller steps.
        """
        if hand is not None:
            joints = self.step_joint * joint_step_scales(hand)
        else:
            joints = np.full(n_joints, self.step_joint)
        per_hand = np.concatenate([
            np.full(3, self.step_translation),
            np.full(3, self.step_rotation),
            joints])
        return np.concatenate([per_hand, per_hand])


@dataclass
class OptTrace:
    """Per-step record of one chain.

    ``energy[k]`` is the chain's energy after step k (post-clamp state), and
    ``accepted[k]`` whether step k's proposal was taken. ``breakdown`` is the
    term-by-term energy of the returned (best-visited) state.
    """

    energy: np.ndarray
    accepted: np.ndarray
    best_energy: float
    breakdown: EnergyBreakdown
    accepted_count: int = field(init=False)

    def __post_init__(self):
        self.accepted_count = int(np.count_nonzero(self.accepted))

    def acceptance_rate(self):
        return self.accepted_count / max(len(self.accepted), 1)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "energy", "accepted"])
            for k, (e, a) in enumerate(zip(self.energy, self.accepted)):
                w.writerow([k, repr(float(e)), int(a)])


def joint_step_scales(hand):
    """Fixed per-joint scales in (0, 1] for the joint step block.

    A joint's energy gradient grows with the amount of hand surface it swings
    and the lever it swings it on: a root/wrist joint moves every sample at
    palm length while a distal joint moves a fingertip's worth. One shared
    joint step size therefore either freezes the fingertips or makes root
    proposals overshoot, so the joint block is interpreted per joint: each
    step is scaled by the inverse lever-mass (sum over moved surface samples
    of their distance to the joint origin, measured once at the mid pose),
    normalized so the lightest joint runs at the configured step size. The
    scales depend only on the hand model, keeping proposals deterministic.
    """
    cfg0 = HandConfiguration(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]),
                             hand.mid.copy())
    posed = forward_kinematics(hand, cfg0)
    samples = posed.surface_samples
    origins = posed.joint_origins
    lever = np.empty(hand.n_joints)
    for j in range(hand.n_joints):
        moved = hand.joint_moves_link[j, hand.sample_link]
        lever[j] = np.linalg.norm(samples[moved] - origins[j], axis=1).sum()
    lever = np.maximum(lever, 1e-12)
    return lever.min() / lever


# -- generic Euclidean MALA step (used directly on plain R^n problems) -------------


def mala_log_acceptance(x, y, e_x, e_y, g_x, g_y, eta, tau):
    """Log of the MALA acceptance ratio for a Euclidean proposal x → y.

    q(y|x) = N(y; x − η∘g_x, 2ητ); the ratio folds the target and both
    proposal densities. τ = 0 degenerates to accept-iff-lower (±inf here).
    """
    eta = np.broadcast_to(np.asarray(eta, dtype=float), np.shape(x))
    if tau <= 0.0:
        return np.inf if e_y < e_x else -np.inf
    r_fwd = (y - x) + eta * g_x
    r_bwd = (x - y) + eta * g_y
    return (e_x - e_y) / tau \
        + (np.sum(r_fwd ** 2 / eta) - np.sum(r_bwd ** 2 / eta)) / (4.0 * tau)


def mala_step(state, energy, grad, cfg, rng, temperature=None, eta=None):
    """One Euclidean MALA step on a plain vector state.

    ``energy``/``grad`` are callables on vectors. Returns (new_state,
    accepted). Non-finite proposal energy auto-rejects. At τ = 0 the noise
    vanishes (std √(2ητ)) and the move is accepted only if it lowers energy.
    """
    x = np.asarray(state, dtype=float)
    tau = cfg.temperature if temperature is None else temperature
    if eta is None:
        eta = np.full(x.shape, cfg.step_joint)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), x.shape)
    g_x = np.asarray(grad(x), dtype=float)
    e_x = float(energy(x))
    y = x - eta * g_x + np.sqrt(2.0 * eta * max(tau, 0.0)) \
        * rng.standard_normal(x.shape)
    e_y = float(energy(y))
    u = rng.random()
    if not np.isfinite(e_y):
        return x.copy(), False
    g_y = np.asarray(grad(y), dtype=float)
    if not np.all(np.isfinite(g_y)):
        return x.copy(), False
    log_a = mala_log_acceptance(x, y, e_x, e_y, g_x, g_y, eta, tau)
    if np.log(max(u, 1e-300)) < log_a:
        return y, True
    return x.copy(), False


# -- lockstep batched chains over grasp states --------------------------------------


class _Chains:
    """State arrays for B lockstep chains."""

    def __init__(self, model, grasps, seed):
        self.model = model
        self.t, self.q, self.th = model.state_from_grasps(grasps)
        self.b = len(grasps)
        self.nj = model.hand.n_joints
        self.rngs = [np.random.default_rng(np.random.SeedSequence((seed, i)))
                     for i in range(self.b)]
        res = model.evaluate(self.t, self.q, self.th)
        self.e = res["total"].copy()
        self.g = res["grad"].copy()
        self.best_e = self.e.copy()
        self.best_t = self.t.copy()
        self.best_q = self.q.copy()
        self.best_th = self.th.copy()

    def split(self, v):
        """(B, 56) → translation (B,2,3), rotation (B,2,3), joints (B,2,J)."""
        v = v.reshape(self.b, 2, 28)
        return v[:, :, 0:3], v[:, :, 3:6], v[:, :, 6:]


def _propose(ch, eta56, tau):
    """Draw per-candidate noise and build the tangent-space move."""
    xi = np.stack([r.standard_normal(56) for r in ch.rngs])
    us = np.array([r.random() for r in ch.rngs])
    delta = -eta56 * ch.g + np.sqrt(2.0 * eta56 * tau) * xi
    d_t, d_r, d_th = ch.split(delta)
    y_t = ch.t + d_t
    y_th = ch.th + d_th
    y_q = np.empty_like(ch.q)
    for s in range(2):
        y_q[:, s] = rot.apply_increment(ch.q[:, s], d_r[:, s])
    return delta, us, y_t, y_q, y_th


def _mala_pass(ch, eta56, tau, res_y, delta, us, y_t, y_q, y_th):
    """Vectorized accept/reject; returns the accepted-row mask."""
    e_y, g_y = res_y["total"], res_y["grad"]
    finite = np.isfinite(e_y) & np.all(np.isfinite(g_y), axis=1)
    if tau <= 0.0:
        return finite & (e_y < ch.e)
    r_fwd = delta + eta56 * ch.g
    r_bwd = -delta + eta56 * g_y
    log_a = (ch.e - e_y) / tau + (
        np.sum(r_fwd ** 2 / eta56, axis=1)
        - np.sum(r_bwd ** 2 / eta56, axis=1)) / (4.0 * tau)
    with np.errstate(invalid="ignore"):
        ok = np.log(np.maximum(us, 1e-300)) < log_a
    return finite & ok


def optimize_batch(model, grasps, cfg=None):
    """Run one lockstep MALA chain per initial grasp; list of (grasp, trace).

    Every chain's randomness comes from substream (cfg.seed, chain index), so
    a chain's trajectory does not depend on which other chains share the
    batch. Joints are clamped after each accepted step; when clamping moves a
    state, that row is re-evaluated so recorded energies always match their
    recorded states.
    """
    cfg = cfg or OptimizerConfig()
    if not grasps:
        return []
    lower, upper = model.hand.lower, model.hand.upper
    ch = _Chains(model, grasps, cfg.seed)
    eta56 = cfg.eta56(hand=model.hand)
    energy_log = np.empty((cfg.steps, ch.b))
    accept_log = np.zeros((cfg.steps, ch.b), dtype=bool)
    tau = cfg.temperature
    for k in range(cfg.steps):
        delta, us, y_t, y_q, y_th = _propose(ch, eta56, tau)
        res_y = model.evaluate(y_t, y_q, y_th)
        acc = _mala_pass(ch, eta56, tau, res_y, delta, us, y_t, y_q, y_th)
        if acc.any():
            ch.t[acc] = y_t[acc]
            ch.q[acc] = y_q[acc]
            ch.e[acc] = res_y["total"][acc]
            ch.g[acc] = res_y["grad"][acc]
            clamped = np.clip(y_th, lower, upper)
            ch.th[acc] = clamped[acc]
            moved = acc & np.any(clamped != y_th, axis=(1, 2))
            if moved.any():
                res_c = model.evaluate(ch.t[moved], ch.q[moved],
                                       ch.th[moved])
                ch.e[moved] = res_c["total"]
                ch.g[moved] = res_c["grad"]
            better = ch.e < ch.best_e
            if better.any():
                ch.best_e[better] = ch.e[better]
                ch.best_t[better] = ch.t[better]
                ch.best_q[better] = ch.q[better]
                ch.best_th[better] = ch.th[better]
        energy_log[k] = ch.e
        accept_log[k] = acc
        tau *= cfg.anneal
    final = model.evaluate(ch.best_t, ch.best_q, ch.best_th,
                           need_grad=False)
    out = []
    for i, g in enumerate(model.grasps_from_state(ch.best_t, ch.best_q,
                                                  ch.best_th)):
        trace = OptTrace(energy=energy_log[:, i].copy(),
                         accepted=accept_log[:, i].copy(),
                         best_energy=float(ch.best_e[i]),
                         breakdown=_breakdown_from(final, model.weights, i))
        out.append((g, trace))
    return out


_DEFAULT_HAND = None


def _default_hand():
    global _DEFAULT_HAND
    if _DEFAULT_HAND is None:
        from .hand import default_hand_path, load_hand
        _DEFAULT_HAND = load_hand(default_hand_path("hand22"))
    return _DEFAULT_HAND


def optimize(obj, init, weights=None, cfg=None, hand=None, model=None):
    """One annealed MALA chain from ``init``; (best grasp, trace)."""
    if model is None:
        model = EnergyModel(obj, hand or _default_hand(),
                            weights=weights or EnergyWeights())
    [(g, trace)] = optimize_batch(model, [init], cfg=cfg)
    return g, trace
