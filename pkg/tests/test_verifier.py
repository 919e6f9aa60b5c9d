"""Verifier tests: penetration audit, gravity trials, and the wrench oracle.

The bounded cone-force solver is checked against independent references:
scipy's lsq_linear for the uncapped nonnegative fit, SLSQP for the capped
fit, and analytic pinch scenarios with known feasibility.
"""

import json
import math

import numpy as np
import pytest
from scipy.optimize import lsq_linear, minimize

from dualgrasp import geometry, verifier
from dualgrasp.energy import ContactSet
from dualgrasp.hand import BimanualGrasp, forward_kinematics
from dualgrasp.initializer import initialize_batch
from dualgrasp.verifier import (VerifyConfig, gravity_directions,
                                penetration_report, verify,
                                wrench_feasibility)


@pytest.fixture(scope="module")
def unit_cube_obj():
    # 0.1 m cube at density 1000 -> mass exactly 1 kg
    return geometry.ObjectModel("cube", geometry.make_box((0.1, 0.1, 0.1)),
                                density=1000.0)


@pytest.fixture(scope="module")
def hover_grasp(sphere_obj, hand22):
    return initialize_batch(sphere_obj, hand22, 1, seed=3)[0]


def pinch_contacts(x=0.05):
    # antipodal contacts on the +-x faces of a cube, outward normals
    pts = np.array([[x, 0.0, 0.0], [-x, 0.0, 0.0]])
    nrm = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    return ContactSet(pts, nrm, np.array([0, 1]), np.array([0, 0]))


# -- config --------------------------------------------------------------------------


def test_config_validation():
    VerifyConfig()
    for bad in (dict(friction=-0.1), dict(trials=0), dict(budget_mm=0.0),
                dict(cone_edges=2), dict(max_normal_force=0.0),
                dict(tol_force=0.0), dict(tol_torque=-1.0),
                dict(contact_margin=0.0), dict(solver_iters=0)):
        with pytest.raises(ValueError):
            VerifyConfig(**bad)


# -- segment/capsule geometry --------------------------------------------------------


def seg_cases():
    return [
        # crossing perpendicular, closest at midpoints, distance 1
        ([0, 0, 0], [2, 0, 0], [1, -1, 1], [1, 1, 1], 1.0),
        # parallel, laterally offset
        ([0, 0, 0], [1, 0, 0], [0, 0.5, 0], [1, 0.5, 0], 0.5),
        # collinear with a gap
        ([0, 0, 0], [1, 0, 0], [1.75, 0, 0], [3, 0, 0], 0.75),
        # endpoint to interior
        ([0, 0, 0], [1, 0, 0], [2, -1, 0], [2, 1, 0], 1.0),
        # degenerate: point vs segment
        ([0.5, 0.3, 0], [0.5, 0.3, 0], [0, 0, 0], [1, 0, 0], 0.3),
        # both degenerate: point vs point
        ([0, 0, 0], [0, 0, 0], [3, 4, 0], [3, 4, 0], 5.0),
    ]


def test_segment_distance_analytic():
    cases = seg_cases()
    p0, p1, q0, q1 = (np.array([c[i] for c in cases], dtype=float)
                      for i in range(4))
    want = np.array([c[4] for c in cases])
    got = verifier._segment_segment_distance(p0, p1, q0, q1)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_segment_distance_vs_dense_sampling(rng):
    n = 24
    p0 = rng.uniform(-1, 1, (n, 3))
    p1 = rng.uniform(-1, 1, (n, 3))
    q0 = rng.uniform(-1, 1, (n, 3))
    q1 = rng.uniform(-1, 1, (n, 3))
    got = verifier._segment_segment_distance(p0, p1, q0, q1)
    s = np.linspace(0.0, 1.0, 401)
    for i in range(n):
        a = p0[i] + s[:, None] * (p1[i] - p0[i])
        b = q0[i] + s[:, None] * (q1[i] - q0[i])
        brute = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2).min()
        assert got[i] <= brute + 1e-12
        assert brute - got[i] <= 2e-2  # grid resolution slack


def test_capsule_overlap_constructed():
    caps = np.array([
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.02],   # along x
        [0.5, 0.03, -1.0, 0.5, 0.03, 1.0, 0.02],  # along z, 0.03 away
    ])
    pairs = np.array([[0, 1]])
    got = verifier._capsule_overlap(caps, caps, pairs)
    assert got == pytest.approx(0.04 - 0.03, abs=1e-15)
    # separated pair reports zero, not negative
    caps[1, 1] = caps[1, 4] = 0.2
    assert verifier._capsule_overlap(caps, caps, pairs) == 0.0


def test_capsule_self_pairs_structure(hand22):
    pairs = verifier._capsule_self_pairs(hand22)
    assert len(pairs) > 0
    li = hand22.capsule_link[pairs[:, 0]]
    lj = hand22.capsule_link[pairs[:, 1]]
    assert not np.any(hand22.link_adjacent[li, lj])


# -- penetration audit ---------------------------------------------------------------


def test_clean_scene_reports_zero(sphere_obj, hand22, hover_grasp):
    objpen, selfpen, interpen = penetration_report(sphere_obj, hover_grasp,
                                                   hand22)
    assert objpen == 0.0
    assert selfpen == 0.0
    assert interpen == 0.0


def inject_object_penetration(obj, grasp, hand, depth):
    """Translate the left hand toward the centroid until its deepest body
    point sits exactly ``depth`` inside the object (bisection)."""
    g = grasp.copy()
    posed = forward_kinematics(hand, g.left)
    direction = obj.centroid - posed.palm_center
    direction = direction / np.linalg.norm(direction)
    base = g.left.translation.copy()

    def min_signed_distance(t):
        g.left.translation = base + t * direction
        p = forward_kinematics(hand, g.left)
        pts = np.concatenate([p.surface_samples, p.penetration_anchors])
        return float(obj.mesh.nearest(pts)[0].min())

    lo, hi = 0.0, float(np.linalg.norm(obj.centroid - posed.palm_center))
    assert min_signed_distance(lo) > -depth
    assert min_signed_distance(hi) < -depth
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if min_signed_distance(mid) > -depth:
            lo = mid
        else:
            hi = mid
    min_signed_distance(hi)  # leave g at a state with depth just past target
    return g


def test_injected_two_mm_fails_objpen(sphere_obj, hand22, hover_grasp):
    g = inject_object_penetration(sphere_obj, hover_grasp, hand22, 0.002)
    objpen, _, _ = penetration_report(sphere_obj, g, hand22)
    assert objpen == pytest.approx(2.0, abs=1e-6)
    report = verify(sphere_obj, g, hand22, VerifyConfig(), seed=0)
    assert report.label == "failure"
    assert report.failure_category == verifier.FAILURE_OBJPEN
    assert report.trials == []  # wrench stage skipped


def test_injected_one_mm_passes_the_budget(sphere_obj, hand22, hover_grasp):
    g = inject_object_penetration(sphere_obj, hover_grasp, hand22, 0.001)
    report = verify(sphere_obj, g, hand22, VerifyConfig(), seed=0)
    assert report.objpen_mm == pytest.approx(1.0, abs=1e-6)
    assert report.total_penetration_mm <= 1.5
    assert report.failure_category not in (verifier.FAILURE_OBJPEN,
                                           verifier.FAILURE_SELFPEN,
                                           verifier.FAILURE_INTERPEN)


def test_coincident_hands_fail_interpenetration(sphere_obj, hand22,
                                                hover_grasp):
    g = BimanualGrasp(hover_grasp.left.copy(), hover_grasp.left.copy())
    _, _, interpen = penetration_report(sphere_obj, g, hand22)
    assert interpen > 10.0
    report = verify(sphere_obj, g, hand22, VerifyConfig(), seed=0)
    assert report.failure_category == verifier.FAILURE_INTERPEN
    assert report.trials == []


def test_unimanual_has_no_interpenetration(sphere_obj, hand22, hover_grasp):
    objpen, selfpen, interpen = penetration_report(
        sphere_obj, hover_grasp, hand22, active=(True, False))
    assert interpen == 0.0


# -- gravity directions --------------------------------------------------------------


def test_gravity_directions_contract():
    d = gravity_directions(6, seed=7)
    assert d.shape == (6, 3)
    np.testing.assert_array_equal(d[0], [0.0, 0.0, -1.0])
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(d, gravity_directions(6, seed=7))
    assert not np.array_equal(d[1:], gravity_directions(6, seed=8)[1:])
    dots = d[1:] @ d[1:].T
    np.fill_diagonal(dots, -1.0)
    assert dots.max() < 0.5  # low-discrepancy: no two directions bunch up


def test_single_trial_is_straight_down():
    d = gravity_directions(1, seed=0)
    np.testing.assert_array_equal(d, [[0.0, 0.0, -1.0]])


# -- wrench feasibility --------------------------------------------------------------


def test_zero_gravity_is_trivially_feasible(unit_cube_obj):
    cfg = VerifyConfig(gravity=0.0)
    ok, (rf, rt) = wrench_feasibility(unit_cube_obj, pinch_contacts(),
                                      (0.0, 0.0, -1.0), cfg)
    assert ok
    assert rf == 0.0 and rt == 0.0


def test_empty_contacts_infeasible_with_full_gravity(unit_cube_obj):
    empty = ContactSet(np.zeros((0, 3)), np.zeros((0, 3)),
                       np.zeros(0, int), np.zeros(0, int))
    ok, (rf, rt) = wrench_feasibility(unit_cube_obj, empty,
                                      (0.0, 0.0, -1.0), VerifyConfig())
    assert not ok
    assert rf == pytest.approx(unit_cube_obj.mass * 9.8)


def test_antipodal_pinch_feasible(unit_cube_obj):
    # 1 kg cube, mu=3, 50 N cap: 4.9 N tangential per side is deep inside
    # the cone, so the balance is exact
    cfg = VerifyConfig(friction=3.0, max_normal_force=50.0)
    for u in gravity_directions(6, seed=1):
        ok, (rf, rt) = wrench_feasibility(unit_cube_obj, pinch_contacts(),
                                          u, cfg)
        assert ok, (u, rf, rt)


def test_frictionless_pinch_cannot_hold(unit_cube_obj):
    cfg = VerifyConfig(friction=0.0)
    ok, (rf, _) = wrench_feasibility(unit_cube_obj, pinch_contacts(),
                                     (0.0, 0.0, -1.0), cfg)
    assert not ok
    # x-only forces cannot touch the vertical component at all
    assert rf == pytest.approx(unit_cube_obj.mass * 9.8, rel=1e-6)


def test_force_cap_binds(unit_cube_obj):
    down = (0.0, 0.0, -1.0)
    # max vertical force per contact is 3 * cap (mu/sqrt(1+mu^2) of the
    # coefficient budget cap*sqrt(1+mu^2)); two contacts must lift 9.8 N
    tight = VerifyConfig(friction=3.0, max_normal_force=1.0)
    ok_tight, _ = wrench_feasibility(unit_cube_obj, pinch_contacts(),
                                     down, tight)
    assert not ok_tight
    loose = VerifyConfig(friction=3.0, max_normal_force=2.0)
    ok_loose, _ = wrench_feasibility(unit_cube_obj, pinch_contacts(),
                                     down, loose)
    assert ok_loose


def test_friction_monotonicity(unit_cube_obj):
    down = (0.0, 0.0, -1.0)
    flags = []
    for mu in (0.05, 0.1, 0.245, 0.3, 0.5, 1.0, 3.0):
        cfg = VerifyConfig(friction=mu, max_normal_force=20.0)
        ok, _ = wrench_feasibility(unit_cube_obj, pinch_contacts(), down, cfg)
        flags.append(ok)
    assert flags == sorted(flags)  # False... then True...
    assert not flags[0] and flags[-1]


def test_mass_monotonicity():
    down = (0.0, 0.0, -1.0)
    cfg = VerifyConfig(friction=3.0, max_normal_force=1.5)
    flags = []
    for rho in (250.0, 1000.0, 4000.0):
        obj = geometry.ObjectModel("cube",
                                   geometry.make_box((0.1, 0.1, 0.1)),
                                   density=rho)
        ok, _ = wrench_feasibility(obj, pinch_contacts(), down, cfg)
        flags.append(ok)
    assert flags == sorted(flags, reverse=True)
    assert flags[0] and not flags[-1]


# -- solver vs independent oracles ---------------------------------------------------


def random_wrench_problem(rng, m, k, mu=1.5):
    pts = rng.standard_normal((m, 3))
    pts *= 0.1 / np.linalg.norm(pts, axis=1, keepdims=True)
    nrm = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    A = verifier._wrench_matrix(pts, nrm, np.zeros(3), mu, k)
    b = np.concatenate([rng.standard_normal(3) * 5.0,
                        rng.standard_normal(3) * 0.2])
    return A, b


def test_uncapped_solver_matches_lsq_linear(rng):
    for m in (2, 3, 5):
        A, b = random_wrench_problem(rng, m, 8)
        _, r = verifier._solve_balance(A, b, 8, 1e9, 1e-12, 1e-12, 20000)
        ref = lsq_linear(A, b, bounds=(0.0, np.inf))
        got = float(np.linalg.norm(r))
        want = float(np.linalg.norm(A @ ref.x - b))
        assert got <= want + 1e-6
        assert abs(got - want) <= 1e-5 * max(1.0, np.linalg.norm(b))


def test_capped_solver_matches_slsqp(rng):
    k = 4
    for m in (2, 3):
        A, b = random_wrench_problem(rng, m, k)
        cap = 2.0
        _, r = verifier._solve_balance(A, b, k, cap, 1e-12, 1e-12, 20000)
        got = float(np.sum(r * r))

        cons = [{"type": "ineq",
                 "fun": (lambda a, i=i: cap - a[i * k:(i + 1) * k].sum())}
                for i in range(m)]
        ref = minimize(lambda a: np.sum((A @ a - b) ** 2), np.zeros(m * k),
                       jac=lambda a: 2.0 * A.T @ (A @ a - b),
                       bounds=[(0.0, None)] * (m * k), constraints=cons,
                       method="SLSQP", options={"maxiter": 500,
                                                "ftol": 1e-14})
        assert got <= ref.fun + 1e-8
        assert ref.fun <= got + 1e-3 * max(1.0, got)


def test_projection_matches_qp_oracle(rng):
    k = 5
    for _ in range(6):
        a = rng.standard_normal(k) * 2.0
        got = verifier._project_capped(a.copy(), k, 1.0)
        ref = minimize(lambda x: np.sum((x - a) ** 2), np.zeros(k),
                       bounds=[(0.0, None)] * k,
                       constraints=[{"type": "ineq",
                                     "fun": lambda x: 1.0 - x.sum()}],
                       method="SLSQP", options={"ftol": 1e-14})
        np.testing.assert_allclose(got, ref.x, atol=1e-6)
        assert got.min() >= 0.0
        assert got.sum() <= 1.0 + 1e-12


def test_projection_identity_inside_the_set():
    a = np.array([0.1, 0.2, 0.0, 0.3])
    np.testing.assert_array_equal(verifier._project_capped(a.copy(), 4, 1.0),
                                  a)


# -- verify() ------------------------------------------------------------------------


def test_hovering_hands_fail_no_contact(sphere_obj, hand22, hover_grasp):
    report = verify(sphere_obj, hover_grasp, hand22, VerifyConfig(), seed=0)
    assert report.label == "failure"
    assert report.failure_category == verifier.FAILURE_NO_CONTACT
    assert report.contacts_per_hand == [0, 0]
    assert report.trials == []
    assert report.total_penetration_mm == 0.0


def test_verify_is_deterministic(sphere_obj, hand22, hover_grasp):
    a = verify(sphere_obj, hover_grasp, hand22, VerifyConfig(), seed=11)
    b = verify(sphere_obj, hover_grasp, hand22, VerifyConfig(), seed=11)
    assert a.as_dict() == b.as_dict()


def test_verify_requires_an_active_hand(sphere_obj, hand22, hover_grasp):
    with pytest.raises(ValueError):
        verify(sphere_obj, hover_grasp, hand22, VerifyConfig(),
               active=(False, False))


def test_unimanual_verify_counts_one_hand(sphere_obj, hand22, hover_grasp):
    report = verify(sphere_obj, hover_grasp, hand22, VerifyConfig(), seed=0,
                    active=(True, False))
    assert len(report.contacts_per_hand) == 1


def test_report_json_roundtrip(sphere_obj, hand22, hover_grasp):
    report = verify(sphere_obj, hover_grasp, hand22, VerifyConfig(), seed=5)
    blob = json.dumps(report.as_dict())
    back = verifier.VerificationReport.from_dict(json.loads(blob))
    assert back.as_dict() == report.as_dict()
    assert back.success == report.success
