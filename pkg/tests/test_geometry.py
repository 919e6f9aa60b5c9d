"""Mesh and distance-query oracles: analytic boxes, ray parity, brute force."""

import numpy as np
import pytest

from dualgrasp import geometry
from dualgrasp._meshquery import _tri_test


def box_sdf(p, half):
    """Analytic signed distance to an axis-aligned box of half-extents `half`."""
    q = np.abs(p) - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(np.max(q, axis=-1), 0.0)
    return outside + inside


def test_box_signed_distance_analytic(box_mesh):
    half = np.array([0.2, 0.2, 0.2])
    pts = np.array([
        [0.0, 0.0, 0.0],          # center
        [0.1, 0.05, -0.07],       # interior
        [0.3, 0.0, 0.0],          # face region
        [0.3, 0.3, 0.0],          # edge region
        [0.3, 0.3, 0.3],          # corner region
        [-0.25, 0.1, 0.05],       # face region, -x
        [0.0, 0.0, 0.199],        # just inside a face
    ])
    d, q, tri, feat = box_mesh.nearest(pts)
    expect = box_sdf(pts, half)
    assert np.abs(d - expect).max() < 1e-12
    # nearest point consistency: |p - q| == |d|
    assert np.abs(np.linalg.norm(pts - q, axis=1) - np.abs(d)).max() < 1e-12


def test_sphere_distance_bounds(sphere_mesh, rng):
    # vertices sit exactly on the 0.1 sphere; faces sag slightly inward
    pts = rng.normal(size=(500, 3))
    pts *= (0.25 * rng.random((500, 1)) + 0.001) / np.linalg.norm(
        pts, axis=1, keepdims=True)
    d, q, _, _ = sphere_mesh.nearest(pts)
    r = np.linalg.norm(pts, axis=1)
    sag = 0.1 - np.min(np.linalg.norm(
        sphere_mesh.vertices[sphere_mesh.faces].mean(axis=1), axis=1))
    assert np.abs(d - (r - 0.1)).max() < sag + 1e-9
    assert np.abs(np.linalg.norm(pts - q, axis=1) - np.abs(d)).max() < 1e-12


def test_sign_matches_ray_parity(sphere_mesh, rng):
    # parity of ray crossings is an independent inside/outside oracle
    pts = rng.uniform(-0.15, 0.15, size=(1000, 3))
    d, _, _, _ = sphere_mesh.nearest(pts)
    directions = rng.normal(size=(1000, 3))
    mismatches = 0
    for p, dd, u in zip(pts, d, directions):
        ts = geometry.ray_mesh_intersections(sphere_mesh, p, u / np.linalg.norm(u))
        inside_by_parity = len(ts) % 2 == 1
        if inside_by_parity != (dd < 0):
            mismatches += 1
    assert mismatches == 0


def test_query_matches_brute_force(sphere_mesh, rng):
    pts = rng.uniform(-0.2, 0.2, size=(200, 3))
    d, q, tri, feat = sphere_mesh.nearest(pts)
    tp = np.ascontiguousarray(
        sphere_mesh.vertices[sphere_mesh.faces].reshape(-1, 9))
    for i, p in enumerate(pts):
        best = np.inf
        for k in range(len(tp)):
            d2, _, _, _ = _tri_test(p[0], p[1], p[2], tp, k)
            best = min(best, d2)
        assert abs(abs(d[i]) - np.sqrt(best)) < 1e-12


def test_parallel_query_identical(sphere_mesh, rng):
    pts = rng.uniform(-0.3, 0.3, size=(400, 3))
    a = sphere_mesh.nearest(pts, parallel=False)
    b = sphere_mesh.nearest(pts, parallel=True)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_assigned_triangles_stable_on_edge_regions(sphere_mesh):
    # a point hovering over a mesh edge projects onto it; every incident face
    # is equidistant, so the deterministic assignment must not depend on tiny
    # query perturbations
    faces, verts = sphere_mesh.faces, sphere_mesh.vertices
    a, b = faces[0, 0], faces[0, 1]
    mid = 0.5 * (verts[a] + verts[b])
    out = mid / np.linalg.norm(mid)
    edge_dir = verts[b] - verts[a]
    edge_dir /= np.linalg.norm(edge_dir)
    probes = np.stack([mid + 0.05 * out + s * edge_dir
                       for s in (-1e-7, 0.0, 1e-7)])
    d, q, tri, feat = sphere_mesh.nearest(probes)
    assert (feat >= 4).all()          # all three land on the edge feature
    canon = sphere_mesh.assigned_triangles(tri, feat)
    assert canon[0] == canon[1] == canon[2]
    n = sphere_mesh.assigned_normals(tri, feat)
    assert np.abs(n - n[0]).max() == 0.0


def test_watertight_flags(sphere_mesh, box_mesh):
    assert sphere_mesh.watertight and sphere_mesh.sign_reliable
    assert box_mesh.watertight and box_mesh.sign_reliable
    open_tri = geometry.TriangleMesh(
        np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))
    assert not open_tri.watertight


def test_volume_and_centroid(box_mesh):
    assert np.isclose(box_mesh.volume, 0.4 ** 3, atol=1e-12)
    assert np.allclose(box_mesh.centroid, 0.0, atol=1e-12)
    shifted = geometry.TriangleMesh(box_mesh.vertices + [0.1, 0.2, 0.3],
                                    box_mesh.faces)
    assert np.allclose(shifted.centroid, [0.1, 0.2, 0.3], atol=1e-12)


def test_degenerate_faces_dropped():
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    faces = np.array([[0, 1, 2], [0, 1, 1], [1, 2, 3]])
    m = geometry.TriangleMesh(verts, faces)
    assert m.dropped_faces == 1
    assert len(m.faces) == 2


def test_sample_surface_deterministic_on_surface(sphere_mesh):
    a = geometry.sample_surface(sphere_mesh, 256, seed=3)
    b = geometry.sample_surface(sphere_mesh, 256, seed=3)
    assert np.array_equal(a.points, b.points)
    d, _, _, _ = sphere_mesh.nearest(a.points)
    assert np.abs(d).max() < 1e-9


def test_inflated_hull_contains_mesh(sphere_mesh):
    hull = geometry.inflated_convex_hull(sphere_mesh, 0.02)
    d, _, _, _ = hull.nearest(sphere_mesh.vertices)
    # every source vertex sits at depth ~offset inside the inflated hull;
    # hull facets sag slightly inward between the offset vertices
    assert d.max() < -0.02 + 1e-3
    assert d.min() > -0.02 - 1e-3
    with pytest.raises(ValueError):
        geometry.inflated_convex_hull(sphere_mesh, -0.1)


def test_ray_intersections_box(box_mesh):
    ts = geometry.ray_mesh_intersections(box_mesh, [-1.0, 0.01, 0.02],
                                         [1.0, 0.0, 0.0])
    assert len(ts) == 2
    assert np.allclose(ts, [0.8, 1.2], atol=1e-12)
    miss = geometry.ray_mesh_intersections(box_mesh, [-1.0, 0.5, 0.0],
                                           [1.0, 0.0, 0.0])
    assert len(miss) == 0


def test_obj_round_trip(tmp_path, box_mesh):
    path = tmp_path / "scene.obj"
    geometry.save_obj_scene(path, [("object", box_mesh.vertices,
                                    box_mesh.faces)])
    m = geometry.load_mesh(path)
    assert np.allclose(m.vertices, box_mesh.vertices, atol=1e-9)
    assert m.volume == pytest.approx(box_mesh.volume, abs=1e-12)


def test_segment_segment_distance_oracles():
    p1 = np.array([[0.0, 0, 0], [-1, 0, 0], [0, 0, 0], [0, 0, 0]])
    q1 = np.array([[1.0, 0, 0], [1, 0, 0], [1, 0, 0], [0, 0, 0]])
    p2 = np.array([[0.0, 1, 0], [0, -1, 0.5], [2, 0, 0], [0, 3, 4]])
    q2 = np.array([[1.0, 1, 0], [0, 1, 0.5], [3, 0, 0], [0, 3, 4]])
    d = geometry.segment_segment_distance(p1, q1, p2, q2)
    # parallel, skew-crossing, collinear end-to-end, both degenerate
    assert np.allclose(d, [1.0, 0.5, 1.0, 5.0], atol=1e-12)


def test_normalize_diameter(sphere_mesh):
    m = geometry.normalize_diameter(sphere_mesh, 0.5)
    assert np.isclose(m.diameter, 0.5, atol=1e-9)


def test_object_model_mass(sphere_obj):
    assert sphere_obj.mass == pytest.approx(sphere_obj.mesh.volume * 2500.0)
