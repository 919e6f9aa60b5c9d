"""Quaternion / axis-angle helpers shared across the package.

Quaternions are unit-norm, scalar-first ``(w, x, y, z)`` numpy arrays. Axis-angle
vectors are rotation vectors (axis * angle, radians). All functions are pure and
operate on float64.
"""

import numpy as np
from scipy.spatial.transform import Rotation


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if (n == 0.0).any():
        raise ValueError("zero quaternion")
    q = q / n
    # canonical sign: nonnegative scalar part keeps axis-angle output in [0, pi]
    return np.where(q[..., :1] < 0.0, -q, q)


def quat_to_matrix(q):
    """Rotation matrix (or stacked matrices for a (..., 4) batch)."""
    q = np.asarray(q, dtype=float)
    return Rotation.from_quat(np.moveaxis(
        np.stack([q[..., 1], q[..., 2], q[..., 3], q[..., 0]]), 0, -1)).as_matrix()


def matrix_to_quat(R):
    x, y, z, w = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
    return quat_normalize(np.array([w, x, y, z]))


def quat_to_rotvec(q):
    """Rotation vector with angle in [0, pi] (canonical double-cover pick)."""
    q = quat_normalize(q)
    return Rotation.from_quat(np.moveaxis(
        np.stack([q[..., 1], q[..., 2], q[..., 3], q[..., 0]]), 0, -1)).as_rotvec()


def rotvec_to_quat(v):
    s = Rotation.from_rotvec(np.asarray(v, dtype=float)).as_quat()
    return quat_normalize(np.moveaxis(
        np.stack([s[..., 3], s[..., 0], s[..., 1], s[..., 2]]), 0, -1))


def rotvec_to_matrix(v):
    """Rotation matrix (or stacked matrices for a (..., 3) batch)."""
    return Rotation.from_rotvec(np.asarray(v, dtype=float)).as_matrix()


def matrix_to_rotvec(R):
    return Rotation.from_matrix(np.asarray(R, dtype=float)).as_rotvec()


def quat_multiply(qa, qb):
    """Hamilton product qa * qb (apply qb first, then qa); broadcasts."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    wa, xa, ya, za = (qa[..., k] for k in range(4))
    wb, xb, yb, zb = (qb[..., k] for k in range(4))
    return quat_normalize(np.moveaxis(np.stack([
        wa * wb - xa * xb - ya * yb - za * zb,
        wa * xb + xa * wb + ya * zb - za * yb,
        wa * yb - xa * zb + ya * wb + za * xb,
        wa * zb + xa * yb - ya * xb + za * wb,
    ]), 0, -1))


def apply_increment(q, delta):
    """Compose a world-frame tangent increment onto a rotation.

    Returns the quaternion of ``exp(skew(delta)) @ R(q)``: the retraction used for
    rotation coordinates by the optimizer and the gradient convention.
    """
    return quat_multiply(rotvec_to_quat(delta), q)


def increment_between(q_from, q_to):
    """Tangent increment ``delta`` with ``apply_increment(q_from, delta) == q_to``.

    That is the log-map of ``R(q_to) @ R(q_from)^T``, with angle in [0, pi].
    """
    R = quat_to_matrix(q_to) @ np.swapaxes(quat_to_matrix(q_from), -1, -2)
    return matrix_to_rotvec(R)


def skew(v):
    """Skew-symmetric matrix S with S @ a == v x a."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_distance(qa, qb):
    """Geodesic angle between two rotations, radians in [0, pi]."""
    return float(np.linalg.norm(increment_between(qa, qb)))


def random_rotation(rng):
    """Uniform random rotation quaternion from a numpy Generator."""
    u = rng.standard_normal(4)
    return quat_normalize(u)


def align_vectors(a, b):
    """Smallest rotation matrix taking unit vector ``a`` onto unit vector ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    c = float(np.dot(a, b))
    if c > 1.0 - 1e-12:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        # 180 degrees: rotate about any axis orthogonal to a
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-8:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis = axis / np.linalg.norm(axis)
        return rotvec_to_matrix(axis * np.pi)
    axis = np.cross(a, b)
    s = np.linalg.norm(axis)
    angle = np.arctan2(s, c)
    return rotvec_to_matrix(axis / s * angle)
