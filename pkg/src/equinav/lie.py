"""Matrix Lie group primitives for SO(3), SE(3) and the extended pose group.

Conventions used across the package:

* Rotations are 3x3 orthonormal matrices with determinant +1.
* SE(3) elements are 4x4 homogeneous matrices; algebra coefficients are
  ordered ``(rotation, translation)``.
* Extended poses (attitude, velocity, position) are 5x5 matrices with the
  lower-right 2x2 block equal to the identity; algebra coefficients are
  ordered ``(rotation, velocity column, position column)``.
* ``wedge`` maps coefficient vectors to algebra matrices, ``vee`` inverts it.
* ``log`` returns the principal branch; a rotation at the pi branch point
  raises :class:`BranchPointError`.

Closed forms are used down to an angle of 1e-8, below which series
expansions take over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import maybe_njit

_SMALL_ANGLE = 1e-8
_BRANCH_MARGIN = 1e-7


class BranchPointError(ValueError):
    """Rotation angle is at (or numerically indistinguishable from) pi."""


@maybe_njit
def so3_wedge(w):
    """Map a 3-vector to the corresponding skew-symmetric matrix."""
    M = np.zeros((3, 3))
    M[0, 1] = -w[2]
    M[0, 2] = w[1]
    M[1, 0] = w[2]
    M[1, 2] = -w[0]
    M[2, 0] = -w[1]
    M[2, 1] = w[0]
    return M


@maybe_njit
def so3_vee(M):
    """Inverse of :func:`so3_wedge`."""
    w = np.empty(3)
    w[0] = M[2, 1]
    w[1] = M[0, 2]
    w[2] = M[1, 0]
    return w


@maybe_njit
def se3_wedge(u):
    """Map (rotation, translation) coefficients to a 4x4 algebra matrix."""
    M = np.zeros((4, 4))
    M[:3, :3] = so3_wedge(u[:3])
    M[0, 3] = u[3]
    M[1, 3] = u[4]
    M[2, 3] = u[5]
    return M


@maybe_njit
def se3_vee(M):
    """Inverse of :func:`se3_wedge`."""
    u = np.empty(6)
    u[:3] = so3_vee(M[:3, :3])
    u[3] = M[0, 3]
    u[4] = M[1, 3]
    u[5] = M[2, 3]
    return u


@maybe_njit
def se23_wedge(u):
    """Map (rotation, velocity, position) coefficients to a 5x5 matrix."""
    M = np.zeros((5, 5))
    M[:3, :3] = so3_wedge(u[:3])
    M[0, 3] = u[3]
    M[1, 3] = u[4]
    M[2, 3] = u[5]
    M[0, 4] = u[6]
    M[1, 4] = u[7]
    M[2, 4] = u[8]
    return M


@maybe_njit
def se23_vee(M):
    """Inverse of :func:`se23_wedge`."""
    u = np.empty(9)
    u[:3] = so3_vee(M[:3, :3])
    u[3] = M[0, 3]
    u[4] = M[1, 3]
    u[5] = M[2, 3]
    u[6] = M[0, 4]
    u[7] = M[1, 4]
    u[8] = M[2, 4]
    return u


@maybe_njit
def _sin_cos_coeffs(theta):
    # sin(t)/t and (1-cos(t))/t^2 with series fallback near zero
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0
    t2 = theta * theta
    return math.sin(theta) / theta, (1.0 - math.cos(theta)) / t2


@maybe_njit
def so3_exp(w):
    """Rotation matrix exponential of a rotation vector (Rodrigues form)."""
    theta = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    s1, s2 = _sin_cos_coeffs(theta)
    W = so3_wedge(w)
    return np.eye(3) + s1 * W + s2 * (W @ W)


@maybe_njit
def so3_left_jacobian(w):
    """Left Jacobian of SO(3): integral of exp(s*wedge(w)) over s in [0,1]."""
    theta = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        c2 = 0.5 - t2 / 24.0
        c3 = 1.0 / 6.0 - t2 / 120.0
    else:
        t2 = theta * theta
        c2 = (1.0 - math.cos(theta)) / t2
        c3 = (theta - math.sin(theta)) / (t2 * theta)
    W = so3_wedge(w)
    return np.eye(3) + c2 * W + c3 * (W @ W)


@maybe_njit
def so3_left_jacobian_inv(w):
    """Closed-form inverse of :func:`so3_left_jacobian`."""
    theta = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        k = 1.0 / 12.0 + t2 / 720.0
    else:
        t2 = theta * theta
        k = 1.0 / t2 - (1.0 + math.cos(theta)) / (2.0 * theta * math.sin(theta))
    W = so3_wedge(w)
    return np.eye(3) - 0.5 * W + k * (W @ W)


@maybe_njit
def so3_log(R):
    """Rotation vector of a rotation matrix (principal branch).

    Raises
    ------
    BranchPointError
        If the rotation angle is within 1e-7 of pi, where the principal
        branch is not defined unambiguously.
    """
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    c = 0.5 * (tr - 1.0)
    if c > 1.0:
        c = 1.0
    if c < -1.0:
        c = -1.0
    theta = math.acos(c)
    if theta > math.pi - _BRANCH_MARGIN:
        raise BranchPointError(
            "rotation angle is at the pi branch point; principal log undefined"
        )
    w = np.empty(3)
    w[0] = R[2, 1] - R[1, 2]
    w[1] = R[0, 2] - R[2, 0]
    w[2] = R[1, 0] - R[0, 1]
    if theta < _SMALL_ANGLE:
        scale = 0.5 + theta * theta / 12.0
    else:
        scale = 0.5 * theta / math.sin(theta)
    return scale * w


@maybe_njit
def se3_exp(u):
    """SE(3) exponential of (rotation, translation) coefficients."""
    T = np.eye(4)
    T[:3, :3] = so3_exp(u[:3])
    T[:3, 3] = so3_left_jacobian(u[:3]) @ np.ascontiguousarray(u[3:6])
    return T


@maybe_njit
def se3_log(T):
    """Principal-branch logarithm of an SE(3) matrix."""
    u = np.empty(6)
    w = so3_log(np.ascontiguousarray(T[:3, :3]))
    u[:3] = w
    u[3:] = so3_left_jacobian_inv(w) @ np.ascontiguousarray(T[:3, 3])
    return u


@maybe_njit
def se23_exp(u):
    """Extended-pose exponential of (rotation, velocity, position) coeffs."""
    X = np.eye(5)
    J = so3_left_jacobian(u[:3])
    X[:3, :3] = so3_exp(u[:3])
    X[:3, 3] = J @ np.ascontiguousarray(u[3:6])
    X[:3, 4] = J @ np.ascontiguousarray(u[6:9])
    return X


@maybe_njit
def se23_log(X):
    """Principal-branch logarithm of an extended-pose matrix."""
    u = np.empty(9)
    w = so3_log(np.ascontiguousarray(X[:3, :3]))
    Jinv = so3_left_jacobian_inv(w)
    u[:3] = w
    u[3:6] = Jinv @ np.ascontiguousarray(X[:3, 3])
    u[6:9] = Jinv @ np.ascontiguousarray(X[:3, 4])
    return u


@maybe_njit
def se3_adjoint(T):
    """6x6 adjoint matrix of an SE(3) element acting on algebra coefficients."""
    R = np.ascontiguousarray(T[:3, :3])
    t = T[:3, 3]
    A = np.zeros((6, 6))
    A[:3, :3] = R
    A[3:, 3:] = R
    A[3:, :3] = so3_wedge(t) @ R
    return A


@maybe_njit
def se23_adjoint(X):
    """9x9 adjoint matrix of an extended-pose element."""
    R = np.ascontiguousarray(X[:3, :3])
    v = X[:3, 3]
    p = X[:3, 4]
    A = np.zeros((9, 9))
    A[:3, :3] = R
    A[3:6, 3:6] = R
    A[6:9, 6:9] = R
    A[3:6, :3] = so3_wedge(v) @ R
    A[6:9, :3] = so3_wedge(p) @ R
    return A


@maybe_njit
def se3_ad(u):
    """6x6 algebra (little) adjoint: ad(u) v = vee([wedge(u), wedge(v)])."""
    A = np.zeros((6, 6))
    W = so3_wedge(u[:3])
    A[:3, :3] = W
    A[3:, 3:] = W
    A[3:, :3] = so3_wedge(u[3:6])
    return A


@maybe_njit
def se23_ad(u):
    """9x9 algebra (little) adjoint for extended-pose coefficients."""
    A = np.zeros((9, 9))
    W = so3_wedge(u[:3])
    A[:3, :3] = W
    A[3:6, 3:6] = W
    A[6:9, 6:9] = W
    A[3:6, :3] = so3_wedge(u[3:6])
    A[6:9, :3] = so3_wedge(u[6:9])
    return A


@maybe_njit
def _se3_jacobian_q(w, v):
    # Coupling block of the SE(3) left Jacobian in (rotation, translation)
    # ordering: sum over i+j=k of W^i V W^j / (k+2)!.
    theta = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    W = so3_wedge(w)
    V = so3_wedge(v)
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        c1 = 1.0 / 6.0 - t2 / 120.0
        c2 = -(1.0 / 24.0 - t2 / 720.0)
        c3 = 0.5 * (1.0 / 60.0 - t2 / 1260.0)
    else:
        t2 = theta * theta
        t4 = t2 * t2
        c1 = (theta - math.sin(theta)) / (t2 * theta)
        c2 = (t2 + 2.0 * math.cos(theta) - 2.0) / (2.0 * t4)
        c3 = (2.0 * theta - 3.0 * math.sin(theta) + theta * math.cos(theta)) / (
            2.0 * t4 * theta
        )
    WV = W @ V
    VW = V @ W
    WVW = WV @ W
    Q = (
        0.5 * V
        + c1 * (WV + VW + WVW)
        + c2 * (W @ WV + VW @ W - 3.0 * WVW)
        + c3 * (WVW @ W + W @ WVW)
    )
    return Q


@maybe_njit
def se3_left_jacobian(u):
    """6x6 left Jacobian of SE(3): sum over k of ad(u)^k / (k+1)!."""
    J = so3_left_jacobian(u[:3])
    Q = _se3_jacobian_q(u[:3], u[3:6])
    out = np.zeros((6, 6))
    out[:3, :3] = J
    out[3:, 3:] = J
    out[3:, :3] = Q
    return out


@maybe_njit
def pi_se23_to_se3(u):
    """Project extended-pose coefficients onto (rotation, velocity) pairs."""
    return np.ascontiguousarray(u[:6])


@maybe_njit
def ins_input_matrix(w, a):
    """5x5 embedding of an IMU sample: gyro in the rotation block,
    accelerometer in the velocity column."""
    M = np.zeros((5, 5))
    M[:3, :3] = so3_wedge(w)
    M[0, 3] = a[0]
    M[1, 3] = a[1]
    M[2, 3] = a[2]
    return M


@maybe_njit
def ins_bias_matrix(bias):
    """5x5 embedding of a (gyro, accel) bias pair, mirroring the input."""
    M = np.zeros((5, 5))
    M[:3, :3] = so3_wedge(bias[:3])
    M[0, 3] = bias[3]
    M[1, 3] = bias[4]
    M[2, 3] = bias[5]
    return M


@maybe_njit
def ins_gravity_matrix(g):
    """5x5 embedding of the gravity vector in the velocity column."""
    M = np.zeros((5, 5))
    M[0, 3] = g[0]
    M[1, 3] = g[1]
    M[2, 3] = g[2]
    return M


@maybe_njit
def ins_integrator_matrix():
    """5x5 selector coupling velocity into the position derivative."""
    M = np.zeros((5, 5))
    M[3, 4] = 1.0
    return M


@dataclass(frozen=True)
class InsMatrices:
    """Matrix ingredients of the extended-pose navigation dynamics.

    The dynamics read ``Tdot = T (input - bias + integrator)
    + (gravity - integrator) T`` for an extended pose ``T``.
    ``gravity_se3`` is the upper-left 4x4 slice of the gravity embedding.
    """

    input_mat: np.ndarray
    bias_mat: np.ndarray
    gravity_mat: np.ndarray
    integrator_mat: np.ndarray
    gravity_se3: np.ndarray


def build_ins_matrices(w, a, bias, gravity) -> InsMatrices:
    """Assemble all system matrices for one IMU sample.

    Parameters
    ----------
    w, a : array-like, shape (3,)
        Gyroscope and accelerometer sample.
    bias : array-like, shape (6,)
        Stacked (gyro, accel) bias.
    gravity : array-like, shape (3,)
        Gravity vector in the reference frame.
    """
    w = np.asarray(w, dtype=float)
    a = np.asarray(a, dtype=float)
    bias = np.asarray(bias, dtype=float)
    gravity = np.asarray(gravity, dtype=float)
    G = ins_gravity_matrix(gravity)
    return InsMatrices(
        input_mat=ins_input_matrix(w, a),
        bias_mat=ins_bias_matrix(bias),
        gravity_mat=G,
        integrator_mat=ins_integrator_matrix(),
        gravity_se3=G[:4, :4].copy(),
    )


@maybe_njit
def rot_to_quat(R):
    """Scalar-first unit quaternion of a rotation matrix (w >= 0)."""
    q = np.empty(4)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q[0] = 0.25 * s
        q[1] = (R[2, 1] - R[1, 2]) / s
        q[2] = (R[0, 2] - R[2, 0]) / s
        q[3] = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q[0] = (R[2, 1] - R[1, 2]) / s
        q[1] = 0.25 * s
        q[2] = (R[0, 1] + R[1, 0]) / s
        q[3] = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q[0] = (R[0, 2] - R[2, 0]) / s
        q[1] = (R[0, 1] + R[1, 0]) / s
        q[2] = 0.25 * s
        q[3] = (R[1, 2] + R[2, 1]) / s
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q[0] = (R[1, 0] - R[0, 1]) / s
        q[1] = (R[0, 2] + R[2, 0]) / s
        q[2] = (R[1, 2] + R[2, 1]) / s
        q[3] = 0.25 * s
    if q[0] < 0.0:
        q = -q
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return q / n


@maybe_njit
def quat_to_rot(q):
    """Rotation matrix of a scalar-first unit quaternion."""
    w, x, y, z = q[0], q[1], q[2], q[3]
    n = w * w + x * x + y * y + z * z
    s = 2.0 / n
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - s * (y * y + z * z)
    R[0, 1] = s * (x * y - w * z)
    R[0, 2] = s * (x * z + w * y)
    R[1, 0] = s * (x * y + w * z)
    R[1, 1] = 1.0 - s * (x * x + z * z)
    R[1, 2] = s * (y * z - w * x)
    R[2, 0] = s * (x * z - w * y)
    R[2, 1] = s * (y * z + w * x)
    R[2, 2] = 1.0 - s * (x * x + y * y)
    return R


def rot_to_quat_batch(R: np.ndarray) -> np.ndarray:
    """Rows of scalar-first unit quaternions for a stack of rotations."""
    out = np.empty((R.shape[0], 4))
    for k in range(R.shape[0]):
        out[k] = rot_to_quat(np.ascontiguousarray(R[k]))
    return out


def quat_to_rot_batch(q: np.ndarray) -> np.ndarray:
    """Stack of rotation matrices for rows of scalar-first quaternions."""
    out = np.empty((q.shape[0], 3, 3))
    for k in range(q.shape[0]):
        out[k] = quat_to_rot(np.ascontiguousarray(q[k]))
    return out
