"""Symmetry group of biased inertial navigation with GNSS lever arms.

The navigation state bundles attitude, velocity, position, IMU biases and
one body-frame antenna offset (lever arm) per GNSS receiver.  The symmetry
group acting on it is a semi-direct product: an extended pose moves the
pose states, a 6-vector slot transports the bias pair, and one 3-vector
slot per receiver transports its lever arm.

Group elements are stored as ``(C, c, d)`` where ``C`` is a 5x5 extended
pose, ``c`` a 6-vector and ``d`` an (N, 3) array.  The action is a *right*
action: ``act(compose(X1, X2), xi) == act(X2, act(X1, xi))``.

Tangent and error vectors share one fixed layout of dimension ``15 + 3N``:
``[rotation(3), velocity(3), position(3), gyro bias(3), accel bias(3),
lever arm 1(3), ..., lever arm N(3)]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import maybe_njit
from .lie import (
    se3_left_jacobian,
    se23_exp,
    se23_log,
    so3_left_jacobian,
    so3_wedge,
)

ROT = slice(0, 3)
VEL = slice(3, 6)
POS = slice(6, 9)
BGYRO = slice(9, 12)
BACC = slice(12, 15)
BIAS = slice(9, 15)


def tangent_dim(n_sensors: int) -> int:
    """Dimension of tangent/error vectors for ``n_sensors`` receivers."""
    return 15 + 3 * n_sensors


def calib_slice(sensor: int) -> slice:
    """Error-vector slice of lever arm ``sensor`` (1-based)."""
    return slice(12 + 3 * sensor, 15 + 3 * sensor)


@dataclass(frozen=True)
class NavState:
    """Navigation state: attitude, velocity, position, biases, lever arms.

    Attributes
    ----------
    R : (3, 3) ndarray
        Body-to-reference rotation.
    v, p : (3,) ndarray
        Velocity and position in the reference frame.
    b_gyro, b_acc : (3,) ndarray
        Gyroscope and accelerometer biases.
    calib : (N, 3) ndarray
        Body-frame antenna offsets, one row per GNSS receiver.
    """

    R: np.ndarray
    v: np.ndarray
    p: np.ndarray
    b_gyro: np.ndarray
    b_acc: np.ndarray
    calib: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=float)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {R.shape}")
        object.__setattr__(self, "R", R)
        for name in ("v", "p", "b_gyro", "b_acc"):
            vec = np.array(getattr(self, name), dtype=float).reshape(-1)
            if vec.shape != (3,):
                raise ValueError(f"{name} must be a 3-vector, got shape {vec.shape}")
            object.__setattr__(self, name, vec)
        calib = np.array(self.calib, dtype=float).reshape(-1, 3)
        if calib.shape[0] < 1:
            raise ValueError("at least one sensor lever arm required")
        object.__setattr__(self, "calib", calib)

    @property
    def n_sensors(self) -> int:
        return self.calib.shape[0]

    @property
    def bias(self) -> np.ndarray:
        """Stacked (gyro, accel) bias 6-vector."""
        return np.concatenate([self.b_gyro, self.b_acc])

    @staticmethod
    def random(rng: np.random.Generator, n_sensors: int = 2) -> "NavState":
        """Random state with moderate magnitudes (for tests)."""
        from .lie import so3_exp

        return NavState(
            R=so3_exp(rng.uniform(-1.5, 1.5, 3)),
            v=rng.normal(0.0, 1.0, 3),
            p=rng.normal(0.0, 2.0, 3),
            b_gyro=rng.normal(0.0, 0.05, 3),
            b_acc=rng.normal(0.0, 0.2, 3),
            calib=rng.normal(0.0, 0.5, (n_sensors, 3)),
        )


@dataclass(frozen=True)
class GroupElement:
    """Symmetry group element ``(C, c, d)``.

    ``C`` is a 5x5 extended pose, ``c`` the 6-vector slot transporting the
    bias pair and ``d`` the (N, 3) array of lever-arm slots.
    """

    C: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "C", np.array(self.C, dtype=float))
        object.__setattr__(self, "c", np.array(self.c, dtype=float))
        object.__setattr__(self, "d", np.array(self.d, dtype=float).reshape(-1, 3))

    @property
    def n_sensors(self) -> int:
        return self.d.shape[0]

    @property
    def A(self) -> np.ndarray:
        """Rotation block of the extended-pose component."""
        return self.C[:3, :3]

    @property
    def vel_col(self) -> np.ndarray:
        return self.C[:3, 3]

    @property
    def pos_col(self) -> np.ndarray:
        return self.C[:3, 4]

    @staticmethod
    def random(rng: np.random.Generator, n_sensors: int = 2) -> "GroupElement":
        """Random element with moderate magnitudes (for tests)."""
        lam = np.concatenate(
            [
                rng.uniform(-1.2, 1.2, 3),
                rng.normal(0.0, 1.0, 6),
                rng.normal(0.0, 0.3, 6),
                rng.normal(0.0, 0.5, 3 * n_sensors),
            ]
        )
        C, c, d = _exp_parts(lam, n_sensors)
        return GroupElement(C, c, d)


def identity_state(n_sensors: int) -> NavState:
    """Origin state: identity attitude, all vector states zero."""
    return NavState(
        R=np.eye(3),
        v=np.zeros(3),
        p=np.zeros(3),
        b_gyro=np.zeros(3),
        b_acc=np.zeros(3),
        calib=np.zeros((n_sensors, 3)),
    )


def identity_element(n_sensors: int) -> GroupElement:
    """Identity of the symmetry group."""
    return GroupElement(np.eye(5), np.zeros(6), np.zeros((n_sensors, 3)))


@maybe_njit
def _se3_adjoint_parts(A, t):
    # Adjoint matrix of the SE(3) element (A, t) in (rotation, translation)
    # coefficient ordering.
    M = np.zeros((6, 6))
    M[:3, :3] = A
    M[3:, 3:] = A
    M[3:, :3] = so3_wedge(t) @ A
    return M


@maybe_njit
def _compose_parts(C1, c1, d1, C2, c2, d2):
    A1 = np.ascontiguousarray(C1[:3, :3])
    a1 = np.ascontiguousarray(C1[:3, 3])
    C = C1 @ C2
    c = c1 + _se3_adjoint_parts(A1, a1) @ c2
    d = np.empty_like(d1)
    for i in range(d1.shape[0]):
        d[i] = d1[i] + A1 @ np.ascontiguousarray(d2[i])
    return C, c, d


@maybe_njit
def _inverse_parts(C, c, d):
    A = np.ascontiguousarray(C[:3, :3])
    At = np.ascontiguousarray(A.T)
    a = np.ascontiguousarray(C[:3, 3])
    b = np.ascontiguousarray(C[:3, 4])
    Cinv = np.eye(5)
    Cinv[:3, :3] = At
    Cinv[:3, 3] = -(At @ a)
    Cinv[:3, 4] = -(At @ b)
    cinv = -(_se3_adjoint_parts(At, -(At @ a)) @ c)
    dinv = np.empty_like(d)
    for i in range(d.shape[0]):
        dinv[i] = -(At @ np.ascontiguousarray(d[i]))
    return Cinv, cinv, dinv


@maybe_njit
def _exp_parts(lam, n_sensors):
    C = se23_exp(lam[:9])
    c = se3_left_jacobian(lam[:6]) @ np.ascontiguousarray(lam[9:15])
    Jl = so3_left_jacobian(lam[:3])
    d = np.empty((n_sensors, 3))
    for i in range(n_sensors):
        d[i] = Jl @ np.ascontiguousarray(lam[15 + 3 * i : 18 + 3 * i])
    return C, c, d


@maybe_njit
def _log_parts(C, c, d):
    n = d.shape[0]
    lam = np.empty(15 + 3 * n)
    lamC = se23_log(C)
    lam[:9] = lamC
    lam[9:15] = np.linalg.solve(se3_left_jacobian(lamC[:6]), c)
    Jl = so3_left_jacobian(lamC[:3])
    for i in range(n):
        lam[15 + 3 * i : 18 + 3 * i] = np.linalg.solve(
            Jl, np.ascontiguousarray(d[i])
        )
    return lam


@maybe_njit
def _act_parts(C, c, d, R, v, p, bias, calib):
    T = np.eye(5)
    T[:3, :3] = R
    T[:3, 3] = v
    T[:3, 4] = p
    T_out = T @ C
    A = np.ascontiguousarray(C[:3, :3])
    At = np.ascontiguousarray(A.T)
    a = np.ascontiguousarray(C[:3, 3])
    bias_out = _se3_adjoint_parts(At, -(At @ a)) @ (bias - c)
    calib_out = np.empty_like(calib)
    for i in range(calib.shape[0]):
        calib_out[i] = At @ np.ascontiguousarray(calib[i] - d[i])
    return T_out, bias_out, calib_out


@maybe_njit
def _state_from_group_parts(C, c, d):
    R = np.ascontiguousarray(C[:3, :3])
    v = np.ascontiguousarray(C[:3, 3])
    p = np.ascontiguousarray(C[:3, 4])
    Rt = np.ascontiguousarray(R.T)
    bias = -(_se3_adjoint_parts(Rt, -(Rt @ v)) @ c)
    calib = np.empty_like(d)
    for i in range(d.shape[0]):
        calib[i] = -(Rt @ np.ascontiguousarray(d[i]))
    return R, v, p, bias, calib


@maybe_njit
def _group_from_state_parts(R, v, p, bias, calib):
    C = np.eye(5)
    C[:3, :3] = R
    C[:3, 3] = v
    C[:3, 4] = p
    c = -(_se3_adjoint_parts(R, v) @ bias)
    d = np.empty_like(calib)
    for i in range(calib.shape[0]):
        d[i] = -(R @ np.ascontiguousarray(calib[i]))
    return C, c, d


@maybe_njit
def _lift_parts(R, v, p, b_gyro, b_acc, calib, w, a, gravity):
    n = calib.shape[0]
    lam = np.empty(15 + 3 * n)
    Rt = np.ascontiguousarray(R.T)
    lw = w - b_gyro
    lv = a - b_acc + Rt @ gravity
    lam[:3] = lw
    lam[3:6] = lv
    lam[6:9] = Rt @ v
    # bias slot: algebra adjoint of the bias pair applied to (lw, lv)
    lam[9:12] = np.cross(b_gyro, lw)
    lam[12:15] = np.cross(b_acc, lw) + np.cross(b_gyro, lv)
    for i in range(n):
        lam[15 + 3 * i : 18 + 3 * i] = -np.cross(lw, calib[i])
    return lam


def compose(X1: GroupElement, X2: GroupElement) -> GroupElement:
    """Group product, compatible with the right action."""
    C, c, d = _compose_parts(X1.C, X1.c, X1.d, X2.C, X2.c, X2.d)
    return GroupElement(C, c, d)


def inverse(X: GroupElement) -> GroupElement:
    """Group inverse."""
    C, c, d = _inverse_parts(X.C, X.c, X.d)
    return GroupElement(C, c, d)


def group_exp(lam: np.ndarray, n_sensors: int) -> GroupElement:
    """Group exponential of a tangent vector in the fixed layout.

    The extended-pose slot uses its own exponential; the bias slot is
    transported through the 6x6 left Jacobian of the (rotation, velocity)
    pair and each lever-arm slot through the rotation left Jacobian, which
    makes this the exact time-1 flow of the left-invariant vector field.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (tangent_dim(n_sensors),):
        raise ValueError("tangent vector has wrong dimension")
    C, c, d = _exp_parts(lam, n_sensors)
    return GroupElement(C, c, d)


def group_log(X: GroupElement) -> np.ndarray:
    """Inverse of :func:`group_exp` (principal branch)."""
    return _log_parts(X.C, X.c, X.d)


def act(X: GroupElement, xi: NavState) -> NavState:
    """Right action of the symmetry group on navigation states."""
    if X.n_sensors != xi.n_sensors:
        raise ValueError("sensor count mismatch between group element and state")
    T, bias, calib = _act_parts(X.C, X.c, X.d, xi.R, xi.v, xi.p, xi.bias, xi.calib)
    return NavState(
        R=T[:3, :3],
        v=T[:3, 3],
        p=T[:3, 4],
        b_gyro=bias[:3],
        b_acc=bias[3:],
        calib=calib,
    )


def output_map(xi: NavState, sensor: int, reference: np.ndarray | None = None) -> np.ndarray:
    """Body-frame offset from antenna ``sensor`` (1-based) to a reference point.

    With the default reference (the frame origin) the negated, body-frame
    antenna position is returned; a GNSS fix is the special case
    ``reference = measured position``.
    """
    _check_sensor(sensor, xi.n_sensors)
    ref = np.zeros(3) if reference is None else np.asarray(reference, dtype=float)
    antenna = xi.p + xi.R @ xi.calib[sensor - 1]
    return xi.R.T @ (ref - antenna)


def output_action(X: GroupElement, y: np.ndarray, sensor: int) -> np.ndarray:
    """Action of the group on output-space points for ``sensor`` (1-based).

    Satisfies ``output_action(X, output_map(xi, i), i)
    == output_map(act(X, xi), i)``.
    """
    _check_sensor(sensor, X.n_sensors)
    y = np.asarray(y, dtype=float)
    A = X.C[:3, :3]
    return A.T @ (y - X.C[:3, 4] + X.d[sensor - 1])


def lift(xi: NavState, w: np.ndarray, a: np.ndarray, gravity: np.ndarray) -> np.ndarray:
    """Tangent vector whose action-pushforward equals the system dynamics.

    Parameters
    ----------
    xi : NavState
        State at which the dynamics are lifted.
    w, a : (3,) array-like
        Gyroscope and accelerometer sample (bias not removed).
    gravity : (3,) array-like
        Gravity vector in the reference frame.
    """
    return _lift_parts(
        xi.R,
        xi.v,
        xi.p,
        xi.b_gyro,
        xi.b_acc,
        xi.calib,
        np.asarray(w, dtype=float),
        np.asarray(a, dtype=float),
        np.asarray(gravity, dtype=float),
    )


def group_from_state(xi: NavState) -> GroupElement:
    """Unique group element mapping the origin state onto ``xi``."""
    C, c, d = _group_from_state_parts(xi.R, xi.v, xi.p, xi.bias, xi.calib)
    return GroupElement(C, c, d)


def state_from_group(X: GroupElement) -> NavState:
    """Action of ``X`` on the origin state."""
    R, v, p, bias, calib = _state_from_group_parts(X.C, X.c, X.d)
    return NavState(R=R, v=v, p=p, b_gyro=bias[:3], b_acc=bias[3:], calib=calib)


def error_coords(e: NavState) -> np.ndarray:
    """Normal coordinates of a state-space error around the origin state."""
    return group_log(group_from_state(e))


def error_coords_inv(eps: np.ndarray, n_sensors: int) -> NavState:
    """Inverse of :func:`error_coords`."""
    return state_from_group(group_exp(eps, n_sensors))


def _check_sensor(sensor: int, n_sensors: int) -> None:
    if not 1 <= sensor <= n_sensors:
        raise IndexError(
            f"sensor index {sensor} out of range 1..{n_sensors}"
        )
