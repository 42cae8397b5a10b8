"""Equivariant filter for biased INS with N GNSS position receivers.

The filter state is a symmetry-group element ``Xhat`` (the estimate is its
action on the origin state) plus a covariance ``P`` expressed in normal
error coordinates around the origin.  Propagation lifts each IMU sample to
the group algebra and composes the exact one-step group flow on the right;
updates apply an exponential correction on the left.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ._accel import maybe_njit
from .config import NoiseConfig
from .lie import se3_ad, so3_wedge
from .symmetry import (
    GroupElement,
    NavState,
    _compose_parts,
    _exp_parts,
    _group_from_state_parts,
    _se3_adjoint_parts,
    _state_from_group_parts,
    _lift_parts,
    identity_state,
    tangent_dim,
)

logger = logging.getLogger(__name__)

UPDATE_OK = 0
UPDATE_ILL_CONDITIONED = 1
UPDATE_GATED = 2

_COND_MAX = 1e12


@dataclass(frozen=True)
class UpdateQuantities:
    """Intermediate quantities of one measurement update."""

    S: np.ndarray
    K: np.ndarray
    residual: np.ndarray
    correction: np.ndarray
    output_gain: np.ndarray


@dataclass(frozen=True)
class UpdateResult:
    """Outcome of one measurement update."""

    accepted: bool
    reason: str
    residual: np.ndarray
    mahalanobis: float


@maybe_njit
def _eqf_A(C, c, d, w, a, gravity):
    # Linearized error dynamics in normal coordinates.  Pose rows couple to
    # gravity and to the bias slot; the bias slot evolves under the algebra
    # adjoint of the transported input; each lever-arm slot rotates with the
    # estimated inertial-frame angular velocity.
    n = d.shape[0]
    dim = 15 + 3 * n
    A = np.zeros((dim, dim))
    A[3:6, 0:3] = so3_wedge(gravity)
    for k in range(3):
        A[6 + k, 3 + k] = 1.0
        A[k, 9 + k] = 1.0
        A[3 + k, 12 + k] = 1.0
    A[6:9, 9:12] = so3_wedge(np.ascontiguousarray(C[:3, 4]))
    Arot = np.ascontiguousarray(C[:3, :3])
    vel = np.ascontiguousarray(C[:3, 3])
    u6 = np.empty(6)
    u6[:3] = w
    u6[3:] = a
    transported = _se3_adjoint_parts(Arot, vel) @ u6 + c
    transported[3:] += gravity
    A[9:15, 9:15] = se3_ad(transported)
    Gam = so3_wedge(Arot @ w + c[:3])
    for i in range(n):
        A[15 + 3 * i : 18 + 3 * i, 15 + 3 * i : 18 + 3 * i] = Gam
    return A


@maybe_njit
def _eqf_C(C, d, y, s0):
    # Output linearization for receiver s0 (0-based).  The attitude block
    # uses the midpoint of measured and predicted antenna positions, which
    # cancels the leading linearization error in normal coordinates.
    n = d.shape[0]
    dim = 15 + 3 * n
    Ct = np.zeros((3, dim))
    mid = y + np.ascontiguousarray(C[:3, 4]) - np.ascontiguousarray(d[s0])
    Ct[:, 0:3] = 0.5 * so3_wedge(mid)
    for k in range(3):
        Ct[k, 6 + k] = -1.0
        Ct[k, 15 + 3 * s0 + k] = 1.0
    return Ct


@maybe_njit
def _eqf_propagate(C, c, d, P, w, a, dt, gravity, qc_diag):
    R, v, p, bias, calib = _state_from_group_parts(C, c, d)
    lam = _lift_parts(R, v, p, bias[:3], bias[3:], calib, w, a, gravity)
    A = _eqf_A(C, c, d, w, a, gravity)
    dim = A.shape[0]
    Phi = np.eye(dim) + A * dt
    P_new = Phi @ P @ Phi.T
    for k in range(dim):
        P_new[k, k] += qc_diag[k] * dt
    eC, ec, ed = _exp_parts(lam * dt, d.shape[0])
    C_new, c_new, d_new = _compose_parts(C, c, d, eC, ec, ed)
    return C_new, c_new, d_new, P_new


@maybe_njit
def _eqf_update(C, c, d, P, y, r_meas, s0, mahal_max):
    n = d.shape[0]
    dim = 15 + 3 * n
    Ct = _eqf_C(C, d, y, s0)
    Arot = np.ascontiguousarray(C[:3, :3])
    n_gain = Arot.T @ r_meas @ Arot
    S = Ct @ P @ Ct.T + n_gain
    S = 0.5 * (S + S.T)
    eigs = np.linalg.eigvalsh(S)
    if eigs[0] <= 0.0 or eigs[2] / eigs[0] > _COND_MAX:
        return UPDATE_ILL_CONDITIONED, 0.0, C, c, d, P
    residual = (C[:3, 4] - d[s0]) - y
    m2 = residual @ np.linalg.solve(S, residual)
    mahal = math.sqrt(max(m2, 0.0))
    if mahal > mahal_max:
        return UPDATE_GATED, mahal, C, c, d, P
    K = np.linalg.solve(S, Ct @ P).T
    delta = K @ residual
    eC, ec, ed = _exp_parts(delta, n)
    C_new, c_new, d_new = _compose_parts(eC, ec, ed, C, c, d)
    P_new = (np.eye(dim) - K @ Ct) @ P
    P_new = 0.5 * (P_new + P_new.T)
    return UPDATE_OK, mahal, C_new, c_new, d_new, P_new


class EquivariantFilter:
    """Equivariant filter over the INS symmetry group.

    Parameters
    ----------
    n_sensors : int
        Number of GNSS receivers.
    noise : NoiseConfig
        Noise densities, gravity and initial covariance.
    mahalanobis_max : float
        Innovation gate on the Mahalanobis distance (default effectively
        disabled).
    """

    def __init__(self, n_sensors: int, noise: NoiseConfig | None = None,
                 mahalanobis_max: float = 1000.0):
        if n_sensors < 1:
            raise ValueError("need at least one sensor")
        noise = noise or NoiseConfig()
        self.n_sensors = n_sensors
        self.noise = noise
        self.mahalanobis_max = float(mahalanobis_max)
        self._C = np.eye(5)
        self._c = np.zeros(6)
        self._d = np.zeros((n_sensors, 3))
        self.P = noise.p0(n_sensors)
        self._g = noise.gravity_vec()
        self._qc = noise.process_noise_diag(n_sensors)
        self.t_last: float | None = None

    @classmethod
    def from_state(cls, xi: NavState, noise: NoiseConfig | None = None,
                   mahalanobis_max: float = 1000.0) -> "EquivariantFilter":
        """Initialize so that the state estimate equals ``xi``."""
        obj = cls(xi.n_sensors, noise, mahalanobis_max)
        C, c, d = _group_from_state_parts(xi.R, xi.v, xi.p, xi.bias, xi.calib)
        obj._C, obj._c, obj._d = C, c, d
        return obj

    @property
    def X(self) -> GroupElement:
        """Current group-valued state."""
        return GroupElement(self._C.copy(), self._c.copy(), self._d.copy())

    def state_estimate(self) -> NavState:
        """Navigation-state estimate (action of ``X`` on the origin)."""
        R, v, p, bias, calib = _state_from_group_parts(self._C, self._c, self._d)
        return NavState(R=R, v=v, p=p, b_gyro=bias[:3], b_acc=bias[3:], calib=calib)

    def propagate(self, w, a, dt: float) -> None:
        """Advance the filter by one IMU sample held over ``dt`` seconds."""
        w = np.asarray(w, dtype=float)
        a = np.asarray(a, dtype=float)
        if not dt > 0.0:
            raise ValueError("dt must be positive")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(a))):
            raise ValueError("non-finite IMU sample")
        self._C, self._c, self._d, self.P = _eqf_propagate(
            self._C, self._c, self._d, self.P, w, a, dt, self._g, self._qc
        )
        if self.t_last is not None:
            self.t_last += dt

    def update(self, y, sensor: int, r_meas=None, t: float | None = None) -> UpdateResult:
        """Fuse a GNSS antenna-position fix from ``sensor`` (1-based)."""
        self._check_sensor(sensor)
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValueError("non-finite measurement")
        r = self._r_matrix(r_meas)
        if t is not None and self.t_last is not None and t < self.t_last - 1e-9:
            logger.warning("dropping stale measurement at t=%.6f (filter at %.6f)", t, self.t_last)
            return UpdateResult(False, "stale", np.zeros(3), 0.0)
        status, mahal, C, c, d, P = _eqf_update(
            self._C, self._c, self._d, self.P, y, r, sensor - 1, self.mahalanobis_max
        )
        residual = (self._C[:3, 4] - self._d[sensor - 1]) - y
        if status == UPDATE_ILL_CONDITIONED:
            logger.warning("rejecting update: innovation covariance ill-conditioned")
            return UpdateResult(False, "ill_conditioned", residual, mahal)
        if status == UPDATE_GATED:
            logger.warning("rejecting update: Mahalanobis %.2f over gate", mahal)
            return UpdateResult(False, "gate", residual, mahal)
        self._C, self._c, self._d, self.P = C, c, d, P
        return UpdateResult(True, "ok", residual, mahal)

    def update_quantities(self, y, sensor: int, r_meas=None) -> UpdateQuantities:
        """Gain, innovation covariance and correction for one measurement
        (diagnostic path; does not change the filter state)."""
        self._check_sensor(sensor)
        y = np.asarray(y, dtype=float)
        r = self._r_matrix(r_meas)
        Ct = _eqf_C(self._C, self._d, y, sensor - 1)
        Arot = self._C[:3, :3]
        n_gain = Arot.T @ r @ Arot
        S = Ct @ self.P @ Ct.T + n_gain
        S = 0.5 * (S + S.T)
        K = np.linalg.solve(S, Ct @ self.P).T
        residual = (self._C[:3, 4] - self._d[sensor - 1]) - y
        return UpdateQuantities(S=S, K=K, residual=residual,
                                correction=K @ residual, output_gain=n_gain)

    def error_dynamics_matrix(self, w, a) -> np.ndarray:
        """Continuous-time error-dynamics matrix at the current estimate."""
        return _eqf_A(self._C, self._c, self._d,
                      np.asarray(w, dtype=float), np.asarray(a, dtype=float), self._g)

    def output_matrix(self, y, sensor: int) -> np.ndarray:
        """Output linearization for ``sensor`` (1-based) and measurement ``y``."""
        self._check_sensor(sensor)
        return _eqf_C(self._C, self._d, np.asarray(y, dtype=float), sensor - 1)

    def _r_matrix(self, r_meas) -> np.ndarray:
        if r_meas is None:
            return np.eye(3) * 0.05 ** 2
        r = np.asarray(r_meas, dtype=float)
        if r.ndim == 1:
            r = np.diag(r)
        return r

    def _check_sensor(self, sensor: int) -> None:
        if not 1 <= sensor <= self.n_sensors:
            raise IndexError(f"sensor index {sensor} out of range 1..{self.n_sensors}")

    @property
    def dim(self) -> int:
        return tangent_dim(self.n_sensors)

    def origin(self) -> NavState:
        return identity_state(self.n_sensors)
