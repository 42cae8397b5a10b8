"""Multiplicative EKF baseline with the same state and measurement set.

Error state layout matches the equivariant filter: ``[attitude(3),
velocity(3), position(3), gyro bias(3), accel bias(3), lever arms(3N)]``.
The attitude error is right-multiplicative: ``R = Rhat @ exp(wedge(dtheta))``.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from ._accel import maybe_njit
from .config import NoiseConfig
from .eqf import (
    UPDATE_GATED,
    UPDATE_ILL_CONDITIONED,
    UPDATE_OK,
    UpdateQuantities,
    UpdateResult,
)
from .lie import so3_exp, so3_wedge
from .symmetry import NavState, identity_state, tangent_dim

logger = logging.getLogger(__name__)

_COND_MAX = 1e12


@maybe_njit
def _mekf_propagate(R, v, p, bg, ba, calib, P, w, a, dt, gravity, qc_diag):
    n = calib.shape[0]
    dim = 15 + 3 * n
    acc = R @ (a - ba) + gravity
    F = np.zeros((dim, dim))
    F[0:3, 0:3] = -so3_wedge(w - bg)
    F[3:6, 0:3] = -(R @ so3_wedge(a - ba))
    for k in range(3):
        F[0 + k, 9 + k] = -1.0
        F[6 + k, 3 + k] = 1.0
    F[3:6, 12:15] = -R
    Phi = np.eye(dim) + F * dt
    P_new = Phi @ P @ Phi.T
    for k in range(dim):
        P_new[k, k] += qc_diag[k] * dt
    R_new = R @ so3_exp((w - bg) * dt)
    v_new = v + acc * dt
    p_new = p + v * dt + 0.5 * dt * dt * acc
    return R_new, v_new, p_new, P_new


@maybe_njit
def _mekf_update(R, v, p, bg, ba, calib, P, y, r_meas, s0, mahal_max):
    n = calib.shape[0]
    dim = 15 + 3 * n
    t_i = np.ascontiguousarray(calib[s0])
    H = np.zeros((3, dim))
    H[:, 0:3] = -(R @ so3_wedge(t_i))
    for k in range(3):
        H[k, 6 + k] = 1.0
    H[:, 15 + 3 * s0 : 18 + 3 * s0] = R
    S = H @ P @ H.T + r_meas
    S = 0.5 * (S + S.T)
    eigs = np.linalg.eigvalsh(S)
    if eigs[0] <= 0.0 or eigs[2] / eigs[0] > _COND_MAX:
        return UPDATE_ILL_CONDITIONED, 0.0, R, v, p, bg, ba, calib, P
    z = y - (p + R @ t_i)
    m2 = z @ np.linalg.solve(S, z)
    mahal = math.sqrt(max(m2, 0.0))
    if mahal > mahal_max:
        return UPDATE_GATED, mahal, R, v, p, bg, ba, calib, P
    K = np.linalg.solve(S, H @ P).T
    dx = K @ z
    R_new = R @ so3_exp(dx[0:3])
    v_new = v + dx[3:6]
    p_new = p + dx[6:9]
    bg_new = bg + dx[9:12]
    ba_new = ba + dx[12:15]
    calib_new = calib.copy()
    for i in range(n):
        calib_new[i] += dx[15 + 3 * i : 18 + 3 * i]
    IKH = np.eye(dim) - K @ H
    P_new = IKH @ P @ IKH.T + K @ r_meas @ K.T
    P_new = 0.5 * (P_new + P_new.T)
    return UPDATE_OK, mahal, R_new, v_new, p_new, bg_new, ba_new, calib_new, P_new


class MultiplicativeEkf:
    """Error-state Kalman filter baseline over the same navigation state.

    Shares the error layout, process-noise mapping, initial covariance and
    measurement interface with :class:`~equinav.eqf.EquivariantFilter`, so
    either filter can be driven by the same run script.
    """

    def __init__(self, n_sensors: int, noise: NoiseConfig | None = None,
                 mahalanobis_max: float = 1000.0):
        if n_sensors < 1:
            raise ValueError("need at least one sensor")
        noise = noise or NoiseConfig()
        self.n_sensors = n_sensors
        self.noise = noise
        self.mahalanobis_max = float(mahalanobis_max)
        origin = identity_state(n_sensors)
        self._R = origin.R
        self._v = origin.v
        self._p = origin.p
        self._bg = origin.b_gyro
        self._ba = origin.b_acc
        self._calib = origin.calib
        self.P = noise.p0(n_sensors)
        self._g = noise.gravity_vec()
        self._qc = noise.process_noise_diag(n_sensors)
        self.t_last: float | None = None

    @classmethod
    def from_state(cls, xi: NavState, noise: NoiseConfig | None = None,
                   mahalanobis_max: float = 1000.0) -> "MultiplicativeEkf":
        """Initialize the nominal state at ``xi``."""
        obj = cls(xi.n_sensors, noise, mahalanobis_max)
        obj._R = xi.R.copy()
        obj._v = xi.v.copy()
        obj._p = xi.p.copy()
        obj._bg = xi.b_gyro.copy()
        obj._ba = xi.b_acc.copy()
        obj._calib = xi.calib.copy()
        return obj

    def state_estimate(self) -> NavState:
        return NavState(
            R=self._R,
            v=self._v,
            p=self._p,
            b_gyro=self._bg,
            b_acc=self._ba,
            calib=self._calib,
        )

    def propagate(self, w, a, dt: float) -> None:
        """Advance the nominal state and covariance by one IMU sample."""
        w = np.asarray(w, dtype=float)
        a = np.asarray(a, dtype=float)
        if not dt > 0.0:
            raise ValueError("dt must be positive")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(a))):
            raise ValueError("non-finite IMU sample")
        self._R, self._v, self._p, self.P = _mekf_propagate(
            self._R, self._v, self._p, self._bg, self._ba, self._calib,
            self.P, w, a, dt, self._g, self._qc,
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
        residual = y - (self._p + self._R @ self._calib[sensor - 1])
        out = _mekf_update(
            self._R, self._v, self._p, self._bg, self._ba, self._calib,
            self.P, y, r, sensor - 1, self.mahalanobis_max,
        )
        status, mahal = out[0], out[1]
        if status == UPDATE_ILL_CONDITIONED:
            logger.warning("rejecting update: innovation covariance ill-conditioned")
            return UpdateResult(False, "ill_conditioned", residual, mahal)
        if status == UPDATE_GATED:
            logger.warning("rejecting update: Mahalanobis %.2f over gate", mahal)
            return UpdateResult(False, "gate", residual, mahal)
        (self._R, self._v, self._p, self._bg, self._ba, self._calib, self.P) = out[2:]
        return UpdateResult(True, "ok", residual, mahal)

    def update_quantities(self, y, sensor: int, r_meas=None) -> UpdateQuantities:
        """Gain and innovation quantities (diagnostic; state unchanged)."""
        self._check_sensor(sensor)
        y = np.asarray(y, dtype=float)
        r = self._r_matrix(r_meas)
        H = self.output_matrix(sensor)
        S = H @ self.P @ H.T + r
        S = 0.5 * (S + S.T)
        K = np.linalg.solve(S, H @ self.P).T
        residual = y - (self._p + self._R @ self._calib[sensor - 1])
        return UpdateQuantities(S=S, K=K, residual=residual,
                                correction=K @ residual, output_gain=r)

    def error_dynamics_matrix(self, w, a) -> np.ndarray:
        """Continuous-time error-state dynamics matrix at the current estimate."""
        w = np.asarray(w, dtype=float)
        a = np.asarray(a, dtype=float)
        dim = tangent_dim(self.n_sensors)
        F = np.zeros((dim, dim))
        F[0:3, 0:3] = -so3_wedge(w - self._bg)
        F[0:3, 9:12] = -np.eye(3)
        F[3:6, 0:3] = -self._R @ so3_wedge(a - self._ba)
        F[3:6, 12:15] = -self._R
        F[6:9, 3:6] = np.eye(3)
        return F

    def output_matrix(self, sensor: int) -> np.ndarray:
        """Measurement Jacobian for ``sensor`` (1-based)."""
        self._check_sensor(sensor)
        dim = tangent_dim(self.n_sensors)
        s0 = sensor - 1
        H = np.zeros((3, dim))
        H[:, 0:3] = -self._R @ so3_wedge(self._calib[s0])
        H[:, 6:9] = np.eye(3)
        H[:, 15 + 3 * s0 : 18 + 3 * s0] = self._R
        return H

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
