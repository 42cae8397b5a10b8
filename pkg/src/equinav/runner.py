"""Event-driven filter execution over a multi-rate dataset.

IMU samples drive zero-order-hold propagation; GNSS fixes are fused at
their own timestamps, splitting the enclosing IMU interval when needed.
The estimate history is recorded on the IMU clock, after every event with
an equal-or-earlier timestamp has been processed.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .config import InitConfig, NoiseConfig, RunConfig
from .eqf import EquivariantFilter
from .lie import rot_to_quat_batch
from .evaluate import RunRecord, nees_series
from .mekf import MultiplicativeEkf
from .sim import Dataset
from .symmetry import NavState, identity_state, tangent_dim
from .symmetry import _state_from_group_parts

logger = logging.getLogger(__name__)

FILTER_KINDS = ("eqf", "mekf")

_T_EPS = 1e-9  # clock comparison slack, far below any sample period


def initial_state(dataset: Dataset, init: InitConfig) -> NavState:
    """Initial navigation state from the configured overrides.

    The base state is the first ground-truth record when ``from_truth`` is
    set (including the true lever arms), otherwise the origin state.  The
    yaw offset is applied on top of the base attitude, and explicit
    position/velocity/lever-arm overrides replace the base values.
    """
    n = dataset.scenario.n_sensors
    if init.from_truth:
        truth = dataset.truth
        base = NavState(
            R=truth.R[0], v=truth.v[0], p=truth.p[0],
            b_gyro=truth.b_gyro[0], b_acc=truth.b_acc[0],
            calib=dataset.scenario.lever_array(),
        )
    else:
        base = identity_state(n)
    R = base.R
    if init.yaw_deg != 0.0:
        psi = math.radians(init.yaw_deg)
        cz, sz = math.cos(psi), math.sin(psi)
        Rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
        R = Rz @ R
    calib = base.calib if init.calib is None else np.asarray(init.calib, float).reshape(n, 3)
    pos = base.p if init.pos is None else np.asarray(init.pos, float)
    vel = base.v if init.vel is None else np.asarray(init.vel, float)
    return NavState(R=R, v=vel, p=pos, b_gyro=base.b_gyro, b_acc=base.b_acc,
                    calib=calib)


def build_filter(kind: str, state0: NavState, noise: NoiseConfig,
                 mahalanobis_max: float = 1000.0):
    """Instantiate a filter of the requested kind at ``state0``."""
    if kind == "eqf":
        return EquivariantFilter.from_state(state0, noise, mahalanobis_max)
    if kind == "mekf":
        return MultiplicativeEkf.from_state(state0, noise, mahalanobis_max)
    raise ValueError(f"unknown filter kind {kind!r}; choose from {FILTER_KINDS}")


def _snapshot(flt):
    """Current state parts without constructing a NavState."""
    if isinstance(flt, EquivariantFilter):
        R, v, p, bias, calib = _state_from_group_parts(flt._C, flt._c, flt._d)
        return R, v, p, bias[:3], bias[3:], calib
    return (flt._R.copy(), flt._v.copy(), flt._p.copy(),
            flt._bg.copy(), flt._ba.copy(), flt._calib.copy())


def _align_truth(imu_t: np.ndarray, dataset: Dataset):
    """Ground truth resampled to the IMU clock by nearest neighbor.

    Returns ``None`` when any IMU sample has no truth record within half an
    IMU period (partial truth is worse than none for the metrics).
    """
    truth = dataset.truth
    if truth is None or len(truth.t) == 0:
        return None
    if len(truth.t) == len(imu_t) and np.allclose(truth.t, imu_t, atol=_T_EPS):
        nearest = np.arange(len(imu_t))
    else:
        pos = np.searchsorted(truth.t, imu_t)
        lo = np.clip(pos - 1, 0, len(truth.t) - 1)
        hi = np.clip(pos, 0, len(truth.t) - 1)
        nearest = np.where(
            np.abs(truth.t[lo] - imu_t) <= np.abs(truth.t[hi] - imu_t), lo, hi
        )
        max_gap = np.abs(truth.t[nearest] - imu_t).max()
        if max_gap > 0.5 / dataset.scenario.imu_rate + _T_EPS:
            logger.warning(
                "truth records misaligned with the IMU clock (worst gap %.4f s); "
                "dropping truth from the run record", max_gap,
            )
            return None
    quat = truth.quat[nearest] if truth.quat is not None else rot_to_quat_batch(truth.R[nearest])
    return truth.R[nearest], truth.v[nearest], truth.p[nearest], quat


def _merge_gnss_events(dataset: Dataset):
    """All GNSS fixes as (t, sensor, y, var) sorted by time then sensor."""
    events = []
    for i, stream in enumerate(dataset.gnss, start=1):
        for k in range(len(stream.t)):
            events.append((float(stream.t[k]), i, stream.y[k], stream.var[k]))
    events.sort(key=lambda ev: (ev[0], ev[1]))
    return events


def run_filter(dataset: Dataset, kind: str, config: RunConfig | None = None,
               store_covariance: bool = True) -> RunRecord:
    """Run one filter over a dataset and record its estimate history."""
    config = config or RunConfig()
    if kind not in FILTER_KINDS:
        raise ValueError(f"unknown filter kind {kind!r}; choose from {FILTER_KINDS}")
    state0 = initial_state(dataset, config.init)
    flt = build_filter(kind, state0, config.noise, config.mahalanobis_max)
    imu = dataset.imu
    n = len(imu.t)
    if n == 0:
        raise ValueError("dataset has no IMU samples")
    n_sensors = dataset.scenario.n_sensors
    dim = tangent_dim(n_sensors)
    default_var = config.gnss_sigma_default**2

    est_R = np.empty((n, 3, 3))
    est_v = np.empty((n, 3))
    est_p = np.empty((n, 3))
    est_bg = np.empty((n, 3))
    est_ba = np.empty((n, 3))
    est_calib = np.empty((n, n_sensors, 3))
    P_hist = np.empty((n, dim, dim)) if store_covariance else None
    p_diag = np.empty((n, dim))

    events = _merge_gnss_events(dataset)
    e_idx = 0
    n_events = len(events)
    clock = float(imu.t[0])
    flt.t_last = clock
    n_updates = 0
    n_rejected = 0
    for k in range(n):
        t_k = float(imu.t[k])
        # inputs of the previous row are held over (t_{k-1}, t_k]
        if k > 0:
            w_hold, a_hold = imu.w[k - 1], imu.a[k - 1]
            while e_idx < n_events and events[e_idx][0] <= t_k + _T_EPS:
                t_ev, sensor, y, var = events[e_idx]
                e_idx += 1
                if t_ev > clock + _T_EPS:
                    flt.propagate(w_hold, a_hold, t_ev - clock)
                    clock = t_ev
                r = np.diag(var) if np.all(var > 0.0) else default_var * np.eye(3)
                result = flt.update(y, sensor, r_meas=r, t=t_ev)
                n_updates += 1
                n_rejected += 0 if result.accepted else 1
            if t_k > clock + _T_EPS:
                flt.propagate(w_hold, a_hold, t_k - clock)
                clock = t_k
        else:
            while e_idx < n_events and events[e_idx][0] <= t_k + _T_EPS:
                t_ev, sensor, y, var = events[e_idx]
                e_idx += 1
                r = np.diag(var) if np.all(var > 0.0) else default_var * np.eye(3)
                result = flt.update(y, sensor, r_meas=r, t=t_ev)
                n_updates += 1
                n_rejected += 0 if result.accepted else 1
        est_R[k], est_v[k], est_p[k], est_bg[k], est_ba[k], est_calib[k] = _snapshot(flt)
        if store_covariance:
            P_hist[k] = flt.P
        p_diag[k] = np.diag(flt.P)
    if e_idx < n_events:
        logger.warning("%d GNSS fixes after the final IMU sample were ignored",
                       n_events - e_idx)

    aligned = _align_truth(imu.t, dataset)
    truth_R = truth_v = truth_p = truth_quat = truth_calib = None
    if aligned is not None:
        truth_R, truth_v, truth_p, truth_quat = aligned
        truth_calib = dataset.scenario.lever_array()
    record = RunRecord(
        filter_name=kind,
        t=imu.t.copy(),
        est_R=est_R, est_v=est_v, est_p=est_p,
        est_bg=est_bg, est_ba=est_ba, est_calib=est_calib,
        p_diag=p_diag,
        est_quat=rot_to_quat_batch(est_R),
        truth_quat=truth_quat,
        truth_R=truth_R, truth_v=truth_v, truth_p=truth_p,
        truth_calib=truth_calib,
        P=P_hist,
        n_updates=n_updates,
        n_rejected=n_rejected,
        meta={"scenario": dataset.scenario.to_dict(), "filter": kind},
    )
    if store_covariance and record.has_truth:
        record.nees = nees_series(record)
    return record
