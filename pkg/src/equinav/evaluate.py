"""Run-record containers, error metrics, and consistency statistics.

Metrics are evaluated over the *asymptotic phase* ``t >= t0`` so that the
initial transient does not dominate the statistics.  Attitude error is the
full geodesic angle between estimated and true rotation.  The normalized
estimation error squared (NEES) restricts to the rotation, position, and
lever-arm blocks; each filter's error is expressed in the coordinates its
covariance actually lives in — the group-affine filter uses the symmetry-group
error in normal coordinates, the multiplicative EKF its conventional
multiplicative/additive error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import maybe_njit
from .lie import so3_log
from .symmetry import (
    _act_parts,
    _group_from_state_parts,
    _inverse_parts,
    _log_parts,
)

_EPS_T = 1e-9  # timestamp comparison slack, far below any sample period


@dataclass
class RunRecord:
    """Per-timestamp estimate/truth/covariance history of one filter run."""

    filter_name: str
    t: np.ndarray                      # (T,)
    est_R: np.ndarray                  # (T, 3, 3)
    est_v: np.ndarray                  # (T, 3)
    est_p: np.ndarray                  # (T, 3)
    est_bg: np.ndarray                 # (T, 3)
    est_ba: np.ndarray                 # (T, 3)
    est_calib: np.ndarray              # (T, N, 3)
    p_diag: np.ndarray                 # (T, dim)
    est_quat: np.ndarray | None = None    # (T, 4) scalar-first, mirrors est_R
    truth_quat: np.ndarray | None = None  # (T, 4) scalar-first, mirrors truth_R
    truth_R: np.ndarray | None = None  # (T, 3, 3)
    truth_v: np.ndarray | None = None
    truth_p: np.ndarray | None = None
    truth_calib: np.ndarray | None = None  # (N, 3), constant lever arms
    P: np.ndarray | None = None        # (T, dim, dim) full covariance
    nees: np.ndarray | None = None     # (T,) cached consistency statistic
    n_updates: int = 0
    n_rejected: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_sensors(self) -> int:
        return self.est_calib.shape[1]

    @property
    def has_truth(self) -> bool:
        return self.truth_R is not None and self.truth_p is not None

    def window(self, t0: float) -> np.ndarray:
        """Boolean mask of samples in the asymptotic phase ``t >= t0``."""
        if len(self.t) == 0:
            raise ValueError("empty run record")
        if t0 >= self.t[-1] + _EPS_T:
            raise ValueError(
                f"evaluation window start t0={t0} is past the last sample t={self.t[-1]}"
            )
        return self.t >= t0 - _EPS_T


@dataclass(frozen=True)
class Summary:
    """Asymptotic-phase metrics of one run."""

    rmse_pos: float
    rmse_att: float
    rmse_calib: list[float]
    nees_mean: float
    t0: float

    def __post_init__(self):
        if self.rmse_pos < 0 or self.rmse_att < 0 or any(c < 0 for c in self.rmse_calib):
            raise ValueError("RMSE values must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "rmse_pos": self.rmse_pos,
            "rmse_att": self.rmse_att,
            "rmse_calib": list(self.rmse_calib),
            "nees_mean": self.nees_mean,
            "t0": self.t0,
        }

    @staticmethod
    def from_dict(data: dict) -> "Summary":
        return Summary(
            rmse_pos=float(data["rmse_pos"]),
            rmse_att=float(data["rmse_att"]),
            rmse_calib=[float(x) for x in data["rmse_calib"]],
            nees_mean=float(data["nees_mean"]),
            t0=float(data["t0"]),
        )


def _require_truth(record: RunRecord) -> None:
    if not record.has_truth:
        raise ValueError("run record carries no ground truth")


def rmse_position(record: RunRecord, t0: float) -> float:
    """Root-mean-square norm of the position error over ``t >= t0``."""
    _require_truth(record)
    mask = record.window(t0)
    err = record.est_p[mask] - record.truth_p[mask]
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


def attitude_error_deg(record: RunRecord) -> np.ndarray:
    """Per-sample geodesic attitude error in degrees."""
    _require_truth(record)
    rel = np.einsum("tji,tjk->tik", record.est_R, record.truth_R)
    tr = np.clip((np.trace(rel, axis1=1, axis2=2) - 1.0) / 2.0, -1.0, 1.0)
    return np.degrees(np.arccos(tr))


def rmse_attitude(record: RunRecord, t0: float) -> float:
    """Root-mean-square geodesic attitude error in degrees over ``t >= t0``."""
    mask = record.window(t0)
    ang = attitude_error_deg(record)[mask]
    return float(np.sqrt(np.mean(ang * ang)))


def rmse_calibration(record: RunRecord, t0: float) -> list[float]:
    """Per-sensor RMS lever-arm error in meters over ``t >= t0``."""
    _require_truth(record)
    if record.truth_calib is None:
        raise ValueError("run record carries no ground-truth lever arms")
    mask = record.window(t0)
    out = []
    for i in range(record.n_sensors):
        err = record.est_calib[mask, i, :] - record.truth_calib[None, i, :]
        out.append(float(np.sqrt(np.mean(np.sum(err * err, axis=1)))))
    return out


def _consistency_indices(n_sensors: int) -> np.ndarray:
    """Tangent indices of the rotation, position, and lever-arm blocks."""
    idx = list(range(0, 3)) + list(range(6, 9)) + list(range(15, 15 + 3 * n_sensors))
    return np.asarray(idx, dtype=np.int64)


@maybe_njit
def _nees_row(eps, P, idx):
    m = idx.shape[0]
    e = np.empty(m)
    S = np.empty((m, m))
    for i in range(m):
        e[i] = eps[idx[i]]
        for j in range(m):
            S[i, j] = P[idx[i], idx[j]]
    return e @ np.linalg.solve(S, e) / m


@maybe_njit
def _nees_series_group(est_R, est_v, est_p, est_bg, est_ba, est_calib,
                       tr_R, tr_v, tr_p, tr_calib, P, idx):
    n = est_R.shape[0]
    out = np.empty(n)
    zero_bias = np.zeros(6)
    for k in range(n):
        bias = np.empty(6)
        bias[:3] = est_bg[k]
        bias[3:] = est_ba[k]
        C, c, d = _group_from_state_parts(est_R[k], est_v[k], est_p[k], bias,
                                          est_calib[k])
        Ci, ci, di = _inverse_parts(C, c, d)
        Te, eb, ec = _act_parts(Ci, ci, di, tr_R[k], tr_v[k], tr_p[k],
                                zero_bias, tr_calib)
        Ce, ce, de = _group_from_state_parts(
            np.ascontiguousarray(Te[:3, :3]), np.ascontiguousarray(Te[:3, 3]),
            np.ascontiguousarray(Te[:3, 4]), eb, ec,
        )
        eps = _log_parts(Ce, ce, de)
        out[k] = _nees_row(eps, P[k], idx)
    return out


@maybe_njit
def _nees_series_mekf(est_R, est_p, est_calib, tr_R, tr_p, tr_calib, P, idx):
    n = est_R.shape[0]
    n_sensors = est_calib.shape[1]
    dim = 15 + 3 * n_sensors
    out = np.empty(n)
    for k in range(n):
        eps = np.zeros(dim)
        rel = np.ascontiguousarray(est_R[k].T) @ np.ascontiguousarray(tr_R[k])
        eps[0:3] = so3_log(rel)
        eps[6:9] = tr_p[k] - est_p[k]
        for i in range(n_sensors):
            eps[15 + 3 * i:18 + 3 * i] = tr_calib[i] - est_calib[k, i]
        out[k] = _nees_row(eps, P[k], idx)
    return out


def nees_series(record: RunRecord) -> np.ndarray:
    """Dimension-normalized NEES per sample over (rotation, position, levers)."""
    _require_truth(record)
    if record.truth_calib is None:
        raise ValueError("run record carries no ground-truth lever arms")
    if record.P is None:
        raise ValueError("full covariance history required for NEES")
    idx = _consistency_indices(record.n_sensors)
    tr_calib = np.ascontiguousarray(record.truth_calib, dtype=float)
    if record.filter_name == "mekf":
        return _nees_series_mekf(
            np.ascontiguousarray(record.est_R), np.ascontiguousarray(record.est_p),
            np.ascontiguousarray(record.est_calib),
            np.ascontiguousarray(record.truth_R), np.ascontiguousarray(record.truth_p),
            tr_calib, np.ascontiguousarray(record.P), idx,
        )
    truth_v = record.truth_v
    if truth_v is None:
        truth_v = np.zeros_like(record.truth_p)
    return _nees_series_group(
        np.ascontiguousarray(record.est_R), np.ascontiguousarray(record.est_v),
        np.ascontiguousarray(record.est_p), np.ascontiguousarray(record.est_bg),
        np.ascontiguousarray(record.est_ba), np.ascontiguousarray(record.est_calib),
        np.ascontiguousarray(record.truth_R), np.ascontiguousarray(truth_v),
        np.ascontiguousarray(record.truth_p), tr_calib,
        np.ascontiguousarray(record.P), idx,
    )


def filter_energy(record: RunRecord, t0: float) -> tuple[np.ndarray, float]:
    """Per-sample NEES series plus its mean over the asymptotic phase."""
    series = record.nees if record.nees is not None else nees_series(record)
    mask = record.window(t0)
    return series, float(np.mean(series[mask]))


def summarize(record: RunRecord, t0: float) -> Summary:
    """Asymptotic-phase Summary of one run."""
    _, nees_mean = filter_energy(record, t0)
    return Summary(
        rmse_pos=rmse_position(record, t0),
        rmse_att=rmse_attitude(record, t0),
        rmse_calib=rmse_calibration(record, t0),
        nees_mean=nees_mean,
        t0=float(t0),
    )


def error_at(record: RunRecord, t: float) -> dict:
    """Instantaneous errors at the sample nearest to ``t``."""
    _require_truth(record)
    k = int(np.argmin(np.abs(record.t - t)))
    ang = attitude_error_deg(record)[k]
    pos = float(np.linalg.norm(record.est_p[k] - record.truth_p[k]))
    return {"t": float(record.t[k]), "att_err_deg": float(ang), "pos_err_m": pos}


_METRICS = ("rmse_pos", "rmse_att", "nees_mean")


def compare_runs(records: dict[str, RunRecord], t0: float) -> dict:
    """Side-by-side summaries with a best-per-metric verdict table.

    ``records`` maps a label (e.g. filter name) to its run record; all runs
    must come from the same scenario (identical timestamp grids).
    """
    if len(records) < 2:
        raise ValueError("need at least two runs to compare")
    labels = list(records)
    t_ref = records[labels[0]].t
    for label in labels[1:]:
        t_other = records[label].t
        if len(t_other) != len(t_ref) or not np.allclose(t_other, t_ref, atol=1e-9):
            raise ValueError("runs cover different scenarios (timestamp grids differ)")
    summaries = {label: summarize(records[label], t0) for label in labels}
    best = {}
    for metric in _METRICS:
        def score(label, _m=metric):
            value = getattr(summaries[label], _m)
            # best NEES is the one closest to the ideal value 1, best RMSE the smallest
            return abs(math.log(value)) if _m == "nees_mean" and value > 0 else value
        best[metric] = min(labels, key=score)
    columns = ["filter", "t0"] + list(_METRICS)
    rows = [
        [label, float(t0)] + [getattr(summaries[label], m) for m in _METRICS]
        for label in labels
    ]
    return {
        "t0": float(t0),
        "summaries": {label: s.to_dict() for label, s in summaries.items()},
        "table_i_style": {"columns": columns, "rows": rows, "best": best},
    }


def format_compare_table(comparison: dict) -> str:
    """Human-readable text table for the comparison dict."""
    block = comparison["table_i_style"]
    header = ["filter", "t0 [s]", "pos RMSE [m]", "att RMSE [deg]", "mean NEES"]
    lines = ["  ".join(f"{h:>16s}" for h in header)]
    for row in block["rows"]:
        cells = [f"{row[0]:>16s}", f"{row[1]:>16.1f}"]
        for value, metric in zip(row[2:], _METRICS):
            mark = "*" if block["best"][metric] == row[0] else " "
            cells.append(f"{value:>15.6g}{mark}")
        lines.append("  ".join(cells))
    lines.append("(* best per column)")
    return "\n".join(lines)
