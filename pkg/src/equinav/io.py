"""Dataset and run-record file formats.

All tables are UTF-8 CSV with a mandatory header row, ``.`` decimal
separator, and time in seconds as float64:

* ``imu.csv``: ``t,wx,wy,wz,ax,ay,az``
* ``gnss_<i>.csv``: ``t,x,y,z[,sxx,syy,szz]`` — trailing columns are the
  per-axis measurement variance; when absent the run configuration default
  applies
* ``truth.csv``: ``t,qw,qx,qy,qz,px,py,pz,vx,vy,vz`` — unit quaternion,
  scalar first
* ``run.csv``: per-timestamp estimate (quaternion, position, velocity,
  biases, lever arms), aligned truth when available, covariance diagonal,
  and the per-sample NEES

Floats are rendered with ``repr`` (shortest round-tripping decimal), so a
write → read → write cycle is byte-identical.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .evaluate import RunRecord, Summary
from .lie import quat_to_rot_batch
from .sim import Dataset, GnssData, ImuData, SimScenario, TruthBatch
from .symmetry import tangent_dim

logger = logging.getLogger(__name__)

IMU_COLUMNS = ("t", "wx", "wy", "wz", "ax", "ay", "az")
GNSS_COLUMNS = ("t", "x", "y", "z")
GNSS_VAR_COLUMNS = GNSS_COLUMNS + ("sxx", "syy", "szz")
TRUTH_COLUMNS = ("t", "qw", "qx", "qy", "qz", "px", "py", "pz", "vx", "vy", "vz")

_QUAT_NORM_TOL = 1e-6


class DataError(ValueError):
    """Schema or content violation in an input file."""


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_table(path, columns, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=float)
    if array.ndim != 2 or array.shape[1] != len(columns):
        raise ValueError(f"table shape {array.shape} does not match {len(columns)} columns")
    lines = [",".join(columns)]
    for row in array:
        lines.append(",".join(_fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_table(path, allowed_headers) -> tuple[tuple[str, ...], np.ndarray]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    header = tuple(lines[0].strip().split(","))
    if header not in [tuple(h) for h in allowed_headers]:
        raise DataError(
            f"{path}: row 1: unexpected header {','.join(header)!r}"
        )
    n_cols = len(header)
    rows = []
    for idx, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != n_cols:
            raise DataError(f"{path}: row {idx}: expected {n_cols} columns, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise DataError(f"{path}: row {idx}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, np.asarray(rows, dtype=float)


def _require_strictly_increasing(path, t: np.ndarray) -> None:
    bad = np.nonzero(np.diff(t) <= 0)[0]
    if bad.size:
        raise DataError(f"{path}: row {bad[0] + 3}: timestamps not strictly increasing")


def _drop_out_of_order(path, t: np.ndarray) -> np.ndarray:
    """Indices of the monotonic subsequence; warns about dropped rows."""
    keep = []
    last = -np.inf
    for k in range(len(t)):
        if t[k] > last:
            keep.append(k)
            last = t[k]
        else:
            logger.warning("%s: row %d: out-of-order timestamp %.6f dropped",
                           path, k + 2, t[k])
    return np.asarray(keep, dtype=int)


def write_imu_csv(path, imu: ImuData) -> None:
    _write_table(path, IMU_COLUMNS, np.column_stack([imu.t, imu.w, imu.a]))


def read_imu_csv(path) -> ImuData:
    _, data = _read_table(path, [IMU_COLUMNS])
    _require_strictly_increasing(path, data[:, 0])
    return ImuData(t=data[:, 0], w=data[:, 1:4], a=data[:, 4:7])


def write_gnss_csv(path, gnss: GnssData) -> None:
    _write_table(path, GNSS_VAR_COLUMNS, np.column_stack([gnss.t, gnss.y, gnss.var]))


def read_gnss_csv(path) -> GnssData:
    header, data = _read_table(path, [GNSS_COLUMNS, GNSS_VAR_COLUMNS])
    keep = _drop_out_of_order(path, data[:, 0])
    data = data[keep]
    var = data[:, 4:7] if len(header) == 7 else np.zeros((len(data), 3))
    if np.any(var < 0):
        raise DataError(f"{path}: negative measurement variance")
    return GnssData(t=data[:, 0], y=data[:, 1:4], var=var)


def write_truth_csv(path, truth: TruthBatch) -> None:
    quat = truth.quat
    if quat is None:
        from .lie import rot_to_quat_batch
        quat = rot_to_quat_batch(truth.R)
    _write_table(path, TRUTH_COLUMNS, np.column_stack([truth.t, quat, truth.p, truth.v]))


def read_truth_csv(path) -> TruthBatch:
    _, data = _read_table(path, [TRUTH_COLUMNS])
    _require_strictly_increasing(path, data[:, 0])
    quat = data[:, 1:5]
    norms = np.linalg.norm(quat, axis=1)
    bad = np.nonzero(np.abs(norms - 1.0) > _QUAT_NORM_TOL)[0]
    if bad.size:
        raise DataError(f"{path}: row {bad[0] + 2}: quaternion norm {norms[bad[0]]:.8f} is not 1")
    zeros = np.zeros((len(data), 3))
    return TruthBatch(
        t=data[:, 0], R=quat_to_rot_batch(quat), v=data[:, 8:11], p=data[:, 5:8],
        w_body=zeros, a_body=zeros.copy(),
        b_gyro=zeros.copy(), b_acc=zeros.copy(), quat=quat,
    )


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc


def save_dataset(directory, dataset: Dataset) -> None:
    """Write scenario.json, imu.csv, gnss_<i>.csv, and truth.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_json(directory / "scenario.json", dataset.scenario.to_dict())
    write_imu_csv(directory / "imu.csv", dataset.imu)
    for i, stream in enumerate(dataset.gnss, start=1):
        write_gnss_csv(directory / f"gnss_{i}.csv", stream)
    if dataset.truth is not None:
        write_truth_csv(directory / "truth.csv", dataset.truth)


def load_dataset(directory) -> Dataset:
    """Read a dataset directory written by :func:`save_dataset`."""
    directory = Path(directory)
    scenario_path = directory / "scenario.json"
    if not scenario_path.exists():
        raise DataError(f"{scenario_path}: missing scenario file")
    try:
        scenario = SimScenario.from_dict(read_json(scenario_path))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{scenario_path}: invalid scenario: {exc}") from exc
    imu = read_imu_csv(directory / "imu.csv")
    gnss = []
    for i in range(1, scenario.n_sensors + 1):
        gnss_path = directory / f"gnss_{i}.csv"
        if not gnss_path.exists():
            raise DataError(f"{gnss_path}: missing GNSS file for sensor {i}")
        gnss.append(read_gnss_csv(gnss_path))
    truth_path = directory / "truth.csv"
    truth = read_truth_csv(truth_path) if truth_path.exists() else None
    return Dataset(scenario=scenario, imu=imu, gnss=tuple(gnss), truth=truth)


def _run_columns(n_sensors: int, dim: int, with_truth: bool) -> list[str]:
    cols = ["t", "qw", "qx", "qy", "qz", "px", "py", "pz", "vx", "vy", "vz",
            "bgx", "bgy", "bgz", "bax", "bay", "baz"]
    for i in range(1, n_sensors + 1):
        cols += [f"c{i}x", f"c{i}y", f"c{i}z"]
    if with_truth:
        cols += ["tqw", "tqx", "tqy", "tqz", "tpx", "tpy", "tpz", "tvx", "tvy", "tvz"]
        for i in range(1, n_sensors + 1):
            cols += [f"tc{i}x", f"tc{i}y", f"tc{i}z"]
    cols += [f"pd{j}" for j in range(dim)]
    if with_truth:
        cols.append("nees")
    return cols


def write_run_csv(path, record: RunRecord) -> None:
    n = len(record.t)
    n_sensors = record.n_sensors
    dim = record.p_diag.shape[1]
    with_truth = record.has_truth
    est_quat = record.est_quat
    if est_quat is None:
        from .lie import rot_to_quat_batch
        est_quat = rot_to_quat_batch(record.est_R)
    blocks = [record.t.reshape(n, 1), est_quat, record.est_p, record.est_v,
              record.est_bg, record.est_ba, record.est_calib.reshape(n, -1)]
    if with_truth:
        truth_quat = record.truth_quat
        if truth_quat is None:
            from .lie import rot_to_quat_batch
            truth_quat = rot_to_quat_batch(record.truth_R)
        truth_calib = np.broadcast_to(
            record.truth_calib.reshape(1, -1), (n, 3 * n_sensors)
        )
        blocks += [truth_quat, record.truth_p, record.truth_v, truth_calib]
    blocks.append(record.p_diag)
    if with_truth:
        nees = record.nees if record.nees is not None else np.full(n, np.nan)
        blocks.append(nees.reshape(n, 1))
    table = np.column_stack(blocks)
    _write_table(path, _run_columns(n_sensors, dim, with_truth), table)


def read_run_csv(path, filter_name: str | None = None) -> RunRecord:
    """Reconstruct a run record (without the full covariance history)."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = tuple(fh.readline().strip().split(","))
    n_sensors = sum(1 for c in header if len(c) == 3 and c[0] == "c" and c.endswith("x"))
    with_truth = "nees" in header
    dim = sum(1 for c in header if c.startswith("pd"))
    if dim != tangent_dim(n_sensors):
        raise DataError(
            f"{path}: covariance diagonal has {dim} entries, expected "
            f"{tangent_dim(n_sensors)} for {n_sensors} sensors"
        )
    expected = tuple(_run_columns(n_sensors, dim, with_truth))
    _, data = _read_table(path, [expected])
    _require_strictly_increasing(path, data[:, 0])
    n = len(data)
    if filter_name is None:
        stem = path.stem
        filter_name = stem[: -len("_run")] if stem.endswith("_run") else stem
    col = 1
    def take(width):
        nonlocal col
        block = data[:, col:col + width]
        col += width
        return block
    est_quat = take(4)
    norms = np.linalg.norm(est_quat, axis=1)
    bad = np.nonzero(np.abs(norms - 1.0) > _QUAT_NORM_TOL)[0]
    if bad.size:
        raise DataError(f"{path}: row {bad[0] + 2}: quaternion norm {norms[bad[0]]:.8f} is not 1")
    est_p = take(3)
    est_v = take(3)
    est_bg = take(3)
    est_ba = take(3)
    est_calib = take(3 * n_sensors).reshape(n, n_sensors, 3)
    truth_quat = truth_R = truth_p = truth_v = truth_calib = nees = None
    if with_truth:
        truth_quat = take(4)
        truth_p = take(3)
        truth_v = take(3)
        truth_calib = take(3 * n_sensors)[0].reshape(n_sensors, 3).copy()
        truth_R = quat_to_rot_batch(truth_quat)
    p_diag = take(dim)
    if with_truth:
        nees = take(1).ravel()
    return RunRecord(
        filter_name=filter_name,
        t=data[:, 0],
        est_R=quat_to_rot_batch(est_quat), est_v=est_v, est_p=est_p,
        est_bg=est_bg, est_ba=est_ba, est_calib=est_calib,
        p_diag=p_diag, est_quat=est_quat, truth_quat=truth_quat,
        truth_R=truth_R, truth_v=truth_v, truth_p=truth_p,
        truth_calib=truth_calib, nees=nees,
    )


def summary_payload(record: RunRecord, summary: Summary) -> dict:
    """JSON payload for summary.json: Summary fields plus run diagnostics."""
    payload = {"filter": record.filter_name}
    payload.update(summary.to_dict())
    payload["final_calib"] = [list(map(float, row)) for row in record.est_calib[-1]]
    payload["n_updates"] = record.n_updates
    payload["n_rejected"] = record.n_rejected
    return payload
