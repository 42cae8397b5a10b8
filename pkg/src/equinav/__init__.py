"""Equivariant navigation: biased INS with N GNSS position sensors.

A symmetry-group filter and a multiplicative EKF baseline over the same
augmented navigation state (extended pose, IMU biases, per-sensor lever
arms), plus an analytic simulator, evaluation metrics, and a batch CLI.

Set ``EQUINAV_NUMBA`` to ``on``/``off``/``auto`` (default ``auto``) to
control whether hot kernels are JIT-compiled or run as pure numpy.
"""

from ._accel import NUMBA_ENABLED
from .config import GRAVITY, InitConfig, NoiseConfig, RunConfig, default_p0_diag
from .eqf import (
    EquivariantFilter,
    UpdateQuantities,
    UpdateResult,
)
from .evaluate import (
    RunRecord,
    Summary,
    attitude_error_deg,
    compare_runs,
    error_at,
    filter_energy,
    nees_series,
    rmse_attitude,
    rmse_calibration,
    rmse_position,
    summarize,
)
from .mekf import MultiplicativeEkf
from .runner import build_filter, initial_state, run_filter
from .sim import (
    Dataset,
    GnssData,
    ImuData,
    SimScenario,
    TruthBatch,
    gen_trajectory,
    simulate_dataset,
    synth_gnss,
    synth_imu,
)
from .symmetry import (
    GroupElement,
    NavState,
    act,
    calib_slice,
    compose,
    error_coords,
    error_coords_inv,
    group_exp,
    group_from_state,
    group_log,
    identity_element,
    identity_state,
    inverse,
    lift,
    output_action,
    output_map,
    state_from_group,
    tangent_dim,
)

__version__ = "0.1.0"

__all__ = [
    "GRAVITY",
    "NUMBA_ENABLED",
    "Dataset",
    "EquivariantFilter",
    "GnssData",
    "GroupElement",
    "ImuData",
    "InitConfig",
    "MultiplicativeEkf",
    "NavState",
    "NoiseConfig",
    "RunConfig",
    "RunRecord",
    "SimScenario",
    "Summary",
    "TruthBatch",
    "UpdateQuantities",
    "UpdateResult",
    "act",
    "attitude_error_deg",
    "build_filter",
    "calib_slice",
    "compare_runs",
    "compose",
    "default_p0_diag",
    "error_at",
    "error_coords",
    "error_coords_inv",
    "filter_energy",
    "gen_trajectory",
    "group_exp",
    "group_from_state",
    "group_log",
    "identity_element",
    "identity_state",
    "initial_state",
    "inverse",
    "lift",
    "nees_series",
    "output_action",
    "output_map",
    "rmse_attitude",
    "rmse_calibration",
    "rmse_position",
    "run_filter",
    "simulate_dataset",
    "state_from_group",
    "summarize",
    "synth_gnss",
    "synth_imu",
    "tangent_dim",
]
