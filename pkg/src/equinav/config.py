"""Noise/tuning configuration shared by both filters and the simulator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .symmetry import tangent_dim

GRAVITY = (0.0, 0.0, 9.81)

# Default initial-uncertainty standard deviations per error block.
P0_STD = {
    "rot": 0.3,      # rad
    "vel": 1.5,      # m/s
    "pos": 1.0,      # m
    "b_gyro": 0.02,  # rad/s
    "b_acc": 0.08,   # m/s^2
    "calib": 1.0,    # m
}


def default_p0_diag(n_sensors: int) -> np.ndarray:
    """Diagonal of the default initial covariance for ``n_sensors``."""
    diag = np.empty(tangent_dim(n_sensors))
    diag[0:3] = P0_STD["rot"] ** 2
    diag[3:6] = P0_STD["vel"] ** 2
    diag[6:9] = P0_STD["pos"] ** 2
    diag[9:12] = P0_STD["b_gyro"] ** 2
    diag[12:15] = P0_STD["b_acc"] ** 2
    diag[15:] = P0_STD["calib"] ** 2
    return diag


@dataclass(frozen=True)
class NoiseConfig:
    """Continuous-time noise densities and initial covariance.

    ``sigma_gyro`` and ``sigma_acc`` are white-noise densities
    (rad/s/sqrt(Hz), m/s^2/sqrt(Hz)); the ``*_walk`` entries are
    random-walk densities driving the bias and lever-arm states.
    ``p0_diag`` may be left ``None`` and built per sensor count.
    """

    sigma_gyro: float = 0.002
    sigma_acc: float = 0.02
    sigma_bg_walk: float = 1e-5
    sigma_ba_walk: float = 1e-4
    sigma_calib_walk: float = 1e-4
    p0_diag: np.ndarray | None = None
    gravity: tuple[float, float, float] = GRAVITY

    def gravity_vec(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=float)

    def p0(self, n_sensors: int) -> np.ndarray:
        """Initial covariance matrix for ``n_sensors`` receivers."""
        if self.p0_diag is not None:
            diag = np.asarray(self.p0_diag, dtype=float)
            if diag.shape != (tangent_dim(n_sensors),):
                raise ValueError("p0_diag has wrong dimension for sensor count")
        else:
            diag = default_p0_diag(n_sensors)
        return np.diag(diag)

    def process_noise_diag(self, n_sensors: int) -> np.ndarray:
        """Diagonal continuous-time process noise in error coordinates."""
        diag = np.zeros(tangent_dim(n_sensors))
        diag[0:3] = self.sigma_gyro ** 2
        diag[3:6] = self.sigma_acc ** 2
        diag[6:9] = 0.0
        diag[9:12] = self.sigma_bg_walk ** 2
        diag[12:15] = self.sigma_ba_walk ** 2
        diag[15:] = self.sigma_calib_walk ** 2
        return diag

    def to_dict(self) -> dict:
        return {
            "sigma_gyro": self.sigma_gyro,
            "sigma_acc": self.sigma_acc,
            "sigma_bg_walk": self.sigma_bg_walk,
            "sigma_ba_walk": self.sigma_ba_walk,
            "sigma_calib_walk": self.sigma_calib_walk,
            "p0_diag": None if self.p0_diag is None else list(map(float, self.p0_diag)),
            "gravity": list(self.gravity),
        }

    @staticmethod
    def from_dict(data: dict) -> "NoiseConfig":
        kwargs = dict(data)
        for key in ("sigma_gyro", "sigma_acc", "sigma_bg_walk",
                    "sigma_ba_walk", "sigma_calib_walk"):
            if key in kwargs:
                kwargs[key] = float(kwargs[key])
        if kwargs.get("p0_diag") is not None:
            kwargs["p0_diag"] = np.asarray(kwargs["p0_diag"], dtype=float)
        if "gravity" in kwargs:
            kwargs["gravity"] = tuple(float(x) for x in kwargs["gravity"])
        return NoiseConfig(**kwargs)


@dataclass(frozen=True)
class InitConfig:
    """Initial-state overrides applied on top of the origin state.

    ``yaw_deg`` rotates the initial attitude estimate about the vertical
    axis; ``calib`` sets the initial lever-arm estimates (meters); ``pos``
    and ``vel`` set the initial position/velocity.  ``from_truth`` starts
    from the first ground-truth record of the dataset instead.
    """

    yaw_deg: float = 0.0
    calib: np.ndarray | None = None
    pos: np.ndarray | None = None
    vel: np.ndarray | None = None
    from_truth: bool = False

    def to_dict(self) -> dict:
        return {
            "yaw_deg": self.yaw_deg,
            "calib": None if self.calib is None else np.asarray(self.calib, float).tolist(),
            "pos": None if self.pos is None else np.asarray(self.pos, float).tolist(),
            "vel": None if self.vel is None else np.asarray(self.vel, float).tolist(),
            "from_truth": self.from_truth,
        }

    @staticmethod
    def from_dict(data: dict) -> "InitConfig":
        kwargs = dict(data)
        if "yaw_deg" in kwargs:
            kwargs["yaw_deg"] = float(kwargs["yaw_deg"])
        if "from_truth" in kwargs:
            kwargs["from_truth"] = bool(kwargs["from_truth"])
        for key in ("calib", "pos", "vel"):
            if kwargs.get(key) is not None:
                kwargs[key] = np.asarray(kwargs[key], dtype=float)
        return InitConfig(**kwargs)


@dataclass(frozen=True)
class RunConfig:
    """Batch-run configuration for the CLI and the runner.

    ``t0`` marks the start of the asymptotic evaluation phase;
    ``gnss_sigma_default`` (meters, 1-sigma) applies to GNSS files without
    variance columns; ``seeds`` drives Monte-Carlo sweeps.
    """

    filter: str = "eqf"
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    init: InitConfig = field(default_factory=InitConfig)
    t0: float = 40.0
    gnss_sigma_default: float = 0.05
    mahalanobis_max: float = 1000.0
    seeds: tuple[int, ...] = (0,)

    def to_dict(self) -> dict:
        return {
            "filter": self.filter,
            "noise": self.noise.to_dict(),
            "init": self.init.to_dict(),
            "t0": self.t0,
            "gnss_sigma_default": self.gnss_sigma_default,
            "mahalanobis_max": self.mahalanobis_max,
            "seeds": list(self.seeds),
        }

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        kwargs = dict(data)
        if "filter" in kwargs:
            kwargs["filter"] = str(kwargs["filter"])
        for key in ("t0", "gnss_sigma_default", "mahalanobis_max"):
            if key in kwargs:
                kwargs[key] = float(kwargs[key])
        if "noise" in kwargs:
            kwargs["noise"] = NoiseConfig.from_dict(kwargs["noise"])
        if "init" in kwargs:
            kwargs["init"] = InitConfig.from_dict(kwargs["init"])
        if "seeds" in kwargs:
            kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
        return RunConfig(**kwargs)
