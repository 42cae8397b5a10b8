"""Trajectory and sensor simulator.

Trajectories are closed-form curves differentiated analytically, so the
ground truth is kinematically consistent to machine precision.  Attitude is
parameterized by smooth ZYX Euler angle schedules; body rates follow from
the exact Euler-rate kinematics.  Sensor streams are derived from the truth
with seeded, stream-separated noise generators, which makes every dataset
byte-reproducible from ``(scenario, seed)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .config import NoiseConfig
from .lie import rot_to_quat_batch

PROFILES = ("hover", "circle", "figure8", "low_excitation")

DEFAULT_LEVER_ARMS = ((0.35, 0.41, 0.0), (-0.47, -0.41, 0.0))
DEFAULT_BIAS_GYRO = (0.01, -0.01, 0.005)
DEFAULT_BIAS_ACC = (0.05, 0.02, -0.03)


@dataclass(frozen=True)
class SimScenario:
    """Full description of a simulated data collection."""

    profile: str = "figure8"
    duration: float = 60.0
    imu_rate: float = 200.0
    gnss_rates: tuple[float, ...] = (5.0, 5.0)
    lever_arms: tuple = DEFAULT_LEVER_ARMS
    seed: int = 0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    gnss_sigma: float = 0.05
    bias_gyro0: tuple[float, float, float] = DEFAULT_BIAS_GYRO
    bias_acc0: tuple[float, float, float] = DEFAULT_BIAS_ACC

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}; choose from {PROFILES}")
        if len(self.gnss_rates) != len(self.lever_arms):
            raise ValueError("one GNSS rate per lever arm required")
        if self.duration <= 0 or self.imu_rate <= 0:
            raise ValueError("duration and imu_rate must be positive")

    @property
    def n_sensors(self) -> int:
        return len(self.lever_arms)

    def lever_array(self) -> np.ndarray:
        return np.asarray(self.lever_arms, dtype=float).reshape(-1, 3)

    def noise_free(self) -> "SimScenario":
        """Copy of the scenario with all noise and biases removed."""
        return replace(
            self,
            noise=replace(self.noise, sigma_gyro=0.0, sigma_acc=0.0,
                          sigma_bg_walk=0.0, sigma_ba_walk=0.0,
                          sigma_calib_walk=0.0),
            gnss_sigma=0.0,
            bias_gyro0=(0.0, 0.0, 0.0),
            bias_acc0=(0.0, 0.0, 0.0),
        )

    def to_dict(self) -> dict:
        return {
            "profile": self.profile,
            "duration": self.duration,
            "imu_rate": self.imu_rate,
            "gnss_rates": list(self.gnss_rates),
            "lever_arms": [list(row) for row in self.lever_arms],
            "seed": self.seed,
            "noise": self.noise.to_dict(),
            "gnss_sigma": self.gnss_sigma,
            "bias_gyro0": list(self.bias_gyro0),
            "bias_acc0": list(self.bias_acc0),
        }

    @staticmethod
    def from_dict(data: dict) -> "SimScenario":
        kwargs = dict(data)
        kwargs["gnss_rates"] = tuple(float(r) for r in kwargs["gnss_rates"])
        kwargs["lever_arms"] = tuple(tuple(float(x) for x in row) for row in kwargs["lever_arms"])
        if "noise" in kwargs:
            kwargs["noise"] = NoiseConfig.from_dict(kwargs["noise"])
        for key in ("bias_gyro0", "bias_acc0"):
            if key in kwargs:
                kwargs[key] = tuple(float(x) for x in kwargs[key])
        return SimScenario(**kwargs)


@dataclass(frozen=True)
class TruthBatch:
    """Ground truth sampled on the IMU clock.

    ``quat`` is the scalar-first unit quaternion of ``R``; it is kept
    alongside the matrices so that CSV round trips are byte-stable.
    """

    t: np.ndarray
    R: np.ndarray        # (T, 3, 3)
    v: np.ndarray        # (T, 3)
    p: np.ndarray        # (T, 3)
    w_body: np.ndarray   # (T, 3) true body angular rate
    a_body: np.ndarray   # (T, 3) true specific force
    b_gyro: np.ndarray   # (T, 3) true gyro bias
    b_acc: np.ndarray    # (T, 3) true accel bias
    quat: np.ndarray | None = None   # (T, 4) scalar-first


@dataclass(frozen=True)
class ImuData:
    t: np.ndarray
    w: np.ndarray
    a: np.ndarray


@dataclass(frozen=True)
class GnssData:
    t: np.ndarray
    y: np.ndarray
    var: np.ndarray      # (M, 3) per-axis variance actually applied


@dataclass(frozen=True)
class Dataset:
    scenario: SimScenario
    imu: ImuData
    gnss: tuple[GnssData, ...]
    truth: TruthBatch


def _profile_curves(profile: str, t: np.ndarray):
    """Closed-form position and ZYX Euler angle schedules with derivatives."""
    z3 = np.zeros_like(t)
    if profile == "hover":
        p = np.stack([z3, z3, z3], axis=1)
        v = np.zeros_like(p)
        acc = np.zeros_like(p)
        ang = np.stack([z3, z3, z3], axis=1)
        dang = np.zeros_like(ang)
        return p, v, acc, ang, dang
    if profile == "circle":
        r, om = 5.0, 2.0 * np.pi / 20.0
        p = np.stack([r * np.sin(om * t), r * (1.0 - np.cos(om * t)), z3], axis=1)
        v = np.stack([r * om * np.cos(om * t), r * om * np.sin(om * t), z3], axis=1)
        acc = np.stack([-r * om**2 * np.sin(om * t), r * om**2 * np.cos(om * t), z3], axis=1)
        ang = np.stack([z3, z3, om * t], axis=1)
        dang = np.stack([z3, z3, np.full_like(t, om)], axis=1)
        return p, v, acc, ang, dang
    if profile == "figure8":
        ax_, by, om = 6.0, 3.0, 2.0 * np.pi / 20.0
        hz, omz = 0.5, 2.0 * np.pi / 30.0
        p = np.stack(
            [ax_ * np.sin(om * t), 0.5 * by * np.sin(2.0 * om * t), hz * (1.0 - np.cos(omz * t))],
            axis=1,
        )
        v = np.stack(
            [ax_ * om * np.cos(om * t), by * om * np.cos(2.0 * om * t), hz * omz * np.sin(omz * t)],
            axis=1,
        )
        acc = np.stack(
            [
                -ax_ * om**2 * np.sin(om * t),
                -2.0 * by * om**2 * np.sin(2.0 * om * t),
                hz * omz**2 * np.cos(omz * t),
            ],
            axis=1,
        )
        a_psi, om_psi = 2.2, 2.0 * np.pi / 12.0
        a_th, om_th = 0.25, 2.0 * np.pi / 7.0
        a_ph, om_ph = 0.25, 2.0 * np.pi / 9.0
        ang = np.stack(
            [a_ph * np.sin(om_ph * t), a_th * np.sin(om_th * t), a_psi * np.sin(om_psi * t)],
            axis=1,
        )
        dang = np.stack(
            [
                a_ph * om_ph * np.cos(om_ph * t),
                a_th * om_th * np.cos(om_th * t),
                a_psi * om_psi * np.cos(om_psi * t),
            ],
            axis=1,
        )
        return p, v, acc, ang, dang
    if profile == "low_excitation":
        r, om = 2.0, 2.0 * np.pi / 40.0
        p = np.stack([r * np.sin(om * t), r * (1.0 - np.cos(om * t)), z3], axis=1)
        v = np.stack([r * om * np.cos(om * t), r * om * np.sin(om * t), z3], axis=1)
        acc = np.stack([-r * om**2 * np.sin(om * t), r * om**2 * np.cos(om * t), z3], axis=1)
        a_psi, om_psi = 0.02, 2.0 * np.pi / 30.0
        a_rp, om_rp = 0.01, 2.0 * np.pi / 25.0
        ang = np.stack(
            [a_rp * np.sin(om_rp * t), a_rp * np.sin(om_rp * t + 1.0), a_psi * np.sin(om_psi * t)],
            axis=1,
        )
        dang = np.stack(
            [
                a_rp * om_rp * np.cos(om_rp * t),
                a_rp * om_rp * np.cos(om_rp * t + 1.0),
                a_psi * om_psi * np.cos(om_psi * t),
            ],
            axis=1,
        )
        return p, v, acc, ang, dang
    raise ValueError(f"unknown profile {profile!r}")


def _euler_zyx_to_rot(ang: np.ndarray) -> np.ndarray:
    """Batch ZYX (yaw-pitch-roll) Euler angles to rotation matrices."""
    ph, th, ps = ang[:, 0], ang[:, 1], ang[:, 2]
    cph, sph = np.cos(ph), np.sin(ph)
    cth, sth = np.cos(th), np.sin(th)
    cps, sps = np.cos(ps), np.sin(ps)
    R = np.empty((ang.shape[0], 3, 3))
    R[:, 0, 0] = cps * cth
    R[:, 0, 1] = cps * sth * sph - sps * cph
    R[:, 0, 2] = cps * sth * cph + sps * sph
    R[:, 1, 0] = sps * cth
    R[:, 1, 1] = sps * sth * sph + cps * cph
    R[:, 1, 2] = sps * sth * cph - cps * sph
    R[:, 2, 0] = -sth
    R[:, 2, 1] = cth * sph
    R[:, 2, 2] = cth * cph
    return R


def _euler_rates_to_body(ang: np.ndarray, dang: np.ndarray) -> np.ndarray:
    """Exact body angular rate of a ZYX Euler angle schedule."""
    ph, th = ang[:, 0], ang[:, 1]
    dph, dth, dps = dang[:, 0], dang[:, 1], dang[:, 2]
    cph, sph = np.cos(ph), np.sin(ph)
    cth, sth = np.cos(th), np.sin(th)
    w = np.empty_like(ang)
    w[:, 0] = dph - dps * sth
    w[:, 1] = dth * cph + dps * cth * sph
    w[:, 2] = -dth * sph + dps * cth * cph
    return w


def _rng_streams(seed: int, n_sensors: int):
    seq = np.random.SeedSequence(seed)
    children = seq.spawn(2 + n_sensors)
    bias = np.random.default_rng(children[0])
    imu = np.random.default_rng(children[1])
    gnss = [np.random.default_rng(c) for c in children[2:]]
    return bias, imu, gnss


def gen_trajectory(scenario: SimScenario) -> TruthBatch:
    """Sample the analytic truth (and bias walks) on the IMU clock."""
    n_samples = int(round(scenario.duration * scenario.imu_rate))
    k = np.arange(n_samples)
    t = k / scenario.imu_rate
    p, v, acc, ang, dang = _profile_curves(scenario.profile, t)
    R = _euler_zyx_to_rot(ang)
    w_body = _euler_rates_to_body(ang, dang)
    g = scenario.noise.gravity_vec()
    # specific force: vdot = R a + g  =>  a = R^T (vdot - g)
    a_body = np.einsum("tij,tj->ti", R.transpose(0, 2, 1), acc - g[None, :])

    rng_bias, _, _ = _rng_streams(scenario.seed, scenario.n_sensors)
    dt = 1.0 / scenario.imu_rate
    b_gyro = np.empty((n_samples, 3))
    b_acc = np.empty((n_samples, 3))
    b_gyro[0] = scenario.bias_gyro0
    b_acc[0] = scenario.bias_acc0
    sg = scenario.noise.sigma_bg_walk * np.sqrt(dt)
    sa = scenario.noise.sigma_ba_walk * np.sqrt(dt)
    steps_g = rng_bias.normal(0.0, 1.0, (n_samples - 1, 3)) * sg
    steps_a = rng_bias.normal(0.0, 1.0, (n_samples - 1, 3)) * sa
    b_gyro[1:] = b_gyro[0] + np.cumsum(steps_g, axis=0)
    b_acc[1:] = b_acc[0] + np.cumsum(steps_a, axis=0)
    return TruthBatch(t=t, R=R, v=v, p=p, w_body=w_body, a_body=a_body,
                      b_gyro=b_gyro, b_acc=b_acc, quat=rot_to_quat_batch(R))


def synth_imu(scenario: SimScenario, truth: TruthBatch) -> ImuData:
    """Biased, noisy IMU stream on the truth clock."""
    _, rng_imu, _ = _rng_streams(scenario.seed, scenario.n_sensors)
    n = truth.t.shape[0]
    sw = scenario.noise.sigma_gyro * np.sqrt(scenario.imu_rate)
    sa = scenario.noise.sigma_acc * np.sqrt(scenario.imu_rate)
    w = truth.w_body + truth.b_gyro + rng_imu.normal(0.0, 1.0, (n, 3)) * sw
    a = truth.a_body + truth.b_acc + rng_imu.normal(0.0, 1.0, (n, 3)) * sa
    return ImuData(t=truth.t.copy(), w=w, a=a)


def synth_gnss(scenario: SimScenario, sensor: int) -> GnssData:
    """Antenna-position fixes for ``sensor`` (1-based), phase-interleaved.

    Receiver ``i`` samples at ``(i-1)/(N * rate) + k/rate`` so that equal-rate
    receivers interleave evenly.
    """
    if not 1 <= sensor <= scenario.n_sensors:
        raise IndexError(f"sensor index {sensor} out of range 1..{scenario.n_sensors}")
    rate = scenario.gnss_rates[sensor - 1]
    phase = (sensor - 1) / (scenario.n_sensors * rate)
    n_fix = int(np.floor((scenario.duration - phase) * rate - 1e-9)) + 1
    t = phase + np.arange(n_fix) / rate
    t = t[t < scenario.duration - 0.5 / scenario.imu_rate + 1e-12]
    p, _, _, ang, _ = _profile_curves(scenario.profile, t)
    R = _euler_zyx_to_rot(ang)
    lever = scenario.lever_array()[sensor - 1]
    antenna = p + np.einsum("tij,j->ti", R, lever)
    _, _, rng_gnss = _rng_streams(scenario.seed, scenario.n_sensors)
    noise = rng_gnss[sensor - 1].normal(0.0, 1.0, antenna.shape) * scenario.gnss_sigma
    var = np.full_like(antenna, scenario.gnss_sigma**2)
    return GnssData(t=t, y=antenna + noise, var=var)


def simulate_dataset(scenario: SimScenario) -> Dataset:
    """Generate truth plus all sensor streams for one scenario."""
    truth = gen_trajectory(scenario)
    imu = synth_imu(scenario, truth)
    gnss = tuple(synth_gnss(scenario, i) for i in range(1, scenario.n_sensors + 1))
    return Dataset(scenario=scenario, imu=imu, gnss=gnss, truth=truth)
