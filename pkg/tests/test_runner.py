"""Event-driven execution: initialization, truth alignment, closed loop."""

import logging

import numpy as np
import pytest

from equinav.config import InitConfig, RunConfig
from equinav.runner import FILTER_KINDS, initial_state, run_filter
from equinav.sim import (
    Dataset,
    GnssData,
    ImuData,
    SimScenario,
    simulate_dataset,
)


def quiet_dataset(duration=4.0, profile="hover", seed=30, **kw):
    return simulate_dataset(
        SimScenario(profile=profile, duration=duration, seed=seed, **kw).noise_free()
    )


class TestInitialState:
    def test_default_is_origin(self):
        ds = quiet_dataset()
        s = initial_state(ds, InitConfig())
        np.testing.assert_array_equal(s.R, np.eye(3))
        np.testing.assert_array_equal(s.p, 0.0)
        np.testing.assert_array_equal(s.calib, np.zeros((2, 3)))

    def test_from_truth_copies_first_record_and_levers(self):
        ds = simulate_dataset(SimScenario(profile="circle", duration=2.0, seed=31))
        s = initial_state(ds, InitConfig(from_truth=True))
        np.testing.assert_array_equal(s.R, ds.truth.R[0])
        np.testing.assert_array_equal(s.v, ds.truth.v[0])
        np.testing.assert_array_equal(s.p, ds.truth.p[0])
        np.testing.assert_array_equal(s.b_gyro, ds.truth.b_gyro[0])
        np.testing.assert_array_equal(s.calib, ds.scenario.lever_array())

    def test_yaw_offset_rotates_about_vertical(self):
        ds = simulate_dataset(SimScenario(profile="circle", duration=2.0, seed=31))
        base = initial_state(ds, InitConfig(from_truth=True))
        tilted = initial_state(ds, InitConfig(from_truth=True, yaw_deg=90.0))
        rel = tilted.R @ base.R.T
        expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(rel, expected, atol=1e-12)

    def test_explicit_overrides(self):
        ds = quiet_dataset()
        init = InitConfig(pos=(1.0, 2.0, 3.0), vel=(0.1, 0.0, 0.0),
                          calib=((0.3, 0.4, 0.0), (-0.4, -0.4, 0.0)))
        s = initial_state(ds, init)
        np.testing.assert_array_equal(s.p, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(s.v, [0.1, 0.0, 0.0])
        np.testing.assert_array_equal(s.calib[1], [-0.4, -0.4, 0.0])


class TestClosedLoop:
    @pytest.mark.parametrize("kind", FILTER_KINDS)
    def test_noise_free_true_init_stays_on_truth(self, kind):
        ds = quiet_dataset(duration=5.0)
        rec = run_filter(ds, kind, RunConfig(init=InitConfig(from_truth=True)))
        assert rec.has_truth
        pos_err = np.linalg.norm(rec.est_p - rec.truth_p, axis=1)
        assert pos_err.max() < 1e-9
        assert rec.n_updates == sum(len(g.t) for g in ds.gnss)
        assert rec.n_rejected == 0
        assert rec.nees is not None and np.all(rec.nees < 1e-6)

    @pytest.mark.parametrize("kind", FILTER_KINDS)
    def test_gnss_updates_pull_antenna_estimates_onto_measurements(self, kind):
        """With constant attitude, absolute position and lever arms are only
        jointly observable; the antenna positions p + R t_i must converge even
        though the split between p and t_i is prior-driven."""
        ds = quiet_dataset(duration=4.0)
        cfg = RunConfig(init=InitConfig(pos=(0.5, -0.5, 0.2),
                                        calib=((0.35, 0.41, 0.0), (-0.47, -0.41, 0.0))))
        rec = run_filter(ds, kind, cfg)
        assert np.linalg.norm(np.array(cfg.init.pos) - rec.truth_p[0]) > 0.3
        levers = ds.scenario.lever_array()
        for i in range(2):
            est_ant = rec.est_p + np.einsum("tij,tj->ti", rec.est_R,
                                            rec.est_calib[:, i, :])
            tru_ant = rec.truth_p + np.einsum("tij,j->ti", rec.truth_R, levers[i])
            err = np.linalg.norm(est_ant - tru_ant, axis=1)
            assert err[-1] < 5e-3

    def test_deterministic_repetition(self):
        ds = simulate_dataset(SimScenario(profile="figure8", duration=3.0, seed=32))
        a = run_filter(ds, "eqf")
        b = run_filter(ds, "eqf")
        assert a.est_p.tobytes() == b.est_p.tobytes()
        assert a.p_diag.tobytes() == b.p_diag.tobytes()

    def test_unknown_kind_rejected(self):
        ds = quiet_dataset(duration=1.0)
        with pytest.raises(ValueError, match="filter kind"):
            run_filter(ds, "ukf")

    def test_covariance_storage_optional(self):
        ds = quiet_dataset(duration=1.0)
        rec = run_filter(ds, "eqf", store_covariance=False)
        assert rec.P is None
        assert rec.nees is None
        assert rec.p_diag.shape == (len(rec.t), 21)

    def test_meta_records_scenario_and_filter(self):
        ds = quiet_dataset(duration=1.0)
        rec = run_filter(ds, "mekf")
        assert rec.meta["filter"] == "mekf"
        assert rec.meta["scenario"]["profile"] == "hover"


class TestTruthAlignment:
    def test_truthless_dataset_runs_without_metrics(self):
        ds = quiet_dataset(duration=2.0)
        ds = Dataset(scenario=ds.scenario, imu=ds.imu, gnss=ds.gnss, truth=None)
        rec = run_filter(ds, "eqf")
        assert not rec.has_truth
        assert rec.nees is None

    def test_misaligned_truth_dropped_with_warning(self, caplog):
        ds = quiet_dataset(duration=2.0)
        truth = ds.truth
        # decimate truth to 10 Hz: gaps up to 0.045 s >> half an IMU period
        import dataclasses
        sparse = dataclasses.replace(
            truth, t=truth.t[::20], R=truth.R[::20], v=truth.v[::20],
            p=truth.p[::20], w_body=truth.w_body[::20], a_body=truth.a_body[::20],
            b_gyro=truth.b_gyro[::20], b_acc=truth.b_acc[::20],
            quat=truth.quat[::20],
        )
        ds = Dataset(scenario=ds.scenario, imu=ds.imu, gnss=ds.gnss, truth=sparse)
        with caplog.at_level(logging.WARNING, logger="equinav.runner"):
            rec = run_filter(ds, "eqf")
        assert not rec.has_truth
        assert any("misaligned" in m for m in caplog.messages)

    def test_stale_gnss_after_last_imu_sample_ignored(self, caplog):
        ds = quiet_dataset(duration=2.0)
        g = ds.gnss[0]
        late = GnssData(
            t=np.append(g.t, ds.imu.t[-1] + 1.0),
            y=np.vstack([g.y, g.y[-1]]),
            var=np.vstack([g.var, g.var[-1]]),
        )
        ds = Dataset(scenario=ds.scenario, imu=ds.imu, gnss=(late, ds.gnss[1]),
                     truth=ds.truth)
        with caplog.at_level(logging.WARNING, logger="equinav.runner"):
            rec = run_filter(ds, "eqf")
        assert any("ignored" in m for m in caplog.messages)
        assert rec.n_updates == sum(len(g.t) for g in ds.gnss) - 1

    def test_empty_imu_rejected(self):
        ds = quiet_dataset(duration=1.0)
        empty = ImuData(t=np.empty(0), w=np.empty((0, 3)), a=np.empty((0, 3)))
        ds = Dataset(scenario=ds.scenario, imu=empty, gnss=ds.gnss, truth=None)
        with pytest.raises(ValueError, match="IMU"):
            run_filter(ds, "eqf")
