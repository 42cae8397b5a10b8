"""Evaluation metrics: RMSE oracles, NEES statistics, run comparison."""

import numpy as np
import pytest

from equinav.evaluate import (
    RunRecord,
    Summary,
    attitude_error_deg,
    compare_runs,
    error_at,
    filter_energy,
    format_compare_table,
    nees_series,
    rmse_attitude,
    rmse_calibration,
    rmse_position,
    summarize,
)
from equinav.lie import so3_exp
from equinav.symmetry import (
    compose,
    error_coords_inv,
    group_from_state,
    inverse,
    state_from_group,
    tangent_dim,
)


def make_record(T=5, n=2, filter_name="eqf", dt=0.1, with_truth=True,
                p_scale=1.0):
    """Zero-error record on a uniform clock with isotropic covariance."""
    dim = tangent_dim(n)
    eye3 = np.broadcast_to(np.eye(3), (T, 3, 3)).copy()
    zeros3 = np.zeros((T, 3))
    rec = RunRecord(
        filter_name=filter_name,
        t=dt * np.arange(T),
        est_R=eye3.copy(),
        est_v=zeros3.copy(),
        est_p=zeros3.copy(),
        est_bg=zeros3.copy(),
        est_ba=zeros3.copy(),
        est_calib=np.zeros((T, n, 3)),
        p_diag=np.full((T, dim), p_scale),
        P=np.broadcast_to(p_scale * np.eye(dim), (T, dim, dim)).copy(),
    )
    if with_truth:
        rec.truth_R = eye3.copy()
        rec.truth_v = zeros3.copy()
        rec.truth_p = zeros3.copy()
        rec.truth_calib = np.zeros((n, 3))
    return rec


class TestRmseOracles:
    def test_zero_error_gives_zero(self):
        rec = make_record()
        assert rmse_position(rec, 0.0) == 0.0
        assert rmse_attitude(rec, 0.0) == 0.0
        assert rmse_calibration(rec, 0.0) == [0.0, 0.0]

    def test_constant_position_offset(self):
        rec = make_record()
        rec.truth_p = rec.est_p + np.array([0.3, 0.4, 0.0])
        assert rmse_position(rec, 0.0) == pytest.approx(0.5, abs=1e-15)

    def test_mixed_position_errors_average_in_quadrature(self):
        rec = make_record(T=4)
        rec.truth_p = rec.est_p.copy()
        rec.truth_p[0, 0] += 1.0
        rec.truth_p[2, 1] += 1.0
        assert rmse_position(rec, 0.0) == pytest.approx(np.sqrt(0.5), abs=1e-15)

    def test_constant_yaw_offset_in_degrees(self):
        rec = make_record()
        yaw = so3_exp(np.radians(10.0) * np.array([0.0, 0.0, 1.0]))
        rec.truth_R = np.einsum("tij,jk->tik", rec.est_R, yaw)
        np.testing.assert_allclose(attitude_error_deg(rec), 10.0, atol=1e-10)
        assert rmse_attitude(rec, 0.0) == pytest.approx(10.0, abs=1e-10)

    def test_mixed_attitude_errors_average_in_quadrature(self):
        rec = make_record(T=2)
        quarter = so3_exp(np.array([0.0, 0.0, np.pi / 2]))
        rec.truth_R[1] = rec.est_R[1] @ quarter
        assert rmse_attitude(rec, 0.0) == pytest.approx(np.sqrt(4050.0),
                                                        abs=1e-9)

    def test_per_sensor_calibration_errors(self):
        rec = make_record()
        rec.truth_calib = np.array([[0.0, 0.0, 0.1], [0.3, 0.4, 0.0]])
        out = rmse_calibration(rec, 0.0)
        assert out[0] == pytest.approx(0.1, abs=1e-15)
        assert out[1] == pytest.approx(0.5, abs=1e-15)

    def test_attitude_error_invariant_under_common_left_rotation(self):
        rng = np.random.default_rng(0)
        rec = make_record(T=8)
        for k in range(8):
            rec.truth_R[k] = rec.est_R[k] @ so3_exp(0.3 * rng.standard_normal(3))
        base = attitude_error_deg(rec).copy()
        L = so3_exp(rng.standard_normal(3))
        rec.est_R = np.einsum("ij,tjk->tik", L, rec.est_R)
        rec.truth_R = np.einsum("ij,tjk->tik", L, rec.truth_R)
        np.testing.assert_allclose(attitude_error_deg(rec), base, atol=1e-10)

    def test_metrics_invariant_under_time_origin_shift(self):
        rng = np.random.default_rng(1)
        rec = make_record(T=20)
        rec.truth_p = rec.est_p + rng.standard_normal((20, 3))
        a = rmse_position(rec, 0.5)
        rec.t = rec.t + 100.0
        b = rmse_position(rec, 100.5)
        assert a == b

    def test_window_selects_asymptotic_phase(self):
        rec = make_record(T=10)
        rec.truth_p = rec.est_p.copy()
        rec.truth_p[:5] += 100.0   # transient error before t0
        assert rmse_position(rec, 0.5) == 0.0

    def test_window_past_end_rejected(self):
        rec = make_record(T=5)
        with pytest.raises(ValueError):
            rec.window(10.0)

    def test_missing_truth_rejected(self):
        rec = make_record(with_truth=False)
        with pytest.raises(ValueError):
            rmse_position(rec, 0.0)
        with pytest.raises(ValueError):
            attitude_error_deg(rec)


class TestNees:
    def test_zero_error_gives_zero(self):
        for name in ("eqf", "mekf"):
            rec = make_record(filter_name=name)
            np.testing.assert_allclose(nees_series(rec), 0.0, atol=1e-20)

    def test_zero_error_with_nonzero_estimated_bias_still_zero(self):
        """Bias estimates must not leak into the (rot, pos, lever) statistic."""
        rec = make_record(filter_name="eqf")
        rec.est_bg += np.array([0.01, -0.02, 0.005])
        rec.est_ba += np.array([0.05, 0.02, -0.03])
        np.testing.assert_allclose(nees_series(rec), 0.0, atol=1e-16)

    def test_unit_errors_with_identity_covariance_give_one(self):
        n = 1
        rec = make_record(T=3, n=n, filter_name="mekf")
        # one radian about each axis: |log| = sqrt(3) < pi, exactly recovered
        axis = np.array([1.0, 1.0, 1.0])
        rec.truth_R = np.einsum("tij,jk->tik", rec.est_R, so3_exp(axis))
        rec.truth_p = rec.est_p + 1.0
        rec.truth_calib = np.ones((n, 3))
        # 9 unit-squared errors with unit covariance, normalized by dim 9
        np.testing.assert_allclose(nees_series(rec), 1.0, atol=1e-12)

    def test_overconfident_covariance_scales_nees(self):
        rng = np.random.default_rng(2)
        rec = make_record(T=6, filter_name="mekf")
        rec.truth_p = rec.est_p + 0.1 * rng.standard_normal((6, 3))
        base = nees_series(rec)
        rec.P = rec.P * 0.01
        np.testing.assert_allclose(nees_series(rec), base * 100.0, rtol=1e-12)

    def test_covariance_required(self):
        rec = make_record()
        rec.P = None
        with pytest.raises(ValueError):
            nees_series(rec)

    def test_mekf_sampled_errors_are_chi_square_consistent(self):
        """Draw errors from the exact distribution the covariance claims:
        the dimension-normalized NEES must average to ~1."""
        rng = np.random.default_rng(3)
        T, n, sigma = 10_000, 2, 0.01
        rec = make_record(T=T, n=n, filter_name="mekf", p_scale=sigma**2)
        rec.truth_calib = np.array([[0.35, 0.41, 0.0], [-0.47, -0.41, 0.0]])
        for k in range(T):
            rec.est_R[k] = so3_exp(rng.standard_normal(3))
            rec.truth_R[k] = rec.est_R[k] @ so3_exp(sigma * rng.standard_normal(3))
        rec.truth_p = rng.standard_normal((T, 3))
        rec.est_p = rec.truth_p - sigma * rng.standard_normal((T, 3))
        rec.est_calib = rec.truth_calib[None] - sigma * rng.standard_normal((T, n, 3))
        series, mean = filter_energy(rec, 0.0)
        assert 0.8 < mean < 1.2
        # chi-square_12 / 12 has variance 2/12
        assert series.var() == pytest.approx(2.0 / 12.0, rel=0.15)

    def test_group_error_sampled_errors_are_chi_square_consistent(self):
        """Same consistency property through the symmetry-group error path:
        plant a known tangent error via the group action and check the
        statistic recovers it exactly."""
        rng = np.random.default_rng(4)
        T, n, sigma = 2_000, 2, 0.01
        dim = tangent_dim(n)
        rec = make_record(T=T, n=n, filter_name="eqf", p_scale=sigma**2)
        # a fixed, generic truth state with zero bias
        truth = error_coords_inv(0.3 * rng.standard_normal(dim), n)
        truth.b_gyro[:] = 0.0
        truth.b_acc[:] = 0.0
        X_truth = group_from_state(truth)
        planted = np.empty((T, dim))
        for k in range(T):
            eps = sigma * rng.standard_normal(dim)
            planted[k] = eps
            E = group_from_state(error_coords_inv(eps, n))
            X_hat = compose(inverse(E), X_truth)
            est = state_from_group(X_hat)
            rec.est_R[k] = est.R
            rec.est_v[k] = est.v
            rec.est_p[k] = est.p
            rec.est_bg[k] = est.b_gyro
            rec.est_ba[k] = est.b_acc
            rec.est_calib[k] = est.calib
        rec.truth_R = np.broadcast_to(truth.R, (T, 3, 3)).copy()
        rec.truth_v = np.broadcast_to(truth.v, (T, 3)).copy()
        rec.truth_p = np.broadcast_to(truth.p, (T, 3)).copy()
        rec.truth_calib = truth.calib.copy()
        series = nees_series(rec)
        idx = np.r_[0:3, 6:9, 15:15 + 3 * n]
        expected = np.sum(planted[:, idx] ** 2, axis=1) / sigma**2 / len(idx)
        np.testing.assert_allclose(series, expected, rtol=1e-6)
        assert 0.8 < series.mean() < 1.2

    def test_cached_series_reused(self):
        rec = make_record(T=4)
        rec.nees = np.array([1.0, 2.0, 3.0, 4.0])
        series, mean = filter_energy(rec, 0.0)
        assert mean == pytest.approx(2.5)
        assert series is rec.nees


class TestErrorAt:
    def test_picks_nearest_sample(self):
        rec = make_record(T=10)
        rec.truth_p = rec.est_p.copy()
        rec.truth_p[4] += np.array([3.0, 4.0, 0.0])
        out = error_at(rec, 0.41)
        assert out["t"] == pytest.approx(0.4)
        assert out["pos_err_m"] == pytest.approx(5.0)
        assert out["att_err_deg"] == pytest.approx(0.0, abs=1e-12)


class TestSummary:
    def test_roundtrip(self):
        s = Summary(rmse_pos=0.1, rmse_att=1.5, rmse_calib=[0.01, 0.02],
                    nees_mean=0.9, t0=40.0)
        assert Summary.from_dict(s.to_dict()) == s

    def test_negative_rmse_rejected(self):
        with pytest.raises(ValueError):
            Summary(rmse_pos=-0.1, rmse_att=0.0, rmse_calib=[0.0],
                    nees_mean=1.0, t0=0.0)

    def test_summarize_bundles_all_metrics(self):
        rec = make_record(T=10)
        rec.truth_p = rec.est_p + np.array([0.3, 0.4, 0.0])
        s = summarize(rec, 0.5)
        assert s.rmse_pos == pytest.approx(0.5)
        assert s.rmse_att == 0.0
        assert s.t0 == 0.5
        assert len(s.rmse_calib) == 2


class TestCompareRuns:
    def test_two_identical_runs_tie(self):
        a = make_record(T=10)
        b = make_record(T=10, filter_name="mekf")
        out = compare_runs({"eqf": a, "mekf": b}, 0.0)
        assert out["t0"] == 0.0
        sa = out["summaries"]["eqf"]
        sb = out["summaries"]["mekf"]
        assert sa["rmse_pos"] == sb["rmse_pos"] == 0.0

    def test_table_structure_and_best_markers(self):
        a = make_record(T=10)
        b = make_record(T=10, filter_name="mekf")
        b.truth_p = b.est_p + 0.5
        out = compare_runs({"eqf": a, "mekf": b}, 0.0)
        block = out["table_i_style"]
        assert block["columns"] == ["filter", "t0", "rmse_pos", "rmse_att",
                                    "nees_mean"]
        assert len(block["rows"]) == 2
        assert block["best"]["rmse_pos"] == "eqf"
        text = format_compare_table(out)
        assert "eqf" in text and "mekf" in text and "*" in text

    def test_best_nees_is_closest_to_one(self):
        rng = np.random.default_rng(5)
        a = make_record(T=200, filter_name="eqf", p_scale=1.0)
        b = make_record(T=200, filter_name="mekf", p_scale=100.0)
        err = rng.standard_normal((200, 3))
        a.truth_p = a.est_p + err      # NEES ~ 1 against unit covariance
        b.truth_p = b.est_p + err      # same errors, overstated covariance
        out = compare_runs({"a": a, "b": b}, 0.0)
        assert out["table_i_style"]["best"]["nees_mean"] == "a"

    def test_mismatched_grids_rejected(self):
        a = make_record(T=10)
        b = make_record(T=12)
        with pytest.raises(ValueError):
            compare_runs({"a": a, "b": b}, 0.0)

    def test_single_run_rejected(self):
        with pytest.raises(ValueError):
            compare_runs({"a": make_record()}, 0.0)
