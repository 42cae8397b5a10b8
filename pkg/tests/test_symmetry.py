"""Symmetry group, state action, system lift, and normal coordinates.

Oracles: Runge-Kutta integration of the left-invariant flow (for the group
exponential), finite differences of the acted state curve (for the lift),
and direct reconstruction identities.
"""

import numpy as np
import pytest

from equinav.lie import (
    build_ins_matrices,
    se23_vee,
    se23_wedge,
    so3_exp,
)
from equinav.symmetry import (
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

GRAVITY = np.array([0.0, 0.0, 9.81])


def random_state(rng, n_sensors=2, scale=1.0):
    return NavState(
        R=so3_exp(rng.normal(size=3) * scale),
        v=rng.normal(size=3) * scale,
        p=rng.normal(size=3) * scale,
        b_gyro=rng.normal(size=3) * 0.1 * scale,
        b_acc=rng.normal(size=3) * 0.1 * scale,
        calib=rng.normal(size=(n_sensors, 3)) * scale,
    )


def random_group(rng, n_sensors=2, scale=1.0):
    lam = rng.normal(size=tangent_dim(n_sensors)) * scale
    return group_exp(lam, n_sensors)


def states_close(a: NavState, b: NavState, atol=1e-10):
    np.testing.assert_allclose(a.R, b.R, atol=atol)
    np.testing.assert_allclose(a.v, b.v, atol=atol)
    np.testing.assert_allclose(a.p, b.p, atol=atol)
    np.testing.assert_allclose(a.b_gyro, b.b_gyro, atol=atol)
    np.testing.assert_allclose(a.b_acc, b.b_acc, atol=atol)
    np.testing.assert_allclose(a.calib, b.calib, atol=atol)


def groups_close(a: GroupElement, b: GroupElement, atol=1e-10):
    np.testing.assert_allclose(a.C, b.C, atol=atol)
    np.testing.assert_allclose(a.c, b.c, atol=atol)
    np.testing.assert_allclose(a.d, b.d, atol=atol)


class TestLayout:
    def test_tangent_dim(self):
        assert tangent_dim(1) == 18
        assert tangent_dim(2) == 21
        assert tangent_dim(5) == 30

    def test_calib_slices_are_contiguous(self):
        assert calib_slice(1) == slice(15, 18)
        assert calib_slice(2) == slice(18, 21)

    def test_bad_sensor_count_rejected(self):
        with pytest.raises(ValueError):
            NavState(R=np.eye(3), v=np.zeros(3), p=np.zeros(3),
                     b_gyro=np.zeros(3), b_acc=np.zeros(3),
                     calib=np.zeros((0, 3)))


class TestGroupAxioms:
    def test_identity_and_inverse(self):
        rng = np.random.default_rng(20)
        e = identity_element(2)
        for _ in range(100):
            X = random_group(rng)
            groups_close(compose(X, e), X)
            groups_close(compose(e, X), X)
            groups_close(compose(X, inverse(X)), e, atol=1e-11)
            groups_close(compose(inverse(X), X), e, atol=1e-11)

    def test_associativity(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            X, Y, Z = (random_group(rng) for _ in range(3))
            groups_close(compose(compose(X, Y), Z), compose(X, compose(Y, Z)),
                         atol=1e-10)

    def test_exp_log_roundtrip(self):
        rng = np.random.default_rng(22)
        worst = 0.0
        for _ in range(500):
            lam = rng.normal(size=21)
            lam *= rng.uniform(0.01, 2.5) / np.linalg.norm(lam)
            err = np.abs(group_log(group_exp(lam, 2)) - lam).max()
            worst = max(worst, err)
        assert worst < 1e-9

    def test_exp_matches_left_invariant_flow(self):
        """RK4 flow of dX = X.lam from the identity, compared at t = 1."""
        rng = np.random.default_rng(23)

        def flow_derivative(C, c, d, lam):
            A = C[:3, :3]
            B = np.eye(4)
            B[:3, :3] = A
            B[:3, 3] = C[:3, 3]
            from equinav.lie import se3_adjoint
            dC = C @ se23_wedge(lam[:9])
            dc = se3_adjoint(B) @ lam[9:15]
            dd = np.stack([A @ lam[15 + 3 * i:18 + 3 * i] for i in range(d.shape[0])])
            return dC, dc, dd

        worst = 0.0
        for _ in range(50):
            lam = rng.normal(size=21) * 0.8
            C = np.eye(5)
            c = np.zeros(6)
            d = np.zeros((2, 3))
            n_steps = 200
            h = 1.0 / n_steps
            for _ in range(n_steps):
                k1 = flow_derivative(C, c, d, lam)
                k2 = flow_derivative(C + h / 2 * k1[0], c + h / 2 * k1[1], d + h / 2 * k1[2], lam)
                k3 = flow_derivative(C + h / 2 * k2[0], c + h / 2 * k2[1], d + h / 2 * k2[2], lam)
                k4 = flow_derivative(C + h * k3[0], c + h * k3[1], d + h * k3[2], lam)
                C = C + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
                c = c + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
                d = d + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            X = group_exp(lam, 2)
            worst = max(worst, np.abs(X.C - C).max(), np.abs(X.c - c).max(),
                        np.abs(X.d - d).max())
        assert worst < 1e-7

    def test_group_exp_rejects_wrong_dimension(self):
        with pytest.raises(ValueError):
            group_exp(np.zeros(20), 2)


class TestAction:
    def test_identity_acts_trivially(self):
        rng = np.random.default_rng(24)
        for _ in range(50):
            xi = random_state(rng)
            states_close(act(identity_element(2), xi), xi)

    def test_right_action_composition(self):
        rng = np.random.default_rng(25)
        for _ in range(200):
            X, Y = random_group(rng), random_group(rng)
            xi = random_state(rng)
            states_close(act(compose(X, Y), xi), act(Y, act(X, xi)), atol=1e-10)

    def test_action_at_origin_inverts_group_parametrization(self):
        rng = np.random.default_rng(26)
        for _ in range(100):
            X = random_group(rng)
            xi = act(X, identity_state(2))
            groups_close(group_from_state(xi), X, atol=1e-10)
            states_close(state_from_group(X), xi)

    def test_output_equivariance(self):
        rng = np.random.default_rng(27)
        for _ in range(200):
            X = random_group(rng)
            xi = random_state(rng)
            for sensor in (1, 2):
                lhs = output_action(X, output_map(xi, sensor), sensor)
                rhs = output_map(act(X, xi), sensor)
                np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_output_map_is_antenna_position_in_body_coordinates(self):
        rng = np.random.default_rng(28)
        xi = random_state(rng)
        ref = rng.normal(size=3)
        y = output_map(xi, 1, reference=ref)
        antenna = xi.p + xi.R @ xi.calib[0]
        np.testing.assert_allclose(y, xi.R.T @ (ref - antenna), atol=1e-12)

    def test_sensor_index_out_of_range(self):
        xi = identity_state(2)
        with pytest.raises(IndexError):
            output_map(xi, 3)
        with pytest.raises(IndexError):
            output_map(xi, 0)


class TestNormalCoordinates:
    def test_roundtrip_both_ways(self):
        rng = np.random.default_rng(29)
        for _ in range(200):
            eps = rng.normal(size=21) * 0.7
            np.testing.assert_allclose(
                error_coords(error_coords_inv(eps, 2)), eps, atol=1e-10
            )

    def test_origin_maps_to_zero(self):
        np.testing.assert_allclose(error_coords(identity_state(2)), 0.0, atol=1e-15)


class TestLift:
    def _state_derivative(self, xi: NavState, w, a):
        """System vector field: extended-pose dynamics, constant biases/levers."""
        mats = build_ins_matrices(w, a, xi.bias, GRAVITY)
        T = np.eye(5)
        T[:3, :3] = xi.R
        T[:3, 3] = xi.v
        T[:3, 4] = xi.p
        Tdot = (T @ (mats.input_mat - mats.bias_mat + mats.integrator_mat)
                + (mats.gravity_mat - mats.integrator_mat) @ T)
        return Tdot

    def test_lift_reproduces_state_dynamics(self):
        """Pushforward of the lifted direction matches the vector field."""
        rng = np.random.default_rng(30)
        h = 1e-6
        worst = 0.0
        for _ in range(50):
            xi = random_state(rng)
            w = rng.normal(size=3) * 0.5
            a = rng.normal(size=3) * 2.0
            lam = lift(xi, w, a, GRAVITY)
            plus = act(group_exp(h * lam, 2), xi)
            minus = act(group_exp(-h * lam, 2), xi)
            Tdot_fd = np.eye(5)
            Tdot_fd[:3, :3] = (plus.R - minus.R) / (2 * h)
            Tdot_fd[:3, 3] = (plus.v - minus.v) / (2 * h)
            Tdot_fd[:3, 4] = (plus.p - minus.p) / (2 * h)
            Tdot_fd[3, 3] = Tdot_fd[4, 4] = 0.0
            Tdot = self._state_derivative(xi, w, a)
            scale = max(1.0, np.abs(Tdot).max())
            worst = max(worst, np.abs(Tdot_fd - Tdot).max() / scale)
            # biases and lever arms are constant along the true flow
            np.testing.assert_allclose((plus.b_gyro - minus.b_gyro) / (2 * h), 0.0, atol=1e-4)
            np.testing.assert_allclose((plus.calib - minus.calib) / (2 * h), 0.0, atol=1e-4)
        assert worst < 1e-4

    def test_lift_pose_part_has_vanishing_bottom_rows(self):
        """The pose direction embeds as a 5x5 with exactly zero bottom rows."""
        rng = np.random.default_rng(31)
        for _ in range(50):
            xi = random_state(rng)
            w = rng.normal(size=3)
            a = rng.normal(size=3)
            mats = build_ins_matrices(w, a, xi.bias, GRAVITY)
            T = np.eye(5)
            T[:3, :3] = xi.R
            T[:3, 3] = xi.v
            T[:3, 4] = xi.p
            M = (mats.input_mat - mats.bias_mat + mats.integrator_mat
                 + np.linalg.inv(T) @ (mats.gravity_mat - mats.integrator_mat) @ T)
            np.testing.assert_allclose(M[3:, :], 0.0, atol=1e-12)
            lam = lift(xi, w, a, GRAVITY)
            np.testing.assert_allclose(lam[:9], se23_vee(M), atol=1e-10)

    def test_lift_closed_form_components(self):
        """Input part in the body frame; bias/lever parts from the bias cross terms."""
        rng = np.random.default_rng(32)
        xi = random_state(rng)
        w = rng.normal(size=3)
        a = rng.normal(size=3)
        lam = lift(xi, w, a, GRAVITY)
        np.testing.assert_allclose(lam[0:3], w - xi.b_gyro, atol=1e-12)
        np.testing.assert_allclose(lam[3:6], a - xi.b_acc + xi.R.T @ GRAVITY, atol=1e-12)
        np.testing.assert_allclose(lam[6:9], xi.R.T @ xi.v, atol=1e-12)
        np.testing.assert_allclose(lam[9:12], np.cross(xi.b_gyro, lam[0:3]), atol=1e-12)
        np.testing.assert_allclose(
            lam[12:15],
            np.cross(xi.b_acc, lam[0:3]) + np.cross(xi.b_gyro, lam[3:6]),
            atol=1e-12,
        )
        for i in range(2):
            np.testing.assert_allclose(
                lam[15 + 3 * i:18 + 3 * i], -np.cross(lam[0:3], xi.calib[i]),
                atol=1e-12,
            )
