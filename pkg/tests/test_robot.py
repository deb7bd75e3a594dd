import numpy as np
import pytest

from jumprl.robot import (
    N_JOINTS,
    OutOfWorkspaceError,
    RobotModel,
    SpringParams,
    fk_all_legs,
    forward_kinematics,
    ik_all_legs,
    inverse_kinematics,
    jacobian_all_legs,
    leg_jacobian,
    spring_energy,
    spring_torque,
    spring_torque_all,
)


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def homogeneous(rot, trans):
    t = np.eye(4)
    t[:3, :3] = rot
    t[:3, 3] = trans
    return t


def fk_oracle(model, leg, q):
    """Independent FK via an explicit homogeneous-transform chain."""
    t = homogeneous(np.eye(3), model.hip_offsets[leg])
    t = t @ homogeneous(rot_x(q[0]), np.zeros(3))
    t = t @ homogeneous(rot_y(q[1]), np.zeros(3))
    t = t @ homogeneous(np.eye(3), [0.0, 0.0, -model.thigh_len])
    t = t @ homogeneous(rot_y(q[2]), np.zeros(3))
    t = t @ homogeneous(np.eye(3), [0.0, 0.0, -model.calf_len])
    return t[:3, 3]


@pytest.fixture
def model():
    return RobotModel()


def sample_reachable_q(rng, model):
    lo = model.joint_limits[:3, 0]
    hi = model.joint_limits[:3, 1]
    return lo + rng.random(3) * (hi - lo)


class TestForwardKinematics:
    def test_straight_leg_points_down(self, model):
        p = forward_kinematics(model, 0, np.zeros(3))
        expected = model.hip_offsets[0] + [0.0, 0.0, -0.426]
        np.testing.assert_allclose(p, expected, atol=1e-12)

    def test_right_angle_calf(self, model):
        # thigh straight down, calf folded to +pi/2: depth thigh_len,
        # horizontal offset -calf_len in x
        p = forward_kinematics(model, 1, np.array([0.0, 0.0, np.pi / 2]))
        rel = p - model.hip_offsets[1]
        np.testing.assert_allclose(rel[2], -model.thigh_len, atol=1e-12)
        np.testing.assert_allclose(rel[0], -model.calf_len, atol=1e-12)
        np.testing.assert_allclose(rel[1], 0.0, atol=1e-12)

    def test_matches_transform_chain_oracle(self, model):
        rng = np.random.default_rng(7)
        for _ in range(200):
            leg = rng.integers(0, 4)
            q = sample_reachable_q(rng, model)
            np.testing.assert_allclose(
                forward_kinematics(model, leg, q),
                fk_oracle(model, leg, q),
                atol=1e-12,
            )

    def test_vectorized_matches_single_leg(self, model):
        rng = np.random.default_rng(11)
        q12 = np.concatenate([sample_reachable_q(rng, model) for _ in range(4)])
        feet = fk_all_legs(model, q12)
        for leg in range(4):
            np.testing.assert_allclose(
                feet[leg],
                forward_kinematics(model, leg, q12[3 * leg : 3 * leg + 3]),
                atol=1e-14,
            )


class TestInverseKinematics:
    def test_full_extension_straight_down(self, model):
        target = model.hip_offsets[2] + [0.0, 0.0, -model.max_leg_reach]
        q = inverse_kinematics(model, 2, target)
        np.testing.assert_allclose(q, np.zeros(3), atol=1e-9)

    def test_unreachable_target_raises(self, model):
        target = model.hip_offsets[0] + [0.0, 0.0, -(model.max_leg_reach + 0.05)]
        with pytest.raises(OutOfWorkspaceError) as err:
            inverse_kinematics(model, 0, target)
        assert err.value.nearest_distance == pytest.approx(0.05, abs=1e-12)

    def test_round_trip_1000_random_targets(self, model):
        rng = np.random.default_rng(3)
        worst = 0.0
        n = 0
        while n < 1000:
            leg = int(rng.integers(0, 4))
            # sample within the annulus, biased toward the lower hemisphere
            r = rng.uniform(model.min_leg_reach + 1e-3, model.max_leg_reach - 1e-3)
            theta = rng.uniform(0.0, 0.45 * np.pi)
            phi = rng.uniform(-np.pi, np.pi)
            rel = r * np.array(
                [
                    np.sin(theta) * np.cos(phi),
                    np.sin(theta) * np.sin(phi),
                    -np.cos(theta),
                ]
            )
            target = model.hip_offsets[leg] + rel
            q = inverse_kinematics(model, leg, target)
            worst = max(worst, np.linalg.norm(forward_kinematics(model, leg, q) - target))
            n += 1
        assert worst < 1e-9

    def test_knee_bends_backward_branch(self, model):
        target = model.hip_offsets[0] + [0.05, 0.01, -0.30]
        q = inverse_kinematics(model, 0, target)
        assert q[2] <= 0.0

    def test_ik_all_legs_matches(self, model):
        rng = np.random.default_rng(5)
        feet = np.array(
            [
                model.hip_offsets[leg] + [0.02 * rng.standard_normal(), 0.0, -0.3]
                for leg in range(4)
            ]
        )
        q12 = ik_all_legs(model, feet)
        np.testing.assert_allclose(fk_all_legs(model, q12), feet, atol=1e-9)


class TestJacobian:
    def fd_jacobian(self, model, leg, q, h=1e-7):
        jac = np.empty((3, 3))
        for j in range(3):
            qp, qm = q.copy(), q.copy()
            qp[j] += h
            qm[j] -= h
            jac[:, j] = (
                forward_kinematics(model, leg, qp) - forward_kinematics(model, leg, qm)
            ) / (2 * h)
        return jac

    def test_matches_finite_differences(self, model):
        rng = np.random.default_rng(13)
        for _ in range(100):
            leg = int(rng.integers(0, 4))
            q = sample_reachable_q(rng, model)
            jac = leg_jacobian(model, leg, q)
            fd = self.fd_jacobian(model, leg, q)
            scale = 1.0 + np.abs(jac).max()
            assert np.abs(jac - fd).max() < 1e-6 * scale

    def test_straight_leg_is_singular(self, model):
        jac = leg_jacobian(model, 0, np.zeros(3))
        assert abs(np.linalg.det(jac)) < 1e-12

    def test_abduction_column_orthogonal_to_leg_plane(self, model):
        q = np.array([0.0, 0.4, -0.9])
        jac = leg_jacobian(model, 1, q)
        # leg plane at zero abduction is x-z: abduction column is pure y
        assert jac[0, 0] == 0.0
        assert jac[2, 0] == pytest.approx(0.0, abs=1e-12)
        assert abs(jac[1, 0]) > 0.1

    def test_stacked_matches_single(self, model):
        rng = np.random.default_rng(17)
        q12 = np.concatenate([sample_reachable_q(rng, model) for _ in range(4)])
        stacked = jacobian_all_legs(model, q12)
        for leg in range(4):
            np.testing.assert_allclose(
                stacked[leg],
                leg_jacobian(model, leg, q12[3 * leg : 3 * leg + 3]),
                atol=1e-14,
            )


class TestSprings:
    def test_thigh_torque_arithmetic(self):
        p = SpringParams(stiffness_thigh=16.0, damping=0.0, rest_angle_thigh=0.0)
        tau = spring_torque(p, 1, 0.5, 0.0)
        assert tau == pytest.approx(-8.0, abs=1e-12)

    def test_rest_point_zero(self):
        p = SpringParams()
        assert spring_torque(p, 2, p.rest_angle_calf, 0.0) == 0.0

    def test_disabled_is_identically_zero(self):
        p = SpringParams(enabled=False)
        rng = np.random.default_rng(1)
        for _ in range(20):
            q, dq = rng.standard_normal(2)
            j = int(rng.integers(0, 12))
            assert spring_torque(p, j, q, dq) == 0.0
        assert spring_energy(p, rng.standard_normal(12)) == 0.0
        np.testing.assert_array_equal(
            spring_torque_all(p, rng.standard_normal(12), rng.standard_normal(12)),
            np.zeros(12),
        )

    def test_abduction_joints_unsprung(self):
        p = SpringParams()
        for leg in range(4):
            assert spring_torque(p, 3 * leg, 1.0, 1.0) == 0.0

    def test_energy_rest_zero_and_single_calf(self):
        p = SpringParams(
            stiffness_thigh=16.0,
            stiffness_calf=10.0,
            rest_angle_thigh=0.0,
            rest_angle_calf=0.0,
        )
        q = np.zeros(12)
        assert spring_energy(p, q) == 0.0
        q[2] = 0.4  # one calf deflected 0.4 rad at K=10 -> 0.5*10*0.16
        assert spring_energy(p, q) == pytest.approx(0.8, abs=1e-12)

    def test_energy_equals_negative_work_integral(self):
        # quadrature oracle: E(q) - E(q0) == -integral tau dq with D=0
        p = SpringParams(damping=0.0)
        q0 = np.zeros(12)
        q0[1::3] = p.rest_angle_thigh
        q0[2::3] = p.rest_angle_calf
        rng = np.random.default_rng(23)
        q1 = q0 + 0.8 * rng.standard_normal(12)
        n = 20001
        s = np.linspace(0.0, 1.0, n)
        work = 0.0
        for j in range(12):
            path = q0[j] + s * (q1[j] - q0[j])
            tau = np.array([spring_torque(p, j, qj, 0.0) for qj in path])
            work += np.trapezoid(tau, path)
        assert spring_energy(p, q1) - spring_energy(p, q0) == pytest.approx(
            -work, abs=1e-9
        )

    def test_closed_path_work_is_zero(self):
        p = SpringParams(damping=0.0)
        # loop out and back along a random direction
        rng = np.random.default_rng(29)
        direction = rng.standard_normal(12)
        s = np.concatenate([np.linspace(0, 1, 5001), np.linspace(1, 0, 5001)])
        work = 0.0
        for j in range(12):
            path = s * direction[j]
            tau = np.array([spring_torque(p, j, qj, 0.0) for qj in path])
            work += np.trapezoid(tau, path)
        assert abs(work) < 1e-9


class TestModelValidation:
    def test_rejects_bad_mass(self):
        with pytest.raises(ValueError):
            RobotModel(base_mass=-1.0)

    def test_rejects_inverted_limits(self):
        limits = RobotModel().joint_limits.copy()
        limits[3] = [1.0, -1.0]
        with pytest.raises(ValueError):
            RobotModel(joint_limits=limits)

    def test_rejects_negative_spring(self):
        with pytest.raises(ValueError):
            SpringParams(stiffness_calf=-1.0)

    def test_clamp_joints(self):
        m = RobotModel()
        q = np.full(N_JOINTS, 10.0)
        qc = m.clamp_joints(q)
        np.testing.assert_array_equal(qc, m.joint_limits[:, 1])
