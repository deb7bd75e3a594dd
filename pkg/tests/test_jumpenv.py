import numpy as np
import pytest

from jumprl.jumpenv import HISTORY_LEN, OBS_DIM, JumpEnv, playback_episode
from jumprl.robot import SpringParams
from jumprl.rewards import episode_reward
from jumprl.stages import (
    DomainRandomizationConfig,
    TerminationConfig,
    make_stage,
    sample_domain_randomization,
    sample_task,
)


def make_env(reference, model, stage_name="imitation", seed=0, **kwargs):
    stage = kwargs.pop("stage", None) or make_stage(stage_name)
    return JumpEnv(
        reference,
        stage,
        model=model,
        springs=kwargs.pop("springs", SpringParams(enabled=False)),
        seed=seed,
        **kwargs,
    )


class TestActionPipeline:
    def test_zero_actions_reproduce_reference_commands(self, synthetic_reference, go1_model):
        env = make_env(synthetic_reference, go1_model)
        env.reset()
        for _ in range(6):
            i = env.i
            q_des, _ = env.desired_joints(np.zeros(12))
            np.testing.assert_array_equal(
                q_des, go1_model.clamp_joints(synthetic_reference.q_ref[i])
            )
            env.step(np.zeros(12))

    def test_filter_dc_gain_is_one(self, synthetic_reference, go1_model):
        env = make_env(synthetic_reference, go1_model)
        env.reset()
        raw = np.full(12, 0.5)
        prev = 0.0
        for _ in range(30):
            env.desired_joints(raw)
            # geometric approach to the raw value
            assert env._filtered[0] > prev or env._filtered[0] == pytest.approx(0.5)
            prev = env._filtered[0]
        np.testing.assert_allclose(env._filtered, 0.5, atol=1e-4)

    def test_full_positive_action_reaches_scale(self, synthetic_reference, go1_model):
        env = make_env(synthetic_reference, go1_model)
        env.reset()
        for _ in range(40):
            q_des, _ = env.desired_joints(np.ones(12))
        i = env.i
        expected = go1_model.clamp_joints(
            synthetic_reference.q_ref[i] + env.residual_scale
        )
        np.testing.assert_allclose(q_des, expected, atol=1e-4)

    def test_actions_clipped_to_unit_box(self, synthetic_reference, go1_model):
        env = make_env(synthetic_reference, go1_model)
        env.reset()
        env.desired_joints(np.full(12, 8.0))
        assert env._filtered.max() <= env.beta * 1.0 + 1e-12


class TestHistoryBuffer:
    def test_fixed_length_and_padding(self, synthetic_reference, go1_model):
        env = make_env(synthetic_reference, go1_model)
        obs = env.reset()
        assert obs.shape == (HISTORY_LEN * (OBS_DIM + 12),)
        window = obs.reshape(HISTORY_LEN, OBS_DIM + 12)
        # all pre-episode slots repeat the initial observation, zero actions
        for row in window:
            np.testing.assert_array_equal(row[:OBS_DIM], window[-1][:OBS_DIM])
            np.testing.assert_array_equal(row[OBS_DIM:], 0.0)
        # after k steps exactly HISTORY_LEN - k padded slots remain
        k = 3
        action = 0.3 * np.ones(12)
        for _ in range(k):
            obs, _, _, _ = env.step(action)
        window = obs.reshape(HISTORY_LEN, OBS_DIM + 12)
        padded = sum(1 for row in window if np.array_equal(row[OBS_DIM:], np.zeros(12)))
        assert padded == HISTORY_LEN - k

    def test_newest_last_ordering(self, synthetic_reference, go1_model):
        env = make_env(synthetic_reference, go1_model)
        env.reset()
        a1, a2 = 0.1 * np.ones(12), 0.2 * np.ones(12)
        env.step(a1)
        obs, _, _, _ = env.step(a2)
        window = obs.reshape(HISTORY_LEN, OBS_DIM + 12)
        np.testing.assert_array_equal(window[-1][OBS_DIM:], a2)
        np.testing.assert_array_equal(window[-2][OBS_DIM:], a1)


class TestObservation:
    def test_remaining_time_fraction(self, synthetic_reference, go1_model):
        env = make_env(synthetic_reference, go1_model, stage_name="generalization")
        env.reset()
        n = env.horizon
        assert env._observe()[34] == pytest.approx(1.0)
        env.step(np.zeros(12))
        assert env._observe()[34] == pytest.approx((n - 1) / n)

    def test_target_in_observation(self, synthetic_reference, go1_model):
        env = make_env(synthetic_reference, go1_model, stage_name="generalization", seed=5)
        env.reset()
        np.testing.assert_array_equal(env._observe()[35:37], env.target)


class TestTermination:
    def test_fall_threshold_boundary(self, synthetic_reference, go1_model):
        env = make_env(synthetic_reference, go1_model)
        env.reset()
        for angle, expect in ((np.radians(29.9), None), (np.radians(30.1), "fell")):
            env.state.base_quat = np.array(
                [np.cos(angle / 2), 0.0, np.sin(angle / 2), 0.0]
            )
            env.state.base_pos[2] = 1.0  # keep proxies off the ground
            env._mismatch_time[:] = 0.0
            assert env._check_termination() == expect

    def test_mismatch_window_resets(self, synthetic_reference, go1_model):
        stage = make_stage("imitation")
        stage.termination.contact_match_mode = "per_foot"
        env = make_env(synthetic_reference, go1_model, stage=stage)
        env.reset()
        env.state.base_pos[2] = 1.0
        env.i = 2  # reference says all-contact here
        # 5 steps of mismatch (0.10 s) then one matching step
        env.state.foot_contact = np.array([False, True, True, True])
        for _ in range(5):
            assert env._check_termination() is None
        env.state.foot_contact = np.array([True, True, True, True])
        assert env._check_termination() is None
        assert env._mismatch_time.max() == 0.0
        # 7 consecutive mismatching steps (0.14 s > 0.12 s) terminate
        env.state.foot_contact = np.array([False, True, True, True])
        causes = [env._check_termination() for _ in range(7)]
        assert causes[-1] == "contact_mismatch"
        assert all(c is None for c in causes[:-1])

    def test_landing_error_boundary(self, synthetic_reference, go1_model):
        stage = make_stage("generalization")
        env = make_env(synthetic_reference, go1_model, stage=stage)
        env.reset()
        env.state.base_pos[2] = 1.0
        env.target = np.array([0.5, 0.0])
        env.i = 10
        env.log.i_land = 10
        # threshold = 0.2 * 0.5 + 0.05 = 0.15
        env.log.landed_position = np.array([0.5 - 0.16, 0.0])
        assert env._check_termination() == "landing_error"
        env.log.landed_position = np.array([0.5 - 0.14, 0.0])
        assert env._check_termination() is None

    def test_imitation_has_no_landing_error_check(self, synthetic_reference, go1_model):
        env = make_env(synthetic_reference, go1_model, stage_name="imitation")
        env.reset()
        env.state.base_pos[2] = 1.0
        env.i = 10
        env.log.i_land = 10
        env.log.landed_position = np.array([10.0, 0.0])
        env._mismatch_time[:] = 0.0
        # matching contact state keeps mismatch quiet; no landing-error cause
        env.state.foot_contact = synthetic_reference.contact_ref[10].copy()
        assert env._check_termination() is None

    def test_termination_cause_exclusive(self, demo_reference, go1_model):
        env = make_env(demo_reference, go1_model)
        log = playback_episode(env)
        assert log.termination_cause in (
            "completed",
            "illegal_contact",
            "fell",
            "contact_mismatch",
            "landing_error",
            "diverged",
        )
        assert log.termination_step is not None


class TestRsi:
    def test_start_state_on_reference(self, demo_reference, go1_model):
        env = make_env(demo_reference, go1_model, seed=9)
        env.reset()
        start = env.start_index
        np.testing.assert_array_equal(env.state.q, demo_reference.q_ref[start])
        np.testing.assert_allclose(
            env.state.base_pos[:2], demo_reference.com_pos[start][:2], atol=1e-12
        )
        assert 0 <= start <= demo_reference.i_air

    def test_start_index_zero_is_standing_demo_pose(self, demo_reference, go1_model):
        env = make_env(demo_reference, go1_model, seed=0)
        while True:
            env.reset()
            if env.start_index == 0:
                break
        np.testing.assert_array_equal(env.state.q, demo_reference.q_ref[0])
        np.testing.assert_array_equal(env.state.base_vel, demo_reference.com_vel[0])

    def test_start_distribution_uniform(self, demo_reference, go1_model):
        env = make_env(demo_reference, go1_model, seed=123)
        n_draws = 4000
        counts = np.zeros(demo_reference.i_air + 1)
        for _ in range(n_draws):
            env.rng_draw = None
            env.reset()
            counts[env.start_index] += 1
        expected = n_draws / len(counts)
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        # chi-square 99.9% quantile for k-1 dof is ~comfortably above this
        dof = len(counts) - 1
        assert chi2 < dof + 4.0 * np.sqrt(2.0 * dof)


class TestTaskSampling:
    def test_imitation_always_demo_target(self, demo_reference):
        stage = make_stage("imitation")
        rng = np.random.default_rng(0)
        demo = demo_reference.com_pos[demo_reference.i_land, :2] - demo_reference.com_pos[0, :2]
        for _ in range(10):
            np.testing.assert_array_equal(sample_task(stage, rng, demo_reference), demo)

    def test_generalization_ranges_and_moments(self, demo_reference):
        stage = make_stage("generalization")
        rng = np.random.default_rng(1)
        draws = np.array([sample_task(stage, rng, demo_reference) for _ in range(20000)])
        assert draws[:, 0].min() >= 0.0 and draws[:, 0].max() <= 1.0
        assert draws[:, 1].min() >= -0.3 and draws[:, 1].max() <= 0.3
        assert draws[:, 0].mean() == pytest.approx(0.5, abs=0.01)
        assert draws[:, 1].mean() == pytest.approx(0.0, abs=0.005)


class TestDomainRandomization:
    def test_degenerate_ranges_are_deterministic(self):
        cfg = DomainRandomizationConfig(
            mass_scale=(1.0, 1.0),
            com_offset=0.0,
            friction=(0.7, 0.7),
            restitution_damping_scale=(1.0, 1.0),
            motor_strength=(1.0, 1.0),
            coulomb_torque=(0.0, 0.0),
            spring_stiffness_scale=(1.0, 1.0),
            spring_damping_scale=(1.0, 1.0),
            spring_rest_offset=0.0,
            initial_joint_noise=0.0,
            initial_joint_vel_noise=0.0,
            initial_base_vel_noise=0.0,
        )
        rng = np.random.default_rng(0)
        a = sample_domain_randomization(cfg, rng)
        b = sample_domain_randomization(cfg, rng)
        assert a.mass_scale == b.mass_scale == 1.0
        np.testing.assert_array_equal(a.com_offset, 0.0)

    def test_draws_within_ranges(self):
        cfg = DomainRandomizationConfig()
        rng = np.random.default_rng(2)
        for _ in range(500):
            s = sample_domain_randomization(cfg, rng)
            assert cfg.mass_scale[0] <= s.mass_scale <= cfg.mass_scale[1]
            assert cfg.friction[0] <= s.friction <= cfg.friction[1]
            assert cfg.motor_strength[0] <= s.motor_strength <= cfg.motor_strength[1]
            assert np.abs(s.com_offset).max() <= cfg.com_offset

    def test_spring_ranges_ignored_when_disabled(self):
        cfg = DomainRandomizationConfig()
        rng = np.random.default_rng(3)
        s = sample_domain_randomization(cfg, rng, springs_enabled=False)
        assert s.spring_stiffness_scale == 1.0
        assert s.spring_damping_scale == 1.0
        np.testing.assert_array_equal(s.spring_rest_offset, 0.0)


class TestEpisodeAccounting:
    def test_episode_reward_matches_stepwise_sum(self, demo_reference, go1_model):
        env = make_env(demo_reference, go1_model, seed=4)
        log = playback_episode(env)
        total, breakdown = episode_reward(env.stage.reward, log)
        assert total == pytest.approx(float(np.sum(log.reward)), abs=1e-9)
        assert set(breakdown) == {
            "imitation",
            "velocity",
            "landing",
            "smooth_penalty",
            "post_landing_penalty",
            "survival",
        }

    def test_completed_playback_gets_survival_bonus(self, demo_reference, go1_model):
        for seed in range(6):
            env = make_env(demo_reference, go1_model, seed=300 + seed)
            log = playback_episode(env)
            if log.termination_cause == "completed":
                _, breakdown = episode_reward(env.stage.reward, log)
                assert breakdown["survival"] == 0.1
                assert breakdown["landing"] > 0.0
                return
        pytest.fail("no completed playback episode in six seeds")

    def test_phases_recorded(self, demo_reference, go1_model):
        for seed in range(6):
            env = make_env(demo_reference, go1_model, seed=400 + seed)
            log = playback_episode(env)
            if log.termination_cause == "completed":
                assert log.i_air is not None and log.i_land is not None
                assert log.i_air < log.i_land
                assert log.landed_position is not None
                return
        pytest.fail("no completed playback episode in six seeds")


class TestStageInvariants:
    def test_stage_flag_consistency(self):
        imit = make_stage("imitation")
        assert imit.termination.contact_mismatch_enabled
        assert not imit.termination.landing_error_enabled
        for name in ("generalization", "uneven", "domain_rand"):
            stage = make_stage(name)
            assert not stage.termination.contact_mismatch_enabled
            assert stage.termination.landing_error_enabled
            assert stage.reward.base_pos_weight == 0.0

    def test_landing_threshold_monotone_in_target_norm(self):
        term = TerminationConfig()
        prev = -1.0
        for r in np.linspace(0.0, 1.0, 11):
            thr = term.landing_error_threshold(np.array([r, 0.0]))
            assert thr >= prev
            prev = thr

    def test_uneven_stage_uses_boxes(self, demo_reference, go1_model):
        env = make_env(demo_reference, go1_model, stage_name="uneven", seed=8)
        env.reset()
        assert env._world.terrain.heights.size > 0
        fl = env._world.terrain.height_at(go1_model.hip_offsets[0, 0], go1_model.hip_offsets[0, 1])
        fr = env._world.terrain.height_at(go1_model.hip_offsets[1, 0], go1_model.hip_offsets[1, 1])
        assert fl == fr  # left/right equalized under the initial stance


class TestEpisodeTrace:
    def test_trace_dump_columnar(self, demo_reference, go1_model, tmp_path):
        from jumprl.jumpenv import save_episode_trace

        env = make_env(demo_reference, go1_model, seed=2)
        log = playback_episode(env)
        path = tmp_path / "episode.txt"
        save_episode_trace(log, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# jumprl-episode 1"
        data = [l for l in lines if not l.startswith("#")]
        assert len(data) == len(log.base_pos)
        assert len(data[0].split()) == 1 + 3 + 4 + 3 + 12 + 12 + 12 + 12 + 4 + 1
