import numpy as np
import pytest

from jumprl.mlp import ActorCritic, gaussian_log_prob
from jumprl.pointmass import PointMassReachEnv
from jumprl.ppo import (
    AdamState,
    PpoConfig,
    RolloutCollector,
    assemble_batch,
    desk_scale_config,
    deserialize_checkpoint,
    gae_advantages,
    ppo_loss_and_grads,
    ppo_update,
    serialize_checkpoint,
    train,
)


def brute_force_gae(rewards, values, dones, bootstrap, gamma, lam):
    """O(T^2) double-loop evaluation of the GAE definition."""
    t_len = len(rewards)
    deltas = np.zeros(t_len)
    for t in range(t_len):
        v_next = values[t + 1] if t + 1 < t_len else bootstrap
        deltas[t] = rewards[t] + gamma * v_next * (1 - dones[t]) - values[t]
    adv = np.zeros(t_len)
    for t in range(t_len):
        factor = 1.0
        for k in range(t, t_len):
            adv[t] += factor * deltas[k]
            if dones[k]:
                break
            factor *= gamma * lam
    return adv


class TestGae:
    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            t_len = int(rng.integers(3, 40))
            rewards = rng.standard_normal(t_len)
            values = rng.standard_normal(t_len)
            dones = (rng.random(t_len) < 0.15).astype(float)
            bootstrap = float(rng.standard_normal())
            gamma = float(rng.uniform(0.8, 1.0))
            lam = float(rng.uniform(0.0, 1.0))
            adv, ret = gae_advantages(rewards, values, dones, bootstrap, gamma, lam)
            expected = brute_force_gae(rewards, values, dones, bootstrap, gamma, lam)
            assert np.abs(adv - expected).max() < 1e-10
            np.testing.assert_allclose(ret, adv + values, atol=1e-12)

    def test_lambda_one_gamma_one_telescopes_to_montecarlo(self):
        rng = np.random.default_rng(1)
        t_len = 25
        rewards = rng.standard_normal(t_len)
        values = rng.standard_normal(t_len)
        dones = np.zeros(t_len)
        dones[-1] = 1.0  # single complete episode
        adv, _ = gae_advantages(rewards, values, dones, 0.0, 1.0, 1.0)
        cum = np.cumsum(rewards[::-1])[::-1]
        np.testing.assert_allclose(adv, cum - values, atol=1e-10)

    def test_lambda_zero_is_one_step_td(self):
        rng = np.random.default_rng(2)
        t_len = 10
        rewards = rng.standard_normal(t_len)
        values = rng.standard_normal(t_len)
        dones = np.zeros(t_len)
        bootstrap = 0.7
        adv, _ = gae_advantages(rewards, values, dones, bootstrap, 0.9, 0.0)
        for t in range(t_len):
            v_next = values[t + 1] if t + 1 < t_len else bootstrap
            assert adv[t] == pytest.approx(rewards[t] + 0.9 * v_next - values[t], abs=1e-12)


class TestRatioIdentity:
    def test_pre_update_ratios_are_one(self):
        rng = np.random.default_rng(3)
        net = ActorCritic(9, 2, (16, 16)).initialize(rng)
        obs = rng.standard_normal((64, 9))
        mean, log_std, _ = net.forward(obs)
        actions = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        batch = {
            "obs": obs,
            "actions": actions,
            "log_prob_old": gaussian_log_prob(actions, mean, log_std),
            "advantages": rng.standard_normal(64),
            "returns": rng.standard_normal(64),
        }
        cfg = PpoConfig(batch_size=128, minibatch_size=128)
        _, _, diag = ppo_loss_and_grads(net, batch, cfg)
        assert abs(diag["mean_ratio"] - 1.0) < 1e-12
        assert diag["clip_fraction"] == 0.0


class TestSchedule:
    def test_linear_decay_endpoints_and_midpoint(self):
        cfg = PpoConfig(total_timesteps=1_000_000, learning_rate=1e-4)
        assert cfg.lr_at(0) == pytest.approx(1e-4, abs=0)
        assert cfg.lr_at(500_000) == pytest.approx(0.5e-4, rel=1e-12)
        assert cfg.lr_at(1_000_000) == 0.0
        assert cfg.lr_at(2_000_000) == 0.0


class TestUpdate:
    def test_gradient_norm_respected_and_params_move(self):
        rng = np.random.default_rng(4)
        net = ActorCritic(9, 2, (16, 16)).initialize(rng)
        env = PointMassReachEnv(seed=0)
        collector = RolloutCollector([env], seed=0)
        cfg = PpoConfig(batch_size=128, minibatch_size=64, epochs=2, num_envs=1)
        rollout = collector.collect(net, 128)
        batch = assemble_batch(rollout, cfg)
        before = net.flatten()
        diag = ppo_update(net, batch, cfg, rng, 1e-3, AdamState(net))
        assert not np.array_equal(before, net.flatten())
        assert np.isfinite(diag["policy_loss"])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PpoConfig(batch_size=100, minibatch_size=64)
        with pytest.raises(ValueError):
            PpoConfig(gamma=0.0)


class TestCheckpoint:
    def test_round_trip_bytes_identical(self):
        rng = np.random.default_rng(5)
        net = ActorCritic(9, 2, (8, 8)).initialize(rng)
        cfg = PpoConfig()
        blob = serialize_checkpoint(net, cfg)
        net2, header = deserialize_checkpoint(blob)
        assert header["hidden"] == [8, 8]
        blob2 = serialize_checkpoint(net2, cfg)
        assert blob == blob2
        for k in net.param_names():
            np.testing.assert_array_equal(net.params[k], net2.params[k])

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            deserialize_checkpoint(b"NOTACKPT" + b"\x00" * 32)


class _Stage:
    name = "pointmass"


class TestTrainLoop:
    def make_factory(self):
        def factory(stage, k, seed):
            return PointMassReachEnv(seed=abs(hash(seed)) % 2**31)

        return factory

    def test_seeded_determinism(self):
        cfg = desk_scale_config(
            total_timesteps=4096, batch_size=512, minibatch_size=64,
            hidden_sizes=(16, 16), num_envs=4,
        )
        curves = []
        for _ in range(2):
            res = train(self.make_factory(), [_Stage()], cfg, seed=11, steps_per_stage=2048)
            curves.append(res.curves)
        assert curves[0] == curves[1]

    def test_stage_chaining_reuses_weights(self):
        cfg = desk_scale_config(
            total_timesteps=2048, batch_size=512, minibatch_size=64,
            hidden_sizes=(16, 16), num_envs=4,
        )
        s1, s2 = _Stage(), _Stage()
        s2 = type("S2", (), {"name": "pointmass2"})()
        res = train(self.make_factory(), [s1, s2], cfg, seed=3, steps_per_stage=1024)
        assert set(res.checkpoints) == {"pointmass", "pointmass2"}
        # the second stage starts from the first stage's weights: the saved
        # stage-1 checkpoint equals the net state when stage 2 began
        net1, _ = deserialize_checkpoint(res.checkpoints["pointmass"])
        assert net1.flatten().shape == res.net.flatten().shape

    def test_pointmass_learning_improves_return(self):
        # light version of the training-sanity acceptance check (1 seed)
        cfg = desk_scale_config(
            total_timesteps=60_000, batch_size=1024, minibatch_size=128,
            hidden_sizes=(32, 32), num_envs=4, learning_rate=3e-4,
        )
        res = train(self.make_factory(), [_Stage()], cfg, seed=0, steps_per_stage=60_000)
        returns = [r["mean_return"] for r in res.curves if np.isfinite(r["mean_return"])]
        n = len(returns)
        first = np.mean(returns[: max(n // 10, 1)])
        last = np.mean(returns[-max(n // 10, 1):])
        assert last > first
