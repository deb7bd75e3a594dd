import numpy as np
import pytest

from jumprl.mlp import (
    ActorCritic,
    clip_grads_,
    gaussian_log_prob,
    global_grad_norm,
)
from jumprl.ppo import PpoConfig, ppo_loss_and_grads


def small_net(rng, input_dim=8, action_dim=3, hidden=(8, 8)):
    return ActorCritic(input_dim, action_dim, hidden).initialize(rng)


def matmul_oracle(net, obs):
    """Independent forward pass via plain matrix products."""
    p = net.params
    x = np.atleast_2d(obs) * net.input_scale
    h = np.tanh(np.tanh(x @ p["actor_w0"] + p["actor_b0"]) @ p["actor_w1"] + p["actor_b1"])
    mean = np.tanh(h @ p["actor_w2"] + p["actor_b2"])
    hc = np.tanh(np.tanh(x @ p["critic_w0"] + p["critic_b0"]) @ p["critic_w1"] + p["critic_b1"])
    value = (hc @ p["critic_w2"] + p["critic_b2"])[:, 0]
    return mean, value


class TestForward:
    def test_zero_params_give_zero_outputs(self):
        net = ActorCritic(8, 3, (8, 8)).initialize(np.random.default_rng(0))
        for k in net.params:
            if k != "log_std":
                net.params[k] = np.zeros_like(net.params[k])
        mean, _, value = net.forward(np.random.default_rng(1).standard_normal((4, 8)))
        np.testing.assert_array_equal(mean, 0.0)
        np.testing.assert_array_equal(value, 0.0)

    def test_batch_order_invariance(self):
        rng = np.random.default_rng(2)
        net = small_net(rng)
        obs = rng.standard_normal((6, 8))
        mean, _, value = net.forward(obs)
        perm = rng.permutation(6)
        mean_p, _, value_p = net.forward(obs[perm])
        np.testing.assert_allclose(mean_p, mean[perm], atol=1e-15)
        np.testing.assert_allclose(value_p, value[perm], atol=1e-15)

    def test_matches_matrix_product_oracle(self):
        rng = np.random.default_rng(3)
        net = small_net(rng)
        obs = rng.standard_normal((5, 8))
        mean, _, value = net.forward(obs)
        mean_o, value_o = matmul_oracle(net, obs)
        np.testing.assert_allclose(mean, mean_o, atol=1e-12)
        np.testing.assert_allclose(value, value_o, atol=1e-12)

    def test_mean_bounded_by_tanh(self):
        rng = np.random.default_rng(4)
        net = small_net(rng)
        mean, _, _ = net.forward(100.0 * rng.standard_normal((50, 8)))
        assert np.abs(mean).max() <= 1.0


def make_batch(rng, net, batch=16):
    obs = rng.standard_normal((batch, net.input_dim))
    mean, log_std, value = net.forward(obs)
    actions = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    logp = gaussian_log_prob(actions, mean, log_std)
    return {
        "obs": obs,
        "actions": actions,
        "log_prob_old": logp + 0.1 * rng.standard_normal(batch),
        "advantages": rng.standard_normal(batch),
        "returns": rng.standard_normal(batch),
    }


class TestGradients:
    @pytest.mark.parametrize("entropy_coef", [0.0, 0.01])
    def test_ppo_loss_gradients_match_finite_differences(self, entropy_coef):
        rng = np.random.default_rng(5)
        net = small_net(rng)
        cfg = PpoConfig(batch_size=128, minibatch_size=128, entropy_coef=entropy_coef)
        batch = make_batch(rng, net)
        _, grads, _ = ppo_loss_and_grads(net, batch, cfg)
        flat_grads = np.concatenate([grads[k].ravel() for k in net.param_names()])

        theta0 = net.flatten()
        h = 1e-6

        def loss_at(theta):
            net.unflatten(theta.copy())
            val, _, _ = ppo_loss_and_grads(net, batch, cfg)
            return val

        fd = np.zeros_like(theta0)
        for j in range(len(theta0)):
            tp, tm = theta0.copy(), theta0.copy()
            tp[j] += h
            tm[j] -= h
            fd[j] = (loss_at(tp) - loss_at(tm)) / (2 * h)
        net.unflatten(theta0)
        scale = np.abs(fd).max() + 1e-12
        assert np.abs(flat_grads - fd).max() / scale < 1e-4

    def test_zero_advantage_kills_policy_gradient(self):
        rng = np.random.default_rng(6)
        net = small_net(rng)
        cfg = PpoConfig(batch_size=128, minibatch_size=128, vf_coef=0.0)
        batch = make_batch(rng, net)
        batch["advantages"] = np.zeros_like(batch["advantages"])
        _, grads, _ = ppo_loss_and_grads(net, batch, cfg)
        for name in net.param_names():
            np.testing.assert_array_equal(grads[name], 0.0)

    def test_clipped_region_has_zero_gradient(self):
        # single sample pushed far outside the clip interval with an
        # advantage sign that makes the clipped branch active
        rng = np.random.default_rng(7)
        net = small_net(rng)
        cfg = PpoConfig(batch_size=128, minibatch_size=128, vf_coef=0.0)
        batch = make_batch(rng, net, batch=1)
        # ratio >> 1+eps with positive advantage -> clipped, zero gradient
        batch["log_prob_old"] = gaussian_log_prob(
            batch["actions"], *net.forward(batch["obs"])[:2]
        ) - 2.0
        batch["advantages"] = np.array([1.5])
        _, grads, diag = ppo_loss_and_grads(net, batch, cfg)
        assert diag["clip_fraction"] == 1.0
        for name in net.param_names():
            np.testing.assert_array_equal(grads[name], 0.0)


class TestGradUtils:
    def test_global_norm_and_clip(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        assert global_grad_norm(grads) == pytest.approx(5.0)
        norm = clip_grads_(grads, 0.5)
        assert norm == pytest.approx(5.0)
        assert global_grad_norm(grads) == pytest.approx(0.5)

    def test_clip_noop_when_small(self):
        grads = {"a": np.array([0.1])}
        clip_grads_(grads, 0.5)
        assert grads["a"][0] == pytest.approx(0.1)


class TestFlattenRoundTrip:
    def test_round_trip(self):
        rng = np.random.default_rng(8)
        net = small_net(rng)
        theta = net.flatten()
        net2 = net.clone()
        net2.unflatten(theta)
        for k in net.param_names():
            np.testing.assert_array_equal(net.params[k], net2.params[k])
