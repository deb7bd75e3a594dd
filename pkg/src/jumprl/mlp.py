"""Actor-critic MLP with hand-written forward and reverse passes.

Actor and critic are separate two-hidden-layer tanh networks; the action
mean is tanh-squashed to [-1, 1] and the log standard deviation is a free,
state-independent parameter vector. Gradients are analytic reverse-mode;
tests check them against central finite differences.
"""

from __future__ import annotations

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


class ActorCritic:
    """Parameter container + forward/backward for the policy and value nets."""

    def __init__(self, input_dim, action_dim, hidden=(64, 64), input_scale=None):
        self.input_dim = int(input_dim)
        self.action_dim = int(action_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.input_scale = (
            np.ones(input_dim) if input_scale is None else np.asarray(input_scale, dtype=float)
        )
        self.params = {}

    # -- parameter management ------------------------------------------------

    def initialize(self, rng, init_std=0.3, final_gain=0.01):
        """Orthogonal-ish init; small final layers so the initial policy mean
        is near zero (pure reference tracking) and values start near zero."""
        sizes_a = (self.input_dim, *self.hidden, self.action_dim)
        sizes_c = (self.input_dim, *self.hidden, 1)
        for prefix, sizes in (("actor", sizes_a), ("critic", sizes_c)):
            n_layers = len(sizes) - 1
            for k in range(n_layers):
                gain = final_gain if k == n_layers - 1 else 1.0
                w = rng.standard_normal((sizes[k], sizes[k + 1]))
                # scale columns to unit norm, then by gain / sqrt(fan_in)
                w /= np.linalg.norm(w, axis=0, keepdims=True)
                w *= gain * np.sqrt(2.0 / max(sizes[k], 1))
                self.params[f"{prefix}_w{k}"] = w
                self.params[f"{prefix}_b{k}"] = np.zeros(sizes[k + 1])
        self.params["log_std"] = np.full(self.action_dim, np.log(init_std))
        return self

    def param_names(self):
        return sorted(self.params.keys())

    def flatten(self):
        return np.concatenate([self.params[k].ravel() for k in self.param_names()])

    def unflatten(self, vec):
        offset = 0
        for k in self.param_names():
            size = self.params[k].size
            self.params[k] = vec[offset : offset + size].reshape(self.params[k].shape)
            offset += size
        return self

    def clone(self):
        other = ActorCritic(self.input_dim, self.action_dim, self.hidden, self.input_scale)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def all_finite(self):
        return all(np.isfinite(v).all() for v in self.params.values())

    # -- forward -------------------------------------------------------------

    def _net_forward(self, prefix, x):
        p = self.params
        n_hidden = len(self.hidden)
        acts = [x]
        h = x
        for k in range(n_hidden):
            h = np.tanh(h @ p[f"{prefix}_w{k}"] + p[f"{prefix}_b{k}"])
            acts.append(h)
        out = h @ p[f"{prefix}_w{n_hidden}"] + p[f"{prefix}_b{n_hidden}"]
        acts.append(out)
        return out, acts

    def forward(self, obs, want_cache=False):
        """Batch forward pass.

        Args:
            obs: (B, input_dim) raw observations.

        Returns:
            (mean (B, A), log_std (A,), value (B,)) and optionally the
            activation cache for the backward pass.
        """
        x = np.atleast_2d(obs) * self.input_scale
        pre_mean, cache_a = self._net_forward("actor", x)
        mean = np.tanh(pre_mean)
        v_out, cache_c = self._net_forward("critic", x)
        value = v_out[:, 0]
        if want_cache:
            return mean, self.params["log_std"], value, (cache_a, cache_c, mean)
        return mean, self.params["log_std"], value

    # -- backward ------------------------------------------------------------

    def _net_backward(self, prefix, acts, d_out, grads):
        p = self.params
        n_hidden = len(self.hidden)
        delta = d_out
        for k in range(n_hidden, -1, -1):
            h_in = acts[k]
            grads[f"{prefix}_w{k}"] += h_in.T @ delta
            grads[f"{prefix}_b{k}"] += delta.sum(axis=0)
            if k > 0:
                delta = (delta @ p[f"{prefix}_w{k}"].T) * (1.0 - acts[k] ** 2)

    def backward(self, cache, d_mean, d_value, d_log_std):
        """Reverse pass from output gradients to a parameter-gradient dict."""
        cache_a, cache_c, mean = cache
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        d_pre_mean = d_mean * (1.0 - mean**2)
        self._net_backward("actor", cache_a[:-1], d_pre_mean, grads)
        self._net_backward("critic", cache_c[:-1], d_value[:, None], grads)
        grads["log_std"] += d_log_std
        return grads


def gaussian_log_prob(actions, mean, log_std):
    """Log density of a diagonal Gaussian, summed over action dims."""
    std = np.exp(log_std)
    z = (actions - mean) / std
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * actions.shape[-1] * LOG_2PI


def sample_actions(rng, mean, log_std):
    std = np.exp(log_std)
    return mean + std * rng.standard_normal(mean.shape)


def global_grad_norm(grads):
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_grads_(grads, max_norm):
    """Scale gradients in place so the global norm is at most max_norm."""
    norm = global_grad_norm(grads)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm
