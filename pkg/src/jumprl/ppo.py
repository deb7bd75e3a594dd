"""Proximal policy optimization, from scratch.

Clipped-surrogate PPO with generalized advantage estimation, Adam, a linear
learning-rate decay, and global gradient-norm clipping. Rollouts come from a
set of independent environment instances; collection is deterministic given
the seed regardless of how the instances are scheduled.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .mlp import (
    ActorCritic,
    clip_grads_,
    gaussian_log_prob,
    sample_actions,
)

CHECKPOINT_MAGIC = b"JRLCKPT1"


@dataclass
class PpoConfig:
    total_timesteps: int = 10_000_000
    learning_rate: float = 1e-4  # linearly decayed to zero
    batch_size: int = 4096
    minibatch_size: int = 128
    gae_lambda: float = 0.95
    gamma: float = 0.99
    epochs: int = 10
    clip_range: float = 0.2
    max_grad_norm: float = 0.5
    vf_coef: float = 0.5
    entropy_coef: float = 0.0
    hidden_sizes: tuple = (1024, 1024)
    initial_action_std: float = 0.3
    normalize_advantages: bool = True
    num_envs: int = 8

    def __post_init__(self):
        if self.batch_size % self.minibatch_size != 0:
            raise ValueError("batch_size must be divisible by minibatch_size")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")
        if not (0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("gae_lambda must be in [0, 1]")

    def lr_at(self, steps_done):
        """Affine schedule: learning_rate at 0 steps, zero at the end."""
        frac = 1.0 - steps_done / self.total_timesteps
        return self.learning_rate * max(frac, 0.0)


def desk_scale_config(**overrides):
    """Small-network, short-horizon profile for desktop-CPU runs."""
    cfg = PpoConfig(
        total_timesteps=500_000,
        hidden_sizes=(64, 64),
        batch_size=4096,
        minibatch_size=128,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


# ---------------------------------------------------------------------------
# advantages
# ---------------------------------------------------------------------------

def gae_advantages(rewards, values, dones, bootstrap_value, gamma, lam):
    """GAE over one trajectory segment.

    Args:
        rewards, values, dones: (T,) arrays; dones marks true episode ends
            (terminal bootstrap 0); the final transition of a segment that
            merely ran out of buffer bootstraps with `bootstrap_value`.

    Returns:
        (advantages, returns), both (T,).
    """
    t_len = len(rewards)
    adv = np.zeros(t_len)
    last = 0.0
    for t in range(t_len - 1, -1, -1):
        not_done = 1.0 - dones[t]
        v_next = values[t + 1] if t + 1 < t_len else bootstrap_value
        delta = rewards[t] + gamma * v_next * not_done - values[t]
        last = delta + gamma * lam * not_done * last
        adv[t] = last
    return adv, adv + values


# ---------------------------------------------------------------------------
# loss and gradients
# ---------------------------------------------------------------------------

def ppo_loss_and_grads(net, batch, cfg):
    """Clipped-surrogate + value loss; analytic gradients for every param.

    batch: dict with obs (B,n), actions (B,A), log_prob_old (B,),
    advantages (B,), returns (B,).

    Returns (loss, grads, diagnostics).
    """
    obs = batch["obs"]
    actions = batch["actions"]
    logp_old = batch["log_prob_old"]
    adv = batch["advantages"]
    returns = batch["returns"]
    b = len(obs)
    eps = cfg.clip_range

    mean, log_std, value, cache = net.forward(obs, want_cache=True)
    std = np.exp(log_std)
    z = (actions - mean) / std
    logp = -0.5 * np.sum(z * z, axis=1) - np.sum(log_std) - 0.5 * actions.shape[1] * np.log(2 * np.pi)
    ratio = np.exp(logp - logp_old)
    s_plain = ratio * adv
    s_clip = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    policy_loss = -np.mean(np.minimum(s_plain, s_clip))
    v_err = value - returns
    value_loss = float(np.mean(v_err * v_err))
    entropy = float(np.sum(log_std) + 0.5 * actions.shape[1] * (1.0 + np.log(2 * np.pi)))
    loss = policy_loss + cfg.vf_coef * value_loss - cfg.entropy_coef * entropy

    # d loss / d logp: only where the min picks a branch with ratio gradient
    plain_selected = s_plain <= s_clip
    inside = (ratio > 1.0 - eps) & (ratio < 1.0 + eps)
    grad_path = plain_selected | inside
    d_logp = np.where(grad_path, -ratio * adv / b, 0.0)
    d_mean = d_logp[:, None] * (z / std)
    d_log_std = np.sum(d_logp[:, None] * (z * z - 1.0), axis=0)
    if cfg.entropy_coef != 0.0:
        d_log_std -= cfg.entropy_coef
    d_value = cfg.vf_coef * 2.0 * v_err / b

    grads = net.backward(cache, d_mean, d_value, d_log_std)
    diagnostics = {
        "policy_loss": float(policy_loss),
        "value_loss": value_loss,
        "entropy": entropy,
        "clip_fraction": float(np.mean((ratio < 1.0 - eps) | (ratio > 1.0 + eps))),
        "approx_kl": float(np.mean(ratio - 1.0 - np.log(np.maximum(ratio, 1e-12)))),
        "mean_ratio": float(np.mean(ratio)),
    }
    return float(loss), grads, diagnostics


class AdamState:
    def __init__(self, net, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = {k: np.zeros_like(v) for k, v in net.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in net.params.items()}
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def apply_(self, net, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            step = lr * (self.m[k] / corr1) / (np.sqrt(self.v[k] / corr2) + self.eps)
            net.params[k] -= step


def ppo_update(net, batch, cfg, rng, lr, adam):
    """One PPO update over a full rollout batch.

    Runs cfg.epochs passes of shuffled minibatches, clips the global
    gradient norm, and aborts (without applying) on a non-finite loss.

    Returns a diagnostics dict averaged over minibatches.
    """
    size = len(batch["obs"])
    adv = batch["advantages"]
    if cfg.normalize_advantages:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        batch = dict(batch, advantages=adv)
    agg = {}
    count = 0
    grad_norms = []
    for _ in range(cfg.epochs):
        order = rng.permutation(size)
        for start in range(0, size, cfg.minibatch_size):
            idx = order[start : start + cfg.minibatch_size]
            mini = {k: v[idx] for k, v in batch.items()}
            loss, grads, diag = ppo_loss_and_grads(net, mini, cfg)
            if not np.isfinite(loss):
                diag["aborted"] = True
                return diag
            grad_norms.append(clip_grads_(grads, cfg.max_grad_norm))
            adam.apply_(net, grads, lr)
            for k, v in diag.items():
                agg[k] = agg.get(k, 0.0) + v
            count += 1
    out = {k: v / count for k, v in agg.items()}
    out["grad_norm_pre_clip_max"] = float(np.max(grad_norms))
    out["lr"] = lr
    return out


# ---------------------------------------------------------------------------
# rollout collection
# ---------------------------------------------------------------------------

class RolloutCollector:
    """Steps a set of env instances in lockstep and assembles PPO batches.

    Collection order is by (timestep, env index), so results do not depend
    on scheduling; a process-based collector produces identical batches.
    """

    def __init__(self, envs, seed=0):
        self.envs = envs
        self.rngs = [np.random.default_rng((seed, 911, k)) for k in range(len(envs))]
        self.obs = [env.reset() for env in envs]
        self.episode_return = np.zeros(len(envs))
        self.episode_steps = np.zeros(len(envs), dtype=int)

    def collect(self, net, steps_per_env):
        n_envs = len(self.envs)
        input_dim = self.envs[0].input_dim
        action_dim = self.envs[0].action_dim
        obs_buf = np.zeros((steps_per_env, n_envs, input_dim))
        act_buf = np.zeros((steps_per_env, n_envs, action_dim))
        logp_buf = np.zeros((steps_per_env, n_envs))
        rew_buf = np.zeros((steps_per_env, n_envs))
        val_buf = np.zeros((steps_per_env, n_envs))
        done_buf = np.zeros((steps_per_env, n_envs))
        finished = []

        for t in range(steps_per_env):
            obs_mat = np.asarray(self.obs)
            mean, log_std, value = net.forward(obs_mat)
            obs_buf[t] = obs_mat
            val_buf[t] = value
            for k, env in enumerate(self.envs):
                action = sample_actions(self.rngs[k], mean[k], log_std)
                logp_buf[t, k] = gaussian_log_prob(action, mean[k], log_std)
                act_buf[t, k] = action
                next_obs, reward, done, info = env.step(action)
                rew_buf[t, k] = reward
                done_buf[t, k] = float(done)
                self.episode_return[k] += reward
                self.episode_steps[k] += 1
                if done:
                    finished.append(
                        {
                            "return": float(self.episode_return[k]),
                            "steps": int(self.episode_steps[k]),
                            "cause": info.get("termination_cause", ""),
                            "target": info.get("target"),
                            "landed": info.get("landed_position"),
                        }
                    )
                    self.episode_return[k] = 0.0
                    self.episode_steps[k] = 0
                    next_obs = env.reset()
                self.obs[k] = next_obs
        _, _, bootstrap = net.forward(np.asarray(self.obs))
        return {
            "obs": obs_buf,
            "actions": act_buf,
            "log_prob": logp_buf,
            "rewards": rew_buf,
            "values": val_buf,
            "dones": done_buf,
            "bootstrap": bootstrap,
            "episodes": finished,
        }


def assemble_batch(rollout, cfg):
    """GAE per env stream, then flatten (time, env) major to a flat batch."""
    rewards = rollout["rewards"]
    values = rollout["values"]
    dones = rollout["dones"]
    steps, n_envs = rewards.shape
    adv = np.zeros_like(rewards)
    ret = np.zeros_like(rewards)
    for k in range(n_envs):
        adv[:, k], ret[:, k] = gae_advantages(
            rewards[:, k], values[:, k], dones[:, k], rollout["bootstrap"][k],
            cfg.gamma, cfg.gae_lambda,
        )
    flat = steps * n_envs
    return {
        "obs": rollout["obs"].reshape(flat, -1),
        "actions": rollout["actions"].reshape(flat, -1),
        "log_prob_old": rollout["log_prob"].reshape(flat),
        "advantages": adv.reshape(flat),
        "returns": ret.reshape(flat),
    }


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    net: ActorCritic
    curves: list = field(default_factory=list)
    checkpoints: dict = field(default_factory=dict)


def train(
    env_factory,
    stage_sequence,
    cfg,
    seed=0,
    steps_per_stage=None,
    net=None,
    progress=None,
    stop_condition=None,
):
    """Train through a sequence of curriculum stages.

    Args:
        env_factory: callable (stage, env_index, seed) -> environment.
        stage_sequence: list of StageConfig (or stage-like) objects.
        cfg: PpoConfig.
        steps_per_stage: env steps per stage (default: split total evenly).
        net: optional warm-start parameters (stage chaining loads the
            previous stage's weights unchanged).
        progress: optional callable(row_dict) invoked per batch.
        stop_condition: optional callable(stage_name, curves, net) -> bool
            to end a stage early (used by budgeted acceptance runs).

    Returns:
        TrainResult with the trained net, per-batch curve rows, and a
        serialized checkpoint per stage.
    """
    rng = np.random.default_rng((seed, 17))
    budget = steps_per_stage or max(cfg.total_timesteps // max(len(stage_sequence), 1), cfg.batch_size)
    result = TrainResult(net=None)
    steps_done = 0
    for stage in stage_sequence:
        envs = [
            env_factory(stage, k, (seed, stage.name, k)) for k in range(cfg.num_envs)
        ]
        if net is None:
            net = ActorCritic(
                envs[0].input_dim, envs[0].action_dim, cfg.hidden_sizes,
                input_scale=getattr(envs[0], "input_scale", None),
            ).initialize(np.random.default_rng((seed, 31)), cfg.initial_action_std)
        collector = RolloutCollector(envs, seed=seed)
        adam = AdamState(net)
        steps_per_env = max(cfg.batch_size // cfg.num_envs, 1)
        stage_steps = 0
        while stage_steps < budget:
            rollout = collector.collect(net, steps_per_env)
            batch = assemble_batch(rollout, cfg)
            lr = cfg.lr_at(steps_done)
            diag = ppo_update(net, batch, cfg, rng, lr, adam)
            stage_steps += steps_per_env * cfg.num_envs
            steps_done += steps_per_env * cfg.num_envs
            episodes = rollout["episodes"]
            returns = [e["return"] for e in episodes]
            completed = [e for e in episodes if e["cause"] == "completed"]
            row = {
                "stage": stage.name,
                "env_steps": steps_done,
                "stage_steps": stage_steps,
                "episodes": len(episodes),
                "mean_return": float(np.mean(returns)) if returns else np.nan,
                "completion_rate": len(completed) / len(episodes) if episodes else np.nan,
                **{k: v for k, v in diag.items() if isinstance(v, float)},
            }
            result.curves.append(row)
            if progress is not None:
                progress(row)
            if not net.all_finite():
                raise RuntimeError("parameters became non-finite during training")
            if stop_condition is not None and stop_condition(
                stage.name, result.curves, net
            ):
                break
        result.checkpoints[stage.name] = serialize_checkpoint(net, cfg)
    result.net = net
    return result


# ---------------------------------------------------------------------------
# checkpoints and curves
# ---------------------------------------------------------------------------

def config_hash(cfg):
    return hashlib.sha256(repr(cfg).encode()).hexdigest()[:16]


def serialize_checkpoint(net, cfg=None):
    """Versioned binary checkpoint: magic, JSON header, raw parameters."""
    names = net.param_names()
    header = {
        "version": 1,
        "input_dim": net.input_dim,
        "action_dim": net.action_dim,
        "hidden": list(net.hidden),
        "config_hash": config_hash(cfg) if cfg is not None else "",
        "arrays": [{"name": k, "shape": list(net.params[k].shape)} for k in names],
    }
    head = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", len(head)))
    buf.write(head)
    buf.write(net.input_scale.astype("<f8").tobytes())
    for k in names:
        buf.write(net.params[k].astype("<f8").tobytes())
    return buf.getvalue()


def deserialize_checkpoint(blob):
    if blob[:8] != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    (head_len,) = struct.unpack("<I", blob[8:12])
    header = json.loads(blob[12 : 12 + head_len].decode())
    if header["version"] != 1:
        raise ValueError(f"unsupported checkpoint version {header['version']}")
    offset = 12 + head_len
    net = ActorCritic(header["input_dim"], header["action_dim"], tuple(header["hidden"]))
    scale = np.frombuffer(blob, "<f8", count=header["input_dim"], offset=offset)
    net.input_scale = scale.copy()
    offset += header["input_dim"] * 8
    for spec in header["arrays"]:
        size = int(np.prod(spec["shape"])) if spec["shape"] else 1
        arr = np.frombuffer(blob, "<f8", count=size, offset=offset)
        net.params[spec["name"]] = arr.reshape(spec["shape"]).copy()
        offset += size * 8
    return net, header


def save_checkpoint(net, path, cfg=None):
    with open(path, "wb") as f:
        f.write(serialize_checkpoint(net, cfg))


def load_checkpoint(path):
    with open(path, "rb") as f:
        return deserialize_checkpoint(f.read())


def save_curves(rows, path):
    """Training curves as columnar text (one row per batch)."""
    if not rows:
        with open(path, "w") as f:
            f.write("# empty\n")
        return
    keys = sorted({k for row in rows for k in row}, key=lambda k: (k != "stage", k))
    with open(path, "w") as f:
        f.write("# " + " ".join(keys) + "\n")
        for row in rows:
            vals = []
            for k in keys:
                v = row.get(k, "")
                vals.append(repr(v) if not isinstance(v, str) else v)
            f.write(" ".join(str(v) for v in vals) + "\n")
