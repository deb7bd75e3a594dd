"""Planar point-mass reach task exposing the jumping environment protocol.

A built-in sanity benchmark for the learner: accelerate a damped point mass
to a sampled goal. Same surface as JumpEnv (reset/step, input/action dims,
goal-conditioned observation with a remaining-time fraction) so the trainer
runs unchanged.
"""

from __future__ import annotations

import numpy as np


class PointMassReachEnv:
    """2-D reach task; dense exponential-kernel reward toward the goal."""

    OBS_DIM = 7  # pos(2) vel(2) remaining(1) target(2)

    def __init__(self, seed=0, horizon=40, dt=0.05, accel=3.0, drag=0.5, history_len=1):
        self.rng = np.random.default_rng(seed)
        self.horizon = int(horizon)
        self.dt = float(dt)
        self.accel = float(accel)
        self.drag = float(drag)
        self.history_len = int(history_len)
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.target = np.zeros(2)
        self.i = 0
        self._history = None

    @property
    def action_dim(self):
        return 2

    @property
    def observation_dim(self):
        return self.OBS_DIM

    @property
    def input_dim(self):
        return self.history_len * (self.OBS_DIM + self.action_dim)

    def _observe(self):
        return np.concatenate(
            [
                self.pos,
                self.vel,
                [(self.horizon - self.i) / self.horizon],
                self.target,
            ]
        )

    def reset(self):
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.target = self.rng.uniform(-1.0, 1.0, size=2)
        self.i = 0
        self._history = np.zeros((self.history_len, self.OBS_DIM + 2))
        self._history[:, : self.OBS_DIM] = self._observe()
        return self._history.ravel().copy()

    def step(self, action):
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        self.vel += (self.accel * a - self.drag * self.vel) * self.dt
        self.pos += self.vel * self.dt
        self.i += 1
        reward = float(np.exp(-2.0 * np.linalg.norm(self.pos - self.target))) / self.horizon
        done = self.i >= self.horizon
        info = {"termination_cause": "completed"} if done else {}
        self._history[:-1] = self._history[1:]
        self._history[-1, : self.OBS_DIM] = self._observe()
        self._history[-1, self.OBS_DIM :] = a
        return self._history.ravel().copy(), reward, done, info
