"""Quadruped jumping via example-guided reinforcement learning.

The package is organized as a pipeline: a SLIP trajectory optimizer produces a
single coarse jump demonstration (`slip`, `alsolver`, `reference`), a
reduced-order physics simulator executes joint commands (`robot`, `terrain`,
`simworld`), a staged goal-conditioned MDP wraps the simulator (`rewards`,
`stages`, `jumpenv`), a from-scratch PPO learner trains policies (`mlp`,
`ppo`), and an evaluation harness computes the metric suite (`metrics`,
`evalrun`, `cli`).
"""

__version__ = "0.1.0"
