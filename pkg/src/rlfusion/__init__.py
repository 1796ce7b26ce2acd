"""RL with composite optimality rewards.

Subpackages cover a small autodiff/NN core, toy environments with binary
task-achievement rewards, exact tabular inference oracles, an adversarial
imitation discriminator, max-ent PPO, behavior cloning, expert dataset
generation, and an experiment harness.
"""

__version__ = "0.1.0"
