from __future__ import annotations

import math

from .config import TrainConfig


class Schedules:
    """Learning-rate, teacher-forcing and KL-weight schedules for one run.

    The learning rate decays exponentially per optimizer step and is floored
    at ``lr_end``; unless ``lr_decay`` is given, the factor is chosen so the
    floor is reached on the last step of the run. Teacher forcing decays
    linearly per epoch, and beta warms up linearly per step.
    """

    def __init__(self, config: TrainConfig, steps_per_epoch: int):
        self.config = config
        self.steps_per_epoch = max(1, steps_per_epoch)
        horizon = config.max_epochs * self.steps_per_epoch
        if config.max_steps is not None:
            horizon = min(horizon, config.max_steps)
        self.total_steps = horizon
        if config.lr_decay is not None:
            self.lr_decay = config.lr_decay
        else:
            self.lr_decay = math.exp(math.log(config.lr_end / config.lr_start) / max(1, horizon - 1))

    def lr_at(self, step: int) -> float:
        c = self.config
        if step <= 0:
            return c.lr_start
        return max(c.lr_end, c.lr_start * self.lr_decay**step)

    def tf_rate_at(self, epoch: int) -> float:
        c = self.config
        frac = min(max(epoch, 0), c.max_epochs) / c.max_epochs
        return c.tf_start + (c.tf_end - c.tf_start) * frac

    def beta_at(self, step: int) -> float:
        c = self.config
        if c.beta_warmup_steps == 0:
            return c.beta_max
        return c.beta_max * min(1.0, max(step, 0) / c.beta_warmup_steps)
