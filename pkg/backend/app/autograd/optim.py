"""
Optimizers
AdamW with decoupled weight decay and a warmup-cosine learning-rate schedule
"""

from typing import Dict, List, Tuple
import logging
import math

import numpy as np

from app.autograd.nn import Module, Parameter
from app.exceptions import CheckpointError, NumericalError

logger = logging.getLogger(__name__)


class WarmupCosineSchedule:
    """Linear warmup to the base rate, then cosine decay to ``min_lr``"""

    def __init__(self, base_lr: float, warmup_steps: int, total_steps: int, min_lr: float = 0.0):
        if base_lr <= 0:
            raise ValueError("base_lr must be positive")
        self.base_lr = base_lr
        self.warmup_steps = max(int(warmup_steps), 0)
        self.total_steps = max(int(total_steps), 1)
        self.min_lr = min_lr

    def lr_at(self, step: int) -> float:
        if step < self.warmup_steps:
            return self.base_lr * (step + 1) / self.warmup_steps
        span = max(self.total_steps - self.warmup_steps, 1)
        progress = min((step - self.warmup_steps) / span, 1.0)
        return self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """
    Adam with decoupled weight decay.

    Parameters are updated in place through ``Tensor.assign`` so module
    attributes keep their identity across steps. Moments are keyed by
    parameter name, which makes the state checkpointable.
    """

    def __init__(
        self,
        module: Module,
        schedule: WarmupCosineSchedule,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
    ):
        self.params: List[Tuple[str, Parameter]] = list(module.named_parameters())
        self.schedule = schedule
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {name: np.zeros(p.shape) for name, p in self.params}
        self.v: Dict[str, np.ndarray] = {name: np.zeros(p.shape) for name, p in self.params}

    @property
    def lr(self) -> float:
        return self.schedule.lr_at(self.step_count)

    def zero_grad(self) -> None:
        for _, parameter in self.params:
            parameter.grad = None

    def step(self) -> None:
        lr = self.lr
        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1 ** t
        correction2 = 1.0 - self.beta2 ** t

        for name, parameter in self.params:
            grad = parameter.grad
            if grad is None:
                continue
            if not np.all(np.isfinite(grad)):
                raise NumericalError(f"Non-finite gradient for parameter {name}")
            m = self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            v = self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            update = (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            decayed = parameter.data * (1.0 - lr * self.weight_decay)
            parameter.assign(decayed - lr * update)

    def state_dict(self) -> Dict[str, np.ndarray]:
        state: Dict[str, np.ndarray] = {"step": np.array([float(self.step_count)])}
        for name, _ in self.params:
            state[f"m.{name}"] = self.m[name]
            state[f"v.{name}"] = self.v[name]
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        try:
            self.step_count = int(np.asarray(state["step"]).reshape(-1)[0])
            for name, _ in self.params:
                self.m[name] = np.array(state[f"m.{name}"], dtype=np.float64)
                self.v[name] = np.array(state[f"v.{name}"], dtype=np.float64)
        except KeyError as e:
            raise CheckpointError(f"Optimizer state is missing entry {e}") from None
