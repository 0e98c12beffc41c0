"""
AdamW with decoupled weight decay and the warm-up + cosine learning-rate schedule.
"""
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from depthformer.core.tensor import Tensor

logger = logging.getLogger(__name__)


def lr_at(step: int, base_lr: float, total_steps: int, warmup_steps: int) -> float:
    """
    Learning rate at a step.

    Linear from 0 to base_lr over the warm-up, then a half cosine down to 0
    at total_steps.

    Args:
        step: Step index t, 0 ≤ t ≤ total_steps
        base_lr: Peak learning rate
        total_steps: Schedule length T
        warmup_steps: Warm-up length t_warm

    Returns:
        float: Non-negative learning rate
    """
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    decay_steps = total_steps - warmup_steps
    if decay_steps <= 0:
        return base_lr
    progress = min(max((step - warmup_steps) / decay_steps, 0.0), 1.0)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """
    Adaptive-moment optimizer with decoupled weight decay.

    Decay applies only to parameters with two or more axes (weights and
    kernels); biases, norms and embeddings vectors are not decayed.
    """

    def __init__(
        self,
        params: Sequence[Tuple[str, Tensor]],
        lr: float = 1e-4,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.exp_avg: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in self.params}
        self.exp_avg_sq: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in self.params}

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def step(self, grads: Optional[Dict[str, np.ndarray]] = None, lr: Optional[float] = None) -> None:
        """
        Apply one update.

        Args:
            grads: Gradient per parameter name (default: each parameter's .grad)
            lr: Learning rate for this step (default: self.lr)
        """
        lr = self.lr if lr is None else lr
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for name, p in self.params:
            grad = grads[name] if grads is not None else p.grad
            if grad is None:
                continue
            m = self.exp_avg[name] = self.beta1 * self.exp_avg[name] + (1.0 - self.beta1) * grad
            v = self.exp_avg_sq[name] = self.beta2 * self.exp_avg_sq[name] + (1.0 - self.beta2) * grad * grad
            data = p.data
            if self.weight_decay and data.ndim >= 2:
                data = data * (1.0 - lr * self.weight_decay)
            # new array, never in place: graph nodes may hold views of p.data
            p.data = data - lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def state(self) -> Dict[str, List[np.ndarray]]:
        return {name: [self.exp_avg[name], self.exp_avg_sq[name]] for name, _ in self.params}
