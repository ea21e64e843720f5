"""AdamW with decoupled weight decay, plus the cosine learning-rate rule."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

__all__ = ["AdamW", "cosine_lr"]


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """Half-cosine decay from lr_max (step 0) to lr_min (step == total_steps)."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    t = min(max(step, 0), total_steps) / total_steps
    return lr_min + (lr_max - lr_min) * 0.5 * (1.0 + np.cos(np.pi * t))


class AdamW(object):
    """Adam moments with weight decay applied directly to the weights.

    The decay term is theta -= lr * wd * theta, independent of the gradient
    moments, so a zero-gradient parameter still shrinks by exactly
    (1 - lr * wd) per step while its moments stay zero.
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grads(self) -> None:
        """Materialize zero gradient buffers; untouched params then decay only."""
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr: float | None = None) -> None:
        if lr is None:
            lr = self.lr
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                raise RuntimeError(f"parameter {name!r} has no gradient buffer")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            if self.weight_decay:
                p.data -= lr * self.weight_decay * p.data
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_entries(self, prefix: str = "opt.") -> dict[str, np.ndarray]:
        """Flat name->array map of the moment buffers, for checkpointing."""
        out: dict[str, np.ndarray] = {}
        for name in self.params:
            out[f"{prefix}m.{name}"] = self.m[name]
            out[f"{prefix}v.{name}"] = self.v[name]
        return out

    def load_state_entries(self, entries: dict[str, np.ndarray], prefix: str = "opt.") -> None:
        for name in self.params:
            self.m[name] = entries[f"{prefix}m.{name}"].copy()
            self.v[name] = entries[f"{prefix}v.{name}"].copy()
