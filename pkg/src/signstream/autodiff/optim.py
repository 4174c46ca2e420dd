"""Adam with decoupled weight decay, plus the cosine annealing schedule."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor


def cosine_lr(epoch: int, total_epochs: int, base_lr: float) -> float:
    """Annealed rate 0.5 * base * (1 + cos(pi * epoch / total))."""
    if total_epochs <= 0:
        raise ConfigError(f"total_epochs must be positive, got {total_epochs}")
    if not 0 <= epoch <= total_epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {total_epochs}]")
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * epoch / total_epochs))


class Adam:
    """Bias-corrected Adam whose weight decay is applied directly to the
    parameters (decoupled from the moment estimates).

    `groups` maps parameters to learning rates: each group is a dict with
    keys ``params`` (name -> Tensor), ``lr``, and optionally
    ``weight_decay``. Group ``lr`` values may be reassigned between steps
    by a schedule.
    """

    def __init__(
        self,
        groups,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-3,
    ):
        if isinstance(groups, dict):
            groups = [{"params": groups, "lr": 1e-3}]
        self.groups = []
        for g in groups:
            self.groups.append(
                {
                    "params": dict(g["params"]),
                    "lr": float(g["lr"]),
                    "weight_decay": float(g.get("weight_decay", weight_decay)),
                }
            )
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        for g in self.groups:
            for name, p in g["params"].items():
                self._m[name] = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)

    def zero_grad(self) -> None:
        for g in self.groups:
            for p in g["params"].values():
                p.grad = None

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for g in self.groups:
            lr, wd = g["lr"], g["weight_decay"]
            for name, p in g["params"].items():
                grad = p.grad
                if grad is None:
                    grad = np.zeros_like(p.data)
                if not np.all(np.isfinite(grad)):
                    raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
                m, v = self._m[name], self._v[name]
                m *= self.beta1
                m += (1.0 - self.beta1) * grad
                v *= self.beta2
                v += (1.0 - self.beta2) * grad * grad
                if wd:
                    p.data -= (lr * wd) * p.data
                p.data -= lr * ((m / bc1) / (np.sqrt(v / bc2) + self.eps)).astype(p.data.dtype)

    # ------------------------------------------------------------- persistence

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"adam.step": np.array([float(self.step_count)], dtype=np.float32)}
        for name in self._m:
            out[f"adam.m.{name}"] = self._m[name]
            out[f"adam.v.{name}"] = self._v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        if "adam.step" in arrays:
            self.step_count = int(round(float(arrays["adam.step"][0])))
        for name in self._m:
            if f"adam.m.{name}" in arrays:
                self._m[name][...] = arrays[f"adam.m.{name}"].astype(self._m[name].dtype)
            if f"adam.v.{name}" in arrays:
                self._v[name][...] = arrays[f"adam.v.{name}"].astype(self._v[name].dtype)
