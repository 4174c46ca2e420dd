"""Central finite-difference comparison for any scalar loss closure."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Tensor


def numeric_gradient(loss_fn: Callable[[], float], array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of loss_fn with respect to every entry of `array`.

    `array` is perturbed in place and restored; the closure must re-read it
    on every call.
    """
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Max entrywise |a-b| / max(|a|, |b|), ignoring entries below `floor`."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.abs(a), np.abs(b))
    mask = denom > floor
    if not mask.any():
        return 0.0
    return float((np.abs(a - b)[mask] / denom[mask]).max())


def check_tensor_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Iterable[Tensor] | dict[str, Tensor],
    h: float = 1e-5,
    floor: float = 1e-8,
) -> dict[str, float]:
    """Backward-vs-finite-difference relative error per checked tensor.

    Runs one backward pass for the analytic gradients, then perturbs each
    tensor entrywise and re-evaluates the closure for the numeric ones.
    """
    if not isinstance(tensors, dict):
        tensors = {t.name or f"tensor{i}": t for i, t in enumerate(tensors)}
    for t in tensors.values():
        t.grad = None
    loss_fn().backward()
    analytic = {
        name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
        for name, t in tensors.items()
    }
    errors = {}
    for name, t in tensors.items():
        numeric = numeric_gradient(lambda: float(loss_fn().data), t.data, h=h)
        errors[name] = relative_error(analytic[name], numeric, floor=floor)
    return errors
