"""Parameter containers and the layers shared by both encoder streams."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import DimensionError
from . import functional as F
from .tensor import Tensor, sqrt


def he_normal(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(dtype)


class Module:
    """Tree of named parameters and buffers with a shared train/eval flag."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self.training = True

    def param(self, name: str, data: np.ndarray, requires_grad: bool = True) -> Tensor:
        t = Tensor(data, requires_grad=requires_grad, name=name)
        self._params[name] = t
        return t

    def buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        self._buffers[name] = np.asarray(data)
        return self._buffers[name]

    def set_buffer(self, name: str, data: np.ndarray) -> None:
        self._buffers[name] = np.asarray(data)

    def _children(self):
        for attr, value in vars(self).items():
            if isinstance(value, Module):
                yield attr, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{attr}.{i}", item

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out = {prefix + name: t for name, t in self._params.items()}
        for child_name, child in self._children():
            out.update(child.named_parameters(prefix + child_name + "."))
        return out

    def named_buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + name: b for name, b in self._buffers.items()}
        for child_name, child in self._children():
            out.update(child.named_buffers(prefix + child_name + "."))
        return out

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def freeze(self) -> "Module":
        for t in self.named_parameters().values():
            t.requires_grad = False
        return self

    def set_bn_sample_stats(self, enabled: bool) -> "Module":
        """Switch every BatchNorm in the tree between running-statistics and
        per-activation statistics for eval-mode normalization."""
        if isinstance(self, BatchNorm):
            self.sample_stats_eval = enabled
        for _, child in self._children():
            child.set_bn_sample_stats(enabled)
        return self

    def zero_grad(self) -> None:
        for t in self.named_parameters().values():
            t.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {name: t.data for name, t in self.named_parameters().items()}
        arrays.update(self.named_buffers())
        return arrays

    def load_state_arrays(
        self, arrays: dict[str, np.ndarray], prefix: str = ""
    ) -> tuple[list[str], list[str]]:
        """Copy matching entries by name; returns (loaded, unmatched_own) names.

        `prefix` is stripped from the checkpoint names before matching, so a
        single-stream checkpoint saved under e.g. ``video.`` can seed the
        corresponding subtree of a larger model.
        """
        params = self.named_parameters()
        buffers = self.named_buffers()
        loaded = []
        for name, value in arrays.items():
            if prefix and not name.startswith(prefix):
                continue
            key = name[len(prefix):]
            target = params.get(key)
            if target is not None:
                if target.data.shape != value.shape:
                    raise DimensionError(
                        f"checkpoint entry {name!r} has shape {value.shape}, "
                        f"model expects {target.data.shape}"
                    )
                target.data = value.astype(target.data.dtype, copy=True)
                loaded.append(key)
            elif key in buffers:
                buffers[key][...] = value.astype(buffers[key].dtype)
                loaded.append(key)
        unmatched = sorted((set(params) | set(buffers)) - set(loaded))
        return loaded, unmatched


class Linear(Module):
    def __init__(
        self,
        cin: int,
        cout: int,
        rng: np.random.Generator,
        dtype,
        bias: bool = True,
        zero_init: bool = False,
    ):
        super().__init__()
        init = np.zeros((cin, cout), dtype=dtype) if zero_init else he_normal(rng, (cin, cout), cin, dtype)
        self.w = self.param("w", init)
        self.b = self.param("b", np.zeros(cout, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.w
        return y + self.b if self.b is not None else y


class SpatialConv(Module):
    def __init__(
        self,
        cin: int,
        cout: int,
        kernel: int,
        stride,
        pad,
        rng: np.random.Generator,
        dtype,
        zero_init: bool = False,
        bias: bool = True,
    ):
        super().__init__()
        self.stride, self.pad = stride, pad
        shape = (kernel, kernel, cin, cout)
        fan_in = kernel * kernel * cin
        init = np.zeros(shape, dtype=dtype) if zero_init else he_normal(rng, shape, fan_in, dtype)
        self.w = self.param("w", init)
        self.b = self.param("b", np.zeros(cout, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = F.conv_spatial(x, self.w, stride=self.stride, pad=self.pad)
        return y + self.b if self.b is not None else y


class TemporalConv(Module):
    def __init__(
        self,
        cin: int,
        cout: int,
        kernel: int,
        stride: int,
        pad: int,
        rng: np.random.Generator,
        dtype,
        zero_init: bool = False,
        bias: bool = True,
    ):
        super().__init__()
        self.stride, self.pad = stride, pad
        shape = (kernel, cin, cout)
        init = np.zeros(shape, dtype=dtype) if zero_init else he_normal(rng, shape, kernel * cin, dtype)
        self.w = self.param("w", init)
        self.b = self.param("b", np.zeros(cout, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = F.conv_temporal(x, self.w, stride=self.stride, pad=self.pad)
        return y + self.b if self.b is not None else y


class TransposedTemporalConv(Module):
    """Temporal upsampling by an integer factor; kernel == stride, pad 0."""

    def __init__(self, cin, cout, factor, rng, dtype, zero_init=False, bias=True):
        super().__init__()
        self.factor = int(factor)
        shape = (self.factor, cin, cout)
        init = np.zeros(shape, dtype=dtype) if zero_init else he_normal(rng, shape, cin, dtype)
        self.w = self.param("w", init)
        self.b = self.param("b", np.zeros(cout, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = F.transposed_conv_temporal(x, self.w, stride=self.factor, pad=0)
        return y + self.b if self.b is not None else y


class TransposedSpatialConv(Module):
    """Spatial upsampling by an integer factor; kernel == stride, pad 0."""

    def __init__(self, cin, cout, factor, rng, dtype, zero_init=False, bias=True):
        super().__init__()
        self.factor = int(factor)
        shape = (self.factor, self.factor, cin, cout)
        init = np.zeros(shape, dtype=dtype) if zero_init else he_normal(rng, shape, cin, dtype)
        self.w = self.param("w", init)
        self.b = self.param("b", np.zeros(cout, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = F.transposed_conv_spatial(x, self.w, stride=self.factor, pad=0)
        return y + self.b if self.b is not None else y


class BatchNorm(Module):
    """Channel-last batch normalization over all leading axes.

    Training mode normalizes with the statistics of the current activation
    and folds them into running estimates with the configured momentum.
    Eval mode uses the running estimates by default; with
    ``sample_stats_eval`` it normalizes each activation with its own
    statistics instead (no updates), which keeps inference deterministic
    and batch-independent while avoiding the train/eval statistics gap of
    batch-of-one training.
    """

    def __init__(self, channels: int, dtype, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.eps, self.momentum = eps, momentum
        self.sample_stats_eval = False
        self.gamma = self.param("gamma", np.ones(channels, dtype=dtype))
        self.beta = self.param("beta", np.zeros(channels, dtype=dtype))
        self.buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.buffer("running_var", np.ones(channels, dtype=dtype))

    def __call__(self, x: Tensor, update_stats: bool = True) -> Tensor:
        if x.shape[-1] != self.gamma.shape[0]:
            raise DimensionError(
                f"batch_norm over {self.gamma.shape[0]} channels got input {x.shape}"
            )
        axes = tuple(range(x.ndim - 1))
        if self.training or self.sample_stats_eval:
            mu = x.mean(axis=axes, keepdims=True)
            var = ((x - mu) ** 2).mean(axis=axes, keepdims=True)
            if self.training and update_stats:
                m = self.momentum
                rm, rv = self._buffers["running_mean"], self._buffers["running_var"]
                rm *= 1.0 - m
                rm += m * mu.data.reshape(-1)
                rv *= 1.0 - m
                rv += m * var.data.reshape(-1)
            xhat = (x - mu) / sqrt(var + self.eps)
        else:
            rm = Tensor(self._buffers["running_mean"])
            rv = Tensor(self._buffers["running_var"])
            xhat = (x - rm) * ((rv.data + self.eps) ** -0.5)
        return xhat * self.gamma + self.beta


class LayerNorm(Module):
    def __init__(self, width: int, dtype, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self.param("gamma", np.ones(width, dtype=dtype))
        self.beta = self.param("beta", np.zeros(width, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        return (x - mu) / sqrt(var + self.eps) * self.gamma + self.beta


class Embedding(Module):
    def __init__(self, vocab: int, width: int, rng: np.random.Generator, dtype):
        super().__init__()
        self.table = self.param(
            "table", rng.normal(0.0, width ** -0.5, size=(vocab, width)).astype(dtype)
        )

    def __call__(self, ids) -> Tensor:
        return F.embedding(self.table, ids)
