"""Separable spatio-temporal encoder streams and the shared head network.

A stream is four blocks, each a spatial 3x3 convolution followed by a
temporal kernel-3 convolution (both with batch norm and ReLU). The
product of the temporal strides is fixed at 4, so a T-frame input yields
T/4 output rows. The head network turns the spatially pooled final block
into a gloss representation and per-frame gloss log-probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..autodiff import log_softmax, relu
from ..autodiff.nn import BatchNorm, Linear, Module, SpatialConv, TemporalConv
from ..autodiff.tensor import Tensor
from ..errors import ConfigError, DimensionError


@dataclass
class StreamConfig:
    in_channels: int
    in_height: int
    in_width: int
    widths: tuple[int, int, int, int] = (16, 32, 48, 64)
    temporal_strides: tuple[int, int, int, int] = (1, 1, 2, 2)
    spatial_strides: tuple[int, int, int, int] = (2, 1, 2, 2)
    freeze_block1: bool = False

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.temporal_strides = tuple(int(s) for s in self.temporal_strides)
        self.spatial_strides = tuple(int(s) for s in self.spatial_strides)
        if len(self.widths) != 4 or len(self.temporal_strides) != 4 or len(self.spatial_strides) != 4:
            raise ConfigError("stream configs describe exactly four blocks")
        if int(np.prod(self.temporal_strides)) != 4:
            raise ConfigError(
                f"temporal strides must multiply to 4, got {self.temporal_strides}"
            )
        if min(self.widths) < 1 or min(self.temporal_strides + self.spatial_strides) < 1:
            raise ConfigError("widths and strides must be positive")

    def spatial_extents(self) -> list[tuple[int, int]]:
        """(H, W) after each block, for kernel-3 pad-1 convolutions."""
        h, w = self.in_height, self.in_width
        out = []
        for s in self.spatial_strides:
            h = (h - 1) // s + 1
            w = (w - 1) // s + 1
            out.append((h, w))
        return out

    def temporal_divisors(self) -> list[int]:
        d = 1
        out = []
        for s in self.temporal_strides:
            d *= s
            out.append(d)
        return out

    @classmethod
    def paper_scale(cls, in_channels: int = 3) -> "StreamConfig":
        """Full-size defaults mirroring the published architecture: 224x224
        inputs (112x112 heatmaps), block widths ending at 832. Documented
        for completeness; far too heavy for the desk-scale test suite."""
        return cls(
            in_channels=in_channels,
            in_height=224 if in_channels == 3 else 112,
            in_width=224 if in_channels == 3 else 112,
            widths=(64, 192, 480, 832),
        )


class EncoderBlock(Module):
    def __init__(self, cin, cout, t_stride, s_stride, rng, dtype):
        super().__init__()
        self.sconv = SpatialConv(cin, cout, kernel=3, stride=s_stride, pad=1, rng=rng, dtype=dtype)
        self.sbn = BatchNorm(cout, dtype=dtype)
        self.tconv = TemporalConv(cout, cout, kernel=3, stride=t_stride, pad=1, rng=rng, dtype=dtype)
        self.tbn = BatchNorm(cout, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        x = relu(self.sbn(self.sconv(x)))
        return relu(self.tbn(self.tconv(x)))


class StreamEncoder(Module):
    """Four-block encoder producing features C1..C4 over [T, H, W, C] input."""

    def __init__(self, cfg: StreamConfig, rng: np.random.Generator, dtype):
        super().__init__()
        self.cfg = cfg
        blocks = []
        cin = cfg.in_channels
        for width, ts, ss in zip(cfg.widths, cfg.temporal_strides, cfg.spatial_strides):
            blocks.append(EncoderBlock(cin, width, ts, ss, rng, dtype))
            cin = width
        self.blocks = blocks
        if cfg.freeze_block1:
            self.blocks[0].freeze()

    def block(self, index: int, x: Tensor) -> Tensor:
        return self.blocks[index](x)

    def validate_input(self, x: np.ndarray) -> None:
        if x.ndim != 4 or x.shape[1:] != (self.cfg.in_height, self.cfg.in_width, self.cfg.in_channels):
            raise DimensionError(
                f"stream expects [T, {self.cfg.in_height}, {self.cfg.in_width}, "
                f"{self.cfg.in_channels}], got {x.shape}"
            )


@dataclass
class HeadOutput:
    gloss_rep: Tensor  # [T', d_rep]
    logits: Tensor  # [T', V+1]
    log_probs: Tensor  # [T', V+1]
    probs: np.ndarray = field(init=False)  # detached posteriors

    def __post_init__(self):
        self.probs = np.exp(self.log_probs.data)


class HeadNetwork(Module):
    """Temporal linear layer, batch norm, ReLU, two kernel-3 stride-1
    temporal convolutions, a linear translation layer with ReLU, and the
    gloss classifier. Preserves the temporal length of its input."""

    def __init__(self, d_in: int, d_rep: int, n_symbols: int, rng, dtype):
        super().__init__()
        self.proj = Linear(d_in, d_rep, rng, dtype)
        self.bn = BatchNorm(d_rep, dtype=dtype)
        self.tconv1 = TemporalConv(d_rep, d_rep, kernel=3, stride=1, pad=1, rng=rng, dtype=dtype)
        self.tconv2 = TemporalConv(d_rep, d_rep, kernel=3, stride=1, pad=1, rng=rng, dtype=dtype)
        self.translate = Linear(d_rep, d_rep, rng, dtype)
        self.classifier = Linear(d_rep, n_symbols, rng, dtype)

    def __call__(self, seq: Tensor) -> HeadOutput:
        h = relu(self.bn(self.proj(seq)))
        h = self.tconv2(self.tconv1(h))
        rep = relu(self.translate(h))
        logits = self.classifier(rep)
        return HeadOutput(gloss_rep=rep, logits=logits, log_probs=log_softmax(logits))
