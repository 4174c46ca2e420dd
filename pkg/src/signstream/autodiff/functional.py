"""Convolution, pooling, and lookup primitives used by the encoders.

All convolutions are cross-correlations over channel-last arrays. Spatial
ops act on axes (1, 2) of [T, H, W, C] inputs; temporal ops act on axis 0
of [T, ..., C] inputs, so the same kernel serves both [T, C] sequences and
[T, H, W, C] feature volumes. Transposed convolutions follow the size
convention out = (in - 1) * stride + kernel - 2 * pad.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import DimensionError
from .tensor import Array, Tensor


def _pair(v) -> tuple[int, int]:
    return (int(v), int(v)) if np.isscalar(v) else (int(v[0]), int(v[1]))


def _out_extent(size: int, kernel: int, stride: int, pad: int) -> int:
    out = (size + 2 * pad - kernel) // stride + 1
    if out <= 0 or size + 2 * pad < kernel:
        raise DimensionError(
            f"conv output extent {out} for size={size} kernel={kernel} "
            f"stride={stride} pad={pad}"
        )
    return out


def conv_spatial(x: Tensor, w: Tensor, stride=1, pad=0) -> Tensor:
    """Per-frame 2-D convolution: [T,H,W,Cin] x [kh,kw,Cin,Cout] -> [T,Ho,Wo,Cout]."""
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv_spatial expects 4-D input/weight, got {x.shape}, {w.shape}")
    if x.shape[3] != w.shape[2]:
        raise DimensionError(f"channel mismatch: input {x.shape} vs weight {w.shape}")
    (sh, sw), (ph, pw) = _pair(stride), _pair(pad)
    T, H, W, _ = x.shape
    kh, kw, cin, cout = w.shape
    Ho, Wo = _out_extent(H, kh, sh, ph), _out_extent(W, kw, sw, pw)

    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if (ph or pw) else x.data
    out_data = np.zeros((T, Ho, Wo, cout), dtype=x.data.dtype)
    for a in range(kh):
        for b in range(kw):
            sl = xp[:, a : a + (Ho - 1) * sh + 1 : sh, b : b + (Wo - 1) * sw + 1 : sw, :]
            out_data += np.matmul(sl, w.data[a, b])
    if not (x.requires_grad or w.requires_grad):
        return Tensor(out_data)

    def bw(g: Array):
        gx = gw = None
        if w.requires_grad:
            gw = np.zeros_like(w.data)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
        for a in range(kh):
            for b in range(kw):
                rows = slice(a, a + (Ho - 1) * sh + 1, sh)
                cols = slice(b, b + (Wo - 1) * sw + 1, sw)
                if w.requires_grad:
                    sl = xp[:, rows, cols, :]
                    gw[a, b] = np.tensordot(sl, g, axes=([0, 1, 2], [0, 1, 2]))
                if x.requires_grad:
                    gxp[:, rows, cols, :] += np.matmul(g, w.data[a, b].T)
        if x.requires_grad:
            gx = gxp[:, ph : ph + H, pw : pw + W, :] if (ph or pw) else gxp
        return (gx, gw)

    return Tensor(out_data, requires_grad=True, _parents=(x, w), _backward=bw)


def conv_temporal(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """1-D convolution along the frame axis: [T,...,Cin] x [kt,Cin,Cout]."""
    if w.ndim != 3:
        raise DimensionError(f"conv_temporal expects 3-D weight, got {w.shape}")
    if x.shape[-1] != w.shape[1]:
        raise DimensionError(f"channel mismatch: input {x.shape} vs weight {w.shape}")
    s, p = int(stride), int(pad)
    T = x.shape[0]
    kt, _, cout = w.shape
    To = _out_extent(T, kt, s, p)

    pad_spec = [(p, p)] + [(0, 0)] * (x.ndim - 1)
    xp = np.pad(x.data, pad_spec) if p else x.data
    out_data = np.zeros(x.shape[:0] + (To,) + x.shape[1:-1] + (cout,), dtype=x.data.dtype)
    for a in range(kt):
        out_data += np.matmul(xp[a : a + (To - 1) * s + 1 : s], w.data[a])
    if not (x.requires_grad or w.requires_grad):
        return Tensor(out_data)

    def bw(g: Array):
        gx = gw = None
        if w.requires_grad:
            gw = np.zeros_like(w.data)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
        reduce_axes = tuple(range(g.ndim - 1))
        for a in range(kt):
            rows = slice(a, a + (To - 1) * s + 1, s)
            if w.requires_grad:
                gw[a] = np.tensordot(xp[rows], g, axes=(reduce_axes, reduce_axes))
            if x.requires_grad:
                gxp[rows] += np.matmul(g, w.data[a].T)
        if x.requires_grad:
            gx = gxp[p : p + T] if p else gxp
        return (gx, gw)

    return Tensor(out_data, requires_grad=True, _parents=(x, w), _backward=bw)


def transposed_conv_temporal(x: Tensor, w: Tensor, stride: int, pad: int = 0) -> Tensor:
    """Temporal upsampling: output length (T-1)*stride + kernel - 2*pad."""
    if w.ndim != 3:
        raise DimensionError(f"transposed_conv_temporal expects 3-D weight, got {w.shape}")
    if x.shape[-1] != w.shape[1]:
        raise DimensionError(f"channel mismatch: input {x.shape} vs weight {w.shape}")
    s, p = int(stride), int(pad)
    if s < 1:
        raise DimensionError(f"stride must be >= 1, got {s}")
    T = x.shape[0]
    kt, _, cout = w.shape
    full_len = (T - 1) * s + kt
    To = full_len - 2 * p
    if To <= 0:
        raise DimensionError(f"transposed conv output length {To}")

    full = np.zeros((full_len,) + x.shape[1:-1] + (cout,), dtype=x.data.dtype)
    for a in range(kt):
        full[a : a + (T - 1) * s + 1 : s] += np.matmul(x.data, w.data[a])
    out_data = full[p : p + To]
    if not (x.requires_grad or w.requires_grad):
        return Tensor(out_data)

    def bw(g: Array):
        gfull = np.zeros((full_len,) + g.shape[1:], dtype=g.dtype)
        gfull[p : p + To] = g
        gx = gw = None
        if x.requires_grad:
            gx = np.zeros_like(x.data)
        if w.requires_grad:
            gw = np.zeros_like(w.data)
        reduce_axes = tuple(range(x.ndim - 1))
        for a in range(kt):
            gsl = gfull[a : a + (T - 1) * s + 1 : s]
            if x.requires_grad:
                gx += np.matmul(gsl, w.data[a].T)
            if w.requires_grad:
                gw[a] = np.tensordot(x.data, gsl, axes=(reduce_axes, reduce_axes))
        return (gx, gw)

    return Tensor(out_data, requires_grad=True, _parents=(x, w), _backward=bw)


def transposed_conv_spatial(x: Tensor, w: Tensor, stride, pad=0) -> Tensor:
    """Spatial upsampling of [T,H,W,Cin] with [kh,kw,Cin,Cout] kernels."""
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(
            f"transposed_conv_spatial expects 4-D input/weight, got {x.shape}, {w.shape}"
        )
    if x.shape[3] != w.shape[2]:
        raise DimensionError(f"channel mismatch: input {x.shape} vs weight {w.shape}")
    (sh, sw), (ph, pw) = _pair(stride), _pair(pad)
    if sh < 1 or sw < 1:
        raise DimensionError(f"stride must be >= 1, got {(sh, sw)}")
    T, H, W, _ = x.shape
    kh, kw, cin, cout = w.shape
    full_h, full_w = (H - 1) * sh + kh, (W - 1) * sw + kw
    Ho, Wo = full_h - 2 * ph, full_w - 2 * pw
    if Ho <= 0 or Wo <= 0:
        raise DimensionError(f"transposed conv output extents {(Ho, Wo)}")

    full = np.zeros((T, full_h, full_w, cout), dtype=x.data.dtype)
    for a in range(kh):
        for b in range(kw):
            full[:, a : a + (H - 1) * sh + 1 : sh, b : b + (W - 1) * sw + 1 : sw, :] += (
                np.matmul(x.data, w.data[a, b])
            )
    out_data = full[:, ph : ph + Ho, pw : pw + Wo, :]
    if not (x.requires_grad or w.requires_grad):
        return Tensor(out_data)

    def bw(g: Array):
        gfull = np.zeros((T, full_h, full_w, cout), dtype=g.dtype)
        gfull[:, ph : ph + Ho, pw : pw + Wo, :] = g
        gx = gw = None
        if x.requires_grad:
            gx = np.zeros_like(x.data)
        if w.requires_grad:
            gw = np.zeros_like(w.data)
        for a in range(kh):
            for b in range(kw):
                gsl = gfull[:, a : a + (H - 1) * sh + 1 : sh, b : b + (W - 1) * sw + 1 : sw, :]
                if x.requires_grad:
                    gx += np.matmul(gsl, w.data[a, b].T)
                if w.requires_grad:
                    gw[a, b] = np.tensordot(x.data, gsl, axes=([0, 1, 2], [0, 1, 2]))
        return (gx, gw)

    return Tensor(out_data, requires_grad=True, _parents=(x, w), _backward=bw)


def pool_spatial_mean(x: Tensor) -> Tensor:
    """Average [T,H,W,C] over its spatial grid, producing [T,C]."""
    if x.ndim != 4:
        raise DimensionError(f"pool_spatial_mean expects [T,H,W,C], got {x.shape}")
    if x.shape[1] < 1 or x.shape[2] < 1:
        raise DimensionError(f"empty spatial grid: {x.shape}")
    return x.mean(axis=(1, 2))


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup into [V,d] `table`; gradients scatter-add into rows."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise DimensionError(f"embedding ids must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise DimensionError(f"embedding id out of range for table {table.shape}")
    out_data = table.data[idx]
    if not table.requires_grad:
        return Tensor(out_data)

    def bw(g: Array):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return Tensor(out_data, requires_grad=True, _parents=(table,), _backward=bw)


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; identity when rate is 0 or no rng is supplied."""
    if rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return x * Tensor(keep)
