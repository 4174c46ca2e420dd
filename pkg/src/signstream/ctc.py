"""Connectionist temporal classification: loss, oracle, and decoders.

The loss marginalizes the probability of a gloss sequence over every
frame-level path that collapses to it (merge adjacent repeats, then drop
blanks). It runs the forward-backward recursion over the blank-interleaved
extended target entirely in log space, with minus infinity represented by
a large negative sentinel so log-sum-exp never produces nan. The gradient
with respect to the input log-probabilities falls out of the alpha/beta
products and plugs straight into the autodiff graph.

Blank is index 0 throughout. `ctc_brute_force` enumerates every path for
tiny instances and is the independent oracle the recursion is checked
against.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .autodiff.tensor import NEG_INF, Array, Tensor
from .errors import DimensionError, InfeasibleTargetError

BLANK = 0

# Largest (V+1)**T the brute-force path enumeration will accept.
_BRUTE_FORCE_LIMIT = 4_000_000


def _logsumexp(a: Array, axis: int = 0) -> Array:
    m = a.max(axis=axis)
    safe = np.where(m <= NEG_INF / 2, 0.0, m)
    with np.errstate(divide="ignore"):
        out = safe + np.log(np.exp(a - np.expand_dims(safe, axis)).sum(axis=axis))
    return np.where(m <= NEG_INF / 2, NEG_INF, out)


def required_frames(target: Sequence[int]) -> int:
    """Minimum number of frames that can emit `target` under CTC."""
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def _extended_target(target: Sequence[int], n_symbols: int) -> np.ndarray:
    target = list(target)
    for g in target:
        if not 1 <= g < n_symbols:
            raise DimensionError(f"target label {g} outside vocabulary of {n_symbols - 1}")
    ext = np.full(2 * len(target) + 1, BLANK, dtype=np.int64)
    ext[1::2] = target
    return ext


def _skip_mask(ext: np.ndarray) -> np.ndarray:
    """Positions that may take the two-step alpha transition."""
    mask = np.zeros(len(ext), dtype=bool)
    mask[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    return mask


def ctc_loss(
    log_probs: Tensor | Array,
    target: Sequence[int],
    input_length: Optional[int] = None,
) -> Tensor:
    """Negative log probability of `target` given per-frame log-probs.

    `log_probs` has shape [T, V+1] with blank in column 0. `input_length`
    restricts the recursion to the first frames, so padded posterior rows
    do not contribute.
    """
    lp_t = log_probs if isinstance(log_probs, Tensor) else Tensor(log_probs)
    if lp_t.ndim != 2:
        raise DimensionError(f"log_probs must be [T, V+1], got {lp_t.shape}")
    T_full, n_symbols = lp_t.shape
    T = T_full if input_length is None else int(input_length)
    if not 1 <= T <= T_full:
        raise DimensionError(f"input_length {T} outside [1, {T_full}]")
    target = list(target)
    need = required_frames(target)
    if T < need:
        raise InfeasibleTargetError(
            f"target of length {len(target)} needs at least {need} frames, got {T}"
        )
    lp = lp_t.data[:T].astype(np.float64)
    ext = _extended_target(target, n_symbols)
    S = len(ext)
    skip = _skip_mask(ext)
    emit = lp[:, ext]  # [T, S]

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        stay = alpha[t - 1]
        step = np.full(S, NEG_INF)
        step[1:] = alpha[t - 1, :-1]
        jump = np.full(S, NEG_INF)
        if S > 2:
            jump[2:] = alpha[t - 1, :-2]
        jump = np.where(skip, jump, NEG_INF)
        alpha[t] = emit[t] + _logsumexp(np.stack([stay, step, jump]), axis=0)

    tail = alpha[T - 1, S - 1] if S == 1 else _logsumexp(alpha[T - 1, S - 2 :])
    loss_value = -tail

    if not lp_t.requires_grad:
        return Tensor(np.asarray(loss_value, dtype=lp_t.data.dtype))

    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    if S > 1:
        beta[T - 1, S - 2] = emit[T - 1, S - 2]
    skip_fwd = np.zeros(S, dtype=bool)
    skip_fwd[:-2] = skip[2:]
    for t in range(T - 2, -1, -1):
        stay = beta[t + 1]
        step = np.full(S, NEG_INF)
        step[:-1] = beta[t + 1, 1:]
        jump = np.full(S, NEG_INF)
        if S > 2:
            jump[:-2] = beta[t + 1, 2:]
        jump = np.where(skip_fwd, jump, NEG_INF)
        beta[t] = emit[t] + _logsumexp(np.stack([stay, step, jump]), axis=0)

    # alpha*beta double-counts the emission at t; dividing once leaves the
    # total probability of paths through (t, s).
    log_occ = alpha + beta - emit + loss_value
    occ = np.exp(np.maximum(log_occ, NEG_INF))
    grad_lp = np.zeros_like(lp)
    for s in range(S):
        grad_lp[:, ext[s]] -= occ[:, s]

    def bw(g: Array):
        full = np.zeros_like(lp_t.data)
        full[:T] = g * grad_lp
        return (full,)

    return Tensor(
        np.asarray(loss_value, dtype=lp_t.data.dtype),
        requires_grad=True,
        _parents=(lp_t,),
        _backward=bw,
    )


def ctc_brute_force(probs: Array, target: Sequence[int]) -> float:
    """Exact p(target) by summing every feasible path. Oracle use only."""
    probs = np.asarray(probs, dtype=np.float64)
    T, n_symbols = probs.shape
    if n_symbols ** T > _BRUTE_FORCE_LIMIT:
        raise ValueError(f"instance too large for enumeration: {n_symbols}^{T}")
    target = list(target)
    total = 0.0
    for path in itertools.product(range(n_symbols), repeat=T):
        if collapse(path) == target:
            p = 1.0
            for t, sym in enumerate(path):
                p *= probs[t, sym]
            total += p
    return total


def collapse(path: Sequence[int]) -> list[int]:
    """Merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for sym in path:
        if sym != prev:
            out.append(sym)
        prev = sym
    return [s for s in out if s != BLANK]


def best_path_decode(posteriors: Array, input_length: Optional[int] = None) -> list[int]:
    """Collapse of the per-frame argmax; ties resolve to the lowest index."""
    probs = np.asarray(posteriors)
    T = probs.shape[0] if input_length is None else int(input_length)
    return collapse(np.argmax(probs[:T], axis=1).tolist())


def prefix_beam_decode(
    posteriors: Array,
    beam_width: int = 5,
    input_length: Optional[int] = None,
) -> list[int]:
    """CTC prefix beam search over probability rows.

    Each surviving prefix carries separate log masses for paths ending in
    blank and in its final symbol. Pruning and the final pick order by
    higher total probability first, then lexicographically smaller prefix,
    so the result is deterministic.
    """
    if beam_width < 1:
        raise ValueError(f"beam_width must be >= 1, got {beam_width}")
    probs = np.asarray(posteriors, dtype=np.float64)
    T = probs.shape[0] if input_length is None else int(input_length)
    n_symbols = probs.shape[1]
    with np.errstate(divide="ignore"):
        lp = np.maximum(np.log(probs[:T]), NEG_INF)

    beams: dict[tuple[int, ...], tuple[float, float]] = {(): (0.0, NEG_INF)}
    for t in range(T):
        nxt: dict[tuple[int, ...], list[float]] = {}

        def bump(prefix, slot, value):
            entry = nxt.setdefault(prefix, [NEG_INF, NEG_INF])
            entry[slot] = np.logaddexp(entry[slot], value)

        for prefix, (pb, pnb) in beams.items():
            total = np.logaddexp(pb, pnb)
            bump(prefix, 0, total + lp[t, BLANK])
            last = prefix[-1] if prefix else None
            if last is not None:
                bump(prefix, 1, pnb + lp[t, last])
            for c in range(1, n_symbols):
                extended = prefix + (c,)
                source = pb if c == last else total
                bump(extended, 1, source + lp[t, c])
        ranked = sorted(
            nxt.items(), key=lambda kv: (-np.logaddexp(kv[1][0], kv[1][1]), kv[0])
        )
        beams = {prefix: (b, nb) for prefix, (b, nb) in ranked[:beam_width]}

    best = min(beams.items(), key=lambda kv: (-np.logaddexp(kv[1][0], kv[1][1]), kv[0]))
    return list(best[0])


def ensemble_posteriors(*posterior_sets: Array) -> Array:
    """Element-wise arithmetic mean of probability rows."""
    arrays = [np.asarray(p, dtype=np.float64) for p in posterior_sets]
    base = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != base:
            raise DimensionError(f"posterior shapes differ: {base} vs {a.shape}")
    return sum(arrays) / len(arrays)


# ---------------------------------------------------------------- posteriors


@dataclass
class FramePosteriors:
    """Per-frame gloss probability rows, blank in column 0."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2:
            raise DimensionError(f"posteriors must be [T, V+1], got {self.probs.shape}")
        if self.probs.size:
            row_sums = self.probs.sum(axis=1)
            if self.probs.min() < 0 or np.abs(row_sums - 1.0).max() > 1e-6:
                raise ValueError("posterior rows must be nonnegative and sum to 1")

    @property
    def log(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.maximum(np.log(self.probs), NEG_INF)


def write_posterior_file(path: str, posteriors: FramePosteriors) -> None:
    """Dump format: one text header line "T C", then row-major float32 LE."""
    T, C = posteriors.probs.shape
    with open(path, "wb") as fh:
        fh.write(f"{T} {C}\n".encode("ascii"))
        fh.write(posteriors.probs.astype("<f4").tobytes())


def read_posterior_file(path: str) -> FramePosteriors:
    with open(path, "rb") as fh:
        T, C = (int(v) for v in fh.readline().split())
        raw = np.frombuffer(fh.read(T * C * 4), dtype="<f4").reshape(T, C)
    probs = raw.astype(np.float64)
    probs /= probs.sum(axis=1, keepdims=True)
    return FramePosteriors(probs)
