"""Sequence-to-sequence translation over gloss representations or gloss ids.

A compact pre-norm encoder-decoder attention model stands in for a large
pretrained translator: two encoder and two decoder layers, width 64, four
heads at desk scale. Sources are either continuous per-frame features
(passed through a two-hidden-layer MLP adapter first) or gloss token ids
(embedded, for the gloss-to-text pipeline). Decoding fuses any number of
translators by averaging their per-step token distributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ..autodiff import dropout as dropout_fn
from ..autodiff import log_softmax, relu, softmax
from ..autodiff.nn import Embedding, LayerNorm, Linear, Module
from ..autodiff.tensor import Tensor, concat
from ..errors import ConfigError, DimensionError
from ..vocab import TextVocab

MASKED_SCORE = -1.0e9


@dataclass
class TranslatorConfig:
    vocab_size: int  # target tokens, specials included
    d_model: int = 64
    heads: int = 4
    ffn_width: int = 128
    enc_layers: int = 2
    dec_layers: int = 2
    dropout: float = 0.1
    max_len: int = 24
    src_vocab_size: Optional[int] = None  # set for token (gloss) sources

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ConfigError(
                f"width {self.d_model} not divisible by {self.heads} heads"
            )
        if self.vocab_size < 4:
            raise ConfigError("target vocabulary too small")
        if self.max_len < 2:
            raise ConfigError("max_len must allow at least one real token")


def sinusoidal_positions(length: int, d_model: int, dtype) -> np.ndarray:
    pos = np.arange(length)[:, None]
    dim = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (dim // 2)) / d_model)
    enc = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return enc.astype(dtype)


class MultiHeadAttention(Module):
    def __init__(self, d_model: int, heads: int, rng, dtype):
        super().__init__()
        self.heads = heads
        self.dh = d_model // heads
        self.q = Linear(d_model, d_model, rng, dtype)
        self.k = Linear(d_model, d_model, rng, dtype)
        self.v = Linear(d_model, d_model, rng, dtype)
        self.out = Linear(d_model, d_model, rng, dtype)

    def __call__(self, query: Tensor, kv: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        Tq, d = query.shape
        Tk = kv.shape[0]
        q = self.q(query).reshape(Tq, self.heads, self.dh).transpose((1, 0, 2))
        k = self.k(kv).reshape(Tk, self.heads, self.dh).transpose((1, 2, 0))
        v = self.v(kv).reshape(Tk, self.heads, self.dh).transpose((1, 0, 2))
        scores = (q @ k) * (1.0 / math.sqrt(self.dh))
        if mask is not None:
            scores = scores + Tensor(
                np.where(mask, 0.0, MASKED_SCORE)[None, :, :].astype(scores.dtype)
            )
        attn = softmax(scores, axis=-1)
        mixed = (attn @ v).transpose((1, 0, 2)).reshape(Tq, d)
        return self.out(mixed)


class FeedForward(Module):
    def __init__(self, d_model: int, ffn_width: int, rng, dtype):
        super().__init__()
        self.inner = Linear(d_model, ffn_width, rng, dtype)
        self.outer = Linear(ffn_width, d_model, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(relu(self.inner(x)))


class EncoderLayer(Module):
    def __init__(self, cfg: TranslatorConfig, rng, dtype):
        super().__init__()
        self.ln1 = LayerNorm(cfg.d_model, dtype)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.heads, rng, dtype)
        self.ln2 = LayerNorm(cfg.d_model, dtype)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_width, rng, dtype)

    def __call__(self, x: Tensor, rate: float, rng) -> Tensor:
        h = self.ln1(x)
        x = x + dropout_fn(self.attn(h, h), rate, rng)
        return x + dropout_fn(self.ffn(self.ln2(x)), rate, rng)


class DecoderLayer(Module):
    def __init__(self, cfg: TranslatorConfig, rng, dtype):
        super().__init__()
        self.ln1 = LayerNorm(cfg.d_model, dtype)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.heads, rng, dtype)
        self.ln2 = LayerNorm(cfg.d_model, dtype)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.heads, rng, dtype)
        self.ln3 = LayerNorm(cfg.d_model, dtype)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_width, rng, dtype)

    def __call__(self, x: Tensor, memory: Tensor, causal: np.ndarray, rate, rng) -> Tensor:
        h = self.ln1(x)
        x = x + dropout_fn(self.self_attn(h, h, mask=causal), rate, rng)
        x = x + dropout_fn(self.cross_attn(self.ln2(x), memory), rate, rng)
        return x + dropout_fn(self.ffn(self.ln3(x)), rate, rng)


class MlpAdapter(Module):
    """Two hidden ReLU layers applied per frame; preserves sequence length."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng, dtype):
        super().__init__()
        self.h1 = Linear(d_in, d_hidden, rng, dtype)
        self.h2 = Linear(d_hidden, d_hidden, rng, dtype)
        self.out = Linear(d_hidden, d_out, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.out(relu(self.h2(relu(self.h1(x)))))


class Seq2SeqTranslator(Module):
    def __init__(self, cfg: TranslatorConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.dtype = np.dtype(dtype).type
        self.tgt_embed = Embedding(cfg.vocab_size, cfg.d_model, rng, dtype)
        if cfg.src_vocab_size:
            self.src_embed = Embedding(cfg.src_vocab_size, cfg.d_model, rng, dtype)
        self.enc_layers = [EncoderLayer(cfg, rng, dtype) for _ in range(cfg.enc_layers)]
        self.enc_norm = LayerNorm(cfg.d_model, dtype)
        self.dec_layers = [DecoderLayer(cfg, rng, dtype) for _ in range(cfg.dec_layers)]
        self.dec_norm = LayerNorm(cfg.d_model, dtype)
        # zero-initialized projection: the untrained model starts exactly
        # uniform over the vocabulary
        self.proj = Linear(cfg.d_model, cfg.vocab_size, rng, dtype, zero_init=True)
        self._scale = math.sqrt(cfg.d_model)

    def _dropout_rate(self) -> float:
        return self.cfg.dropout if self.training else 0.0

    def encode(self, source: Union[np.ndarray, Tensor, Sequence[int]],
               rng: Optional[np.random.Generator] = None) -> Tensor:
        """Encoder stack over continuous features [Ts, d_model] or token ids."""
        if isinstance(source, Tensor) or (
            isinstance(source, np.ndarray) and source.ndim == 2
        ):
            x = source if isinstance(source, Tensor) else Tensor(source.astype(self.dtype))
            if x.shape[1] != self.cfg.d_model:
                raise DimensionError(
                    f"continuous source width {x.shape[1]} != d_model {self.cfg.d_model}"
                )
        else:
            if not self.cfg.src_vocab_size:
                raise ConfigError("translator has no source embedding for token input")
            x = self.src_embed(np.asarray(source, dtype=np.int64)) * self._scale
        x = x + Tensor(sinusoidal_positions(x.shape[0], self.cfg.d_model, self.dtype))
        rate = self._dropout_rate()
        for layer in self.enc_layers:
            x = layer(x, rate, rng)
        return self.enc_norm(x)

    def decode_logits(self, memory: Tensor, tgt_in: Sequence[int],
                      rng: Optional[np.random.Generator] = None) -> Tensor:
        ids = np.asarray(tgt_in, dtype=np.int64)
        L = len(ids)
        x = self.tgt_embed(ids) * self._scale
        x = x + Tensor(sinusoidal_positions(L, self.cfg.d_model, self.dtype))
        causal = np.tril(np.ones((L, L), dtype=bool))
        rate = self._dropout_rate()
        for layer in self.dec_layers:
            x = layer(x, memory, causal, rate, rng)
        return self.proj(self.dec_norm(x))


def translation_loss(
    translator: Seq2SeqTranslator,
    source: Union[np.ndarray, Tensor, Sequence[int]],
    target_ids: Sequence[int],
    vocab: TextVocab,
    rng: Optional[np.random.Generator] = None,
    pad_to: Optional[int] = None,
) -> Tensor:
    """Teacher-forced negative log-likelihood of the target token sequence.

    `target_ids` must carry the language-id prefix and EOS. PAD positions
    appended via `pad_to` are masked out of the loss.
    """
    ids = list(target_ids)
    if len(ids) < 3 or not any(
        i not in (vocab.pad_id, vocab.lang_id, vocab.eos_id) for i in ids
    ):
        raise ValueError("translation target must contain at least one real token")
    if ids[0] != vocab.lang_id or vocab.eos_id not in ids:
        raise ValueError("target must start with the language id and contain EOS")
    if pad_to is not None:
        if pad_to < len(ids):
            raise ValueError(f"pad_to {pad_to} shorter than target {len(ids)}")
        ids = ids + [vocab.pad_id] * (pad_to - len(ids))
    memory = translator.encode(source, rng=rng)
    logits = translator.decode_logits(memory, ids[:-1], rng=rng)
    log_probs = log_softmax(logits, axis=-1)
    targets = np.asarray(ids[1:], dtype=np.int64)
    mask = (targets != vocab.pad_id).astype(log_probs.dtype)
    onehot = np.zeros((len(targets), translator.cfg.vocab_size), dtype=log_probs.dtype)
    onehot[np.arange(len(targets)), targets] = 1.0
    picked = (log_probs * Tensor(onehot * mask[:, None])).sum()
    return -picked


def slt_loss(recognition_total: Tensor, translation_losses: Sequence[Tensor]) -> Tensor:
    """Joint objective: recognition loss plus the summed translation losses."""
    total = recognition_total
    for t in translation_losses:
        total = total + t
    return total


@dataclass
class _Beam:
    tokens: tuple[int, ...]
    score: float
    finished: bool


def multi_source_beam_decode(
    translators: Sequence[Seq2SeqTranslator],
    sources: Sequence[Union[np.ndarray, Tensor, Sequence[int]]],
    vocab: TextVocab,
    beam_width: int = 5,
    max_len: Optional[int] = None,
) -> list[int]:
    """Beam search over the arithmetic mean of the translators' step
    distributions; no length penalty. Ties break toward the higher mean
    probability, then the lexicographically smaller token sequence.

    Returns the decoded token ids without the language-id prefix or EOS.
    """
    if beam_width < 1:
        raise ValueError(f"beam_width must be >= 1, got {beam_width}")
    if len(translators) != len(sources) or not translators:
        raise DimensionError("each translator needs exactly one source")
    max_len = max_len or min(t.cfg.max_len for t in translators)

    modes = [t.training for t in translators]
    for t in translators:
        t.eval()
    try:
        memories = [t.encode(src) for t, src in zip(translators, sources)]
        beams = [_Beam((vocab.lang_id,), 0.0, False)]
        for _ in range(max_len):
            candidates: list[_Beam] = []
            for beam in beams:
                if beam.finished:
                    candidates.append(beam)
                    continue
                step_rows = [
                    softmax(t.decode_logits(mem, beam.tokens), axis=-1).data[-1]
                    for t, mem in zip(translators, memories)
                ]
                mean_probs = np.mean(step_rows, axis=0)
                with np.errstate(divide="ignore"):
                    log_mean = np.log(np.maximum(mean_probs, 1e-300))
                for token in range(len(mean_probs)):
                    if token == vocab.pad_id or token == vocab.lang_id:
                        continue
                    candidates.append(
                        _Beam(
                            beam.tokens + (token,),
                            beam.score + float(log_mean[token]),
                            token == vocab.eos_id,
                        )
                    )
            candidates.sort(key=lambda b: (-b.score, b.tokens))
            beams = candidates[:beam_width]
            if all(b.finished for b in beams):
                break
    finally:
        for t, mode in zip(translators, modes):
            t.train(mode)

    best = min(beams, key=lambda b: (-b.score, b.tokens))
    out = list(best.tokens[1:])
    if out and out[-1] == vocab.eos_id:
        out = out[:-1]
    return out
