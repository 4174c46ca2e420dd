"""Training loops, input preparation, and append-only run logs.

Single-threaded and fully seed-determined: epoch data order, augmentation
draws, and parameter init all derive from fixed-purpose generators under
the run seed, so reruns are bit-identical and a resumed run continues the
exact trajectory of an uninterrupted one.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .autodiff.optim import Adam, cosine_lr
from .corpus.augment import apply_crop, apply_rate
from .corpus.generator import SampleRecord
from .ctc import prefix_beam_decode, required_frames
from .errors import ConfigError
from .heatmaps import HeatmapConfig, rasterize
from .metrics import corpus_wer
from .models.recognizer import (
    DualStreamRecognizer,
    LossBreakdown,
    recognition_loss,
)
from .vocab import GlossVocab

# rng stream tags under the run seed
_TAG_ORDER, _TAG_AUGMENT = 5, 6


@dataclass
class TrainOptions:
    epochs: int = 40
    batch_size: int = 4
    base_lr: float = 1e-3
    weight_decay: float = 1e-3
    seed: int = 0
    augment: bool = True
    crop_range: tuple[float, float] = (0.7, 1.0)
    rate_range: tuple[float, float] = (0.5, 1.5)
    beam_width: int = 5
    early_stop_wer: Optional[float] = None
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    lr: float
    breakdown: LossBreakdown = field(default_factory=LossBreakdown)
    dev_wer: Optional[float] = None
    dev_bleu4: Optional[float] = None


class TrainLog:
    """Append-only tab-separated training log, one row per epoch."""

    COLUMNS = ("epoch", "lr") + LossBreakdown.FIELDS + ("dev_wer", "dev_bleu4")

    def __init__(self, path: Optional[str]):
        self.path = path
        if path:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            if not os.path.exists(path):
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write("\t".join(self.COLUMNS) + "\n")

    def append(self, stats: EpochStats) -> None:
        if not self.path:
            return
        bd = stats.breakdown
        row = [str(stats.epoch), f"{stats.lr:.8g}"]
        row += [f"{getattr(bd, name):.6f}" for name in LossBreakdown.FIELDS]
        row.append("" if stats.dev_wer is None else f"{stats.dev_wer:.4f}")
        row.append("" if stats.dev_bleu4 is None else f"{stats.dev_bleu4:.4f}")
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write("\t".join(row) + "\n")


def prepare_inputs(
    sample: SampleRecord,
    heatmap_cfg: Optional[HeatmapConfig],
    kp_indices: Optional[Sequence[int]],
    need_video: bool,
    need_keypoints: bool,
) -> tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    """Model inputs from a corpus sample: raw pixels and rasterized heatmaps."""
    video = np.asarray(sample.video, dtype=np.float64) if need_video else None
    heat = None
    if need_keypoints:
        traj = sample.trajectory
        if kp_indices is not None:
            traj = traj.select(kp_indices)
        heat = rasterize(traj, heatmap_cfg)
    return video, heat


def feasible_rate_range(
    sample: SampleRecord, target_len: int, rate_range: tuple[float, float]
) -> tuple[float, float]:
    """Clamp the temporal augmentation so the CTC target stays feasible:
    the resampled clip must keep at least 4*required - 3 frames."""
    need = required_frames(list(range(target_len)))  # repeats never occur
    min_frames = max(4 * need - 3, 1)
    lo, hi = rate_range
    lo = max(lo, min_frames / sample.frames)
    return (lo, hi) if lo <= hi else (hi, hi)


def augment_sample(
    sample: SampleRecord,
    options: TrainOptions,
    rng: np.random.Generator,
) -> SampleRecord:
    lo_c, hi_c = options.crop_range
    crop = float(rng.uniform(lo_c, hi_c))
    H, W = sample.video.shape[1], sample.video.shape[2]
    hw, ww = int(round(crop * H)), int(round(crop * W))
    off_x = int(rng.integers(0, H - hw + 1))
    off_y = int(rng.integers(0, W - ww + 1))
    lo_r, hi_r = feasible_rate_range(sample, len(sample.glosses), options.rate_range)
    rate = float(rng.uniform(lo_r, hi_r))
    out = sample
    if hw != H or ww != W or off_x or off_y:
        out = apply_crop(out, crop, off_x, off_y)
    if rate != 1.0:
        out = apply_rate(out, rate)
    return out


def evaluate_recognizer(
    model: DualStreamRecognizer,
    samples: Sequence[SampleRecord],
    vocab: GlossVocab,
    heatmap_cfg: Optional[HeatmapConfig],
    kp_indices: Optional[Sequence[int]],
    beam_width: int = 5,
) -> tuple[float, list[tuple[list[str], list[str]]]]:
    """Corpus WER of the ensemble beam decode over `samples`."""
    was_training = model.training
    model.eval()
    pairs = []
    try:
        for sample in samples:
            video, heat = prepare_inputs(
                sample, heatmap_cfg, kp_indices,
                model.cfg.video is not None, model.cfg.keypoint is not None,
            )
            out = model.forward(video, heat, use_spn=False)
            ids = prefix_beam_decode(out.ensemble, beam_width, input_length=out.valid_length)
            pairs.append((list(sample.glosses), vocab.decode(ids)))
    finally:
        model.train(was_training)
    score, _ = corpus_wer([r for r, _ in pairs], [h for _, h in pairs])
    return score, pairs


@dataclass
class RecognizerTrainState:
    model: DualStreamRecognizer
    optimizer: Adam
    start_epoch: int = 0
    history: list[EpochStats] = field(default_factory=list)


def train_recognizer(
    state: RecognizerTrainState,
    train_samples: Sequence[SampleRecord],
    dev_samples: Sequence[SampleRecord],
    vocab: GlossVocab,
    options: TrainOptions,
    heatmap_cfg: Optional[HeatmapConfig],
    kp_indices: Optional[Sequence[int]],
    log: Optional[TrainLog] = None,
    epoch_callback: Optional[Callable[[EpochStats], None]] = None,
) -> list[EpochStats]:
    model, opt = state.model, state.optimizer
    cfg = model.cfg
    n = len(train_samples)
    if n == 0:
        raise ConfigError("no training samples")
    for epoch in range(state.start_epoch, options.epochs):
        lr = cosine_lr(epoch, options.epochs, options.base_lr)
        for group in opt.groups:
            group["lr"] = lr
        model.train()
        order = np.random.default_rng([options.seed, _TAG_ORDER, epoch]).permutation(n)
        sums = np.zeros(len(LossBreakdown.FIELDS))
        batches = 0
        for start in range(0, n, options.batch_size):
            batch = order[start : start + options.batch_size]
            losses = []
            for idx in batch:
                sample = train_samples[int(idx)]
                if options.augment:
                    rng = np.random.default_rng(
                        [options.seed, _TAG_AUGMENT, epoch, int(idx)]
                    )
                    sample = augment_sample(sample, options, rng)
                video, heat = prepare_inputs(
                    sample, heatmap_cfg, kp_indices,
                    cfg.video is not None, cfg.keypoint is not None,
                )
                out = model.forward(video, heat)
                loss, bd = recognition_loss(out, vocab.encode(sample.glosses), cfg)
                losses.append(loss)
                sums += [getattr(bd, f) for f in LossBreakdown.FIELDS]
            total = losses[0]
            for extra in losses[1:]:
                total = total + extra
            total = total * (1.0 / len(losses))
            opt.zero_grad()
            total.backward()
            opt.step()
            batches += 1

        mean_bd = LossBreakdown(
            **dict(zip(LossBreakdown.FIELDS, sums / max(len(train_samples), 1)))
        )
        stats = EpochStats(epoch=epoch, lr=lr, breakdown=mean_bd)
        if dev_samples and (epoch % options.eval_every == 0 or epoch == options.epochs - 1):
            stats.dev_wer, _ = evaluate_recognizer(
                model, dev_samples, vocab, heatmap_cfg, kp_indices, options.beam_width
            )
        state.history.append(stats)
        if log:
            log.append(stats)
        if epoch_callback:
            epoch_callback(stats)
        if (
            options.early_stop_wer is not None
            and stats.dev_wer is not None
            and stats.dev_wer < options.early_stop_wer
        ):
            break
    return state.history
