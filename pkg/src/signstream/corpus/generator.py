"""Deterministic synthetic signing corpus.

Each gloss owns a prototype keypoint trajectory whose hand cluster circles
a gloss-specific anchor cell, so gloss sequences are recoverable from the
keypoint channel alone. Videos render the same trajectories as colored
Gaussian blobs over a per-appearance background texture, so the task is
equally solvable from pixels. All randomness derives from per-sample
generators seeded by (corpus seed, split, index): regenerating a corpus
with the same config is byte-identical regardless of generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigError
from ..heatmaps import KeypointLayout, KeypointTrajectory
from .grammar import Grammar

SPLITS = ("train", "dev", "test")
_SPLIT_CODE = {"train": 0, "dev": 1, "test": 2}

# rng stream tags under the corpus seed
_TAG_SAMPLE, _TAG_APPEARANCE = 3, 7

MIN_PROTOTYPE_DISTANCE = 0.3  # heatmap px, mean over frames and keypoints


@dataclass
class CorpusConfig:
    seed: int = 0
    vocab_size: int = 20
    train_samples: int = 500
    dev_samples: int = 50
    test_samples: int = 50
    gloss_len_min: int = 2
    gloss_len_max: int = 4
    duration_min: int = 4
    duration_max: int = 8
    video_height: int = 32
    video_width: int = 32
    heatmap_height: int = 16
    heatmap_width: int = 16
    body_points: int = 3
    hand_points: int = 4
    mouth_points: int = 2
    face_points: int = 3
    pixel_noise: float = 0.05
    keypoint_jitter: float = 0.25
    confidence_dropout: float = 0.05
    appearance_pool: int = 4
    appearance_shift: bool = False
    grammar_id: str = "reorder"

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must be at least 2")
        if not 1 <= self.gloss_len_min <= self.gloss_len_max:
            raise ConfigError("invalid gloss length range")
        if not 1 <= self.duration_min <= self.duration_max:
            raise ConfigError("invalid duration range")
        if min(self.train_samples, self.dev_samples, self.test_samples) < 0:
            raise ConfigError("split sizes must be nonnegative")
        if self.appearance_pool < 1:
            raise ConfigError("appearance pool must be nonempty")
        if self.appearance_shift and self.appearance_pool < 2:
            raise ConfigError("appearance shift needs a pool of at least 2")

    @property
    def layout(self) -> KeypointLayout:
        return KeypointLayout(
            {
                "body": self.body_points,
                "hand": self.hand_points,
                "mouth": self.mouth_points,
                "face": self.face_points,
            }
        )

    @property
    def keypoints(self) -> int:
        return self.layout.total

    def gloss_labels(self) -> list[str]:
        return [f"SIG{i:02d}" for i in range(self.vocab_size)]

    def split_sizes(self) -> dict[str, int]:
        return {
            "train": self.train_samples,
            "dev": self.dev_samples,
            "test": self.test_samples,
        }

    def appearance_pool_for(self, split: str) -> list[int]:
        pool = list(range(self.appearance_pool))
        if not self.appearance_shift:
            return pool
        held_out = max(1, self.appearance_pool // 2)
        return pool[-held_out:] if split == "test" else pool[: self.appearance_pool - held_out]


@dataclass
class GlossPrototype:
    gloss: str
    trajectory: np.ndarray  # [frames, K, 2] heatmap px
    style: dict = field(default_factory=dict)


@dataclass
class SampleRecord:
    sample_id: str
    video: np.ndarray  # [T, H, W, 3] float32 in [0, 1]
    trajectory: KeypointTrajectory  # coords in heatmap pixel units
    glosses: list[str]
    text: list[str]
    split: str
    appearance: int
    heat_height: int = 16
    heat_width: int = 16

    @property
    def frames(self) -> int:
        return self.video.shape[0]


PROTO_FRAMES = 8


def build_prototypes(cfg: CorpusConfig) -> list[GlossPrototype]:
    """One distinguishable trajectory per gloss, on a fixed anchor grid."""
    H, W = cfg.heatmap_height, cfg.heatmap_width
    layout = cfg.layout
    K = layout.total
    rows = math.ceil(math.sqrt(cfg.vocab_size))
    cols = math.ceil(cfg.vocab_size / rows)
    margin = max(1.2, min(2.5, H / 6.0))
    protos: list[GlossPrototype] = []
    for g, label in enumerate(cfg.gloss_labels()):
        r, c = divmod(g, cols)
        anchor_x = margin + (r + 0.5) * (H - 2 * margin) / rows
        anchor_y = margin + (c + 0.5) * (W - 2 * margin) / cols
        phase = 2.0 * math.pi * g / cfg.vocab_size
        traj = np.zeros((PROTO_FRAMES, K, 2))
        t = np.arange(PROTO_FRAMES)
        angle = phase + 2.0 * math.pi * t / PROTO_FRAMES
        sl = layout.group_slice("body")
        for i in range(sl.start, sl.stop):
            frac = (i - sl.start + 1) / (layout.counts["body"] + 1)
            traj[:, i, 0] = 0.82 * H
            traj[:, i, 1] = frac * W
        sl = layout.group_slice("hand")
        for i in range(sl.start, sl.stop):
            off = 2.0 * math.pi * (i - sl.start) / max(layout.counts["hand"], 1)
            traj[:, i, 0] = anchor_x + 0.9 * np.sin(angle + off)
            traj[:, i, 1] = anchor_y + 0.9 * np.cos(angle + off)
        sl = layout.group_slice("mouth")
        mouth_shift = 0.2 * W * (g / max(cfg.vocab_size - 1, 1) - 0.5)
        for i in range(sl.start, sl.stop):
            frac = (i - sl.start + 1) / (layout.counts["mouth"] + 1)
            traj[:, i, 0] = 0.18 * H + 0.3 * np.sin(angle)
            traj[:, i, 1] = (0.35 + 0.3 * frac) * W + mouth_shift
        sl = layout.group_slice("face")
        for i in range(sl.start, sl.stop):
            frac = (i - sl.start + 1) / (layout.counts["face"] + 1)
            traj[:, i, 0] = 0.08 * H
            traj[:, i, 1] = frac * W
        style = {"blob_gain": 1.0 - 0.15 * (g % 3) / 2.0}
        protos.append(GlossPrototype(label, traj, style))
    _check_distinguishable(protos)
    return protos


def _check_distinguishable(protos: Sequence[GlossPrototype]) -> None:
    for i in range(len(protos)):
        for j in range(i + 1, len(protos)):
            d = np.linalg.norm(protos[i].trajectory - protos[j].trajectory, axis=2)
            if d.mean() < MIN_PROTOTYPE_DISTANCE:
                raise ConfigError(
                    f"prototypes {protos[i].gloss} and {protos[j].gloss} are too close"
                )


def _resample_nearest(traj: np.ndarray, frames: int) -> np.ndarray:
    src = (np.arange(frames) * traj.shape[0]) // frames
    return traj[src]


def appearance_background(cfg: CorpusConfig, appearance: int) -> np.ndarray:
    """Smooth per-appearance texture, dim relative to the keypoint blobs."""
    rng = np.random.default_rng([cfg.seed, _TAG_APPEARANCE, appearance])
    H, W = cfg.video_height, cfg.video_width
    xs = np.arange(H)[:, None] / H
    ys = np.arange(W)[None, :] / W
    bg = np.zeros((H, W, 3))
    for ch in range(3):
        fx, fy = rng.integers(1, 4, size=2)
        px, py = rng.uniform(0, 2 * np.pi, size=2)
        bg[:, :, ch] = 0.15 + 0.12 * np.sin(2 * np.pi * fx * xs + px) * np.cos(
            2 * np.pi * fy * ys + py
        )
    return bg.clip(0.0, 1.0)


def _group_channel_weights(layout: KeypointLayout) -> np.ndarray:
    colors = {
        "body": (0.55, 0.55, 0.85),
        "hand": (1.0, 0.35, 0.2),
        "mouth": (0.25, 1.0, 0.35),
        "face": (0.3, 0.45, 1.0),
    }
    weights = np.zeros((layout.total, 3))
    for group, color in colors.items():
        weights[layout.group_slice(group)] = color
    return weights


BLOB_SIGMA_FRACTION = 0.04  # of the video height


def render_video(
    true_coords: np.ndarray,
    gains: np.ndarray,
    cfg: CorpusConfig,
    appearance: int,
    rng: Optional[np.random.Generator],
) -> np.ndarray:
    """Draw keypoint blobs over the appearance background; [T, H, W, 3].

    `gains` scales blob brightness, either per keypoint [K] or per frame
    and keypoint [T, K]; the background is unaffected.
    """
    H, W = cfg.video_height, cfg.video_width
    T = true_coords.shape[0]
    scale_x = H / cfg.heatmap_height
    scale_y = W / cfg.heatmap_width
    sigma = max(BLOB_SIGMA_FRACTION * H, 1.0)
    weights = _group_channel_weights(cfg.layout)
    gains = np.broadcast_to(np.asarray(gains, dtype=np.float64), (T, cfg.keypoints))
    x = true_coords[:, :, 0] * scale_x
    y = true_coords[:, :, 1] * scale_y
    ii = np.arange(H, dtype=np.float64)
    jj = np.arange(W, dtype=np.float64)
    di = ii[None, :, None] - x[:, None, :]
    dj = jj[None, :, None] - y[:, None, :]
    sq = di[:, :, None, :] ** 2 + dj[:, None, :, :] ** 2  # [T, H, W, K]
    blobs = np.exp(-sq / (2.0 * sigma ** 2)) * gains[:, None, None, :]
    video = appearance_background(cfg, appearance)[None] + blobs @ weights
    if rng is not None and cfg.pixel_noise > 0:
        video = video + rng.normal(0.0, cfg.pixel_noise, size=video.shape)
    return video.clip(0.0, 1.0).astype(np.float32)


def sample_rng(cfg: CorpusConfig, split: str, index: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, _TAG_SAMPLE, _SPLIT_CODE[split], index])


def draw_gloss_sequence(cfg: CorpusConfig, rng: np.random.Generator) -> list[str]:
    """Uniform gloss sequence without adjacent repeats (keeps every target
    CTC-feasible at the minimum per-gloss duration)."""
    labels = cfg.gloss_labels()
    length = int(rng.integers(cfg.gloss_len_min, cfg.gloss_len_max + 1))
    seq: list[str] = []
    for _ in range(length):
        choices = [g for g in labels if not seq or g != seq[-1]]
        seq.append(choices[int(rng.integers(len(choices)))])
    return seq


def render_sample(
    sample_id: str,
    glosses: Sequence[str],
    prototypes: dict[str, GlossPrototype],
    appearance: int,
    cfg: CorpusConfig,
    grammar: Grammar,
    rng: np.random.Generator,
    split: str = "train",
) -> SampleRecord:
    """Concatenate per-gloss clips, render pixels, add keypoint noise."""
    for g in glosses:
        if g not in prototypes:
            raise ConfigError(f"no prototype for gloss {g!r}")
    pieces, gain_pieces = [], []
    for g in glosses:
        d = int(rng.integers(cfg.duration_min, cfg.duration_max + 1))
        pieces.append(_resample_nearest(prototypes[g].trajectory, d))
        gain_pieces.append(np.full(d, prototypes[g].style.get("blob_gain", 1.0)))
    true_coords = (
        np.concatenate(pieces, axis=0)
        if pieces
        else np.zeros((0, cfg.keypoints, 2))
    )
    frame_gains = np.concatenate(gain_pieces) if gain_pieces else np.zeros(0)
    T = true_coords.shape[0]

    video = render_video(true_coords, frame_gains[:, None], cfg, appearance, rng)

    stored = true_coords.copy()
    if cfg.keypoint_jitter > 0:
        stored = stored + rng.normal(0.0, cfg.keypoint_jitter, size=stored.shape)
    confidence = np.ones((T, cfg.keypoints))
    if cfg.confidence_dropout > 0:
        confidence[rng.random((T, cfg.keypoints)) < cfg.confidence_dropout] = 0.0
    trajectory = KeypointTrajectory(stored, confidence, cfg.layout)

    return SampleRecord(
        sample_id=sample_id,
        video=video,
        trajectory=trajectory,
        glosses=list(glosses),
        text=grammar.map(glosses),
        split=split,
        appearance=appearance,
        heat_height=cfg.heatmap_height,
        heat_width=cfg.heatmap_width,
    )


def generate_sample(
    cfg: CorpusConfig,
    prototypes: dict[str, GlossPrototype],
    grammar: Grammar,
    split: str,
    index: int,
) -> SampleRecord:
    rng = sample_rng(cfg, split, index)
    glosses = draw_gloss_sequence(cfg, rng)
    pool = cfg.appearance_pool_for(split)
    appearance = pool[int(rng.integers(len(pool)))]
    return render_sample(
        f"{split}{index:05d}", glosses, prototypes, appearance, cfg, grammar, rng, split
    )
