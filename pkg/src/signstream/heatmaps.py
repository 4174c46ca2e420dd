"""Gaussian heatmap volumes from keypoint trajectories.

Each kept keypoint (t, k) paints channel k of frame t with
exp(-((i - x)^2 + (j - y)^2) / (2 * sigma^2)) over the full H' x W' grid,
where (x, y) are the keypoint's coordinates in heatmap pixel units (x along
axis i, y along axis j). Keypoints whose confidence falls below the
configured threshold, or whose center lies outside [-3*sigma, extent +
3*sigma), contribute an all-zero channel instead.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DimensionError

CANONICAL_GROUPS = ("body", "hand", "mouth", "face")

# Source keypoint set mirroring a whole-body pose estimator: 11 upper-body
# points, 42 hand points, and 68 face points of which the first 10 are the
# mouth. The default selection keeps the mouth plus 16 of the remaining
# face points, 79 in total.
FULL_SOURCE_COUNTS = {"body": 11, "hand": 42, "face": 68}
MOUTH_IN_FACE = 10
OTHER_FACE_KEPT = 16


@dataclass(frozen=True)
class KeypointLayout:
    """Contiguous group extents, in canonical (body, hand, mouth, face) order."""

    counts: Mapping[str, int]

    def __post_init__(self):
        for name in self.counts:
            if name not in CANONICAL_GROUPS:
                raise ConfigError(f"unknown keypoint group {name!r}")
        object.__setattr__(
            self, "counts", {g: int(self.counts.get(g, 0)) for g in CANONICAL_GROUPS}
        )

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def group_slice(self, group: str) -> slice:
        if group not in self.counts:
            raise ConfigError(f"unknown keypoint group {group!r}")
        start = 0
        for g in CANONICAL_GROUPS:
            if g == group:
                return slice(start, start + self.counts[g])
            start += self.counts[g]
        raise ConfigError(f"unknown keypoint group {group!r}")

    def header_token(self) -> str:
        return " ".join(f"{g}:{self.counts[g]}" for g in CANONICAL_GROUPS)

    @classmethod
    def from_header_token(cls, token: str) -> "KeypointLayout":
        counts = {}
        for part in token.split():
            name, _, count = part.partition(":")
            counts[name] = int(count)
        return cls(counts)


def group_subsets(layout: KeypointLayout, groups: Iterable[str]) -> list[int]:
    """Concatenated channel indices for `groups`, in canonical order."""
    groups = set(groups)
    if not groups:
        raise ConfigError("at least one keypoint group is required")
    for g in groups:
        if g not in CANONICAL_GROUPS:
            raise ConfigError(f"unknown keypoint group {g!r}")
    out: list[int] = []
    for g in CANONICAL_GROUPS:
        if g in groups:
            sl = layout.group_slice(g)
            out.extend(range(sl.start, sl.stop))
    return out


def select_keypoints(
    source_counts: Mapping[str, int] | None = None,
    groups: Iterable[str] = CANONICAL_GROUPS,
) -> list[int]:
    """Indices into the full source set for the kept keypoint subset.

    The full selection keeps all upper-body and hand points, the mouth
    points, and an evenly spaced sample of the remaining face points,
    yielding 79 indices. Passing a subset of group names restricts the
    selection for input-ablation runs.
    """
    source = dict(FULL_SOURCE_COUNTS if source_counts is None else source_counts)
    for required in ("body", "hand", "face"):
        if required not in source:
            raise ConfigError(f"source keypoint set is missing group {required!r}")
    groups = set(groups)
    for g in groups:
        if g not in CANONICAL_GROUPS:
            raise ConfigError(f"unknown keypoint group {g!r}")
    n_body, n_hand, n_face = source["body"], source["hand"], source["face"]
    if n_face < MOUTH_IN_FACE + OTHER_FACE_KEPT:
        raise ConfigError(f"face group too small: {n_face}")
    body = list(range(n_body))
    hand = list(range(n_body, n_body + n_hand))
    face_start = n_body + n_hand
    mouth = list(range(face_start, face_start + MOUTH_IN_FACE))
    remaining = np.arange(face_start + MOUTH_IN_FACE, face_start + n_face)
    picks = np.linspace(0, len(remaining) - 1, OTHER_FACE_KEPT).round().astype(int)
    other_face = [int(remaining[i]) for i in picks]
    out: list[int] = []
    if "body" in groups:
        out.extend(body)
    if "hand" in groups:
        out.extend(hand)
    if "mouth" in groups:
        out.extend(mouth)
    if "face" in groups:
        out.extend(other_face)
    return out


@dataclass
class HeatmapConfig:
    sigma: float = 4.0
    height: int = 112
    width: int = 112
    confidence_threshold: float = 0.3

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.height < 1 or self.width < 1:
            raise ConfigError(f"heatmap extents must be >= 1, got {self.height}x{self.width}")


@dataclass
class KeypointTrajectory:
    """Per-frame keypoint coordinates in heatmap pixel units plus confidences."""

    coords: np.ndarray  # [T, K, 2], (x, y)
    confidence: np.ndarray  # [T, K] in [0, 1]
    layout: KeypointLayout = field(
        default_factory=lambda: KeypointLayout({"body": 0, "hand": 0, "mouth": 0, "face": 0})
    )

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64)
        if self.coords.ndim != 3 or self.coords.shape[2] != 2:
            raise DimensionError(f"coords must be [T, K, 2], got {self.coords.shape}")
        if self.confidence.shape != self.coords.shape[:2]:
            raise DimensionError(
                f"confidence shape {self.confidence.shape} does not match coords "
                f"{self.coords.shape[:2]}"
            )
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("keypoint coordinates must be finite")
        if self.confidence.size and (self.confidence.min() < 0 or self.confidence.max() > 1):
            raise ValueError("confidences must lie in [0, 1]")

    @property
    def frames(self) -> int:
        return self.coords.shape[0]

    @property
    def keypoints(self) -> int:
        return self.coords.shape[1]

    def select(self, indices: Sequence[int], layout: KeypointLayout | None = None
               ) -> "KeypointTrajectory":
        idx = list(indices)
        return KeypointTrajectory(
            self.coords[:, idx], self.confidence[:, idx], layout or self.layout
        )


def rasterize(traj: KeypointTrajectory, cfg: HeatmapConfig) -> np.ndarray:
    """Gaussian heatmap volume [T, H', W', K] with values in [0, 1]."""
    T, K = traj.frames, traj.keypoints
    H, W = cfg.height, cfg.width
    x = traj.coords[:, :, 0]  # pairs with grid axis i
    y = traj.coords[:, :, 1]  # pairs with grid axis j
    margin = 3.0 * cfg.sigma
    keep = (
        (traj.confidence >= cfg.confidence_threshold)
        & (x >= -margin) & (x < H + margin)
        & (y >= -margin) & (y < W + margin)
    )
    ii = np.arange(H, dtype=np.float64)
    jj = np.arange(W, dtype=np.float64)
    di = ii[None, :, None] - x[:, None, :]  # [T, H, K]
    dj = jj[None, :, None] - y[:, None, :]  # [T, W, K]
    sq = di[:, :, None, :] ** 2 + dj[:, None, :, :] ** 2  # [T, H, W, K]
    volume = np.exp(-sq / (2.0 * cfg.sigma ** 2))
    volume *= keep[:, None, None, :]
    return volume


# ------------------------------------------------------------------- file I/O
#
# Keypoint file: two text header lines ("T K" and "groups <layout>") followed
# by T*K*3 little-endian float32 values laid out as (x, y, confidence).


def write_keypoint_file(path: str, traj: KeypointTrajectory) -> None:
    header = f"{traj.frames} {traj.keypoints}\ngroups {traj.layout.header_token()}\n"
    block = np.concatenate(
        [traj.coords, traj.confidence[:, :, None]], axis=2
    ).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(block.tobytes())


def read_keypoint_file(path: str) -> KeypointTrajectory:
    with open(path, "rb") as fh:
        line1 = fh.readline().decode("ascii").split()
        line2 = fh.readline().decode("ascii").split(None, 1)
        T, K = int(line1[0]), int(line1[1])
        layout = KeypointLayout.from_header_token(line2[1].strip())
        raw = np.frombuffer(fh.read(T * K * 3 * 4), dtype="<f4").reshape(T, K, 3)
    return KeypointTrajectory(raw[:, :, :2].astype(np.float64),
                              raw[:, :, 2].astype(np.float64), layout)
