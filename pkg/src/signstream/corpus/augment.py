"""Training-time augmentations shared by the video and keypoint channels.

A single crop window and a single frame-rate factor are drawn per sample
and applied to the pixels and the keypoint coordinates alike, keeping the
two input channels spatially and temporally aligned. Cropped videos are
resized back to their original extents with nearest-neighbor sampling;
frame-rate changes use nearest-frame resampling. Gloss and text labels
never change.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import ConfigError
from ..heatmaps import KeypointTrajectory
from .generator import SampleRecord


def _nearest_indices(n_out: int, n_in: int) -> np.ndarray:
    return (np.arange(n_out) * n_in) // max(n_out, 1)


def apply_crop(sample: SampleRecord, crop_factor: float, off_x: int, off_y: int
               ) -> SampleRecord:
    """Crop a window of the given factor at integer video offsets, then zoom
    back to the original extents; keypoints get the exact affine map."""
    T, H, W, _ = sample.video.shape
    hw = int(round(crop_factor * H))
    ww = int(round(crop_factor * W))
    if hw < 1 or ww < 1:
        raise ConfigError(f"crop factor {crop_factor} yields an empty window")
    if not (0 <= off_x <= H - hw and 0 <= off_y <= W - ww):
        raise ConfigError("crop window outside the frame")
    window = sample.video[:, off_x : off_x + hw, off_y : off_y + ww, :]
    video = window[:, _nearest_indices(H, hw), :, :][:, :, _nearest_indices(W, ww), :]

    # same window expressed in heatmap units, then zoom back to full extent
    traj = sample.trajectory
    new_coords = traj.coords.copy()
    if traj.keypoints:
        rx, ry = sample.heat_height / H, sample.heat_width / W
        new_coords[:, :, 0] = (traj.coords[:, :, 0] - off_x * rx) * (H / hw)
        new_coords[:, :, 1] = (traj.coords[:, :, 1] - off_y * ry) * (W / ww)
    trajectory = KeypointTrajectory(new_coords, traj.confidence.copy(), traj.layout)
    return SampleRecord(
        sample.sample_id, video.astype(np.float32), trajectory,
        list(sample.glosses), list(sample.text), sample.split, sample.appearance,
        sample.heat_height, sample.heat_width,
    )


def apply_rate(sample: SampleRecord, rate: float) -> SampleRecord:
    """Nearest-frame temporal resampling to round(T * rate) frames."""
    T = sample.frames
    new_T = max(1, int(round(T * rate)))
    idx = _nearest_indices(new_T, T)
    traj = sample.trajectory
    trajectory = KeypointTrajectory(
        traj.coords[idx], traj.confidence[idx], traj.layout
    )
    return SampleRecord(
        sample.sample_id, sample.video[idx], trajectory,
        list(sample.glosses), list(sample.text), sample.split, sample.appearance,
        sample.heat_height, sample.heat_width,
    )


def augment(
    sample: SampleRecord,
    spatial_crop_range: tuple[float, float] = (0.7, 1.0),
    rate_range: tuple[float, float] = (0.5, 1.5),
    rng: Optional[np.random.Generator] = None,
) -> SampleRecord:
    """Random crop and frame-rate change drawn from the given ranges."""
    lo_c, hi_c = spatial_crop_range
    lo_r, hi_r = rate_range
    if not (0.0 < lo_c <= hi_c <= 1.0):
        raise ConfigError(f"invalid crop range {spatial_crop_range}")
    if not (0.0 < lo_r <= hi_r):
        raise ConfigError(f"invalid rate range {rate_range}")
    rng = rng or np.random.default_rng(0)
    crop = float(rng.uniform(lo_c, hi_c))
    rate = float(rng.uniform(lo_r, hi_r))
    H, W = sample.video.shape[1], sample.video.shape[2]
    hw, ww = int(round(crop * H)), int(round(crop * W))
    if hw < 1 or ww < 1:
        raise ConfigError(f"crop factor {crop} yields an empty window")
    off_x = int(rng.integers(0, H - hw + 1))
    off_y = int(rng.integers(0, W - ww + 1))
    out = sample
    if hw != H or ww != W or off_x or off_y:
        out = apply_crop(out, crop, off_x, off_y)
    if rate != 1.0:
        out = apply_rate(out, rate)
    return out
