"""Input validation helpers for the estimator layer."""

from __future__ import annotations

from typing import Optional, Sequence

from sklearn.exceptions import NotFittedError

from .corpus.generator import SampleRecord
from .errors import DimensionError


def check_sample_batch(
    samples: Sequence[SampleRecord],
    need_video: bool = True,
    need_keypoints: bool = True,
) -> list[SampleRecord]:
    """Validate a non-empty batch of consistently shaped corpus samples."""
    samples = list(samples)
    if not samples:
        raise ValueError("expected at least one sample")
    first = samples[0]
    for s in samples:
        if not isinstance(s, SampleRecord):
            raise TypeError(f"expected SampleRecord, got {type(s).__name__}")
        if need_video:
            if s.video.ndim != 4 or s.video.shape[3] != 3:
                raise DimensionError(f"sample {s.sample_id}: video shape {s.video.shape}")
            if s.video.shape[1:] != first.video.shape[1:]:
                raise DimensionError(
                    f"sample {s.sample_id}: video extents {s.video.shape[1:]} differ "
                    f"from {first.video.shape[1:]}"
                )
        if need_keypoints:
            if s.trajectory.keypoints != first.trajectory.keypoints:
                raise DimensionError(
                    f"sample {s.sample_id}: keypoint count {s.trajectory.keypoints} "
                    f"differs from {first.trajectory.keypoints}"
                )
            if s.trajectory.frames != s.frames:
                raise DimensionError(
                    f"sample {s.sample_id}: {s.trajectory.frames} keypoint rows for "
                    f"{s.frames} video frames"
                )
    return samples


def check_is_fitted(estimator, attribute: str = "model_") -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} must be fitted before this call"
        )


def check_gloss_coverage(samples: Sequence[SampleRecord], labels: Optional[set] = None) -> None:
    if labels is None:
        return
    for s in samples:
        unknown = set(s.glosses) - labels
        if unknown:
            raise ValueError(f"sample {s.sample_id} uses glosses outside the vocabulary: {unknown}")
