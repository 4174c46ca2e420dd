"""Shared micro-scale model builders for the model and acceptance tests."""

import numpy as np

from signstream.models.recognizer import DualStreamRecognizer, RecognizerConfig
from signstream.models.streams import StreamConfig

MICRO_VOCAB = 3
MICRO_T = 8
MICRO_KP_CHANNELS = 5


def micro_config(**overrides) -> RecognizerConfig:
    params = dict(
        vocab_size=MICRO_VOCAB,
        video=StreamConfig(in_channels=3, in_height=8, in_width=8, widths=(4, 4, 6, 8)),
        keypoint=StreamConfig(
            in_channels=MICRO_KP_CHANNELS, in_height=4, in_width=4, widths=(4, 4, 6, 8)
        ),
        d_rep=8,
    )
    params.update(overrides)
    return RecognizerConfig(**params)


def micro_model(seed=0, dtype=np.float64, **overrides) -> DualStreamRecognizer:
    return DualStreamRecognizer(micro_config(**overrides), seed=seed, dtype=dtype)


def micro_inputs(seed=0, T=MICRO_T):
    rng = np.random.default_rng(seed)
    video = rng.uniform(0.0, 1.0, size=(T, 8, 8, 3))
    heatmaps = rng.uniform(0.0, 1.0, size=(T, 4, 4, MICRO_KP_CHANNELS))
    return video, heatmaps
