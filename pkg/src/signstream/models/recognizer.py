"""Dual-stream recognition model with cross-stream fusion and its loss.

The two encoder streams advance through their four blocks in lockstep.
After blocks 1..3 the configured lateral connections exchange features:
the video feature is strided down onto the keypoint grid and added there,
the keypoint feature is transpose-convolved up onto the video grid and
added there, both computed from the pre-fusion features so the exchange
is order-free. Each stream can carry a feature pyramid whose fused maps
P3 = up(C4) + lat(C3) and P2 = up(P3) + lat(C2) feed auxiliary heads; the
pyramid only runs in training mode. A joint head consumes the
concatenated pooled finals of both streams. Inference averages the head
posteriors and beam-decodes the mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..autodiff import concat, kl_divergence, pool_spatial_mean
from ..autodiff.nn import Module, SpatialConv, TransposedSpatialConv, TransposedTemporalConv
from ..autodiff.tensor import Tensor
from ..ctc import ctc_loss, ensemble_posteriors, prefix_beam_decode
from ..errors import ConfigError, DimensionError
from .streams import HeadNetwork, HeadOutput, StreamConfig, StreamEncoder

LATERAL_MODES = ("none", "v2k", "k2v", "bidirectional")
SPN_LEVEL_SETS = ((), ("p3",), ("p2", "p3"))
HEAD_ORDER = ("video", "keypoint", "joint")


@dataclass
class RecognizerConfig:
    vocab_size: int
    video: Optional[StreamConfig] = None
    keypoint: Optional[StreamConfig] = None
    d_rep: int = 64
    lateral_mode: str = "bidirectional"
    lateral_levels: tuple[str, ...] = ("c1", "c2", "c3")
    spn_levels: tuple[str, ...] = ("p2", "p3")
    spn_streams: tuple[str, ...] = ("video", "keypoint")
    joint_head: bool = True
    lambda_video: float = 0.2
    lambda_keypoint: float = 0.5
    distill_weight: float = 1.0

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ConfigError("vocab_size must be positive")
        if self.video is None and self.keypoint is None:
            raise ConfigError("at least one stream is required")
        both = self.video is not None and self.keypoint is not None
        if self.lateral_mode not in LATERAL_MODES:
            raise ConfigError(f"unknown lateral mode {self.lateral_mode!r}")
        self.lateral_levels = tuple(sorted(set(self.lateral_levels)))
        for lv in self.lateral_levels:
            if lv not in ("c1", "c2", "c3"):
                raise ConfigError(f"lateral level {lv!r} not in c1..c3")
        self.spn_levels = tuple(sorted(set(self.spn_levels)))
        if self.spn_levels not in SPN_LEVEL_SETS:
            raise ConfigError(
                f"spn_levels must be one of {SPN_LEVEL_SETS}, got {self.spn_levels}"
            )
        self.spn_streams = tuple(s for s in ("video", "keypoint") if s in self.spn_streams)
        if not both:
            if self.lateral_mode != "none" and self.lateral_levels:
                raise ConfigError("lateral connections need both streams")
            if self.joint_head:
                raise ConfigError("the joint head needs both streams")
        if both:
            if self.video.temporal_strides != self.keypoint.temporal_strides:
                raise ConfigError("streams must share temporal strides")
        if min(self.lambda_video, self.lambda_keypoint, self.distill_weight) < 0:
            raise ConfigError("loss weights must be nonnegative")

    @property
    def n_symbols(self) -> int:
        return self.vocab_size + 1

    def active_laterals(self) -> tuple[str, ...]:
        if self.lateral_mode == "none" or self.video is None or self.keypoint is None:
            return ()
        return self.lateral_levels


def _integer_ratio(big: int, small: int, what: str) -> int:
    if small < 1 or big % small:
        raise DimensionError(f"{what}: {big} is not an integer multiple of {small}")
    return big // small


class LateralPair(Module):
    """Resampling exchange between the two streams at one level.

    Weights start at zero so an enabled connection is the additive
    identity until training moves it; the resampling convolution also
    carries the channel projection when stream widths differ.
    """

    def __init__(self, video_ch, kp_ch, ratio, mode, rng, dtype):
        super().__init__()
        self.mode = mode
        if mode in ("v2k", "bidirectional"):
            self.down = SpatialConv(
                video_ch, kp_ch, kernel=ratio, stride=ratio, pad=0,
                rng=rng, dtype=dtype, zero_init=True,
            )
        if mode in ("k2v", "bidirectional"):
            self.up = TransposedSpatialConv(
                kp_ch, video_ch, ratio, rng=rng, dtype=dtype, zero_init=True
            )

    def __call__(self, video_feat: Tensor, kp_feat: Tensor) -> tuple[Tensor, Tensor]:
        new_v, new_k = video_feat, kp_feat
        if self.mode in ("k2v", "bidirectional"):
            up = self.up(kp_feat)
            if up.shape != video_feat.shape:
                raise DimensionError(
                    f"lateral upsample produced {up.shape}, expected {video_feat.shape}"
                )
            new_v = video_feat + up
        if self.mode in ("v2k", "bidirectional"):
            down = self.down(video_feat)
            if down.shape != kp_feat.shape:
                raise DimensionError(
                    f"lateral downsample produced {down.shape}, expected {kp_feat.shape}"
                )
            new_k = kp_feat + down
        return new_v, new_k


class PyramidFuse(Module):
    """Upsample the deeper map to the shallower grid and add its lateral."""

    def __init__(self, deep_ch, lat_ch, t_ratio, s_ratio, rng, dtype):
        super().__init__()
        self.up_t = TransposedTemporalConv(deep_ch, lat_ch, t_ratio, rng, dtype)
        self.up_s = TransposedSpatialConv(lat_ch, lat_ch, s_ratio, rng, dtype)
        self.lateral = SpatialConv(lat_ch, lat_ch, kernel=1, stride=1, pad=0, rng=rng, dtype=dtype)

    def __call__(self, deep: Tensor, shallow: Tensor) -> Tensor:
        up = self.up_s(self.up_t(deep))
        if up.shape != shallow.shape:
            raise DimensionError(
                f"pyramid upsample produced {up.shape}, expected {shallow.shape}"
            )
        return up + self.lateral(shallow)


class SignPyramid(Module):
    def __init__(self, channels, t_ratios, s_ratios, levels, d_rep, n_symbols, rng, dtype):
        super().__init__()
        ch2, ch3, ch4 = channels
        self.levels = levels
        self.fuse3 = PyramidFuse(ch4, ch3, t_ratios[0], s_ratios[0], rng, dtype)
        self.head3 = HeadNetwork(ch3, d_rep, n_symbols, rng, dtype)
        if "p2" in levels:
            self.fuse2 = PyramidFuse(ch3, ch2, t_ratios[1], s_ratios[1], rng, dtype)
            self.head2 = HeadNetwork(ch2, d_rep, n_symbols, rng, dtype)

    def __call__(self, c2: Tensor, c3: Tensor, c4: Tensor) -> dict[str, HeadOutput]:
        out: dict[str, HeadOutput] = {}
        p3 = self.fuse3(c4, c3)
        if "p3" in self.levels:
            out["p3"] = self.head3(pool_spatial_mean(p3))
        if "p2" in self.levels:
            p2 = self.fuse2(p3, c2)
            out["p2"] = self.head2(pool_spatial_mean(p2))
        return out


@dataclass
class RecognizerOutput:
    heads: dict[str, HeadOutput]
    aux: dict[str, HeadOutput]
    valid_length: int
    aux_valid: dict[str, int]
    ensemble: np.ndarray = field(init=False)

    def __post_init__(self):
        self.ensemble = ensemble_posteriors(
            *[self.heads[name].probs for name in HEAD_ORDER if name in self.heads]
        )


def pad_to_multiple(x: np.ndarray, multiple: int = 4) -> np.ndarray:
    """Right-pad along axis 0 by repeating the last frame."""
    T = x.shape[0]
    if T == 0:
        raise DimensionError("empty input sequence")
    pad = (-T) % multiple
    if pad == 0:
        return x
    return np.concatenate([x, np.repeat(x[-1:], pad, axis=0)], axis=0)


class DualStreamRecognizer(Module):
    def __init__(self, cfg: RecognizerConfig, seed: int = 0, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.dtype = np.dtype(dtype).type
        rng = np.random.default_rng([seed, 101])
        n_sym = cfg.n_symbols

        self.video = StreamEncoder(cfg.video, rng, dtype) if cfg.video else None
        self.keypoint = StreamEncoder(cfg.keypoint, rng, dtype) if cfg.keypoint else None

        self.laterals: list[LateralPair] = []
        self._lateral_levels: list[int] = []
        if cfg.active_laterals():
            v_ext = cfg.video.spatial_extents()
            k_ext = cfg.keypoint.spatial_extents()
            for name in cfg.active_laterals():
                level = int(name[1:]) - 1
                ratio = _integer_ratio(
                    v_ext[level][0], k_ext[level][0], f"lateral {name} extents"
                )
                ratio_w = _integer_ratio(
                    v_ext[level][1], k_ext[level][1], f"lateral {name} extents"
                )
                if ratio != ratio_w:
                    raise DimensionError(f"anisotropic lateral ratio at {name}")
                self.laterals.append(
                    LateralPair(
                        cfg.video.widths[level], cfg.keypoint.widths[level],
                        ratio, cfg.lateral_mode, rng, dtype,
                    )
                )
                self._lateral_levels.append(level)

        if self.video is not None:
            self.video_head = HeadNetwork(cfg.video.widths[3], cfg.d_rep, n_sym, rng, dtype)
        if self.keypoint is not None:
            self.keypoint_head = HeadNetwork(cfg.keypoint.widths[3], cfg.d_rep, n_sym, rng, dtype)
        if cfg.joint_head:
            joint_in = cfg.video.widths[3] + cfg.keypoint.widths[3]
            self.joint_head = HeadNetwork(joint_in, cfg.d_rep, n_sym, rng, dtype)

        if cfg.spn_levels:
            for stream_name in cfg.spn_streams:
                stream_cfg = getattr(cfg, stream_name)
                if stream_cfg is None:
                    continue
                ext = stream_cfg.spatial_extents()
                tdiv = stream_cfg.temporal_divisors()
                t_ratios = (
                    _integer_ratio(tdiv[3], tdiv[2], "pyramid temporal 4->3"),
                    _integer_ratio(tdiv[2], tdiv[1], "pyramid temporal 3->2"),
                )
                s_ratios = (
                    _integer_ratio(ext[2][0], ext[3][0], "pyramid spatial 4->3"),
                    _integer_ratio(ext[1][0], ext[2][0], "pyramid spatial 3->2"),
                )
                pyramid = SignPyramid(
                    (stream_cfg.widths[1], stream_cfg.widths[2], stream_cfg.widths[3]),
                    t_ratios, s_ratios, cfg.spn_levels, cfg.d_rep, n_sym, rng, dtype,
                )
                setattr(self, f"{stream_name}_spn", pyramid)

    # ------------------------------------------------------------------ forward

    def _stream_features(self, video: Optional[np.ndarray], heatmaps: Optional[np.ndarray]
                         ) -> tuple[Optional[list[Tensor]], Optional[list[Tensor]], int, int]:
        if (video is None) != (self.video is None) or (heatmaps is None) != (self.keypoint is None):
            raise DimensionError("inputs must match the configured streams")
        T_in = None
        xv = xk = None
        if video is not None:
            self.video.validate_input(video)
            T_in = video.shape[0]
            xv = Tensor(pad_to_multiple(np.asarray(video)).astype(self.dtype))
        if heatmaps is not None:
            self.keypoint.validate_input(heatmaps)
            if T_in is not None and heatmaps.shape[0] != T_in:
                raise DimensionError(
                    f"stream lengths differ: video {T_in}, heatmaps {heatmaps.shape[0]}"
                )
            T_in = heatmaps.shape[0] if T_in is None else T_in
            xk = Tensor(pad_to_multiple(np.asarray(heatmaps)).astype(self.dtype))

        lateral_at = dict(zip(self._lateral_levels, self.laterals))
        feats_v: list[Tensor] = []
        feats_k: list[Tensor] = []
        for level in range(4):
            if xv is not None:
                xv = self.video.block(level, xv)
            if xk is not None:
                xk = self.keypoint.block(level, xk)
            if level in lateral_at and xv is not None and xk is not None:
                xv, xk = lateral_at[level](xv, xk)
            if xv is not None:
                feats_v.append(xv)
            if xk is not None:
                feats_k.append(xk)
        return (feats_v or None, feats_k or None, T_in, math.ceil(T_in / 4))

    def forward(
        self,
        video: Optional[np.ndarray] = None,
        heatmaps: Optional[np.ndarray] = None,
        use_spn: Optional[bool] = None,
    ) -> RecognizerOutput:
        use_spn = self.training if use_spn is None else use_spn
        feats_v, feats_k, T_in, valid = self._stream_features(video, heatmaps)

        pooled = {}
        if feats_v is not None:
            pooled["video"] = pool_spatial_mean(feats_v[3])
        if feats_k is not None:
            pooled["keypoint"] = pool_spatial_mean(feats_k[3])
        heads = self._run_heads(pooled)

        aux: dict[str, HeadOutput] = {}
        aux_valid: dict[str, int] = {}
        if use_spn and self.cfg.spn_levels:
            for stream_name, feats in (("video", feats_v), ("keypoint", feats_k)):
                pyramid = getattr(self, f"{stream_name}_spn", None)
                if pyramid is None or feats is None:
                    continue
                tdiv = getattr(self.cfg, stream_name).temporal_divisors()
                for level_name, out in pyramid(feats[1], feats[2], feats[3]).items():
                    key = f"{stream_name}.{level_name}"
                    aux[key] = out
                    aux_valid[key] = math.ceil(T_in / tdiv[int(level_name[1:]) - 1])
        return RecognizerOutput(heads=heads, aux=aux, valid_length=valid, aux_valid=aux_valid)

    def _run_heads(self, pooled: dict[str, Tensor]) -> dict[str, HeadOutput]:
        heads: dict[str, HeadOutput] = {}
        if "video" in pooled:
            heads["video"] = self.video_head(pooled["video"])
        if "keypoint" in pooled:
            heads["keypoint"] = self.keypoint_head(pooled["keypoint"])
        if self.cfg.joint_head and "video" in pooled and "keypoint" in pooled:
            if pooled["video"].shape[0] != pooled["keypoint"].shape[0]:
                raise DimensionError("joint head requires equal temporal extents")
            heads["joint"] = self.joint_head(concat([pooled["video"], pooled["keypoint"]], axis=1))
        return heads

    def pooled_features(
        self, video: Optional[np.ndarray] = None, heatmaps: Optional[np.ndarray] = None
    ) -> tuple[dict[str, np.ndarray], int]:
        """Detached pooled stream outputs, for training stages with frozen
        backbones that can cache them per sample."""
        feats_v, feats_k, _, valid = self._stream_features(video, heatmaps)
        pooled = {}
        if feats_v is not None:
            pooled["video"] = pool_spatial_mean(feats_v[3]).data.copy()
        if feats_k is not None:
            pooled["keypoint"] = pool_spatial_mean(feats_k[3]).data.copy()
        return pooled, valid

    def heads_from_pooled(self, pooled: dict[str, np.ndarray], valid: int) -> RecognizerOutput:
        tensors = {name: Tensor(arr.astype(self.dtype)) for name, arr in pooled.items()}
        heads = self._run_heads(tensors)
        return RecognizerOutput(heads=heads, aux={}, valid_length=valid, aux_valid={})


# ----------------------------------------------------------------------- loss


@dataclass
class LossBreakdown:
    """Unweighted loss terms plus the weighted combined totals."""

    ctc_video: float = 0.0
    ctc_keypoint: float = 0.0
    ctc_joint: float = 0.0
    actc_video: float = 0.0
    actc_keypoint: float = 0.0
    distill: float = 0.0
    translation: float = 0.0
    slr: float = 0.0
    slt: float = 0.0

    FIELDS = (
        "ctc_video", "ctc_keypoint", "ctc_joint", "actc_video",
        "actc_keypoint", "distill", "translation", "slr", "slt",
    )


def recognition_loss(
    output: RecognizerOutput,
    target: Sequence[int],
    cfg: RecognizerConfig,
    teacher_probs: Optional[np.ndarray] = None,
) -> tuple[Tensor, LossBreakdown]:
    """Weighted sum of head CTCs, auxiliary CTCs, and self-distillation.

    The distillation teacher is the detached head-posterior average; a
    frozen snapshot may be passed instead (the finite-difference harness
    relies on that to measure the same function the optimizer sees).
    """
    terms: list[Tensor] = []
    raw = LossBreakdown()

    for name in HEAD_ORDER:
        if name not in output.heads:
            continue
        term = ctc_loss(output.heads[name].log_probs, target, input_length=output.valid_length)
        setattr(raw, f"ctc_{name}", float(term.data))
        terms.append(term)

    for stream_name, weight in (("video", cfg.lambda_video), ("keypoint", cfg.lambda_keypoint)):
        stream_terms = [
            ctc_loss(out.log_probs, target, input_length=output.aux_valid[key])
            for key, out in output.aux.items()
            if key.startswith(stream_name + ".")
        ]
        if not stream_terms:
            continue
        total = stream_terms[0]
        for t in stream_terms[1:]:
            total = total + t
        setattr(raw, f"actc_{stream_name}", float(total.data))
        if weight:
            terms.append(total * weight)

    if cfg.distill_weight > 0 and len(output.heads) >= 2:
        teacher = output.ensemble if teacher_probs is None else teacher_probs
        dist_terms = [
            kl_divergence(teacher, output.heads[name].log_probs)
            for name in HEAD_ORDER
            if name in output.heads
        ]
        dist = dist_terms[0]
        for t in dist_terms[1:]:
            dist = dist + t
        raw.distill = float(dist.data)
        terms.append(dist * cfg.distill_weight)

    total = terms[0]
    for t in terms[1:]:
        total = total + t
    raw.slr = float(total.data)
    raw.slt = raw.slr
    return total, raw


def slr_predict(
    model: DualStreamRecognizer,
    video: Optional[np.ndarray] = None,
    heatmaps: Optional[np.ndarray] = None,
    beam_width: int = 5,
) -> list[int]:
    """Eval-mode ensemble decode: beam search over the averaged posteriors."""
    was_training = model.training
    model.eval()
    try:
        out = model.forward(video, heatmaps, use_spn=False)
    finally:
        model.train(was_training)
    return prefix_beam_decode(out.ensemble, beam_width, input_length=out.valid_length)
