"""Scikit-learn style estimators over the recognition and translation models.

Three fit/predict surfaces cover the staged pipeline:

* ``SignRecognizer``  — one or both encoder streams with CTC supervision;
  the single-stream configurations are the pretraining stage, the dual
  configuration is the fused recognition model.
* ``GlossTranslator`` — gloss-token to text sequence-to-sequence model.
* ``SignTranslator``  — translation heads over a fitted recognizer, with
  frozen backbones and multi-source fused decoding.

All estimators expose ``get_params``/``set_params`` through
``sklearn.base.BaseEstimator``, validate their inputs, and persist to the
text-index-plus-blob checkpoint format.
"""

from __future__ import annotations

import json
from typing import Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_gloss_coverage, check_is_fitted, check_sample_batch
from .autodiff import checkpoint
from .autodiff.optim import Adam, cosine_lr
from .corpus.generator import SampleRecord
from .ctc import FramePosteriors, prefix_beam_decode
from .errors import ConfigError
from .heatmaps import HeatmapConfig, group_subsets
from .metrics import bleu
from .models.recognizer import (
    DualStreamRecognizer,
    LossBreakdown,
    RecognizerConfig,
    recognition_loss,
)
from .models.streams import StreamConfig
from .models.translator import (
    MlpAdapter,
    Seq2SeqTranslator,
    TranslatorConfig,
    multi_source_beam_decode,
    slt_loss,
    translation_loss,
)
from .training import (
    EpochStats,
    RecognizerTrainState,
    TrainLog,
    TrainOptions,
    evaluate_recognizer,
    prepare_inputs,
    train_recognizer,
)
from .vocab import GlossVocab, TextVocab

CKPT_FORMAT = "signstream-ckpt-v1"


def _tuplify(value):
    return tuple(value) if isinstance(value, list) else value


def _params_to_meta(est: BaseEstimator) -> str:
    return json.dumps(est.get_params(), sort_keys=True, default=list)


def _params_from_meta(blob: str) -> dict:
    return {k: _tuplify(v) for k, v in json.loads(blob).items()}


class SignRecognizer(BaseEstimator):
    """Gloss-sequence recognizer over video and/or keypoint-heatmap streams.

    Parameters mirror the model and training configuration; data geometry
    (frame extents, keypoint count, vocabulary) is read from the samples
    at fit time. ``streams`` selects the architecture: ``("video",)`` or
    ``("keypoint",)`` train a single encoder under one CTC loss (the
    pretraining stage), ``("video", "keypoint")`` builds the fused model
    with lateral connections, pyramids, joint head, and self-distillation
    as configured.
    """

    def __init__(
        self,
        streams: tuple = ("video", "keypoint"),
        widths: tuple = (16, 32, 48, 64),
        temporal_strides: tuple = (1, 1, 2, 2),
        spatial_strides: tuple = (2, 1, 2, 2),
        d_rep: int = 64,
        freeze_block1: bool = False,
        lateral: str = "bidirectional",
        lateral_levels: tuple = ("c1", "c2", "c3"),
        spn: tuple = ("p2", "p3"),
        spn_streams: tuple = ("video", "keypoint"),
        joint_head: bool = True,
        lambda_video: float = 0.2,
        lambda_keypoint: float = 0.5,
        distill_weight: float = 1.0,
        heatmap_sigma: float = 2.0,
        keypoint_groups: Optional[tuple] = None,
        bn_eval: str = "sample",
        epochs: int = 40,
        batch_size: int = 4,
        base_lr: float = 1e-3,
        weight_decay: float = 1e-3,
        seed: int = 0,
        augment: bool = True,
        crop_range: tuple = (0.7, 1.0),
        rate_range: tuple = (0.5, 1.5),
        beam_width: int = 5,
        early_stop_wer: Optional[float] = None,
        eval_every: int = 1,
        log_path: Optional[str] = None,
    ):
        self.streams = streams
        self.widths = widths
        self.temporal_strides = temporal_strides
        self.spatial_strides = spatial_strides
        self.d_rep = d_rep
        self.freeze_block1 = freeze_block1
        self.lateral = lateral
        self.lateral_levels = lateral_levels
        self.spn = spn
        self.spn_streams = spn_streams
        self.joint_head = joint_head
        self.lambda_video = lambda_video
        self.lambda_keypoint = lambda_keypoint
        self.distill_weight = distill_weight
        self.heatmap_sigma = heatmap_sigma
        self.keypoint_groups = keypoint_groups
        self.bn_eval = bn_eval
        self.epochs = epochs
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.weight_decay = weight_decay
        self.seed = seed
        self.augment = augment
        self.crop_range = crop_range
        self.rate_range = rate_range
        self.beam_width = beam_width
        self.early_stop_wer = early_stop_wer
        self.eval_every = eval_every
        self.log_path = log_path

    # ------------------------------------------------------------- assembly

    @property
    def uses_video(self) -> bool:
        return "video" in self.streams

    @property
    def uses_keypoints(self) -> bool:
        return "keypoint" in self.streams

    def _geometry_from(self, sample: SampleRecord) -> dict:
        geo = {}
        if self.uses_video:
            geo["video_hw"] = (int(sample.video.shape[1]), int(sample.video.shape[2]))
        if self.uses_keypoints:
            geo["heat_hw"] = (int(sample.heat_height), int(sample.heat_width))
            traj = sample.trajectory
            if self.keypoint_groups is not None:
                geo["kp_indices"] = tuple(
                    group_subsets(traj.layout, set(self.keypoint_groups))
                )
                geo["kp_channels"] = len(geo["kp_indices"])
            else:
                geo["kp_indices"] = None
                geo["kp_channels"] = traj.keypoints
        return geo

    def _build_config(self, vocab_size: int, geo: dict) -> RecognizerConfig:
        dual = self.uses_video and self.uses_keypoints
        video_cfg = None
        if self.uses_video:
            video_cfg = StreamConfig(
                in_channels=3,
                in_height=geo["video_hw"][0],
                in_width=geo["video_hw"][1],
                widths=self.widths,
                temporal_strides=self.temporal_strides,
                spatial_strides=self.spatial_strides,
                freeze_block1=self.freeze_block1,
            )
        keypoint_cfg = None
        if self.uses_keypoints:
            keypoint_cfg = StreamConfig(
                in_channels=geo["kp_channels"],
                in_height=geo["heat_hw"][0],
                in_width=geo["heat_hw"][1],
                widths=self.widths,
                temporal_strides=self.temporal_strides,
                spatial_strides=self.spatial_strides,
                freeze_block1=self.freeze_block1,
            )
        return RecognizerConfig(
            vocab_size=vocab_size,
            video=video_cfg,
            keypoint=keypoint_cfg,
            d_rep=self.d_rep,
            lateral_mode=self.lateral if dual else "none",
            lateral_levels=tuple(self.lateral_levels) if dual else (),
            spn_levels=tuple(self.spn),
            spn_streams=tuple(s for s in self.spn_streams if s in self.streams),
            joint_head=self.joint_head and dual,
            lambda_video=self.lambda_video,
            lambda_keypoint=self.lambda_keypoint,
            distill_weight=self.distill_weight,
        )

    def _heatmap_cfg(self, geo: dict) -> Optional[HeatmapConfig]:
        if not self.uses_keypoints:
            return None
        return HeatmapConfig(
            sigma=self.heatmap_sigma,
            height=geo["heat_hw"][0],
            width=geo["heat_hw"][1],
        )

    def _train_options(self) -> TrainOptions:
        return TrainOptions(
            epochs=self.epochs,
            batch_size=self.batch_size,
            base_lr=self.base_lr,
            weight_decay=self.weight_decay,
            seed=self.seed,
            augment=self.augment,
            crop_range=tuple(self.crop_range),
            rate_range=tuple(self.rate_range),
            beam_width=self.beam_width,
            early_stop_wer=self.early_stop_wer,
            eval_every=self.eval_every,
        )

    def build_unfitted(
        self, samples: Sequence[SampleRecord], vocab: Optional[GlossVocab] = None
    ) -> "SignRecognizer":
        """Construct model state from data geometry without training."""
        samples = check_sample_batch(
            samples, need_video=self.uses_video, need_keypoints=self.uses_keypoints
        )
        if not self.streams or any(s not in ("video", "keypoint") for s in self.streams):
            raise ConfigError(f"streams must draw from video/keypoint, got {self.streams}")
        if vocab is None:
            labels = sorted({g for s in samples for g in s.glosses})
            vocab = GlossVocab(labels)
        check_gloss_coverage(samples, set(vocab.labels))
        geo = self._geometry_from(samples[0])
        self.vocab_ = vocab
        self.geometry_ = geo
        self.heatmap_cfg_ = self._heatmap_cfg(geo)
        self.kp_indices_ = geo.get("kp_indices")
        self.config_ = self._build_config(vocab.size, geo)
        if self.bn_eval not in ("sample", "running"):
            raise ConfigError(f"bn_eval must be 'sample' or 'running', got {self.bn_eval!r}")
        self.model_ = DualStreamRecognizer(self.config_, seed=self.seed, dtype=np.float32)
        self.model_.set_bn_sample_stats(self.bn_eval == "sample")
        self.optimizer_ = Adam(
            [{"params": self.model_.named_parameters(), "lr": self.base_lr}],
            weight_decay=self.weight_decay,
        )
        self.start_epoch_ = 0
        self.history_ = []
        return self

    def fit(
        self,
        samples: Sequence[SampleRecord],
        dev: Sequence[SampleRecord] = (),
        vocab: Optional[GlossVocab] = None,
        init_arrays: Optional[dict] = None,
        epoch_callback=None,
    ) -> "SignRecognizer":
        if not hasattr(self, "model_") or not hasattr(self, "start_epoch_"):
            self.build_unfitted(samples, vocab=vocab)
        if init_arrays:
            loaded, unmatched = self.model_.load_state_arrays(init_arrays)
            self.init_report_ = {"loaded": loaded, "unmatched": unmatched}
        state = RecognizerTrainState(
            model=self.model_,
            optimizer=self.optimizer_,
            start_epoch=self.start_epoch_,
            history=self.history_,
        )
        train_recognizer(
            state,
            list(samples),
            list(dev),
            self.vocab_,
            self._train_options(),
            self.heatmap_cfg_,
            self.kp_indices_,
            log=TrainLog(self.log_path),
            epoch_callback=epoch_callback,
        )
        self.start_epoch_ = state.history[-1].epoch + 1 if state.history else 0
        self.history_ = state.history
        return self

    # ------------------------------------------------------------- inference

    def _inputs(self, sample: SampleRecord):
        return prepare_inputs(
            sample, self.heatmap_cfg_, self.kp_indices_,
            self.uses_video, self.uses_keypoints,
        )

    def predict_posteriors(self, sample: SampleRecord) -> tuple[FramePosteriors, int]:
        check_is_fitted(self)
        model = self.model_
        was = model.training
        model.eval()
        try:
            video, heat = self._inputs(sample)
            out = model.forward(video, heat, use_spn=False)
        finally:
            model.train(was)
        return FramePosteriors(out.ensemble), out.valid_length

    def predict(self, samples: Sequence[SampleRecord]) -> list[list[str]]:
        check_is_fitted(self)
        hyps = []
        for sample in samples:
            posteriors, valid = self.predict_posteriors(sample)
            ids = prefix_beam_decode(posteriors.probs, self.beam_width, input_length=valid)
            hyps.append(self.vocab_.decode(ids))
        return hyps

    def wer(self, samples: Sequence[SampleRecord]) -> float:
        check_is_fitted(self)
        score, _ = evaluate_recognizer(
            self.model_, list(samples), self.vocab_, self.heatmap_cfg_,
            self.kp_indices_, self.beam_width,
        )
        return score

    def score(self, samples: Sequence[SampleRecord], y=None) -> float:
        """Negative corpus WER, so larger is better."""
        return -self.wer(samples)

    # ----------------------------------------------------------- persistence

    def save(self, path_prefix: str) -> None:
        check_is_fitted(self)
        arrays = dict(self.model_.state_arrays())
        arrays.update(self.optimizer_.state_arrays())
        meta = {
            "format": CKPT_FORMAT,
            "kind": "recognizer",
            "params": _params_to_meta(self),
            "geometry": json.dumps(self.geometry_, default=list),
            "gloss_vocab": json.dumps(self.vocab_.labels),
            "epoch": str(self.start_epoch_),
        }
        checkpoint.save(path_prefix, arrays, meta)

    @classmethod
    def load(cls, path_prefix: str) -> "SignRecognizer":
        arrays, meta = checkpoint.load(path_prefix)
        if meta.get("kind") != "recognizer":
            raise ConfigError(f"checkpoint {path_prefix} is not a recognizer")
        est = cls(**_params_from_meta(meta["params"]))
        geo = {k: _tuplify(v) for k, v in json.loads(meta["geometry"]).items()}
        if geo.get("kp_indices") is not None:
            geo["kp_indices"] = tuple(geo["kp_indices"])
        vocab = GlossVocab(json.loads(meta["gloss_vocab"]))
        est.vocab_ = vocab
        est.geometry_ = geo
        est.heatmap_cfg_ = est._heatmap_cfg(geo) if est.uses_keypoints else None
        est.kp_indices_ = geo.get("kp_indices")
        est.config_ = est._build_config(vocab.size, geo)
        est.model_ = DualStreamRecognizer(est.config_, seed=est.seed, dtype=np.float32)
        est.model_.set_bn_sample_stats(est.bn_eval == "sample")
        est.model_.load_state_arrays(arrays)
        est.optimizer_ = Adam(
            [{"params": est.model_.named_parameters(), "lr": est.base_lr}],
            weight_decay=est.weight_decay,
        )
        est.optimizer_.load_state_arrays(arrays)
        est.start_epoch_ = int(meta.get("epoch", "0"))
        est.history_ = []
        return est


class GlossTranslator(BaseEstimator):
    """Sequence-to-sequence gloss-to-text translator (word-level tokens)."""

    def __init__(
        self,
        d_model: int = 64,
        heads: int = 4,
        ffn_width: int = 128,
        enc_layers: int = 2,
        dec_layers: int = 2,
        dropout: float = 0.1,
        max_len: int = 24,
        epochs: int = 30,
        batch_size: int = 4,
        base_lr: float = 1e-3,
        weight_decay: float = 1e-3,
        seed: int = 0,
        beam_width: int = 5,
        eval_every: int = 5,
    ):
        self.d_model = d_model
        self.heads = heads
        self.ffn_width = ffn_width
        self.enc_layers = enc_layers
        self.dec_layers = dec_layers
        self.dropout = dropout
        self.max_len = max_len
        self.epochs = epochs
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.weight_decay = weight_decay
        self.seed = seed
        self.beam_width = beam_width
        self.eval_every = eval_every

    @staticmethod
    def _as_pairs(data) -> list[tuple[list[str], list[str]]]:
        pairs = []
        for item in data:
            if isinstance(item, SampleRecord):
                pairs.append((list(item.glosses), list(item.text)))
            else:
                glosses, text = item
                pairs.append((list(glosses), list(text)))
        return pairs

    def fit(
        self,
        data,
        dev=(),
        gloss_vocab: Optional[GlossVocab] = None,
        text_vocab: Optional[TextVocab] = None,
    ) -> "GlossTranslator":
        pairs = self._as_pairs(data)
        if not pairs:
            raise ValueError("no gloss-text pairs to train on")
        if gloss_vocab is None:
            gloss_vocab = GlossVocab(sorted({g for gl, _ in pairs for g in gl}))
        if text_vocab is None:
            text_vocab = TextVocab(sorted({w for _, tx in pairs for w in tx}))
        self.gloss_vocab_ = gloss_vocab
        self.text_vocab_ = text_vocab
        cfg = TranslatorConfig(
            vocab_size=text_vocab.size,
            d_model=self.d_model,
            heads=self.heads,
            ffn_width=self.ffn_width,
            enc_layers=self.enc_layers,
            dec_layers=self.dec_layers,
            dropout=self.dropout,
            max_len=self.max_len,
            src_vocab_size=gloss_vocab.total_symbols,
        )
        self.translator_ = Seq2SeqTranslator(
            cfg, np.random.default_rng([self.seed, 11]), dtype=np.float32
        )
        opt = Adam(
            [{"params": self.translator_.named_parameters(), "lr": self.base_lr}],
            weight_decay=self.weight_decay,
        )
        dev_pairs = self._as_pairs(dev)
        n = len(pairs)
        self.history_ = []
        for epoch in range(self.epochs):
            lr = cosine_lr(epoch, self.epochs, self.base_lr)
            for group in opt.groups:
                group["lr"] = lr
            self.translator_.train()
            order = np.random.default_rng([self.seed, 12, epoch]).permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, self.batch_size):
                losses = []
                for idx in order[start : start + self.batch_size]:
                    glosses, text = pairs[int(idx)]
                    if not text:
                        continue
                    rng = np.random.default_rng([self.seed, 13, epoch, int(idx)])
                    src = self._encode_source(glosses)
                    tgt = self.text_vocab_.encode(text)
                    losses.append(
                        translation_loss(self.translator_, src, tgt, self.text_vocab_, rng=rng)
                    )
                if not losses:
                    continue
                total = losses[0]
                for t in losses[1:]:
                    total = total + t
                total = total * (1.0 / len(losses))
                opt.zero_grad()
                total.backward()
                opt.step()
                epoch_loss += float(total.data)
            stats = EpochStats(
                epoch=epoch, lr=lr,
                breakdown=LossBreakdown(translation=epoch_loss / max(n, 1)),
            )
            if dev_pairs and (epoch % self.eval_every == 0 or epoch == self.epochs - 1):
                stats.dev_bleu4 = self._dev_bleu(dev_pairs)
            self.history_.append(stats)
        return self

    def _encode_source(self, glosses: Sequence[str]) -> np.ndarray:
        ids = self.gloss_vocab_.encode(glosses)
        return np.asarray(ids if ids else [0], dtype=np.int64)  # blank for empty input

    def _dev_bleu(self, dev_pairs) -> float:
        hyps = self.predict([gl for gl, _ in dev_pairs])
        refs = [tx for _, tx in dev_pairs]
        return bleu(refs, [h.split() for h in hyps])[3]

    def predict(self, gloss_seqs: Sequence[Sequence[str]]) -> list[str]:
        check_is_fitted(self, "translator_")
        outs = []
        for glosses in gloss_seqs:
            ids = multi_source_beam_decode(
                [self.translator_],
                [self._encode_source(glosses)],
                self.text_vocab_,
                beam_width=self.beam_width,
                max_len=self.max_len,
            )
            outs.append(" ".join(self.text_vocab_.decode(ids)))
        return outs

    def score(self, data, y=None) -> float:
        """Corpus BLEU-4 of predicted texts."""
        pairs = self._as_pairs(data)
        hyps = self.predict([gl for gl, _ in pairs])
        return bleu([tx for _, tx in pairs], [h.split() for h in hyps])[3]

    def save(self, path_prefix: str) -> None:
        check_is_fitted(self, "translator_")
        arrays = {f"translator.{k}": v.data for k, v in
                  self.translator_.named_parameters().items()}
        meta = {
            "format": CKPT_FORMAT,
            "kind": "gloss2text",
            "params": _params_to_meta(self),
            "gloss_vocab": json.dumps(self.gloss_vocab_.labels),
            "text_vocab": json.dumps(self.text_vocab_.words),
        }
        checkpoint.save(path_prefix, arrays, meta)

    @classmethod
    def load(cls, path_prefix: str) -> "GlossTranslator":
        arrays, meta = checkpoint.load(path_prefix)
        if meta.get("kind") != "gloss2text":
            raise ConfigError(f"checkpoint {path_prefix} is not a gloss translator")
        est = cls(**_params_from_meta(meta["params"]))
        est.gloss_vocab_ = GlossVocab(json.loads(meta["gloss_vocab"]))
        est.text_vocab_ = TextVocab(json.loads(meta["text_vocab"]))
        cfg = TranslatorConfig(
            vocab_size=est.text_vocab_.size,
            d_model=est.d_model,
            heads=est.heads,
            ffn_width=est.ffn_width,
            enc_layers=est.enc_layers,
            dec_layers=est.dec_layers,
            dropout=est.dropout,
            max_len=est.max_len,
            src_vocab_size=est.gloss_vocab_.total_symbols,
        )
        est.translator_ = Seq2SeqTranslator(
            cfg, np.random.default_rng([est.seed, 11]), dtype=np.float32
        )
        est.translator_.load_state_arrays(
            {k[len("translator."):]: v for k, v in arrays.items()}
        )
        est.history_ = []
        return est


class SignTranslator(BaseEstimator):
    """Direct sign-to-text translation over a fitted recognizer.

    One MLP adapter and one translation network attach to every head of
    the underlying recognizer. The encoder backbones stay frozen during
    fitting (their pooled features are cached per sample), while the head
    networks, adapters, and translators train under split learning rates.
    Decoding averages the per-step token distributions of all heads.
    """

    def __init__(
        self,
        recognizer: Optional[SignRecognizer] = None,
        d_model: int = 64,
        heads: int = 4,
        ffn_width: int = 128,
        enc_layers: int = 2,
        dec_layers: int = 2,
        dropout: float = 0.1,
        max_len: int = 24,
        adapter_hidden: int = 64,
        epochs: int = 40,
        batch_size: int = 4,
        head_lr: float = 1e-3,
        translator_lr: float = 1e-3,
        weight_decay: float = 1e-3,
        seed: int = 0,
        beam_width: int = 5,
        eval_every: int = 5,
        freeze_backbone: bool = True,
        log_path: Optional[str] = None,
    ):
        self.recognizer = recognizer
        self.d_model = d_model
        self.heads = heads
        self.ffn_width = ffn_width
        self.enc_layers = enc_layers
        self.dec_layers = dec_layers
        self.dropout = dropout
        self.max_len = max_len
        self.adapter_hidden = adapter_hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.head_lr = head_lr
        self.translator_lr = translator_lr
        self.weight_decay = weight_decay
        self.seed = seed
        self.beam_width = beam_width
        self.eval_every = eval_every
        self.freeze_backbone = freeze_backbone
        self.log_path = log_path

    # ------------------------------------------------------------- assembly

    def _head_names(self) -> list[str]:
        model = self.recognizer.model_
        names = []
        if model.cfg.video is not None:
            names.append("video")
        if model.cfg.keypoint is not None:
            names.append("keypoint")
        if model.cfg.joint_head:
            names.append("joint")
        return names

    def _build(self, text_vocab: TextVocab, init_translator_arrays: Optional[dict]) -> None:
        check_is_fitted(self.recognizer)
        self.text_vocab_ = text_vocab
        cfg = TranslatorConfig(
            vocab_size=text_vocab.size,
            d_model=self.d_model,
            heads=self.heads,
            ffn_width=self.ffn_width,
            enc_layers=self.enc_layers,
            dec_layers=self.dec_layers,
            dropout=self.dropout,
            max_len=self.max_len,
        )
        self.translator_cfg_ = cfg
        self.adapters_ = {}
        self.translators_ = {}
        self.init_report_ = {}
        d_rep = self.recognizer.model_.cfg.d_rep
        for i, name in enumerate(self._head_names()):
            rng = np.random.default_rng([self.seed, 21, i])
            self.adapters_[name] = MlpAdapter(
                d_rep, self.adapter_hidden, self.d_model, rng, np.float32
            )
            translator = Seq2SeqTranslator(cfg, rng, dtype=np.float32)
            if init_translator_arrays:
                loaded, unmatched = translator.load_state_arrays(init_translator_arrays)
                self.init_report_[name] = {"loaded": len(loaded), "unmatched": unmatched}
            self.translators_[name] = translator

    def _freeze_backbones(self) -> None:
        model = self.recognizer.model_
        if model.video is not None:
            model.video.freeze()
        if model.keypoint is not None:
            model.keypoint.freeze()
        for lateral in model.laterals:
            lateral.freeze()
        for stream in ("video", "keypoint"):
            spn = getattr(model, f"{stream}_spn", None)
            if spn is not None:
                spn.freeze()

    def _trainable_groups(self) -> list[dict]:
        model = self.recognizer.model_
        head_params = {}
        for name in self._head_names():
            head = getattr(model, f"{name}_head")
            head_params.update(
                {f"{name}_head.{k}": v for k, v in head.named_parameters().items()}
            )
        aux_params = {}
        for name in self._head_names():
            aux_params.update(
                {f"adapters.{name}.{k}": v
                 for k, v in self.adapters_[name].named_parameters().items()}
            )
            aux_params.update(
                {f"translators.{name}.{k}": v
                 for k, v in self.translators_[name].named_parameters().items()}
            )
        return [
            {"params": head_params, "lr": self.head_lr},
            {"params": aux_params, "lr": self.translator_lr},
        ]

    def _cached_pooled(self, sample: SampleRecord) -> tuple[dict, int]:
        key = sample.sample_id
        if key not in self._pooled_cache:
            model = self.recognizer.model_
            was = model.training
            model.eval()
            try:
                video, heat = self.recognizer._inputs(sample)
                self._pooled_cache[key] = model.pooled_features(video, heat)
            finally:
                model.train(was)
        return self._pooled_cache[key]

    # ------------------------------------------------------------------ fit

    def fit(
        self,
        samples: Sequence[SampleRecord],
        dev: Sequence[SampleRecord] = (),
        text_vocab: Optional[TextVocab] = None,
        init_translator_arrays: Optional[dict] = None,
    ) -> "SignTranslator":
        if self.recognizer is None:
            raise ConfigError("SignTranslator needs a fitted recognizer")
        samples = check_sample_batch(
            samples,
            need_video=self.recognizer.uses_video,
            need_keypoints=self.recognizer.uses_keypoints,
        )
        if text_vocab is None:
            text_vocab = TextVocab(sorted({w for s in samples for w in s.text}))
        self._build(text_vocab, init_translator_arrays)
        if self.freeze_backbone:
            self._freeze_backbones()
        self._pooled_cache: dict = {}
        opt = Adam(self._trainable_groups(), weight_decay=self.weight_decay)
        self.optimizer_ = opt
        model = self.recognizer.model_
        gloss_vocab = self.recognizer.vocab_
        log = TrainLog(self.log_path)
        n = len(samples)
        self.history_ = []
        for epoch in range(self.epochs):
            lr_scale = cosine_lr(epoch, self.epochs, 1.0)
            opt.groups[0]["lr"] = self.head_lr * lr_scale
            opt.groups[1]["lr"] = self.translator_lr * lr_scale
            model.train()
            for tr in self.translators_.values():
                tr.train()
            order = np.random.default_rng([self.seed, 22, epoch]).permutation(n)
            sums = {"slr": 0.0, "translation": 0.0}
            for start in range(0, n, self.batch_size):
                losses = []
                for idx in order[start : start + self.batch_size]:
                    sample = samples[int(idx)]
                    if not sample.text:
                        continue
                    pooled, valid = self._cached_pooled(sample)
                    out = model.heads_from_pooled(pooled, valid)
                    rec_loss, bd = recognition_loss(
                        out, gloss_vocab.encode(sample.glosses), model.cfg
                    )
                    rng = np.random.default_rng([self.seed, 23, epoch, int(idx)])
                    t_losses = []
                    tgt = text_vocab.encode(sample.text)
                    for name in self._head_names():
                        memory = self.adapters_[name](out.heads[name].gloss_rep)
                        t_losses.append(
                            translation_loss(
                                self.translators_[name], memory, tgt, text_vocab, rng=rng
                            )
                        )
                    total = slt_loss(rec_loss, t_losses)
                    sums["slr"] += float(rec_loss.data)
                    sums["translation"] += sum(float(t.data) for t in t_losses)
                    losses.append(total)
                if not losses:
                    continue
                batch_total = losses[0]
                for t in losses[1:]:
                    batch_total = batch_total + t
                batch_total = batch_total * (1.0 / len(losses))
                opt.zero_grad()
                batch_total.backward()
                opt.step()
            breakdown = LossBreakdown(
                translation=sums["translation"] / n,
                slr=sums["slr"] / n,
                slt=(sums["slr"] + sums["translation"]) / n,
            )
            stats = EpochStats(
                epoch=epoch, lr=self.translator_lr * lr_scale, breakdown=breakdown
            )
            if dev and (epoch % self.eval_every == 0 or epoch == self.epochs - 1):
                stats.dev_bleu4 = self.score(dev)
            self.history_.append(stats)
            log.append(stats)
        return self

    # ------------------------------------------------------------- inference

    def predict(self, samples: Sequence[SampleRecord]) -> list[str]:
        check_is_fitted(self, "translators_")
        model = self.recognizer.model_
        was = model.training
        model.eval()
        outs = []
        try:
            for sample in samples:
                pooled, valid = self._cached_pooled(sample)
                out = model.heads_from_pooled(pooled, valid)
                names = self._head_names()
                memories = [
                    self.adapters_[name](out.heads[name].gloss_rep).data for name in names
                ]
                ids = multi_source_beam_decode(
                    [self.translators_[name] for name in names],
                    memories,
                    self.text_vocab_,
                    beam_width=self.beam_width,
                    max_len=self.max_len,
                )
                outs.append(" ".join(self.text_vocab_.decode(ids)))
        finally:
            model.train(was)
        return outs

    def predict_via_gloss(
        self, samples: Sequence[SampleRecord], gloss_translator: GlossTranslator
    ) -> list[str]:
        """Two-stage pipeline: recognize glosses, then translate them."""
        gloss_seqs = self.recognizer.predict(samples)
        return gloss_translator.predict(gloss_seqs)

    def score(self, samples: Sequence[SampleRecord], y=None) -> float:
        """Corpus BLEU-4 of direct sign-to-text decoding."""
        hyps = self.predict(samples)
        refs = [list(s.text) for s in samples]
        return bleu(refs, [h.split() for h in hyps])[3]

    # ----------------------------------------------------------- persistence

    def save(self, path_prefix: str) -> None:
        check_is_fitted(self, "translators_")
        arrays = {}
        for k, v in self.recognizer.model_.state_arrays().items():
            arrays[f"recognizer.{k}"] = v
        for name in self._head_names():
            for k, v in self.adapters_[name].state_arrays().items():
                arrays[f"adapters.{name}.{k}"] = v
            for k, v in self.translators_[name].state_arrays().items():
                arrays[f"translators.{name}.{k}"] = v
        params = {k: v for k, v in self.get_params().items() if k != "recognizer"}
        meta = {
            "format": CKPT_FORMAT,
            "kind": "slt",
            "params": json.dumps(params, sort_keys=True, default=list),
            "recognizer_params": _params_to_meta(self.recognizer),
            "recognizer_geometry": json.dumps(self.recognizer.geometry_, default=list),
            "gloss_vocab": json.dumps(self.recognizer.vocab_.labels),
            "text_vocab": json.dumps(self.text_vocab_.words),
        }
        checkpoint.save(path_prefix, arrays, meta)

    @classmethod
    def load(cls, path_prefix: str) -> "SignTranslator":
        arrays, meta = checkpoint.load(path_prefix)
        if meta.get("kind") != "slt":
            raise ConfigError(f"checkpoint {path_prefix} is not a translation model")
        recognizer = SignRecognizer(**_params_from_meta(meta["recognizer_params"]))
        geo = {k: _tuplify(v) for k, v in json.loads(meta["recognizer_geometry"]).items()}
        if geo.get("kp_indices") is not None:
            geo["kp_indices"] = tuple(geo["kp_indices"])
        vocab = GlossVocab(json.loads(meta["gloss_vocab"]))
        recognizer.vocab_ = vocab
        recognizer.geometry_ = geo
        recognizer.heatmap_cfg_ = (
            recognizer._heatmap_cfg(geo) if recognizer.uses_keypoints else None
        )
        recognizer.kp_indices_ = geo.get("kp_indices")
        recognizer.config_ = recognizer._build_config(vocab.size, geo)
        recognizer.model_ = DualStreamRecognizer(
            recognizer.config_, seed=recognizer.seed, dtype=np.float32
        )
        recognizer.model_.set_bn_sample_stats(recognizer.bn_eval == "sample")
        recognizer.model_.load_state_arrays(arrays, prefix="recognizer.")
        recognizer.optimizer_ = Adam(
            [{"params": recognizer.model_.named_parameters(), "lr": recognizer.base_lr}],
            weight_decay=recognizer.weight_decay,
        )
        recognizer.start_epoch_ = 0
        recognizer.history_ = []

        est = cls(recognizer=recognizer, **_params_from_meta(meta["params"]))
        est._build(TextVocab(json.loads(meta["text_vocab"])), None)
        for name in est._head_names():
            est.adapters_[name].load_state_arrays(arrays, prefix=f"adapters.{name}.")
            est.translators_[name].load_state_arrays(arrays, prefix=f"translators.{name}.")
        est._pooled_cache = {}
        est.history_ = []
        return est
