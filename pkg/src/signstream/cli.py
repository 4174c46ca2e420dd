"""Command-line entry points for the staged pipeline.

Commands: gen-data, pretrain-stream, train-slr, train-slt,
pretrain-gloss2text, eval, decode, verify. Exit codes: 0 on success, 1 on
failure, 2 on configuration errors. Relative checkpoint paths resolve
under $SIGNSTREAM_CKPT_ROOT when that variable is set.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from typing import Optional

from .config import (
    RunConfig,
    _RUN_FIELDS,
    dump_corpus_config,
    dump_run_config,
    load_corpus_config,
    load_run_config,
)
from .corpus import gen_corpus, load_dataset, manifest_digest
from .ctc import prefix_beam_decode, read_posterior_file
from .errors import ConfigError
from .estimators import GlossTranslator, SignRecognizer, SignTranslator
from .metrics import bleu, corpus_rouge_l, corpus_wer, format_alignment
from .vocab import GlossVocab

CKPT_ROOT_ENV = "SIGNSTREAM_CKPT_ROOT"


def resolve_path(path: str) -> str:
    root = os.environ.get(CKPT_ROOT_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def _add_run_overrides(parser: argparse.ArgumentParser) -> None:
    for name in _RUN_FIELDS:
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, default=None)


def _run_config(args) -> RunConfig:
    overrides = {name: getattr(args, name) for name in _RUN_FIELDS if hasattr(args, name)}
    return load_run_config(args.config, overrides)


def _prepare_out_dir(out: str, overwrite: bool, resume: bool) -> str:
    out = resolve_path(out)
    marker = os.path.join(out, "model.idx")
    if os.path.exists(marker) and not overwrite and not resume:
        raise RuntimeError(
            f"checkpoint directory {out} already holds a model; "
            "pass --overwrite or --resume"
        )
    os.makedirs(out, exist_ok=True)
    return out


def _estimator_kwargs(cfg: RunConfig, streams: tuple) -> dict:
    return dict(
        streams=streams,
        widths=cfg.widths,
        temporal_strides=cfg.temporal_strides,
        spatial_strides=cfg.spatial_strides,
        d_rep=cfg.d_rep,
        freeze_block1=cfg.freeze_block1,
        lateral=cfg.lateral,
        lateral_levels=cfg.lateral_levels,
        spn=cfg.spn,
        spn_streams=cfg.spn_streams,
        joint_head=cfg.joint_head,
        lambda_video=cfg.lambda_video,
        lambda_keypoint=cfg.lambda_keypoint,
        distill_weight=cfg.distill_weight,
        heatmap_sigma=cfg.heatmap_sigma,
        keypoint_groups=cfg.keypoint_groups,
        bn_eval=cfg.bn_eval,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        base_lr=cfg.base_lr,
        weight_decay=cfg.weight_decay,
        seed=cfg.seed,
        augment=cfg.augment,
        crop_range=(cfg.crop_min, cfg.crop_max),
        rate_range=(cfg.rate_min, cfg.rate_max),
        beam_width=cfg.beam_width,
        early_stop_wer=cfg.early_stop_wer,
        eval_every=cfg.eval_every,
    )


def _load_splits(cfg: RunConfig):
    if not cfg.dataset:
        raise ConfigError("no dataset configured (set [run] dataset or --dataset)")
    ds = load_dataset(cfg.dataset)
    return ds, ds.load_split("train"), ds.load_split("dev")


def _echo_epoch(stats) -> None:
    wer = "" if stats.dev_wer is None else f"\tdev_wer={stats.dev_wer:.2f}"
    print(f"epoch {stats.epoch}\tlr={stats.lr:.6f}\tloss={stats.breakdown.slr:.4f}{wer}")


# ------------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    overrides = {"seed": args.seed} if args.seed is not None else {}
    cfg = load_corpus_config(args.config, overrides)
    manifest = gen_corpus(cfg, args.out)
    dump_corpus_config(cfg, os.path.join(args.out, "effective_corpus.ini"))
    print(f"manifest {manifest}")
    print(f"digest {manifest_digest(manifest)}")
    return 0


def cmd_pretrain_stream(args) -> int:
    cfg = _run_config(args)
    if args.stream not in ("video", "keypoint"):
        raise ConfigError(f"--stream must be video or keypoint, got {args.stream}")
    out = _prepare_out_dir(args.out, args.overwrite, args.resume)
    ds, train, dev = _load_splits(cfg)
    # pretraining stage: one stream under a single CTC loss, no pyramid,
    # no lateral exchange, no joint head
    kwargs = _estimator_kwargs(cfg, streams=(args.stream,))
    kwargs.update(spn=(), spn_streams=(), lateral="none", lateral_levels=(),
                  joint_head=False, log_path=os.path.join(out, "train_log.tsv"))
    if args.resume and os.path.exists(os.path.join(out, "model.idx")):
        est = SignRecognizer.load(os.path.join(out, "model"))
        est.log_path = os.path.join(out, "train_log.tsv")
        est.epochs = cfg.epochs
        est.fit(train, dev=dev, epoch_callback=_echo_epoch)
    else:
        est = SignRecognizer(**kwargs)
        est.fit(train, dev=dev, vocab=ds.gloss_vocab, epoch_callback=_echo_epoch)
    est.save(os.path.join(out, "model"))
    dump_run_config(cfg, os.path.join(out, "effective.ini"))
    print(f"checkpoint {os.path.join(out, 'model')}")
    if est.history_ and est.history_[-1].dev_wer is not None:
        print(f"final dev WER {est.history_[-1].dev_wer:.2f}")
    return 0


def cmd_train_slr(args) -> int:
    cfg = _run_config(args)
    out = _prepare_out_dir(args.out, args.overwrite, args.resume)
    ds, train, dev = _load_splits(cfg)
    if args.resume and os.path.exists(os.path.join(out, "model.idx")):
        est = SignRecognizer.load(os.path.join(out, "model"))
        est.log_path = os.path.join(out, "train_log.tsv")
        est.epochs = cfg.epochs
        est.fit(train, dev=dev, epoch_callback=_echo_epoch)
    else:
        init_arrays = {}
        if not args.from_scratch:
            if not (args.init_video and args.init_keypoint):
                raise ConfigError(
                    "train-slr needs --init-video and --init-keypoint "
                    "checkpoints (or --from-scratch)"
                )
            from .autodiff import checkpoint as ckpt

            for path in (args.init_video, args.init_keypoint):
                arrays, _ = ckpt.load(resolve_path(path))
                init_arrays.update(
                    {k: v for k, v in arrays.items() if not k.startswith("adam.")}
                )
        kwargs = _estimator_kwargs(cfg, streams=("video", "keypoint"))
        kwargs["log_path"] = os.path.join(out, "train_log.tsv")
        est = SignRecognizer(**kwargs)
        est.build_unfitted(train, vocab=ds.gloss_vocab)
        est.fit(train, dev=dev, init_arrays=init_arrays or None,
                epoch_callback=_echo_epoch)
        if getattr(est, "init_report_", None):
            unmatched = est.init_report_["unmatched"]
            print(f"loaded {len(est.init_report_['loaded'])} pretrained entries; "
                  f"{len(unmatched)} freshly initialized")
            for name in unmatched:
                print(f"  new: {name}")
    est.save(os.path.join(out, "model"))
    dump_run_config(cfg, os.path.join(out, "effective.ini"))
    print(f"checkpoint {os.path.join(out, 'model')}")
    if est.history_ and est.history_[-1].dev_wer is not None:
        print(f"final dev WER {est.history_[-1].dev_wer:.2f}")
    return 0


def cmd_pretrain_gloss2text(args) -> int:
    cfg = _run_config(args)
    out = _prepare_out_dir(args.out, args.overwrite, False)
    ds, train, dev = _load_splits(cfg)
    est = GlossTranslator(
        d_model=cfg.t_d_model, heads=cfg.t_heads, ffn_width=cfg.t_ffn_width,
        enc_layers=cfg.t_enc_layers, dec_layers=cfg.t_dec_layers,
        dropout=cfg.t_dropout, max_len=cfg.t_max_len, epochs=cfg.epochs,
        batch_size=cfg.batch_size, base_lr=cfg.base_lr,
        weight_decay=cfg.weight_decay, seed=cfg.seed, beam_width=cfg.beam_width,
        eval_every=cfg.eval_every,
    )
    est.fit(train, dev=dev, gloss_vocab=ds.gloss_vocab, text_vocab=ds.text_vocab)
    est.save(os.path.join(out, "model"))
    dump_run_config(cfg, os.path.join(out, "effective.ini"))
    print(f"checkpoint {os.path.join(out, 'model')}")
    finals = [h.dev_bleu4 for h in est.history_ if h.dev_bleu4 is not None]
    if finals:
        print(f"final dev BLEU-4 {finals[-1]:.2f}")
    return 0


def cmd_train_slt(args) -> int:
    cfg = _run_config(args)
    out = _prepare_out_dir(args.out, args.overwrite, False)
    ds, train, dev = _load_splits(cfg)
    if not args.init_slr:
        raise ConfigError("train-slt needs --init-slr")
    recognizer = SignRecognizer.load(resolve_path(args.init_slr))
    init_translator = None
    if args.init_gloss2text:
        from .autodiff import checkpoint as ckpt

        arrays, _ = ckpt.load(resolve_path(args.init_gloss2text))
        init_translator = {
            k[len("translator."):]: v for k, v in arrays.items()
            if k.startswith("translator.")
        }
    est = SignTranslator(
        recognizer=recognizer,
        d_model=cfg.t_d_model, heads=cfg.t_heads, ffn_width=cfg.t_ffn_width,
        enc_layers=cfg.t_enc_layers, dec_layers=cfg.t_dec_layers,
        dropout=cfg.t_dropout, max_len=cfg.t_max_len,
        adapter_hidden=cfg.t_adapter_hidden,
        epochs=cfg.epochs, batch_size=cfg.batch_size, head_lr=cfg.head_lr,
        translator_lr=cfg.translator_lr, weight_decay=cfg.weight_decay,
        seed=cfg.seed, beam_width=cfg.beam_width, eval_every=cfg.eval_every,
        freeze_backbone=cfg.freeze_backbone,
        log_path=os.path.join(out, "train_log.tsv"),
    )
    est.fit(train, dev=dev, text_vocab=ds.text_vocab,
            init_translator_arrays=init_translator)
    est.save(os.path.join(out, "model"))
    dump_run_config(cfg, os.path.join(out, "effective.ini"))
    print(f"checkpoint {os.path.join(out, 'model')}")
    finals = [h.dev_bleu4 for h in est.history_ if h.dev_bleu4 is not None]
    if finals:
        print(f"final dev BLEU-4 {finals[-1]:.2f}")
    return 0


def _slr_report(est: SignRecognizer, ds, splits) -> str:
    lines = ["# task=slr"]
    summary = []
    for split in splits:
        samples = ds.load_split(split)
        lines.append(f"## split={split}")
        score, per_sample = corpus_wer(
            [s.glosses for s in samples],
            est.predict(samples),
        )
        for sample, (wer_val, alignment) in zip(samples, per_sample):
            lines.append(
                f"{sample.sample_id}\t{wer_val:.2f}\t{format_alignment(alignment)}"
            )
        summary.append((split.capitalize(), score))
    lines.append("## summary")
    lines.append("split\tWER")
    for name, score in summary:
        lines.append(f"{name}\t{score:.2f}")
    return "\n".join(lines) + "\n"


def _slt_report(task: str, hypotheses_by_split: dict, ds) -> str:
    lines = [f"# task={task}", "## summary", "split\tR\tB1\tB2\tB3\tB4"]
    body = []
    for split, hyps in hypotheses_by_split.items():
        samples = ds.load_split(split)
        refs = [list(s.text) for s in samples]
        hyp_tokens = [h.split() for h in hyps]
        b = bleu(refs, hyp_tokens)
        r = corpus_rouge_l(refs, hyp_tokens)
        lines.append(
            f"{split.capitalize()}\t{r:.2f}\t{b[0]:.2f}\t{b[1]:.2f}\t{b[2]:.2f}\t{b[3]:.2f}"
        )
        body.append(f"## split={split}")
        for s, h in zip(samples, hyps):
            body.append(f"{s.sample_id}\t{h}")
    return "\n".join(lines + body) + "\n"


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    ds = load_dataset(cfg.dataset) if cfg.dataset else None
    if ds is None:
        raise ConfigError("eval needs a dataset")
    splits = ("dev", "test") if args.split == "both" else (args.split,)
    ckpt_path = resolve_path(args.checkpoint)
    if args.task == "slr":
        est = SignRecognizer.load(ckpt_path)
        report = _slr_report(est, ds, splits)
    elif args.task == "slt-sign2text":
        est = SignTranslator.load(ckpt_path)
        hyps = {split: est.predict(ds.load_split(split)) for split in splits}
        report = _slt_report(args.task, hyps, ds)
    elif args.task == "slt-sign2gloss2text":
        if not args.gloss2text:
            raise ConfigError("slt-sign2gloss2text needs --gloss2text")
        est = SignTranslator.load(ckpt_path)
        g2t = GlossTranslator.load(resolve_path(args.gloss2text))
        hyps = {
            split: est.predict_via_gloss(ds.load_split(split), g2t) for split in splits
        }
        report = _slt_report(args.task, hyps, ds)
    else:
        raise ConfigError(f"unknown eval task {args.task}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report)
        print(f"report {args.out}")
    else:
        sys.stdout.write(report)
    return 0


def cmd_decode(args) -> int:
    posteriors = read_posterior_file(args.posteriors)
    vocab = GlossVocab.from_file(args.vocab)
    if posteriors.probs.shape[1] != vocab.total_symbols:
        raise ConfigError(
            f"posterior width {posteriors.probs.shape[1]} does not match "
            f"vocabulary of {vocab.total_symbols} symbols"
        )
    ids = prefix_beam_decode(posteriors.probs, beam_width=args.beam_width)
    print(" ".join(vocab.decode(ids)))
    return 0


def cmd_verify(args) -> int:
    from . import verify

    ok = verify.run_all(fast=not args.full)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signstream",
        description="dual-stream sign recognition and translation at desk scale",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain-stream", help="train one encoder stream with a single CTC loss")
    p.add_argument("--config", default=None)
    p.add_argument("--stream", required=True, choices=("video", "keypoint"))
    p.add_argument("--out", required=True)
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("--resume", action="store_true")
    _add_run_overrides(p)
    p.set_defaults(func=cmd_pretrain_stream)

    p = sub.add_parser("train-slr", help="train the fused recognition model")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--init-video", default=None)
    p.add_argument("--init-keypoint", default=None)
    p.add_argument("--from-scratch", action="store_true")
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("--resume", action="store_true")
    _add_run_overrides(p)
    p.set_defaults(func=cmd_train_slr)

    p = sub.add_parser("pretrain-gloss2text", help="train the gloss-to-text translator")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--overwrite", action="store_true")
    _add_run_overrides(p)
    p.set_defaults(func=cmd_pretrain_gloss2text)

    p = sub.add_parser("train-slt", help="train translation heads over a recognizer")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--init-slr", required=True)
    p.add_argument("--init-gloss2text", default=None)
    p.add_argument("--overwrite", action="store_true")
    _add_run_overrides(p)
    p.set_defaults(func=cmd_train_slt)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--config", default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", default="slr",
                   choices=("slr", "slt-sign2text", "slt-sign2gloss2text"))
    p.add_argument("--split", default="both", choices=("dev", "test", "both"))
    p.add_argument("--gloss2text", default=None)
    p.add_argument("--out", default=None)
    _add_run_overrides(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("decode", help="beam-decode a posterior dump file")
    p.add_argument("--posteriors", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--beam-width", type=int, default=5)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("verify", help="run the oracle verification suites")
    p.add_argument("--full", action="store_true")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
