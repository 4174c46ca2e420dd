"""Self-contained oracle suites behind the `verify` CLI command.

Each suite checks one part of the pipeline against an independent route:
CTC against full path enumeration, gradients against central finite
differences, decoders against exhaustive search, heatmaps against the
closed-form Gaussian, metrics against hand-derived values, checkpoints
against byte equality. Prints one PASS/FAIL line per suite.
"""

from __future__ import annotations

import itertools
import tempfile
import time
from typing import Callable

import numpy as np

from . import ctc as ctc_mod
from .autodiff import Tensor, checkpoint, log_softmax
from .autodiff.gradcheck import check_tensor_gradients
from .heatmaps import HeatmapConfig, KeypointTrajectory, rasterize
from .metrics import bleu, rouge_l, wer


def _random_posteriors(rng, T, n_symbols):
    z = rng.normal(size=(T, n_symbols)) * 1.5
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def suite_ctc_oracle(instances: int = 200) -> tuple[bool, str]:
    rng = np.random.default_rng(1234)
    worst = 0.0
    checked = 0
    while checked < instances:
        T = int(rng.integers(1, 7))
        V = int(rng.integers(1, 5))
        U = int(rng.integers(0, 4))
        target = rng.integers(1, V + 1, size=U).tolist()
        if ctc_mod.required_frames(target) > T:
            continue
        probs = _random_posteriors(rng, T, V + 1)
        expected = -np.log(ctc_mod.ctc_brute_force(probs, target))
        got = ctc_mod.ctc_loss(np.log(probs), target).item()
        worst = max(worst, abs(got - expected))
        checked += 1
    return worst < 1e-6, f"{checked} instances, max |diff| {worst:.2e}"


def suite_ctc_gradient(instances: int = 10) -> tuple[bool, str]:
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(instances):
        lp = Tensor(rng.normal(size=(5, 4)), requires_grad=True, name="lp")
        target = [int(rng.integers(1, 4)) for _ in range(int(rng.integers(1, 3)))]
        errs = check_tensor_gradients(
            lambda: ctc_mod.ctc_loss(log_softmax(lp), target), [lp]
        )
        worst = max(worst, max(errs.values()))
    return worst < 1e-4, f"max rel err {worst:.2e}"


def suite_op_gradients() -> tuple[bool, str]:
    from .autodiff import conv_spatial, conv_temporal, softmax, transposed_conv_spatial

    rng = np.random.default_rng(7)
    worst = 0.0
    x = Tensor(rng.normal(size=(2, 4, 4, 2)), requires_grad=True, name="x")
    w = Tensor(rng.normal(size=(3, 3, 2, 3)), requires_grad=True, name="w")
    errs = check_tensor_gradients(
        lambda: (conv_spatial(x, w, stride=2, pad=1) ** 2.0).sum(), [x, w]
    )
    worst = max(worst, max(errs.values()))
    xt = Tensor(rng.normal(size=(6, 3)), requires_grad=True, name="xt")
    wt = Tensor(rng.normal(size=(3, 3, 4)), requires_grad=True, name="wt")
    errs = check_tensor_gradients(
        lambda: (conv_temporal(xt, wt, stride=2, pad=1) ** 2.0).sum(), [xt, wt]
    )
    worst = max(worst, max(errs.values()))
    xu = Tensor(rng.normal(size=(2, 2, 2, 2)), requires_grad=True, name="xu")
    wu = Tensor(rng.normal(size=(2, 2, 2, 2)), requires_grad=True, name="wu")
    errs = check_tensor_gradients(
        lambda: (transposed_conv_spatial(xu, wu, stride=2) ** 2.0).sum(), [xu, wu]
    )
    worst = max(worst, max(errs.values()))
    xs = Tensor(rng.normal(size=(3, 5)), requires_grad=True, name="xs")
    coeff = Tensor(rng.normal(size=(3, 5)))
    errs = check_tensor_gradients(lambda: (softmax(xs) * coeff).sum(), [xs])
    worst = max(worst, max(errs.values()))
    return worst < 1e-4, f"max rel err {worst:.2e}"


def suite_model_gradient() -> tuple[bool, str]:
    from .models.recognizer import DualStreamRecognizer, RecognizerConfig, recognition_loss
    from .models.streams import StreamConfig

    cfg = RecognizerConfig(
        vocab_size=3,
        video=StreamConfig(3, 8, 8, widths=(4, 4, 6, 8)),
        keypoint=StreamConfig(5, 4, 4, widths=(4, 4, 6, 8)),
        d_rep=8,
    )
    model = DualStreamRecognizer(cfg, seed=3, dtype=np.float64)
    rng = np.random.default_rng(4)
    video = rng.uniform(0, 1, size=(8, 8, 8, 3))
    heat = rng.uniform(0, 1, size=(8, 4, 4, 5))
    target = [1, 2]
    teacher = model.forward(video, heat, use_spn=True).ensemble

    def loss_fn():
        out = model.forward(video, heat, use_spn=True)
        return recognition_loss(out, target, cfg, teacher_probs=teacher)[0]

    params = model.named_parameters()
    picks = [
        "video.blocks.0.sconv.w", "keypoint.blocks.1.tconv.w", "laterals.0.down.w",
        "laterals.2.up.w", "video_head.classifier.w", "joint_head.proj.b",
        "video_spn.fuse3.up_t.w", "keypoint_spn.head3.bn.gamma",
    ]
    errs = check_tensor_gradients(loss_fn, {k: params[k] for k in picks})
    worst = max(errs.values())
    return worst < 1e-3, f"{len(picks)} parameters, max rel err {worst:.2e}"


def suite_decode_oracle(instances: int = 30) -> tuple[bool, str]:
    rng = np.random.default_rng(55)
    for i in range(instances):
        T = int(rng.integers(1, 5))
        V = int(rng.integers(1, 4))
        probs = _random_posteriors(rng, T, V + 1)
        best, best_p = [], ctc_mod.ctc_brute_force(probs, [])
        for length in range(1, T + 1):
            for seq in itertools.product(range(1, V + 1), repeat=length):
                if ctc_mod.required_frames(seq) > T:
                    continue
                p = ctc_mod.ctc_brute_force(probs, list(seq))
                if p > best_p or (p == best_p and list(seq) < best):
                    best, best_p = list(seq), p
        got = ctc_mod.prefix_beam_decode(probs, beam_width=100_000)
        if got != best:
            return False, f"instance {i}: beam {got} vs exhaustive {best}"
        greedy = ctc_mod.best_path_decode(probs)
        manual = ctc_mod.collapse(np.argmax(probs, axis=1).tolist())
        if greedy != manual:
            return False, f"instance {i}: best-path mismatch"
    return True, f"{instances} instances"


def suite_heatmap_closed_form() -> tuple[bool, str]:
    rng = np.random.default_rng(21)
    cfg = HeatmapConfig(height=14, width=11, confidence_threshold=0.0)
    if cfg.sigma != 4.0:
        return False, "default sigma is not 4"
    coords = rng.uniform(0, 11, size=(4, 6, 2))
    vol = rasterize(KeypointTrajectory(coords, np.ones((4, 6))), cfg)
    worst = 0.0
    for _ in range(100):
        t, k = int(rng.integers(4)), int(rng.integers(6))
        i, j = int(rng.integers(14)), int(rng.integers(11))
        x, y = coords[t, k]
        expected = np.exp(-((i - x) ** 2 + (j - y) ** 2) / (2 * cfg.sigma ** 2))
        worst = max(worst, abs(vol[t, i, j, k] - expected))
    peak = rasterize(
        KeypointTrajectory(np.array([[[6.0, 5.0]]]), np.ones((1, 1))), cfg
    ).max()
    if peak != 1.0:
        return False, f"on-grid peak {peak} != 1.0"
    return worst < 1e-7, f"100 points, max |diff| {worst:.2e}"


def suite_metric_golden() -> tuple[bool, str]:
    g = [f"g{i}" for i in range(10)]
    cases = [
        (g[:6], g[:1] + g[2:6], 16.67),
        (g[:6], g[:4] + ["x", "y"], 33.33),
        (g[:8], g[:4] + ["ins"] + g[4:8], 12.50),
        (g[:8], g[:3] + g[4:7] + ["ins"] + g[7:8], 25.00),
        (g[:8], g[:2] + ["x", "y", "z"] + g[5:8], 37.50),
        (g[:5], g[:3] + g[4:5], 20.00),
        (g[:5], g[:3] + ["x", "y"], 40.00),
        (g[:6], g[:6], 0.00),
    ]
    for ref, hyp, expected in cases:
        got, _ = wer(ref, hyp)
        if abs(round(got, 2) - expected) > 0.005:
            return False, f"wer({ref},{hyp}) = {got:.2f}, expected {expected}"
    b1 = bleu([["a", "b", "c", "d"]], [["a", "b", "c", "d", "e"]], smooth=False)[0]
    if abs(b1 - 80.0) > 1e-6:
        return False, f"BLEU-1 {b1} != 80"
    r = rouge_l(["a", "b", "c", "d"], ["a", "c", "d"])
    if abs(r - 100.0 * 1.5 / 1.75) > 1e-6:
        return False, f"ROUGE-L {r}"
    return True, f"{len(cases)} WER cases plus BLEU/ROUGE hand values"


def suite_checkpoint_roundtrip() -> tuple[bool, str]:
    rng = np.random.default_rng(31)
    arrays = {
        "a.w": rng.normal(size=(5, 3)).astype(np.float32),
        "b": rng.normal(size=(11,)).astype(np.float32),
    }
    with tempfile.TemporaryDirectory() as tmp:
        checkpoint.save(tmp + "/ck", arrays, {"k": "v"})
        loaded, meta = checkpoint.load(tmp + "/ck")
    ok = meta.get("k") == "v" and all(
        loaded[k].tobytes() == arrays[k].tobytes() for k in arrays
    )
    return ok, "bit-exact float32 round trip"


SUITES: dict[str, Callable[[], tuple[bool, str]]] = {
    "ctc_oracle": suite_ctc_oracle,
    "ctc_gradient": suite_ctc_gradient,
    "op_gradients": suite_op_gradients,
    "model_gradient": suite_model_gradient,
    "decode_oracle": suite_decode_oracle,
    "heatmap_closed_form": suite_heatmap_closed_form,
    "metric_golden": suite_metric_golden,
    "checkpoint_roundtrip": suite_checkpoint_roundtrip,
}


def run_all(fast: bool = True) -> bool:
    """Run every suite; print one PASS/FAIL line each; True when all pass."""
    all_ok = True
    for name, suite in SUITES.items():
        start = time.time()
        if name == "ctc_oracle" and not fast:
            ok, detail = suite_ctc_oracle(instances=1000)
        elif name == "decode_oracle" and not fast:
            ok, detail = suite_decode_oracle(instances=200)
        else:
            ok, detail = suite()
        elapsed = time.time() - start
        status = "PASS" if ok else "FAIL"
        print(f"{status} {name}: {detail} ({elapsed:.1f}s)")
        all_ok = all_ok and ok
    return all_ok
