"""Recognition and translation metrics: WER, BLEU-1..4, ROUGE-L.

WER comes from a minimum-edit-distance alignment (substitution, deletion,
insertion all cost 1) and is reported as a percentage of the reference
length; it is deliberately not clamped, so insertion-heavy hypotheses can
exceed 100. BLEU is corpus-level modified n-gram precision with a brevity
penalty; ROUGE-L is the LCS-based F-measure.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

Tokens = Sequence[str]

# Alignment op tags, in backtrace preference order.
MATCH, SUB, DEL, INS = "match", "sub", "del", "ins"

_ANSI = {SUB: "\x1b[31m", DEL: "\x1b[33m", INS: "\x1b[32m"}
_RESET = "\x1b[0m"


@dataclass
class EditAlignment:
    substitutions: int
    deletions: int
    insertions: int
    matches: int
    ops: list[tuple[str, Optional[str], Optional[str]]] = field(default_factory=list)

    @property
    def reference_length(self) -> int:
        return self.substitutions + self.deletions + self.matches

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def wer(reference: Tokens, hypothesis: Tokens) -> tuple[float, EditAlignment]:
    """Word error rate in percent, plus the minimizing alignment.

    Backtrace ties resolve in the order match > substitution > deletion >
    insertion, matching how the qualitative examples are annotated.
    """
    ref, hyp = list(reference), list(hypothesis)
    if not ref:
        raise ValueError("WER needs a non-empty reference")
    N, M = len(ref), len(hyp)
    d = np.zeros((N + 1, M + 1), dtype=np.int64)
    d[:, 0] = np.arange(N + 1)
    d[0, :] = np.arange(M + 1)
    for i in range(1, N + 1):
        for j in range(1, M + 1):
            sub_cost = d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            d[i, j] = min(sub_cost, d[i - 1, j] + 1, d[i, j - 1] + 1)

    ops: list[tuple[str, Optional[str], Optional[str]]] = []
    i, j = N, M
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and d[i, j] == d[i - 1, j - 1]:
            ops.append((MATCH, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + 1:
            ops.append((SUB, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            ops.append((DEL, ref[i - 1], None))
            i = i - 1
        else:
            ops.append((INS, None, hyp[j - 1]))
            j = j - 1
    ops.reverse()

    counts = Counter(tag for tag, _, _ in ops)
    alignment = EditAlignment(
        substitutions=counts[SUB],
        deletions=counts[DEL],
        insertions=counts[INS],
        matches=counts[MATCH],
        ops=ops,
    )
    return 100.0 * alignment.errors / N, alignment


def corpus_wer(
    references: Iterable[Tokens], hypotheses: Iterable[Tokens]
) -> tuple[float, list[tuple[float, EditAlignment]]]:
    """Pooled WER over samples: total errors over total reference length."""
    per_sample = [wer(r, h) for r, h in zip(references, hypotheses)]
    total_err = sum(a.errors for _, a in per_sample)
    total_len = sum(a.reference_length for _, a in per_sample)
    return 100.0 * total_err / max(total_len, 1), per_sample


def format_alignment(alignment: EditAlignment, color: bool = False) -> str:
    """One-line rendering with substitution/deletion/insertion markers."""
    parts = []
    for tag, ref_tok, hyp_tok in alignment.ops:
        if tag == MATCH:
            parts.append(hyp_tok)
            continue
        token = {SUB: hyp_tok, DEL: ref_tok, INS: hyp_tok}[tag]
        text = f"[{tag.upper()}:{token}]"
        parts.append(f"{_ANSI[tag]}{text}{_RESET}" if color else text)
    return " ".join(parts)


# ----------------------------------------------------------------------- BLEU


def _ngram_counts(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    references: Sequence[Tokens],
    hypotheses: Sequence[Tokens],
    max_n: int = 4,
    smooth: bool = True,
) -> list[float]:
    """Cumulative corpus BLEU-1..BLEU-max_n in percent.

    With `smooth`, an order whose clipped match count is zero gets add-one
    smoothing, but only when some hypothesis segment is shorter than that
    order (otherwise a zero count is a real zero). Disable for exact
    hand-derived checks.
    """
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    if len(references) != len(hypotheses):
        raise ValueError("references and hypotheses must pair up")
    matches = [0] * (max_n + 1)
    totals = [0] * (max_n + 1)
    ref_len = hyp_len = 0
    for ref, hyp in zip(references, hypotheses):
        ref, hyp = list(ref), list(hyp)
        ref_len += len(ref)
        hyp_len += len(hyp)
        for n in range(1, max_n + 1):
            hyp_counts = _ngram_counts(hyp, n)
            ref_counts = _ngram_counts(ref, n)
            matches[n] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
            totals[n] += max(len(hyp) - n + 1, 0)
    if hyp_len == 0:
        return [0.0] * max_n

    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    short_segment = [
        any(len(list(h)) < n for h in hypotheses) for n in range(max_n + 1)
    ]
    log_precisions: list[float] = []
    scores: list[float] = []
    for n in range(1, max_n + 1):
        m, t = matches[n], totals[n]
        if m == 0 and smooth and n >= 2 and short_segment[n]:
            p = (m + 1.0) / (t + 1.0)
        elif m == 0 or t == 0:
            p = 0.0
        else:
            p = m / t
        if p == 0.0:
            scores.append(0.0)
            log_precisions.append(-math.inf)
            continue
        log_precisions.append(math.log(p))
        if any(lp == -math.inf for lp in log_precisions):
            scores.append(0.0)
        else:
            scores.append(100.0 * bp * math.exp(sum(log_precisions) / n))
    return scores


# -------------------------------------------------------------------- ROUGE-L


def lcs_length(a: Tokens, b: Tokens) -> int:
    a, b = list(a), list(b)
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(reference: Tokens, hypothesis: Tokens, beta_sq: float = 1.0) -> float:
    """LCS F-measure in percent; beta_sq=1 weighs recall and precision equally."""
    ref, hyp = list(reference), list(hypothesis)
    if not ref or not hyp:
        return 0.0
    lcs = lcs_length(ref, hyp)
    if lcs == 0:
        return 0.0
    recall = lcs / len(ref)
    precision = lcs / len(hyp)
    f = (1.0 + beta_sq) * recall * precision / (recall + beta_sq * precision)
    return 100.0 * f


def corpus_rouge_l(references: Sequence[Tokens], hypotheses: Sequence[Tokens]) -> float:
    if not references:
        return 0.0
    return float(np.mean([rouge_l(r, h) for r, h in zip(references, hypotheses)]))
