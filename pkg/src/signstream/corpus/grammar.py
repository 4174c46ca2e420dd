"""Deterministic, invertible gloss-to-text grammars for the synthetic corpus.

The default "reorder" grammar reverses the gloss order, maps each gloss to
its word form, inserts a marker token after every word from the even gloss
class, and closes non-empty sentences with a final token. Every step is a
bijection or position-recoverable insertion, so the composite map is
injective and has an exact inverse, while generally changing the sequence
length.
"""

from __future__ import annotations

from typing import Sequence

from ..errors import ConfigError

MARKER_TOKEN = "em"
FINAL_TOKEN = "fin"

GRAMMAR_IDS = ("reorder", "identity")


class Grammar:
    def __init__(self, grammar_id: str, gloss_labels: Sequence[str]):
        if grammar_id not in GRAMMAR_IDS:
            raise ConfigError(f"unknown grammar {grammar_id!r}")
        self.grammar_id = grammar_id
        self.gloss_labels = list(gloss_labels)
        self._gloss_set = set(self.gloss_labels)
        if grammar_id == "reorder":
            self._word = {g: g.lower() for g in self.gloss_labels}
            if len(set(self._word.values())) != len(self._word):
                raise ConfigError("gloss labels collide after lowercasing")
            self._gloss_of_word = {w: g for g, w in self._word.items()}
            self._class_a = {
                g for i, g in enumerate(self.gloss_labels) if i % 2 == 0
            }

    def text_tokens(self) -> list[str]:
        """Every token the grammar can emit, for building the text vocabulary."""
        if self.grammar_id == "identity":
            return list(self.gloss_labels)
        return sorted(self._word.values()) + [MARKER_TOKEN, FINAL_TOKEN]

    def map(self, glosses: Sequence[str]) -> list[str]:
        for g in glosses:
            if g not in self._gloss_set:
                raise ConfigError(f"unknown gloss {g!r}")
        if self.grammar_id == "identity":
            return list(glosses)
        out: list[str] = []
        for g in reversed(list(glosses)):
            out.append(self._word[g])
            if g in self._class_a:
                out.append(MARKER_TOKEN)
        if out:
            out.append(FINAL_TOKEN)
        return out

    def inverse(self, text: Sequence[str]) -> list[str]:
        if self.grammar_id == "identity":
            return list(text)
        tokens = list(text)
        if tokens and tokens[-1] == FINAL_TOKEN:
            tokens = tokens[:-1]
        words = [t for t in tokens if t != MARKER_TOKEN]
        glosses = []
        for w in words:
            if w not in self._gloss_of_word:
                raise ConfigError(f"token {w!r} is not a gloss word")
            glosses.append(self._gloss_of_word[w])
        return list(reversed(glosses))
