"""Gloss and text vocabularies with plain one-token-per-line files."""

from __future__ import annotations

from typing import Iterable, Sequence

from .errors import ConfigError

BLANK_TOKEN = "<blank>"
PAD_TOKEN = "<pad>"
LANG_TOKEN = "<lid>"
EOS_TOKEN = "</s>"


class GlossVocab:
    """Gloss labels with the CTC blank reserved at index 0."""

    def __init__(self, labels: Sequence[str]):
        labels = list(labels)
        if len(set(labels)) != len(labels):
            raise ConfigError("gloss labels must be unique")
        if BLANK_TOKEN in labels:
            raise ConfigError(f"{BLANK_TOKEN} is reserved")
        self.labels = labels
        self._index = {lab: i + 1 for i, lab in enumerate(labels)}

    @property
    def size(self) -> int:
        """Number of real glosses, excluding the blank."""
        return len(self.labels)

    @property
    def total_symbols(self) -> int:
        return len(self.labels) + 1

    def encode(self, tokens: Iterable[str]) -> list[int]:
        try:
            return [self._index[t] for t in tokens]
        except KeyError as exc:
            raise ConfigError(f"unknown gloss {exc.args[0]!r}") from None

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            if not 1 <= i <= len(self.labels):
                raise ConfigError(f"gloss id {i} out of range")
            out.append(self.labels[i - 1])
        return out

    def to_file(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(BLANK_TOKEN + "\n")
            for lab in self.labels:
                fh.write(lab + "\n")

    @classmethod
    def from_file(cls, path: str) -> "GlossVocab":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
        if not lines or lines[0] != BLANK_TOKEN:
            raise ConfigError(f"gloss vocabulary must start with {BLANK_TOKEN}")
        return cls(lines[1:])


class TextVocab:
    """Word-level text vocabulary with PAD=0, language-id=1, EOS=2."""

    SPECIALS = (PAD_TOKEN, LANG_TOKEN, EOS_TOKEN)

    def __init__(self, words: Sequence[str]):
        words = list(words)
        for s in self.SPECIALS:
            if s in words:
                raise ConfigError(f"{s} is reserved")
        if len(set(words)) != len(words):
            raise ConfigError("text tokens must be unique")
        self.words = words
        self._index = {w: i + len(self.SPECIALS) for i, w in enumerate(words)}

    pad_id, lang_id, eos_id = 0, 1, 2

    @property
    def size(self) -> int:
        return len(self.words) + len(self.SPECIALS)

    def encode(self, tokens: Iterable[str], add_specials: bool = True) -> list[int]:
        try:
            ids = [self._index[t] for t in tokens]
        except KeyError as exc:
            raise ConfigError(f"unknown text token {exc.args[0]!r}") from None
        return [self.lang_id] + ids + [self.eos_id] if add_specials else ids

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            if i in (self.pad_id, self.lang_id, self.eos_id):
                continue
            k = i - len(self.SPECIALS)
            if not 0 <= k < len(self.words):
                raise ConfigError(f"text id {i} out of range")
            out.append(self.words[k])
        return out

    def to_file(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.SPECIALS:
                fh.write(tok + "\n")
            for w in self.words:
                fh.write(w + "\n")

    @classmethod
    def from_file(cls, path: str) -> "TextVocab":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
        if tuple(lines[:3]) != cls.SPECIALS:
            raise ConfigError("text vocabulary must start with the reserved specials")
        return cls(lines[3:])
