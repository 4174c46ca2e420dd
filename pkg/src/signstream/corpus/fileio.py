"""On-disk corpus layout: manifest, annotations, vocabularies, sample blobs.

Video file: one text header line "T H W 3" followed by little-endian
float32 pixels. The manifest starts with "# key=value" header lines
(format tag, config digest, config JSON) and then one tab-separated row
per sample: id, video path, keypoint path, their sha256 digests, T, U, W,
split, appearance tag. Paths are relative to the manifest directory.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from ..errors import ConfigError, CorruptionError
from ..heatmaps import read_keypoint_file, write_keypoint_file
from ..vocab import GlossVocab, TextVocab
from .generator import CorpusConfig, SampleRecord, build_prototypes, generate_sample
from .grammar import Grammar

MANIFEST_NAME = "manifest.tsv"
ANNOTATIONS_NAME = "annotations.tsv"
GLOSS_VOCAB_NAME = "gloss_vocab.txt"
TEXT_VOCAB_NAME = "text_vocab.txt"
FORMAT_TAG = "signstream-corpus-v1"


def write_video_file(path: str, video: np.ndarray) -> None:
    T, H, W, C = video.shape
    if C != 3:
        raise ConfigError(f"video must have 3 channels, got {C}")
    with open(path, "wb") as fh:
        fh.write(f"{T} {H} {W} {C}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(video, dtype="<f4").tobytes())


def read_video_file(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        T, H, W, C = (int(v) for v in fh.readline().split())
        raw = np.frombuffer(fh.read(T * H * W * C * 4), dtype="<f4")
    return raw.reshape(T, H, W, C).copy()


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_digest(cfg: CorpusConfig) -> str:
    canonical = json.dumps(dataclasses.asdict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class ManifestRow:
    sample_id: str
    video_path: str
    keypoint_path: str
    video_sha: str
    keypoint_sha: str
    frames: int
    gloss_len: int
    text_len: int
    split: str
    appearance: int


def gen_corpus(cfg: CorpusConfig, out_dir: str) -> str:
    """Write the full corpus under `out_dir`; returns the manifest path."""
    os.makedirs(os.path.join(out_dir, "samples"), exist_ok=True)
    labels = cfg.gloss_labels()
    grammar = Grammar(cfg.grammar_id, labels)
    prototypes = {p.gloss: p for p in build_prototypes(cfg)}

    GlossVocab(labels).to_file(os.path.join(out_dir, GLOSS_VOCAB_NAME))
    TextVocab(grammar.text_tokens()).to_file(os.path.join(out_dir, TEXT_VOCAB_NAME))

    rows: list[ManifestRow] = []
    annotations: list[str] = []
    for split, count in cfg.split_sizes().items():
        for index in range(count):
            record = generate_sample(cfg, prototypes, grammar, split, index)
            vid_rel = f"samples/{record.sample_id}.vid"
            kp_rel = f"samples/{record.sample_id}.kp"
            write_video_file(os.path.join(out_dir, vid_rel), record.video)
            write_keypoint_file(os.path.join(out_dir, kp_rel), record.trajectory)
            rows.append(
                ManifestRow(
                    sample_id=record.sample_id,
                    video_path=vid_rel,
                    keypoint_path=kp_rel,
                    video_sha=sha256_file(os.path.join(out_dir, vid_rel)),
                    keypoint_sha=sha256_file(os.path.join(out_dir, kp_rel)),
                    frames=record.frames,
                    gloss_len=len(record.glosses),
                    text_len=len(record.text),
                    split=split,
                    appearance=record.appearance,
                )
            )
            annotations.append(
                "\t".join(
                    [record.sample_id, " ".join(record.glosses), " ".join(record.text)]
                )
            )

    with open(os.path.join(out_dir, ANNOTATIONS_NAME), "w", encoding="utf-8") as fh:
        fh.write("\n".join(annotations) + ("\n" if annotations else ""))

    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(f"# format={FORMAT_TAG}\n")
        fh.write(f"# config_digest={config_digest(cfg)}\n")
        fh.write(f"# config={json.dumps(dataclasses.asdict(cfg), sort_keys=True)}\n")
        for r in rows:
            fh.write(
                "\t".join(
                    [
                        r.sample_id,
                        r.video_path,
                        r.keypoint_path,
                        r.video_sha,
                        r.keypoint_sha,
                        str(r.frames),
                        str(r.gloss_len),
                        str(r.text_len),
                        r.split,
                        str(r.appearance),
                    ]
                )
                + "\n"
            )
    return manifest_path


def manifest_digest(manifest_path: str) -> str:
    return sha256_file(manifest_path)


class Dataset:
    """Streaming reader over a generated corpus, verifying file digests."""

    def __init__(self, manifest_path: str):
        self.root = os.path.dirname(os.path.abspath(manifest_path))
        self.manifest_path = manifest_path
        self.meta: dict[str, str] = {}
        self.rows: list[ManifestRow] = []
        with open(manifest_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                if line.startswith("# "):
                    key, _, value = line[2:].partition("=")
                    self.meta[key] = value
                    continue
                f = line.split("\t")
                self.rows.append(
                    ManifestRow(f[0], f[1], f[2], f[3], f[4], int(f[5]), int(f[6]),
                                int(f[7]), f[8], int(f[9]))
                )
        if self.meta.get("format") != FORMAT_TAG:
            raise CorruptionError(f"unrecognized manifest format in {manifest_path}")
        self.annotations: dict[str, tuple[list[str], list[str]]] = {}
        with open(os.path.join(self.root, ANNOTATIONS_NAME), "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                sample_id, glosses, text = (line.split("\t") + ["", ""])[:3]
                self.annotations[sample_id] = (glosses.split(), text.split())
        self.gloss_vocab = GlossVocab.from_file(os.path.join(self.root, GLOSS_VOCAB_NAME))
        self.text_vocab = TextVocab.from_file(os.path.join(self.root, TEXT_VOCAB_NAME))
        self.config = (
            CorpusConfig(**json.loads(self.meta["config"])) if "config" in self.meta else None
        )
        self._cache: dict[str, SampleRecord] = {}

    def rows_for(self, split: Optional[str] = None) -> list[ManifestRow]:
        return [r for r in self.rows if split is None or r.split == split]

    def load(self, row: ManifestRow, verify: bool = True) -> SampleRecord:
        if row.sample_id in self._cache:
            return self._cache[row.sample_id]
        vid_path = os.path.join(self.root, row.video_path)
        kp_path = os.path.join(self.root, row.keypoint_path)
        if verify:
            if sha256_file(vid_path) != row.video_sha:
                raise CorruptionError(f"digest mismatch for {row.video_path}")
            if sha256_file(kp_path) != row.keypoint_sha:
                raise CorruptionError(f"digest mismatch for {row.keypoint_path}")
        glosses, text = self.annotations[row.sample_id]
        record = SampleRecord(
            sample_id=row.sample_id,
            video=read_video_file(vid_path),
            trajectory=read_keypoint_file(kp_path),
            glosses=glosses,
            text=text,
            split=row.split,
            appearance=row.appearance,
            heat_height=self.config.heatmap_height if self.config else 16,
            heat_width=self.config.heatmap_width if self.config else 16,
        )
        self._cache[row.sample_id] = record
        return record

    def samples(self, split: Optional[str] = None, verify: bool = True
                ) -> Iterator[SampleRecord]:
        for row in self.rows_for(split):
            yield self.load(row, verify=verify)

    def load_split(self, split: str, verify: bool = True) -> list[SampleRecord]:
        return list(self.samples(split, verify=verify))

    def shuffled_rows(self, split: str, seed: int) -> list[ManifestRow]:
        rows = self.rows_for(split)
        order = np.random.default_rng(seed).permutation(len(rows))
        return [rows[i] for i in order]


def load_dataset(manifest_path: str) -> Dataset:
    return Dataset(manifest_path)
