"""Plain-text run configuration: INI sections mapped onto dataclasses.

Every command-line flag corresponds one-to-one to a config key; flags
override file values, and the effective configuration is dumped next to
each checkpoint so a run is fully reconstructable from its artifacts.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from typing import Optional

from .corpus.generator import CorpusConfig
from .errors import ConfigError


@dataclass
class RunConfig:
    # [run]
    seed: int = 0
    epochs: int = 40
    batch_size: int = 4
    base_lr: float = 1e-3
    weight_decay: float = 1e-3
    beam_width: int = 5
    early_stop_wer: Optional[float] = None
    eval_every: int = 1
    augment: bool = True
    crop_min: float = 0.7
    crop_max: float = 1.0
    rate_min: float = 0.5
    rate_max: float = 1.5
    heatmap_sigma: float = 2.0
    bn_eval: str = "sample"
    dataset: str = ""
    # [model]
    streams: tuple = ("video", "keypoint")
    widths: tuple = (16, 32, 48, 64)
    temporal_strides: tuple = (1, 1, 2, 2)
    spatial_strides: tuple = (2, 1, 2, 2)
    d_rep: int = 64
    freeze_block1: bool = False
    lateral: str = "bidirectional"
    lateral_levels: tuple = ("c1", "c2", "c3")
    spn: tuple = ("p2", "p3")
    spn_streams: tuple = ("video", "keypoint")
    joint_head: bool = True
    lambda_video: float = 0.2
    lambda_keypoint: float = 0.5
    distill_weight: float = 1.0
    keypoint_groups: Optional[tuple] = None
    # [translator]
    t_d_model: int = 64
    t_heads: int = 4
    t_ffn_width: int = 128
    t_enc_layers: int = 2
    t_dec_layers: int = 2
    t_dropout: float = 0.1
    t_max_len: int = 24
    t_adapter_hidden: int = 64
    head_lr: float = 1e-3
    translator_lr: float = 1e-3
    freeze_backbone: bool = True


_RUN_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_MODEL_KEYS = {
    "streams", "widths", "temporal_strides", "spatial_strides", "d_rep",
    "freeze_block1", "lateral", "lateral_levels", "spn", "spn_streams",
    "joint_head", "lambda_video", "lambda_keypoint", "distill_weight",
    "keypoint_groups",
}
_TRANSLATOR_KEYS = {
    "t_d_model", "t_heads", "t_ffn_width", "t_enc_layers", "t_dec_layers",
    "t_dropout", "t_max_len", "t_adapter_hidden", "head_lr", "translator_lr",
    "freeze_backbone",
}

# fields whose defaults do not reveal the parse type
_OPTIONAL_FLOAT = {"early_stop_wer"}
_OPTIONAL_STR_TUPLE = {"keypoint_groups"}


def _section_of(name: str) -> str:
    if name in _MODEL_KEYS:
        return "model"
    if name in _TRANSLATOR_KEYS:
        return "translator"
    return "run"


def parse_value(name: str, text: str, default):
    """Parse one config value using the field's default as the type witness."""
    text = text.strip()
    try:
        if name in _OPTIONAL_FLOAT:
            return None if text.lower() in ("", "none") else float(text)
        if name in _OPTIONAL_STR_TUPLE:
            if text.lower() in ("", "none"):
                return None
            return tuple(v.strip() for v in text.split(",") if v.strip())
        if isinstance(default, bool):
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [v.strip() for v in text.split(",") if v.strip()]
            if default and isinstance(default[0], int):
                return tuple(int(v) for v in items)
            return tuple(items)
        return text
    except ValueError as exc:
        raise ConfigError(f"cannot parse {name}={text!r}: {exc}") from None


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def load_run_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Config file plus flag overrides; overrides win key by key."""
    values: dict = {}
    if path:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        for section in parser.sections():
            for key, text in parser.items(section):
                if key not in _RUN_FIELDS:
                    raise ConfigError(f"unknown config key [{section}] {key} in {path}")
                if _section_of(key) != section:
                    raise ConfigError(
                        f"key {key} belongs in section [{_section_of(key)}], "
                        f"found in [{section}]"
                    )
                values[key] = parse_value(key, text, _RUN_FIELDS[key].default)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _RUN_FIELDS:
            raise ConfigError(f"unknown config key {key}")
        if isinstance(value, str):
            value = parse_value(key, value, _RUN_FIELDS[key].default)
        values[key] = value
    return RunConfig(**values)


def dump_run_config(cfg: RunConfig, path: str) -> None:
    sections: dict[str, list[tuple[str, str]]] = {"run": [], "model": [], "translator": []}
    for f in dataclasses.fields(RunConfig):
        sections[_section_of(f.name)].append((f.name, format_value(getattr(cfg, f.name))))
    with open(path, "w", encoding="utf-8") as fh:
        for section in ("run", "model", "translator"):
            fh.write(f"[{section}]\n")
            for key, text in sections[section]:
                fh.write(f"{key} = {text}\n")
            fh.write("\n")


_CORPUS_FIELDS = {f.name: f for f in dataclasses.fields(CorpusConfig)}


def load_corpus_config(path: str, overrides: Optional[dict] = None) -> CorpusConfig:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    if not parser.has_section("corpus"):
        raise ConfigError(f"config {path} has no [corpus] section")
    values = {}
    for key, text in parser.items("corpus"):
        if key not in _CORPUS_FIELDS:
            raise ConfigError(f"unknown corpus key {key} in {path}")
        values[key] = parse_value(key, text, _CORPUS_FIELDS[key].default)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _CORPUS_FIELDS:
            raise ConfigError(f"unknown corpus key {key}")
        if isinstance(value, str):
            value = parse_value(key, value, _CORPUS_FIELDS[key].default)
        values[key] = value
    return CorpusConfig(**values)


def dump_corpus_config(cfg: CorpusConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("[corpus]\n")
        for f in dataclasses.fields(CorpusConfig):
            fh.write(f"{f.name} = {format_value(getattr(cfg, f.name))}\n")
