from .augment import apply_crop, apply_rate, augment
from .fileio import (
    Dataset,
    ManifestRow,
    config_digest,
    gen_corpus,
    load_dataset,
    manifest_digest,
    read_video_file,
    write_video_file,
)
from .generator import (
    CorpusConfig,
    GlossPrototype,
    SampleRecord,
    appearance_background,
    build_prototypes,
    draw_gloss_sequence,
    generate_sample,
    render_sample,
    render_video,
)
from .grammar import Grammar

__all__ = [
    "CorpusConfig",
    "Dataset",
    "GlossPrototype",
    "Grammar",
    "ManifestRow",
    "SampleRecord",
    "appearance_background",
    "apply_crop",
    "apply_rate",
    "augment",
    "build_prototypes",
    "config_digest",
    "draw_gloss_sequence",
    "gen_corpus",
    "generate_sample",
    "load_dataset",
    "manifest_digest",
    "read_video_file",
    "render_sample",
    "render_video",
    "write_video_file",
]
