from .recognizer import (
    DualStreamRecognizer,
    LossBreakdown,
    RecognizerConfig,
    RecognizerOutput,
    pad_to_multiple,
    recognition_loss,
    slr_predict,
)
from .streams import HeadNetwork, HeadOutput, StreamConfig, StreamEncoder
from .translator import (
    MlpAdapter,
    Seq2SeqTranslator,
    TranslatorConfig,
    multi_source_beam_decode,
    slt_loss,
    translation_loss,
)

__all__ = [
    "DualStreamRecognizer",
    "HeadNetwork",
    "HeadOutput",
    "LossBreakdown",
    "MlpAdapter",
    "RecognizerConfig",
    "RecognizerOutput",
    "Seq2SeqTranslator",
    "StreamConfig",
    "StreamEncoder",
    "TranslatorConfig",
    "multi_source_beam_decode",
    "pad_to_multiple",
    "recognition_loss",
    "slr_predict",
    "slt_loss",
    "translation_loss",
]
