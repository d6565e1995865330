"""pxre: prompt-template fine-tuning and zero-shot cross-lingual transfer
for relation extraction, plus a parallel-corpus dataset builder."""

from .data import AUTO, Dataset, LabelSpace, RelationInstance, load_jsonl
from .experiment import (
    ExperimentConfig,
    TrainedModel,
    evaluate,
    select_checkpoint,
    train,
    zero_shot_eval,
)
from .metrics import metrics
from .model import BackboneConfig, BackboneStates, TransformerBackbone
from .noise import apply_noise
from .templates import (
    PromptTemplate,
    RenderedPair,
    Verbalizer,
    builtin_templates,
    parse_template_spec,
    render,
    wrap_language_ids,
)
from .vocab import Vocab, build_vocab, encode_tokens

__version__ = "0.1.0"

__all__ = [
    "AUTO",
    "Dataset",
    "LabelSpace",
    "RelationInstance",
    "load_jsonl",
    "ExperimentConfig",
    "TrainedModel",
    "evaluate",
    "select_checkpoint",
    "train",
    "zero_shot_eval",
    "metrics",
    "BackboneConfig",
    "BackboneStates",
    "TransformerBackbone",
    "apply_noise",
    "PromptTemplate",
    "RenderedPair",
    "Verbalizer",
    "builtin_templates",
    "parse_template_spec",
    "render",
    "wrap_language_ids",
    "Vocab",
    "build_vocab",
    "encode_tokens",
]
