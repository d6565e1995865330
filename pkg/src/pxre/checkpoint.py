"""Self-describing checkpoint containers (.npz with a JSON metadata entry).

Two kinds: a bare backbone (pretraining output) and a full trained model
(backbone + head + template + label space). Every container carries a
version field that is checked on load.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .experiment import ExperimentConfig, TrainedModel
from .head import ClassifierHead
from .model import BackboneConfig, TransformerBackbone
from .vocab import Vocab

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _vocab_meta(vocab: Vocab) -> dict:
    return {
        "tokens": list(vocab.tokens),
        "languages": list(vocab.languages),
        "n_reserved": vocab.n_reserved,
    }


def _vocab_from_meta(meta: dict) -> Vocab:
    return Vocab(
        tokens=tuple(meta["tokens"]),
        languages=tuple(meta["languages"]),
        n_reserved=meta["n_reserved"],
    )


def _save_container(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    meta = {"version": FORMAT_VERSION, **meta}
    # a file handle keeps numpy from forcing a .npz suffix onto the path
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=json.dumps(meta, ensure_ascii=False), **arrays)


def _load_container(path):
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["__meta__"]))
        arrays = {k: npz[k] for k in npz.files if k != "__meta__"}
    version = meta.get("version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version!r} "
            f"(expected {FORMAT_VERSION})"
        )
    return meta, arrays


def save_backbone(model: TransformerBackbone, path) -> None:
    meta = {
        "kind": "backbone",
        "backbone": model.config.to_dict(),
        "vocab": _vocab_meta(model.vocab),
    }
    arrays = {f"bb/{k}": v for k, v in model.params.items()}
    _save_container(path, meta, arrays)


def load_backbone(path) -> TransformerBackbone:
    meta, arrays = _load_container(path)
    if meta.get("kind") != "backbone":
        raise CheckpointError(f"{path}: not a backbone checkpoint")
    config = BackboneConfig(**meta["backbone"])
    vocab = _vocab_from_meta(meta["vocab"])
    params = {k[3:]: arrays[k] for k in arrays if k.startswith("bb/")}
    return TransformerBackbone(config, vocab, params=params)


def save_model(model: TrainedModel, path) -> None:
    meta = {
        "kind": "trained_model",
        "config": model.config.to_dict(),
        # the trained architecture itself; config.backbone may be stale when
        # training resumed from a pretrained backbone checkpoint
        "backbone": model.backbone.config.to_dict(),
        "vocab": _vocab_meta(model.backbone.vocab),
        "labels": list(model.label_space.labels),
        "template": {
            "name": model.template.name,
            "enc_spec": model.template.enc_spec,
            "dec_spec": model.template.dec_spec,
            "family": model.template.family,
        },
        "name": model.name,
    }
    arrays = {f"bb/{k}": v for k, v in model.backbone.params.items()}
    if model.head is not None:
        arrays["head/w"] = model.head.w
        arrays["head/b"] = model.head.b
    _save_container(path, meta, arrays)


def load_model(path) -> TrainedModel:
    from .data import LabelSpace
    from .templates import parse_template_spec

    meta, arrays = _load_container(path)
    if meta.get("kind") != "trained_model":
        raise CheckpointError(f"{path}: not a trained-model checkpoint")
    config = ExperimentConfig.from_dict(meta["config"])
    vocab = _vocab_from_meta(meta["vocab"])
    label_space = LabelSpace(tuple(meta["labels"]))
    tmeta = meta["template"]
    template = parse_template_spec(tmeta["enc_spec"], tmeta["dec_spec"], tmeta["name"])
    if tmeta["name"] == "none":
        from dataclasses import replace

        template = replace(template, family="none")
    bb_config = BackboneConfig(**meta["backbone"]) if "backbone" in meta else config.backbone
    backbone = TransformerBackbone(
        bb_config,
        vocab,
        params={k[3:]: arrays[k] for k in arrays if k.startswith("bb/")},
    )
    head = None
    vhead = None
    if config.head_mode == "linear":
        head = ClassifierHead(w=arrays["head/w"], b=arrays["head/b"], pooling=config.pooling)
    else:
        from .experiment import _build_vhead

        vhead = _build_vhead(config, label_space, vocab)
    return TrainedModel(
        backbone=backbone,
        head=head,
        vhead=vhead,
        template=template,
        label_space=label_space,
        config=config,
        name=meta.get("name", "model"),
    )
