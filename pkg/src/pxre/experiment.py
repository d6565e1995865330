"""Fine-tuning, checkpoint selection, and (zero-shot cross-lingual) evaluation.

The rendering pipeline for every instance is
render -> wrap_language_ids (optional) -> encode -> forward -> pool -> head,
identical at train and eval time. Zero-shot transfer runs the same template
on the target dataset, wrapping with the target language id (the data's
language); a strict source-id variant is available for ablation.

Prediction never sees gold labels: datasets are reduced to an unlabeled view
first, and the labels only meet the predictions inside metrics().
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import Dataset, LabelSpace
from .head import (
    ClassifierHead,
    HeadConfigError,
    VerbalizerHead,
    batch_nll_and_grads,
    init_head,
    pool_batch,
)
from .langs import DEFAULT_LANGUAGES, require_language
from .model import BackboneConfig, TransformerBackbone, zeros_like_params
from .optim import Adam
from .templates import (
    PromptTemplate,
    Verbalizer,
    get_template,
    load_template_file,
    render,
    template_literals,
    wrap_language_ids,
)
from .vocab import Vocab, build_vocab, truncate_tokens


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    template: str = "Prompt_3"
    head_mode: str = "linear"  # "linear" or "verbalizer"
    pooling: str = "last_token"
    source_lang: str = "en"
    target_langs: tuple[str, ...] = ()
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    backbone_checkpoint: str | None = None
    template_file: str | None = None
    lr: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 20
    seed: int = 0
    language_id_wrapping: bool = True
    eval_lang_id_mode: str = "target"  # "target" (default) or "source" (ablation)
    languages: tuple[str, ...] = DEFAULT_LANGUAGES
    verbalizer: tuple[tuple[str, str], ...] | None = None

    def __post_init__(self) -> None:
        if self.head_mode not in ("linear", "verbalizer"):
            raise ExperimentError(f"unknown head_mode {self.head_mode!r}")
        if self.eval_lang_id_mode not in ("target", "source"):
            raise ExperimentError(f"unknown eval_lang_id_mode {self.eval_lang_id_mode!r}")
        object.__setattr__(self, "target_langs", tuple(self.target_langs))
        object.__setattr__(self, "languages", tuple(self.languages))
        for code in (self.source_lang, *self.target_langs):
            if code not in self.languages:
                raise ExperimentError(
                    f"language {code!r} is not registered "
                    f"(registered: {', '.join(self.languages)})"
                )

    def to_dict(self) -> dict:
        d = {
            "template": self.template,
            "head_mode": self.head_mode,
            "pooling": self.pooling,
            "source_lang": self.source_lang,
            "target_langs": list(self.target_langs),
            "backbone": self.backbone.to_dict(),
            "backbone_checkpoint": self.backbone_checkpoint,
            "template_file": self.template_file,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "seed": self.seed,
            "language_id_wrapping": self.language_id_wrapping,
            "eval_lang_id_mode": self.eval_lang_id_mode,
            "languages": list(self.languages),
            "verbalizer": [list(kv) for kv in self.verbalizer] if self.verbalizer else None,
        }
        return d

    @staticmethod
    def from_dict(obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        obj["backbone"] = BackboneConfig(**obj.get("backbone", {}))
        obj["target_langs"] = tuple(obj.get("target_langs", ()))
        obj["languages"] = tuple(obj.get("languages", DEFAULT_LANGUAGES))
        if obj.get("verbalizer"):
            obj["verbalizer"] = tuple(tuple(kv) for kv in obj["verbalizer"])
        return ExperimentConfig(**obj)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]

    def resolve_template(self) -> PromptTemplate:
        if self.template_file:
            return load_template_file(self.template_file, self.template)
        return get_template(self.template)


# ---------------------------------------------------------------------------
# unlabeled view: what the prediction path is allowed to see


@dataclass(frozen=True)
class UnlabeledInstance:
    id: str
    lang: str
    tokens: tuple[str, ...]
    subj_span: tuple[int, int]
    obj_span: tuple[int, int]

    @property
    def is_label_only(self) -> bool:
        from .data import SENTINEL_SPAN

        return self.subj_span == SENTINEL_SPAN and self.obj_span == SENTINEL_SPAN

    @property
    def subj_tokens(self) -> tuple[str, ...]:
        return self.tokens[self.subj_span[0] : self.subj_span[1]]

    @property
    def obj_tokens(self) -> tuple[str, ...]:
        return self.tokens[self.obj_span[0] : self.obj_span[1]]


def unlabeled_view(dataset: Dataset) -> tuple[UnlabeledInstance, ...]:
    """Strip labels so the prediction path cannot read them."""
    return tuple(
        UnlabeledInstance(i.id, i.lang, i.tokens, i.subj_span, i.obj_span)
        for i in dataset.instances
    )


# ---------------------------------------------------------------------------
# encoding


@dataclass
class EncodedInstance:
    enc_ids: list[int]
    dec_ids: list[int]
    dec_mask_positions: tuple[int, ...]


def encode_instance(
    instance,
    template: PromptTemplate,
    vocab: Vocab,
    max_len: int,
    wrap_lang: str | None,
) -> EncodedInstance:
    pair = render(template, instance)
    if wrap_lang is not None:
        pair = wrap_language_ids(pair, wrap_lang, vocab.languages)
    enc_tokens, _ = truncate_tokens(pair.enc_tokens, max_len, pair.enc_sent_positions)
    dec_tokens, dec_kept = truncate_tokens(
        pair.dec_tokens, max_len, pair.dec_sent_positions
    )
    pos_of = {orig: new for new, orig in enumerate(dec_kept)}
    dec_masks = tuple(pos_of[p] for p in pair.dec_mask_positions if p in pos_of)
    return EncodedInstance(
        enc_ids=[vocab.id(t) for t in enc_tokens],
        dec_ids=[vocab.id(t) for t in dec_tokens],
        dec_mask_positions=dec_masks,
    )


def _pad(rows: list[list[int]], pad_id: int):
    width = max(len(r) for r in rows)
    ids = np.full((len(rows), width), pad_id, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=bool)
    for i, r in enumerate(rows):
        ids[i, : len(r)] = r
        mask[i, : len(r)] = True
    return ids, mask


# ---------------------------------------------------------------------------
# checkpoints and the trained model


@dataclass
class Checkpoint:
    epoch: int
    dev_loss: float
    backbone_params: dict
    head_state: dict


@dataclass
class CheckpointSet:
    checkpoints: tuple[Checkpoint, ...]
    config: ExperimentConfig
    vocab: Vocab
    label_space: LabelSpace
    template: PromptTemplate
    train_losses: tuple[float, ...] = ()
    # the architecture actually trained; differs from config.backbone when
    # training resumed from a pretrained backbone checkpoint
    backbone_config: BackboneConfig | None = None

    def __len__(self) -> int:
        return len(self.checkpoints)

    def resolved_backbone_config(self) -> BackboneConfig:
        return self.backbone_config or self.config.backbone


def select_checkpoint(checkpoint_set: CheckpointSet) -> Checkpoint:
    """Argmin of dev loss; ties go to the earliest epoch."""
    if not checkpoint_set.checkpoints:
        raise ExperimentError("empty checkpoint set")
    return min(checkpoint_set.checkpoints, key=lambda c: (c.dev_loss, c.epoch))


@dataclass
class TrainedModel:
    backbone: TransformerBackbone
    head: ClassifierHead | None
    vhead: VerbalizerHead | None
    template: PromptTemplate
    label_space: LabelSpace
    config: ExperimentConfig
    name: str = "model"

    @property
    def source_lang(self) -> str:
        return self.config.source_lang

    @property
    def fingerprint(self) -> str:
        return self.config.fingerprint()

    def _wrap_lang_for(self, instance) -> str | None:
        if not self.config.language_id_wrapping:
            return None
        if self.config.eval_lang_id_mode == "source":
            return self.config.source_lang
        return instance.lang

    def _encode(self, instances) -> list[EncodedInstance]:
        max_len = self.backbone.max_len
        return [
            encode_instance(
                inst, self.template, self.backbone.vocab, max_len, self._wrap_lang_for(inst)
            )
            for inst in instances
        ]

    def predict(self, instances: Sequence) -> list[str]:
        """Predicted label per instance; never consults gold labels."""
        if not instances:
            return []
        encoded = self._encode(instances)
        out: list[int] = []
        batch_size = max(1, self.config.batch_size)
        vocab = self.backbone.vocab
        use_batched = hasattr(self.backbone, "forward_batch")
        for start in range(0, len(encoded), batch_size):
            chunk = encoded[start : start + batch_size]
            if use_batched:
                enc_ids, enc_mask = _pad([e.enc_ids for e in chunk], vocab.pad_id)
                dec_ids, dec_mask = _pad([e.dec_ids for e in chunk], vocab.pad_id)
                _, v_dec, _ = self.backbone.forward_batch(
                    enc_ids, dec_ids, enc_mask, dec_mask, train=False
                )
            else:
                states = [self.backbone.forward(e.enc_ids, e.dec_ids) for e in chunk]
                width = max(s.v_dec.shape[0] for s in states)
                v_dec = np.zeros((len(chunk), width, states[0].v_dec.shape[1]))
                dec_mask = np.zeros((len(chunk), width), dtype=bool)
                for i, s in enumerate(states):
                    v_dec[i, : s.v_dec.shape[0]] = s.v_dec
                    dec_mask[i, : s.dec_pad_mask.shape[0]] = s.dec_pad_mask
            out.extend(self._classify(chunk, v_dec, dec_mask))
        return [self.label_space.labels[i] for i in out]

    def _classify(self, chunk, v_dec, dec_mask) -> list[int]:
        if self.config.head_mode == "linear":
            pooled, _ = pool_batch(
                v_dec,
                dec_mask,
                self.head.pooling,
                [e.dec_mask_positions for e in chunk],
            )
            logits = pooled @ self.head.w.T + self.head.b
        else:
            rows = np.array(
                [v_dec[i, e.dec_mask_positions[0]] for i, e in enumerate(chunk)]
            )
            full = self.backbone.lm_logits(rows)
            logits = full[:, list(self.vhead.word_ids)]
        return [int(i) for i in np.argmax(logits, axis=1)]


def build_model(checkpoint_set: CheckpointSet, checkpoint: Checkpoint | None = None, name: str = "model") -> TrainedModel:
    """Materialize a TrainedModel from a checkpoint (default: best by dev loss)."""
    ckpt = checkpoint or select_checkpoint(checkpoint_set)
    cfg = checkpoint_set.config
    backbone = TransformerBackbone(
        checkpoint_set.resolved_backbone_config(), checkpoint_set.vocab
    )
    backbone.load_state(ckpt.backbone_params)
    head = None
    vhead = None
    if cfg.head_mode == "linear":
        head = ClassifierHead(
            w=ckpt.head_state["w"].copy(), b=ckpt.head_state["b"].copy(), pooling=cfg.pooling
        )
    else:
        vhead = _build_vhead(cfg, checkpoint_set.label_space, checkpoint_set.vocab)
    return TrainedModel(
        backbone=backbone,
        head=head,
        vhead=vhead,
        template=checkpoint_set.template,
        label_space=checkpoint_set.label_space,
        config=cfg,
        name=name,
    )


def _build_vhead(cfg: ExperimentConfig, label_space: LabelSpace, vocab: Vocab) -> VerbalizerHead:
    mapping = (
        dict(cfg.verbalizer)
        if cfg.verbalizer
        else {y: y for y in label_space.labels}
    )
    return VerbalizerHead.build(Verbalizer(mapping), label_space, vocab)


# ---------------------------------------------------------------------------
# training


def _experiment_vocab(config: ExperimentConfig, template, datasets: list[Dataset]) -> Vocab:
    streams = [inst.tokens for ds in datasets for inst in ds.instances]
    streams.append(template_literals(template))
    if config.head_mode == "verbalizer":
        mapping = (
            dict(config.verbalizer)
            if config.verbalizer
            else {y: y for y in datasets[0].label_space.labels}
        )
        streams.append(tuple(mapping.values()))
    return build_vocab(streams, languages=config.languages)


def train(config: ExperimentConfig, train_set: Dataset, dev_set: Dataset) -> CheckpointSet:
    """Fine-tune on the source language; returns per-epoch checkpoints with
    recorded dev losses (epoch 0 = the initialization when max_epochs == 0)."""
    if train_set.label_space.labels != dev_set.label_space.labels:
        raise ExperimentError(
            "train/dev label-space mismatch: "
            f"{train_set.label_space.labels} vs {dev_set.label_space.labels}"
        )
    if len(train_set) == 0:
        raise ExperimentError("empty training set")
    if len(dev_set) == 0:
        raise ExperimentError("dev set required for checkpoint selection")
    for ds, split in ((train_set, "train"), (dev_set, "dev")):
        if ds.lang != config.source_lang:
            raise ExperimentError(
                f"{split} set language {ds.lang!r} != source_lang {config.source_lang!r}"
            )
    require_language(config.source_lang, config.languages)

    template = config.resolve_template()
    if config.pooling == "mask_position" and not template.dec_has_mask:
        raise HeadConfigError(
            f"mask_position pooling requires a decoder [MASK], but template "
            f"{template.name!r} has none"
        )
    if config.head_mode == "verbalizer" and not template.dec_has_mask:
        raise HeadConfigError(
            f"verbalizer head requires a decoder [MASK], but template "
            f"{template.name!r} has none"
        )

    label_space = train_set.label_space
    if config.backbone_checkpoint:
        from .checkpoint import load_backbone

        backbone = load_backbone(config.backbone_checkpoint)
        vocab = backbone.vocab
    else:
        vocab = _experiment_vocab(config, template, [train_set, dev_set])
        backbone = TransformerBackbone(config.backbone, vocab)

    head = None
    vhead = None
    trainable = dict(backbone.params)
    if config.head_mode == "linear":
        head = init_head(
            len(label_space), backbone.d_model, pooling=config.pooling, seed=config.seed
        )
        trainable["clf.w"] = head.w
        trainable["clf.b"] = head.b
    else:
        vhead = _build_vhead(config, label_space, vocab)

    max_len = backbone.max_len
    wrap = config.source_lang if config.language_id_wrapping else None
    enc_train = [
        encode_instance(i, template, vocab, max_len, wrap) for i in train_set.instances
    ]
    gold_train = np.array(
        [label_space.index[i.label] for i in train_set.instances], dtype=np.int64
    )
    enc_dev = [encode_instance(i, template, vocab, max_len, wrap) for i in dev_set.instances]
    gold_dev = np.array(
        [label_space.index[i.label] for i in dev_set.instances], dtype=np.int64
    )

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(trainable, lr=config.lr)

    def batch_loss_and_step(idx: np.ndarray, do_step: bool) -> float:
        chunk = [enc_train[i] for i in idx] if do_step else [enc_dev[i] for i in idx]
        golds = gold_train[idx] if do_step else gold_dev[idx]
        enc_ids, enc_mask = _pad([e.enc_ids for e in chunk], vocab.pad_id)
        dec_ids, dec_mask = _pad([e.dec_ids for e in chunk], vocab.pad_id)
        v_enc, v_dec, cache = backbone.forward_batch(
            enc_ids, dec_ids, enc_mask, dec_mask, train=do_step, rng=rng
        )
        grads = zeros_like_params(trainable)
        if config.head_mode == "linear":
            pooled, pool_back = pool_batch(
                v_dec, dec_mask, config.pooling, [e.dec_mask_positions for e in chunk]
            )
            loss, d_w, d_b, d_pooled = batch_nll_and_grads(head, pooled, golds)
            if not do_step:
                return loss
            grads["clf.w"] += d_w
            grads["clf.b"] += d_b
            d_vdec = pool_back(d_pooled)
        else:
            rows = np.array(
                [v_dec[i, e.dec_mask_positions[0]] for i, e in enumerate(chunk)]
            )
            full = backbone.lm_logits(rows)
            word_ids = list(vhead.word_ids)
            sub = full[:, word_ids]
            nll, d_sub = kernels.nll_and_grad(sub, golds)
            loss = float(nll.mean())
            if not do_step:
                return loss
            d_full = np.zeros_like(full)
            d_full[:, word_ids] = d_sub / len(chunk)
            d_rows = backbone.lm_logits_backward(grads, rows, d_full)
            d_vdec = np.zeros_like(v_dec)
            for i, e in enumerate(chunk):
                d_vdec[i, e.dec_mask_positions[0]] += d_rows[i]
        back = backbone.backward_batch(cache, np.zeros_like(v_enc), d_vdec)
        for k in back:
            grads[k] += back[k]
        if not np.isfinite(loss):
            raise RuntimeError(
                f"non-finite training loss ({loss}) at optimizer step {optimizer.t + 1}; "
                f"try a lower learning rate (lr={config.lr})"
            )
        optimizer.step(trainable, grads)
        return loss

    def dev_loss() -> float:
        total, count = 0.0, 0
        for start in range(0, len(enc_dev), config.batch_size):
            idx = np.arange(start, min(start + config.batch_size, len(enc_dev)))
            total += batch_loss_and_step(idx, do_step=False) * len(idx)
            count += len(idx)
        return total / count

    def snapshot(epoch: int, loss: float) -> Checkpoint:
        head_state = (
            {"w": head.w.copy(), "b": head.b.copy()} if head is not None else {}
        )
        return Checkpoint(
            epoch=epoch,
            dev_loss=loss,
            backbone_params=backbone.snapshot(),
            head_state=head_state,
        )

    checkpoints: list[Checkpoint] = []
    train_losses: list[float] = []
    if config.max_epochs == 0:
        checkpoints.append(snapshot(0, dev_loss()))
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(enc_train))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            epoch_loss += batch_loss_and_step(idx, do_step=True)
            n_batches += 1
        train_losses.append(epoch_loss / n_batches)
        checkpoints.append(snapshot(epoch, dev_loss()))

    return CheckpointSet(
        checkpoints=tuple(checkpoints),
        config=config,
        vocab=vocab,
        label_space=label_space,
        template=template,
        train_losses=tuple(train_losses),
        backbone_config=backbone.config,
    )


# ---------------------------------------------------------------------------
# evaluation


def evaluate(model, dataset: Dataset):
    """Predict every instance and score against the gold labels."""
    from .metrics import metrics
    from .reporting import report_from_metrics

    if len(dataset) == 0:
        raise ExperimentError("empty evaluation set")
    if dataset.label_space.labels != model.label_space.labels:
        raise ExperimentError(
            "dataset label space does not match the model's label space"
        )
    cfg = getattr(model, "config", None)
    if cfg is not None and cfg.language_id_wrapping and cfg.eval_lang_id_mode == "target":
        require_language(dataset.lang, model.backbone.vocab.languages)
    preds = model.predict(unlabeled_view(dataset))
    golds = [i.label for i in dataset.instances]
    bundle = metrics(preds, golds, dataset.label_space)
    return report_from_metrics(
        bundle,
        direction=(model.source_lang, dataset.lang),
        config_fingerprint=model.fingerprint,
        model=model.name,
    )


def zero_shot_eval(config: ExperimentConfig, trained_model: TrainedModel, target_datasets: Sequence[Dataset]):
    """Evaluate the trained model on each target language with the identical
    template; source==target reproduces the monolingual evaluation."""
    if config.template != trained_model.config.template:
        raise ExperimentError(
            f"template mismatch: config says {config.template!r} but the model "
            f"was trained with {trained_model.config.template!r}"
        )
    return [evaluate(trained_model, ds) for ds in target_datasets]


class UniformRandomModel:
    """Seeded uniform-random baseline implementing the predictor interface."""

    def __init__(self, label_space: LabelSpace, seed: int = 0, source_lang: str = "en"):
        self.label_space = label_space
        self.seed = seed
        self.source_lang = source_lang
        self.name = "uniform-random"

    @property
    def fingerprint(self) -> str:
        return f"random-{self.seed}"

    def predict(self, instances) -> list[str]:
        rng = np.random.default_rng(self.seed)
        idx = rng.integers(0, len(self.label_space), size=len(instances))
        return [self.label_space.labels[i] for i in idx]
