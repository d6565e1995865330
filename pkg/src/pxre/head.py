"""Relation classifiers over decoder hidden states.

The default head is a linear map plus softmax over the label set, applied
to a pooled decoder vector (last non-pad position, mean, or the average of
the decoder [MASK] positions). The alternative verbalizer head reads the
label off the model's vocabulary distribution at a decoder [MASK] position,
restricted to the label words and renormalized.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import LabelSpace
from .model import BackboneStates, TransformerBackbone
from .templates import Verbalizer
from .vocab import Vocab

POOLING_MODES = ("last_token", "mean", "mask_position")


class HeadConfigError(ValueError):
    pass


@dataclass
class ClassifierHead:
    w: np.ndarray  # (|Y|, d_model)
    b: np.ndarray  # (|Y|,)
    pooling: str

    def __post_init__(self) -> None:
        if self.pooling not in POOLING_MODES:
            raise HeadConfigError(
                f"unknown pooling {self.pooling!r}; choose from {POOLING_MODES}"
            )

    @property
    def n_labels(self) -> int:
        return self.w.shape[0]


def init_head(n_labels: int, d_model: int, pooling: str = "last_token", seed: int = 0) -> ClassifierHead:
    rng = np.random.default_rng(seed)
    return ClassifierHead(
        w=rng.normal(0.0, 0.02, size=(n_labels, d_model)),
        b=np.zeros(n_labels),
        pooling=pooling,
    )


def pool(
    states: BackboneStates,
    pooling: str,
    mask_positions: Sequence[int] | None = None,
) -> np.ndarray:
    """Collapse the decoder states to a single d_model vector."""
    mask = states.dec_pad_mask
    if not mask.any():
        raise HeadConfigError("cannot pool: no real (non-pad) decoder positions")
    if pooling == "last_token":
        return states.v_dec[int(np.flatnonzero(mask)[-1])]
    if pooling == "mean":
        return states.v_dec[mask].mean(axis=0)
    if pooling == "mask_position":
        if not mask_positions:
            raise HeadConfigError(
                "mask_position pooling requires a template with a decoder [MASK]"
            )
        return states.v_dec[list(mask_positions)].mean(axis=0)
    raise HeadConfigError(f"unknown pooling {pooling!r}")


def pool_batch(
    dec_out: np.ndarray,
    dec_mask: np.ndarray,
    pooling: str,
    mask_positions: Sequence[Sequence[int]] | None = None,
):
    """Batched pooling; returns (pooled (B, D), backward closure)."""
    b, t, d = dec_out.shape
    if pooling == "last_token":
        last = dec_mask.shape[1] - 1 - np.argmax(dec_mask[:, ::-1], axis=1)
        pooled = dec_out[np.arange(b), last]

        def backward(d_pooled):
            d_dec = np.zeros_like(dec_out)
            d_dec[np.arange(b), last] = d_pooled
            return d_dec

        return pooled, backward
    if pooling == "mean":
        counts = dec_mask.sum(axis=1, keepdims=True).astype(float)
        pooled = (dec_out * dec_mask[:, :, None]).sum(axis=1) / counts

        def backward(d_pooled):
            return dec_mask[:, :, None] * d_pooled[:, None, :] / counts[:, :, None]

        return pooled, backward
    if pooling == "mask_position":
        if mask_positions is None or any(len(m) == 0 for m in mask_positions):
            raise HeadConfigError(
                "mask_position pooling requires a template with a decoder [MASK]"
            )
        sel = np.zeros((b, t), dtype=float)
        for i, positions in enumerate(mask_positions):
            sel[i, list(positions)] = 1.0 / len(positions)
        pooled = (dec_out * sel[:, :, None]).sum(axis=1)

        def backward(d_pooled):
            return sel[:, :, None] * d_pooled[:, None, :]

        return pooled, backward
    raise HeadConfigError(f"unknown pooling {pooling!r}")


def predict_distribution(head: ClassifierHead, pooled: np.ndarray) -> np.ndarray:
    """Probability vector over the label set; softmax of the affine logits."""
    logits = head.w @ pooled + head.b
    return kernels.softmax(logits[None, :])[0]


def predicted_index(dist: np.ndarray) -> int:
    """Argmax with ties broken by the lowest label index."""
    return int(np.argmax(dist))


def nll_loss(head: ClassifierHead, pooled: np.ndarray, gold_index: int) -> float:
    logits = head.w @ pooled + head.b
    nll, _ = kernels.nll_and_grad(logits[None, :], np.array([gold_index]))
    return float(nll[0])


def nll_loss_and_grads(head: ClassifierHead, pooled: np.ndarray, gold_index: int):
    """Loss plus gradients for W, bias, and the pooled vector (backbone side)."""
    logits = head.w @ pooled + head.b
    nll, d_logits = kernels.nll_and_grad(logits[None, :], np.array([gold_index]))
    d_logits = d_logits[0]
    d_w = np.outer(d_logits, pooled)
    d_b = d_logits
    d_pooled = head.w.T @ d_logits
    return float(nll[0]), d_w, d_b, d_pooled


def batch_nll_and_grads(head: ClassifierHead, pooled: np.ndarray, gold_indices: np.ndarray):
    """Mean NLL over a batch; gradients for W, b and the pooled matrix."""
    logits = pooled @ head.w.T + head.b
    nll, d_logits = kernels.nll_and_grad(logits, gold_indices)
    n = pooled.shape[0]
    d_logits = d_logits / n
    d_w = d_logits.T @ pooled
    d_b = d_logits.sum(axis=0)
    d_pooled = d_logits @ head.w
    return float(nll.mean()), d_w, d_b, d_pooled


@dataclass(frozen=True)
class VerbalizerHead:
    """Label words bound to vocabulary ids, in label-space order."""

    verbalizer: Verbalizer
    label_space: LabelSpace
    word_ids: tuple[int, ...]

    @staticmethod
    def build(verbalizer: Verbalizer, label_space: LabelSpace, vocab: Vocab) -> "VerbalizerHead":
        missing = [y for y in label_space.labels if y not in verbalizer.mapping]
        if missing:
            raise HeadConfigError(f"verbalizer missing label words for {missing}")
        ids = []
        for y in label_space.labels:
            word = verbalizer.word(y)
            if word not in vocab:
                raise HeadConfigError(f"label word {word!r} (for {y!r}) not in vocabulary")
            ids.append(vocab.token_to_id[word])
        return VerbalizerHead(verbalizer, label_space, tuple(ids))


def verbalizer_distribution(
    model: TransformerBackbone,
    vhead: VerbalizerHead,
    states: BackboneStates,
    mask_position: int,
) -> np.ndarray:
    """Restrict the vocabulary distribution at a decoder [MASK] position to
    the label words and renormalize."""
    logits = model.lm_logits(states.v_dec[mask_position][None, :])[0]
    full = kernels.softmax(logits[None, :])[0]
    restricted = full[list(vhead.word_ids)]
    return restricted / restricted.sum()
