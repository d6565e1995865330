"""Denoising reconstruction objective and the toy pretraining loop.

Each monolingual sentence is noised (span masking + sentence permutation),
framed, and reconstructed teacher-forced:

    encoder:  <s> noise(x) </s> [LANG]
    decoder:  [LANG] <s> x </s>      (position t predicts token t+1)

The step loss is the mean token-level NLL per language, summed over the
languages present in the batch.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from . import kernels
from .langs import require_language
from .model import TransformerBackbone, zeros_like_params
from .noise import apply_noise
from .optim import Adam
from .templates import BOS, EOS
from .vocab import Vocab

Sentence = tuple[str, list[str]]  # (language code, tokens)


def _pad_batch(rows: list[list[int]], pad_id: int) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(r) for r in rows)
    ids = np.full((len(rows), width), pad_id, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=bool)
    for i, r in enumerate(rows):
        ids[i, : len(r)] = r
        mask[i, : len(r)] = True
    return ids, mask


def _encode_batch(model: TransformerBackbone, batch: Sequence[Sentence], rng):
    vocab = model.vocab
    enc_rows, dec_rows, langs = [], [], []
    limit = model.config.max_len - 3  # room for framing + language id
    for lang, tokens in batch:
        id_token = require_language(lang, vocab.languages)
        tokens = list(tokens)[:limit]
        noised = apply_noise(tokens, rng)
        enc = [BOS, *noised, EOS, id_token]
        dec = [id_token, BOS, *tokens, EOS]
        enc_rows.append([vocab.id(t) for t in enc])
        dec_rows.append([vocab.id(t) for t in dec[: model.config.max_len]])
        langs.append(lang)
    enc_ids, enc_mask = _pad_batch(enc_rows, vocab.pad_id)
    dec_ids, dec_mask = _pad_batch(dec_rows, vocab.pad_id)
    return enc_ids, enc_mask, dec_ids, dec_mask, langs


def denoising_loss_and_grads(
    model: TransformerBackbone,
    batch: Sequence[Sentence],
    rng_seed,
    want_grads: bool = True,
    train: bool = False,
):
    """Loss of reconstructing the batch from its noised version, and the
    analytic parameter gradients. `rng_seed` fixes the noise (and dropout),
    making the loss a deterministic function of the parameters."""
    if not batch:
        raise ValueError("denoising step requires a non-empty batch")
    rng = np.random.default_rng(rng_seed)
    enc_ids, enc_mask, dec_ids, dec_mask, langs = _encode_batch(model, batch, rng)

    v_enc, v_dec, cache = model.forward_batch(
        enc_ids, dec_ids, enc_mask, dec_mask, train=train, rng=rng
    )
    logits = model.lm_logits(v_dec)  # (B, T, V)

    b, t, _ = logits.shape
    # position j predicts dec token j+1
    pred_rows, pred_cols, targets, row_lang = [], [], [], []
    for i in range(b):
        length = int(dec_mask[i].sum())
        for j in range(length - 1):
            pred_rows.append(i)
            pred_cols.append(j)
            targets.append(dec_ids[i, j + 1])
            row_lang.append(langs[i])
    sel_logits = logits[pred_rows, pred_cols]
    nll, d_sel = kernels.nll_and_grad(sel_logits, np.array(targets))

    lang_order = sorted(set(row_lang))
    row_lang = np.array(row_lang)
    loss = 0.0
    weights = np.zeros(len(nll))
    for lang in lang_order:
        idx = row_lang == lang
        loss += float(nll[idx].mean())
        weights[idx] = 1.0 / idx.sum()
    if not want_grads:
        return loss, None

    d_logits = np.zeros_like(logits)
    d_logits[pred_rows, pred_cols] = d_sel * weights[:, None]
    grads = zeros_like_params(model.params)
    d_vdec = model.lm_logits_backward(grads, v_dec, d_logits)
    back = model.backward_batch(cache, np.zeros_like(v_enc), d_vdec)
    for k in back:
        grads[k] += back[k]
    return loss, grads


def denoising_step(
    model: TransformerBackbone,
    batch: Sequence[Sentence],
    rng_seed,
    optimizer: Adam | None = None,
) -> float:
    """One training step; applies the optimizer update when one is given."""
    loss, grads = denoising_loss_and_grads(
        model, batch, rng_seed, want_grads=optimizer is not None, train=True
    )
    if optimizer is not None:
        optimizer.step(model.params, grads)
    return loss


def build_pretrain_vocab(corpus: dict[str, list[list[str]]], languages) -> Vocab:
    from .vocab import build_vocab

    return build_vocab(
        (toks for sents in corpus.values() for toks in sents), languages=languages
    )


def pretrain(
    model: TransformerBackbone,
    corpus: dict[str, list[list[str]]],
    steps: int,
    seed: int,
    batch_size: int = 8,
    lr: float = 1e-3,
) -> list[float]:
    """Toy-scale denoising pretraining; returns the per-step loss curve."""
    pool: list[Sentence] = [
        (lang, toks) for lang, sents in corpus.items() for toks in sents
    ]
    if not pool:
        raise ValueError("empty pretraining corpus")
    rng = np.random.default_rng(seed)
    optimizer = Adam(model.params, lr=lr)
    losses = []
    for step in range(steps):
        take = min(batch_size, len(pool))
        idx = rng.choice(len(pool), size=take, replace=False)
        batch = [pool[i] for i in idx]
        step_seed = rng.integers(0, 2**63 - 1)
        losses.append(denoising_step(model, batch, step_seed, optimizer))
    return losses


__all__ = [
    "denoising_loss_and_grads",
    "denoising_step",
    "pretrain",
    "build_pretrain_vocab",
    "Sentence",
]
