"""Desk-scale encoder-decoder transformer with explicit forward/backward.

Everything is float64 numpy. Gradients are computed analytically layer by
layer (validated against finite differences in the test suite), which keeps
the model free of autograd frameworks and lets the compiled kernels carry
the hot loop. Post-layer-norm residual blocks, sinusoidal positions,
multi-head attention with padding masks, causal self-attention in the
decoder.

Parameters live in a flat ``dict[str, np.ndarray]``; a parallel dict holds
gradients. An externally trained backbone can replace this one anywhere as
long as it exposes ``vocab``, ``d_model``, ``max_len`` and
``forward(enc_ids, dec_ids) -> BackboneStates``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from . import kernels
from .vocab import Vocab

NEG_INF = -1e30

Params = dict[str, np.ndarray]


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class BackboneConfig:
    d_model: int = 64
    n_layers_enc: int = 2
    n_layers_dec: int = 2
    n_heads: int = 4
    ffn_width: int = 128
    max_len: int = 256
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ModelError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )
        if not (0.0 <= self.dropout < 1.0):
            raise ModelError(f"dropout must be in [0,1), got {self.dropout}")

    def to_dict(self) -> dict:
        return {
            "d_model": self.d_model,
            "n_layers_enc": self.n_layers_enc,
            "n_layers_dec": self.n_layers_dec,
            "n_heads": self.n_heads,
            "ffn_width": self.ffn_width,
            "max_len": self.max_len,
            "dropout": self.dropout,
            "seed": self.seed,
        }


@dataclass
class BackboneStates:
    """Final hidden vectors for one instance, (seq_len, d_model) each side."""

    v_enc: np.ndarray
    v_dec: np.ndarray
    dec_pad_mask: np.ndarray  # bool, True at real (non-pad) decoder positions

    def __post_init__(self) -> None:
        if self.v_dec.shape[0] != self.dec_pad_mask.shape[0]:
            raise ModelError("dec_pad_mask length must equal decoder length")


@runtime_checkable
class Seq2SeqBackbone(Protocol):
    """Minimal contract a substitute (e.g. externally trained) backbone meets."""

    vocab: Vocab

    @property
    def d_model(self) -> int: ...

    @property
    def max_len(self) -> int: ...

    def forward(self, enc_ids, dec_ids) -> BackboneStates: ...


def sinusoidal_positions(max_len: int, d_model: int) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    dim = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos * np.exp(dim * (-math.log(10000.0) / d_model))
    out = np.zeros((max_len, d_model), dtype=np.float64)
    out[:, 0::2] = np.sin(angle)
    out[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return out


def init_params(config: BackboneConfig, vocab_size: int) -> Params:
    rng = np.random.default_rng(config.seed)
    d, f = config.d_model, config.ffn_width

    def w(*shape):
        return rng.normal(0.0, 0.02, size=shape)

    params: Params = {
        "tok_emb": w(vocab_size, d),
        "lm_head.w": w(d, vocab_size),
        "lm_head.b": np.zeros(vocab_size),
    }

    def add_attn(prefix: str) -> None:
        for name in ("wq", "wk", "wv", "wo"):
            params[f"{prefix}.{name}"] = w(d, d)
        for name in ("bq", "bk", "bv", "bo"):
            params[f"{prefix}.{name}"] = np.zeros(d)

    def add_ln(prefix: str) -> None:
        params[f"{prefix}.g"] = np.ones(d)
        params[f"{prefix}.b"] = np.zeros(d)

    def add_ffn(prefix: str) -> None:
        params[f"{prefix}.w1"] = w(d, f)
        params[f"{prefix}.b1"] = np.zeros(f)
        params[f"{prefix}.w2"] = w(f, d)
        params[f"{prefix}.b2"] = np.zeros(d)

    for i in range(config.n_layers_enc):
        add_attn(f"enc{i}.attn")
        add_ln(f"enc{i}.ln1")
        add_ffn(f"enc{i}.ffn")
        add_ln(f"enc{i}.ln2")
    for i in range(config.n_layers_dec):
        add_attn(f"dec{i}.self")
        add_ln(f"dec{i}.ln1")
        add_attn(f"dec{i}.cross")
        add_ln(f"dec{i}.ln2")
        add_ffn(f"dec{i}.ffn")
        add_ln(f"dec{i}.ln3")
    return params


def zeros_like_params(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


# ---------------------------------------------------------------------------
# building blocks (forward returns (out, cache); backward consumes cache)


def _linear(x, w, b):
    return x @ w + b


def _linear_backward(dy, x, w, grads, wname, bname):
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    grads[wname] += x2.T @ dy2
    grads[bname] += dy2.sum(axis=0)
    return dy @ w.T


def _split_heads(x, n_heads):
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def _attn_forward(params, prefix, x_q, x_kv, key_mask, causal, n_heads):
    q = _linear(x_q, params[f"{prefix}.wq"], params[f"{prefix}.bq"])
    k = _linear(x_kv, params[f"{prefix}.wk"], params[f"{prefix}.bk"])
    v = _linear(x_kv, params[f"{prefix}.wv"], params[f"{prefix}.bv"])
    qh, kh, vh = (_split_heads(a, n_heads) for a in (q, k, v))
    scale = 1.0 / math.sqrt(qh.shape[-1])
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    scores = scores + np.where(key_mask[:, None, None, :], 0.0, NEG_INF)
    if causal:
        t = scores.shape[-1]
        scores = scores + np.where(np.tril(np.ones((t, t), dtype=bool)), 0.0, NEG_INF)
    probs = kernels.softmax(scores)
    ctx = probs @ vh
    merged = _merge_heads(ctx)
    out = _linear(merged, params[f"{prefix}.wo"], params[f"{prefix}.bo"])
    cache = (x_q, x_kv, qh, kh, vh, probs, merged, scale)
    return out, cache


def _attn_backward(params, grads, prefix, d_out, cache, n_heads):
    x_q, x_kv, qh, kh, vh, probs, merged, scale = cache
    d_merged = _linear_backward(
        d_out, merged, params[f"{prefix}.wo"], grads, f"{prefix}.wo", f"{prefix}.bo"
    )
    b, t, d = d_merged.shape
    d_ctx = _split_heads(d_merged, n_heads)
    d_probs = d_ctx @ vh.transpose(0, 1, 3, 2)
    d_vh = probs.transpose(0, 1, 3, 2) @ d_ctx
    d_scores = kernels.softmax_backward(probs, d_probs)
    d_qh = (d_scores @ kh) * scale
    d_kh = (d_scores.transpose(0, 1, 3, 2) @ qh) * scale
    d_q, d_k, d_v = (_merge_heads(a) for a in (d_qh, d_kh, d_vh))
    d_x_q = _linear_backward(
        d_q, x_q, params[f"{prefix}.wq"], grads, f"{prefix}.wq", f"{prefix}.bq"
    )
    d_x_kv = _linear_backward(
        d_k, x_kv, params[f"{prefix}.wk"], grads, f"{prefix}.wk", f"{prefix}.bk"
    )
    d_x_kv += _linear_backward(
        d_v, x_kv, params[f"{prefix}.wv"], grads, f"{prefix}.wv", f"{prefix}.bv"
    )
    return d_x_q, d_x_kv


def _ffn_forward(params, prefix, x, drop_mask):
    h_pre = _linear(x, params[f"{prefix}.w1"], params[f"{prefix}.b1"])
    h = np.maximum(h_pre, 0.0)
    if drop_mask is not None:
        h = h * drop_mask
    out = _linear(h, params[f"{prefix}.w2"], params[f"{prefix}.b2"])
    return out, (x, h_pre, h, drop_mask)


def _ffn_backward(params, grads, prefix, d_out, cache):
    x, h_pre, h, drop_mask = cache
    d_h = _linear_backward(
        d_out, h, params[f"{prefix}.w2"], grads, f"{prefix}.w2", f"{prefix}.b2"
    )
    if drop_mask is not None:
        d_h = d_h * drop_mask
    d_h_pre = d_h * (h_pre > 0.0)
    return _linear_backward(
        d_h_pre, x, params[f"{prefix}.w1"], grads, f"{prefix}.w1", f"{prefix}.b1"
    )


def _ln_forward(params, prefix, x):
    y, cache = kernels.layer_norm(x, params[f"{prefix}.g"], params[f"{prefix}.b"])
    return y, cache


def _ln_backward(params, grads, prefix, dy, cache):
    dx, dgamma, dbeta = kernels.layer_norm_backward(dy, cache, params[f"{prefix}.g"])
    grads[f"{prefix}.g"] += dgamma
    grads[f"{prefix}.b"] += dbeta
    return dx


class TransformerBackbone:
    """The toy backbone: shared token embeddings, N encoder and decoder layers,
    and a vocabulary projection head used for denoising pretraining."""

    def __init__(self, config: BackboneConfig, vocab: Vocab, params: Params | None = None):
        self.config = config
        self.vocab = vocab
        self.params = params if params is not None else init_params(config, len(vocab))
        self._pos = sinusoidal_positions(config.max_len, config.d_model)

    @property
    def d_model(self) -> int:
        return self.config.d_model

    @property
    def max_len(self) -> int:
        return self.config.max_len

    def snapshot(self) -> Params:
        return {k: v.copy() for k, v in self.params.items()}

    def load_state(self, params: Params) -> None:
        self.params = {k: v.copy() for k, v in params.items()}

    # -- forward ------------------------------------------------------------

    def _check_ids(self, ids: np.ndarray) -> None:
        if ids.size and (ids.min() < 0 or ids.max() >= len(self.vocab)):
            raise ModelError(
                f"token id out of range [0,{len(self.vocab)}): "
                f"min={ids.min()}, max={ids.max()}"
            )

    def _embed(self, ids: np.ndarray) -> np.ndarray:
        t = ids.shape[1]
        if t > self.config.max_len:
            raise ModelError(f"sequence length {t} exceeds max_len {self.config.max_len}")
        scale = math.sqrt(self.config.d_model)
        return self.params["tok_emb"][ids] * scale + self._pos[:t]

    def _drop_mask(self, shape, train, rng):
        p = self.config.dropout
        if not train or p == 0.0:
            return None
        if rng is None:
            raise ModelError("dropout requires an rng in training mode")
        return (rng.random(shape) >= p) / (1.0 - p)

    def forward_batch(
        self,
        enc_ids: np.ndarray,
        dec_ids: np.ndarray,
        enc_mask: np.ndarray,
        dec_mask: np.ndarray,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ):
        """Run the full stack on a padded batch.

        Returns (enc_out (B,Te,D), dec_out (B,Td,D), cache). Masks are True
        at real positions. `train` only controls dropout.
        """
        enc_ids = np.asarray(enc_ids, dtype=np.int64)
        dec_ids = np.asarray(dec_ids, dtype=np.int64)
        self._check_ids(enc_ids)
        self._check_ids(dec_ids)
        p = self.params
        cfg = self.config
        cache: dict = {"enc_ids": enc_ids, "dec_ids": dec_ids, "layers": []}

        x = self._embed(enc_ids)
        for i in range(cfg.n_layers_enc):
            a, att_c = _attn_forward(p, f"enc{i}.attn", x, x, enc_mask, False, cfg.n_heads)
            dm_a = self._drop_mask(a.shape, train, rng)
            if dm_a is not None:
                a = a * dm_a
            x1, ln1_c = _ln_forward(p, f"enc{i}.ln1", x + a)
            f, ffn_c = _ffn_forward(p, f"enc{i}.ffn", x1, self._drop_mask((x1.shape[0], x1.shape[1], cfg.ffn_width), train, rng))
            dm_f = self._drop_mask(f.shape, train, rng)
            if dm_f is not None:
                f = f * dm_f
            x2, ln2_c = _ln_forward(p, f"enc{i}.ln2", x1 + f)
            cache["layers"].append(("enc", att_c, dm_a, ln1_c, ffn_c, dm_f, ln2_c))
            x = x2
        memory = x

        y = self._embed(dec_ids)
        for i in range(cfg.n_layers_dec):
            a, self_c = _attn_forward(p, f"dec{i}.self", y, y, dec_mask, True, cfg.n_heads)
            dm_a = self._drop_mask(a.shape, train, rng)
            if dm_a is not None:
                a = a * dm_a
            y1, ln1_c = _ln_forward(p, f"dec{i}.ln1", y + a)
            c, cross_c = _attn_forward(p, f"dec{i}.cross", y1, memory, enc_mask, False, cfg.n_heads)
            dm_c = self._drop_mask(c.shape, train, rng)
            if dm_c is not None:
                c = c * dm_c
            y2, ln2_c = _ln_forward(p, f"dec{i}.ln2", y1 + c)
            f, ffn_c = _ffn_forward(p, f"dec{i}.ffn", y2, self._drop_mask((y2.shape[0], y2.shape[1], cfg.ffn_width), train, rng))
            dm_f = self._drop_mask(f.shape, train, rng)
            if dm_f is not None:
                f = f * dm_f
            y3, ln3_c = _ln_forward(p, f"dec{i}.ln3", y2 + f)
            cache["layers"].append(
                ("dec", self_c, dm_a, ln1_c, cross_c, dm_c, ln2_c, ffn_c, dm_f, ln3_c)
            )
            y = y3

        return memory, y, cache

    def forward(self, enc_ids, dec_ids) -> BackboneStates:
        """Single-instance eval-mode pass; deterministic for fixed parameters."""
        enc = np.asarray(enc_ids, dtype=np.int64)[None, :]
        dec = np.asarray(dec_ids, dtype=np.int64)[None, :]
        enc_mask = np.ones(enc.shape, dtype=bool)
        dec_mask = np.ones(dec.shape, dtype=bool)
        v_enc, v_dec, _ = self.forward_batch(enc, dec, enc_mask, dec_mask, train=False)
        return BackboneStates(
            v_enc=v_enc[0], v_dec=v_dec[0], dec_pad_mask=dec_mask[0]
        )

    # -- backward -----------------------------------------------------------

    def backward_batch(self, cache, d_enc_out, d_dec_out) -> Params:
        """Backpropagate upstream gradients on the final encoder/decoder
        states through the whole stack; returns parameter gradients."""
        p = self.params
        cfg = self.config
        grads = zeros_like_params(p)

        enc_layers = [c for c in cache["layers"] if c[0] == "enc"]
        dec_layers = [c for c in cache["layers"] if c[0] == "dec"]

        d_y = d_dec_out
        d_memory = np.zeros_like(d_enc_out)
        for i in reversed(range(cfg.n_layers_dec)):
            _, self_c, dm_a, ln1_c, cross_c, dm_c, ln2_c, ffn_c, dm_f, ln3_c = dec_layers[i]
            d_sum = _ln_backward(p, grads, f"dec{i}.ln3", d_y, ln3_c)
            d_f = d_sum if dm_f is None else d_sum * dm_f
            d_y2 = d_sum + _ffn_backward(p, grads, f"dec{i}.ffn", d_f, ffn_c)
            d_sum = _ln_backward(p, grads, f"dec{i}.ln2", d_y2, ln2_c)
            d_c = d_sum if dm_c is None else d_sum * dm_c
            d_y1_attn, d_mem = _attn_backward(p, grads, f"dec{i}.cross", d_c, cross_c, cfg.n_heads)
            d_memory += d_mem
            d_y1 = d_sum + d_y1_attn
            d_sum = _ln_backward(p, grads, f"dec{i}.ln1", d_y1, ln1_c)
            d_a = d_sum if dm_a is None else d_sum * dm_a
            d_q, d_kv = _attn_backward(p, grads, f"dec{i}.self", d_a, self_c, cfg.n_heads)
            d_y = d_sum + d_q + d_kv
        self._embed_backward(grads, cache["dec_ids"], d_y)

        d_x = d_enc_out + d_memory
        for i in reversed(range(cfg.n_layers_enc)):
            _, att_c, dm_a, ln1_c, ffn_c, dm_f, ln2_c = enc_layers[i]
            d_sum = _ln_backward(p, grads, f"enc{i}.ln2", d_x, ln2_c)
            d_f = d_sum if dm_f is None else d_sum * dm_f
            d_x1 = d_sum + _ffn_backward(p, grads, f"enc{i}.ffn", d_f, ffn_c)
            d_sum = _ln_backward(p, grads, f"enc{i}.ln1", d_x1, ln1_c)
            d_a = d_sum if dm_a is None else d_sum * dm_a
            d_q, d_kv = _attn_backward(p, grads, f"enc{i}.attn", d_a, att_c, cfg.n_heads)
            d_x = d_sum + d_q + d_kv
        self._embed_backward(grads, cache["enc_ids"], d_x)
        return grads

    def _embed_backward(self, grads, ids, d_x):
        scale = math.sqrt(self.config.d_model)
        np.add.at(grads["tok_emb"], ids.ravel(), d_x.reshape(-1, d_x.shape[-1]) * scale)

    # -- vocabulary head ----------------------------------------------------

    def lm_logits(self, dec_out: np.ndarray) -> np.ndarray:
        return dec_out @ self.params["lm_head.w"] + self.params["lm_head.b"]

    def lm_logits_backward(self, grads, dec_out, d_logits) -> np.ndarray:
        return _linear_backward(
            d_logits, dec_out, self.params["lm_head.w"], grads, "lm_head.w", "lm_head.b"
        )
