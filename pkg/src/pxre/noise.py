"""Noise function for denoising pretraining: span masking + sentence permutation.

About 35% of the tokens are covered by contiguous spans and each span is
replaced by a single [MASK] token. Span lengths are drawn from a Poisson
with mean 3.5; zero-length draws are redrawn (not clamped) so the realized
mean stays near 3.5. If the input contains more than one sentence (split on
terminal punctuation tokens) the sentence order is randomly permuted before
masking; single-sentence inputs keep their order.

Reserved framing tokens (<s>, </s>, language ids, <pad>, <unk>) are never
masked and never counted toward the budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .langs import DEFAULT_LANGUAGES
from .vocab import reserved_tokens

MASK_RATIO = 0.35
SPAN_MEAN = 3.5

TERMINAL_PUNCT = {".", "!", "?", "。", "！", "？"}

_PROTECTED = set(reserved_tokens(DEFAULT_LANGUAGES))


@dataclass
class NoiseStats:
    """Bookkeeping for one apply_noise call."""

    n_tokens: int = 0
    n_maskable: int = 0
    n_masked: int = 0
    sampled_span_lengths: list[int] = field(default_factory=list)
    realized_span_lengths: list[int] = field(default_factory=list)


def sample_span_length(rng: np.random.Generator, mean: float = SPAN_MEAN) -> int:
    """One zero-truncated Poisson draw (zeros are redrawn)."""
    length = 0
    while length == 0:
        length = int(rng.poisson(mean))
    return length


def split_sentences(tokens: list[str]) -> list[list[str]]:
    """Split a token list into sentences after terminal punctuation tokens."""
    sentences: list[list[str]] = []
    current: list[str] = []
    for tok in tokens:
        current.append(tok)
        if tok in TERMINAL_PUNCT:
            sentences.append(current)
            current = []
    if current:
        sentences.append(current)
    return sentences


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def apply_noise(tokens, rng_seed) -> list[str]:
    """Noise a token sequence for the reconstruction objective."""
    noised, _ = apply_noise_with_stats(tokens, rng_seed)
    return noised


def apply_noise_with_stats(tokens, rng_seed) -> tuple[list[str], NoiseStats]:
    tokens = list(tokens)
    if not tokens:
        raise ValueError("apply_noise requires a non-empty token list")
    rng = _rng(rng_seed)
    stats = NoiseStats(n_tokens=len(tokens))

    sentences = split_sentences(tokens)
    if len(sentences) > 1:
        order = rng.permutation(len(sentences))
        tokens = [tok for idx in order for tok in sentences[idx]]

    n = len(tokens)
    maskable = np.array([tok not in _PROTECTED for tok in tokens], dtype=bool)
    stats.n_maskable = int(maskable.sum())
    budget = int(round(MASK_RATIO * stats.n_maskable))

    covered = np.zeros(n, dtype=bool)
    spans: list[tuple[int, int]] = []
    total = 0
    for start in rng.permutation(n):
        if total >= budget:
            break
        if not maskable[start] or covered[start]:
            continue
        length = sample_span_length(rng)
        stats.sampled_span_lengths.append(length)
        length = min(length, budget - total)
        end = start
        while end < n and end - start < length and maskable[end] and not covered[end]:
            end += 1
        covered[start:end] = True
        spans.append((start, end))
        total += end - start
        stats.realized_span_lengths.append(end - start)
    stats.n_masked = total

    # each placed span becomes exactly one [MASK], even when spans are adjacent
    span_start = {s: e for s, e in spans}
    out: list[str] = []
    i = 0
    while i < len(tokens):
        if i in span_start:
            out.append("[MASK]")
            i = span_start[i]
        else:
            out.append(tokens[i])
            i += 1
    return out, stats
