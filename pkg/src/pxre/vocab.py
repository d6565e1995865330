"""Shared multilingual vocabulary with fixed reserved ids.

Reserved tokens occupy the low ids in a fixed order: <pad>, <unk>, <s>,
</s>, [MASK], then one id token per registered language. Everything after
that is corpus vocabulary, ordered by descending frequency (ties broken
lexicographically) for determinism.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .langs import DEFAULT_LANGUAGES, lang_id_token
from .templates import BOS, EOS, MASK

PAD = "<pad>"
UNK = "<unk>"


class VocabError(ValueError):
    pass


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    languages: tuple[str, ...]
    n_reserved: int
    token_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        mapping = {tok: i for i, tok in enumerate(self.tokens)}
        if len(mapping) != len(self.tokens):
            raise VocabError("duplicate tokens in vocabulary")
        object.__setattr__(self, "token_to_id", mapping)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, self.token_to_id[UNK])

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def is_reserved_id(self, idx: int) -> bool:
        return idx < self.n_reserved

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    @property
    def bos_id(self) -> int:
        return self.token_to_id[BOS]

    @property
    def eos_id(self) -> int:
        return self.token_to_id[EOS]

    @property
    def mask_id(self) -> int:
        return self.token_to_id[MASK]


def reserved_tokens(languages: Sequence[str] = DEFAULT_LANGUAGES) -> tuple[str, ...]:
    return (PAD, UNK, BOS, EOS, MASK) + tuple(lang_id_token(c) for c in languages)


def build_vocab(
    token_iter: Iterable[Iterable[str]],
    languages: Sequence[str] = DEFAULT_LANGUAGES,
    min_count: int = 1,
) -> Vocab:
    """Build a vocabulary from an iterable of token sequences."""
    reserved = reserved_tokens(languages)
    counts: Counter[str] = Counter()
    for toks in token_iter:
        counts.update(toks)
    for tok in reserved:
        counts.pop(tok, None)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    body = tuple(tok for tok, c in ordered if c >= min_count)
    return Vocab(tokens=reserved + body, languages=tuple(languages), n_reserved=len(reserved))


def truncate_tokens(
    tokens: Sequence[str],
    max_len: int,
    sent_positions: Sequence[int] | None = None,
) -> tuple[tuple[str, ...], tuple[int, ...]]:
    """Drop middle tokens of the sentence slot until the sequence fits.

    Only positions listed in `sent_positions` may be dropped; entity tokens,
    [MASK], framing, and language ids are never eligible. Returns the kept
    tokens and their original indices (for remapping mask positions).
    """
    n = len(tokens)
    if n <= max_len:
        return tuple(tokens), tuple(range(n))
    excess = n - max_len
    droppable = list(sent_positions or ())
    if len(droppable) < excess:
        raise VocabError(
            f"sequence of {n} tokens cannot be truncated to {max_len}: only "
            f"{len(droppable)} sentence-slot tokens are droppable"
        )
    mid = len(droppable) // 2
    lo = mid - excess // 2
    dropped = set(droppable[lo : lo + excess])
    kept = tuple(i for i in range(n) if i not in dropped)
    return tuple(tokens[i] for i in kept), kept


def encode_tokens(
    vocab: Vocab,
    tokens: Sequence[str],
    max_len: int,
    sent_positions: Sequence[int] | None = None,
) -> list[int]:
    """Map tokens to ids; out-of-vocab tokens become <unk>.

    Sequences longer than `max_len` are truncated from the sentence slot
    first (see truncate_tokens).
    """
    kept, _ = truncate_tokens(tokens, max_len, sent_positions)
    return [vocab.id(t) for t in kept]
