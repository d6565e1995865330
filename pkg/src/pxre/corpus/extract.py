"""Predicate-pattern relation extraction over dependency trees.

A simplified predicate-argument pattern: every verbal predicate (upos VERB,
or a copular construction) pairs its subject-like dependents (nsubj,
nsubj:pass) with its object/oblique dependents (obj, iobj, obl). The
relation surface is the predicate token plus any case/particle dependents
of the object, in sentence order; argument spans are the dependent's full
subtree (minus the tokens absorbed into the relation surface).

Relation keys are the lowercased, lexicon-lemmatized surface tokens joined
with single spaces.
"""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, replace

from ..data import LabelSpace
from .conllu import ParsedSentence

log = logging.getLogger("pxre")

SUBJECT_DEPRELS = frozenset({"nsubj", "nsubj:pass"})
OBJECT_DEPRELS = frozenset({"obj", "iobj", "obl"})
SURFACE_DEPRELS = frozenset({"case", "compound:prt"})  # absorbed into the relation


@dataclass(frozen=True)
class RelationTriple:
    sent_id: str
    subj_span: tuple[int, int]
    relation_surface: tuple[str, ...]
    obj_span: tuple[int, int]
    relation_key: str = ""


def _span(indices: set[int]) -> tuple[int, int]:
    return (min(indices), max(indices) + 1)


def _argument_span(sent: ParsedSentence, head_idx: int, absorbed: set[int]) -> tuple[int, int]:
    keep = sent.subtree(head_idx) - absorbed
    if not keep:
        keep = {head_idx}
    return _span(keep)


def extract_triples(sent: ParsedSentence) -> list[RelationTriple]:
    children = sent.children()
    triples: list[RelationTriple] = []

    for p in range(len(sent)):
        cop_kids = [c for c in children[p] if sent.deprels[c] == "cop"]
        subjects = [c for c in children[p] if sent.deprels[c] in SUBJECT_DEPRELS]
        if cop_kids:
            # copular construction: the head token itself is the object side
            if not subjects:
                continue
            case_kids = [c for c in children[p] if sent.deprels[c] in SURFACE_DEPRELS]
            surface_idx = sorted(cop_kids + case_kids)
            absorbed: set[int] = set(surface_idx)
            for s in subjects:
                absorbed |= sent.subtree(s)
            for c in children[p]:
                if sent.deprels[c] == "punct":
                    absorbed |= sent.subtree(c)
            obj_span = _argument_span(sent, p, absorbed)
            for s in subjects:
                triples.append(
                    RelationTriple(
                        sent_id=sent.sent_id,
                        subj_span=_span(sent.subtree(s)),
                        relation_surface=tuple(sent.tokens[i] for i in surface_idx),
                        obj_span=obj_span,
                    )
                )
            continue
        if sent.upos[p] != "VERB":
            continue
        objects = [c for c in children[p] if sent.deprels[c] in OBJECT_DEPRELS]
        if not subjects or not objects:
            continue
        for s in subjects:
            subj_span = _span(sent.subtree(s))
            for o in objects:
                case_kids = [c for c in children[o] if sent.deprels[c] in SURFACE_DEPRELS]
                surface_idx = sorted([p] + case_kids)
                absorbed = set()
                for c in case_kids:
                    absorbed |= sent.subtree(c)
                triples.append(
                    RelationTriple(
                        sent_id=sent.sent_id,
                        subj_span=subj_span,
                        relation_surface=tuple(sent.tokens[i] for i in surface_idx),
                        obj_span=_argument_span(sent, o, absorbed),
                    )
                )
    return triples


def lemmatize_relation(surface: Sequence[str], lexicon: Mapping[str, str]) -> str:
    """Lowercase each surface token, map through the lexicon (identity when
    absent), and join with single spaces."""
    return " ".join(lexicon.get(tok.lower(), tok.lower()) for tok in surface)


def with_relation_keys(
    triples: Sequence[RelationTriple], lexicon: Mapping[str, str]
) -> list[RelationTriple]:
    return [
        replace(t, relation_key=lemmatize_relation(t.relation_surface, lexicon))
        for t in triples
    ]


def select_top_k(
    triples: Sequence[RelationTriple], k: int
) -> tuple[list[RelationTriple], LabelSpace]:
    """Keep triples whose relation key ranks in the top k by frequency
    (ties broken lexicographically); the label space lists kept keys in
    descending-frequency order."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    for t in triples:
        if not t.relation_key:
            raise ValueError("triples must carry relation keys; run with_relation_keys")
    counts = Counter(t.relation_key for t in triples)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if len(ranked) < k:
        log.warning(
            "only %d distinct relation keys available; keeping all (k=%d)",
            len(ranked),
            k,
        )
    kept_keys = tuple(key for key, _ in ranked[:k])
    kept_set = set(kept_keys)
    kept = [t for t in triples if t.relation_key in kept_set]
    return kept, LabelSpace(kept_keys)
