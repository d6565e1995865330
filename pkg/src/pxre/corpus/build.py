"""Assemble relation instances from parallel records and emit split files.

Each kept source-side triple becomes an instance over the *target*-language
sentence: the label is the source relation key, and entity spans are exact
token-subsequence matches of the source entity surface inside the target
sentence. When either entity cannot be located the instance is emitted
label-only (sentinel spans), counted in the build report.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data import SENTINEL_SPAN, Dataset, LabelSpace, RelationInstance, save_jsonl
from .conllu import ParsedSentence
from .extract import RelationTriple


class BuildError(ValueError):
    pass


@dataclass(frozen=True)
class ParallelRecord:
    source: ParsedSentence
    target_tokens: tuple[str, ...]
    alignment_id: str


def pair_records(
    sentences: Sequence[ParsedSentence], target_lines: Sequence[str]
) -> list[ParallelRecord]:
    """Pair parsed source sentences with target sentences by line number."""
    if len(sentences) != len(target_lines):
        raise BuildError(
            f"alignment mismatch: {len(sentences)} parsed sentences vs "
            f"{len(target_lines)} target lines"
        )
    return [
        ParallelRecord(
            source=sent,
            target_tokens=tuple(line.split()),
            alignment_id=sent.sent_id,
        )
        for sent, line in zip(sentences, target_lines)
    ]


def load_lexicon(path) -> dict[str, str]:
    """Two-column TSV: surface form -> lemma."""
    lexicon: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise BuildError(f"{path}:{lineno}: expected 2 tab-separated columns")
        lexicon[cols[0].strip().lower()] = cols[1].strip().lower()
    return lexicon


def _find_subsequence(
    haystack: Sequence[str], needle: Sequence[str], skip: tuple[int, int] | None = None
) -> tuple[int, int] | None:
    n = len(needle)
    if n == 0:
        return None
    for start in range(len(haystack) - n + 1):
        span = (start, start + n)
        if span == skip:
            continue
        if tuple(haystack[start : start + n]) == tuple(needle):
            return span
    return None


def build_instances(
    records: Sequence[ParallelRecord],
    kept_triples: Sequence[RelationTriple],
    target_lang: str = "zh",
) -> tuple[list[RelationInstance], dict]:
    """One instance per kept triple, over the target sentence tokens.

    Returns (instances, stats) where stats counts located vs label-only
    instances for the build report.
    """
    by_id: dict[str, ParallelRecord] = {}
    for rec in records:
        by_id[rec.alignment_id] = rec
    instances: list[RelationInstance] = []
    n_label_only = 0
    counter: dict[str, int] = {}
    for triple in kept_triples:
        rec = by_id.get(triple.sent_id)
        if rec is None:
            raise BuildError(f"no parallel record for sentence id {triple.sent_id!r}")
        seq = counter.get(triple.sent_id, 0)
        counter[triple.sent_id] = seq + 1
        inst_id = f"{triple.sent_id}-{seq}"
        subj_surface = rec.source.tokens[triple.subj_span[0] : triple.subj_span[1]]
        obj_surface = rec.source.tokens[triple.obj_span[0] : triple.obj_span[1]]
        subj = _find_subsequence(rec.target_tokens, subj_surface)
        obj = _find_subsequence(rec.target_tokens, obj_surface, skip=subj)
        if subj is None or obj is None or not rec.target_tokens:
            n_label_only += 1
            subj, obj = SENTINEL_SPAN, SENTINEL_SPAN
            tokens = rec.target_tokens or ("<empty>",)
        else:
            tokens = rec.target_tokens
        instances.append(
            RelationInstance(
                id=inst_id,
                lang=target_lang,
                tokens=tokens,
                subj_span=subj,
                obj_span=obj,
                label=triple.relation_key,
            )
        )
    stats = {
        "n_instances": len(instances),
        "n_label_only": n_label_only,
        "unmatched_entity_rate": (n_label_only / len(instances)) if instances else 0.0,
    }
    return instances, stats


def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    """Floor the dev/test shares; the train split absorbs the remainder."""
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise BuildError(f"need three non-negative ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise BuildError(f"ratios must sum to 1, got {sum(ratios)}")
    n_dev = math.floor(ratios[1] * n)
    n_test = math.floor(ratios[2] * n)
    return n - n_dev - n_test, n_dev, n_test


def split_emit(
    instances: Sequence[RelationInstance],
    label_space: LabelSpace,
    ratios: Sequence[float],
    seed: int,
    outdir,
    dataset_name: str = "built",
    target_lang: str = "zh",
    extra_report: Mapping | None = None,
) -> dict:
    """Seeded shuffle, contiguous train/dev/test partition, JSONL emission.

    Writes train.jsonl / dev.jsonl / test.jsonl plus build_report.json and
    returns the report dict. Identical inputs and seed give byte-identical
    files.
    """
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise BuildError(f"cannot create output directory {outdir}: {exc}") from exc

    order = np.random.default_rng(seed).permutation(len(instances))
    shuffled = [instances[i] for i in order]
    n_train, n_dev, n_test = split_sizes(len(instances), ratios)
    parts = {
        "train": shuffled[:n_train],
        "dev": shuffled[n_train : n_train + n_dev],
        "test": shuffled[n_train + n_dev :],
    }
    counts = {}
    for split, insts in parts.items():
        ds = Dataset(
            name=dataset_name,
            lang=target_lang,
            split=split,
            instances=tuple(insts),
            label_space=label_space,
        )
        save_jsonl(ds, outdir / f"{split}.jsonl")
        counts[split] = len(insts)

    report = {
        "counts": counts,
        "labels": list(label_space.labels),
        "seed": seed,
        "ratios": list(ratios),
        **(dict(extra_report) if extra_report else {}),
    }
    (outdir / "build_report.json").write_text(
        json.dumps(report, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return report
