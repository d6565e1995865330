"""Relation-extraction data model and the JSONL dataset format.

A dataset is a UTF-8 JSONL file, one instance per line:

    {"id": "e1", "lang": "en", "tokens": [...], "subj_span": [0, 1],
     "obj_span": [5, 6], "label": "PHYS:Located"}

Spans are half-open token index pairs. Instances produced by the parallel
corpus builder that could not locate entities in the target sentence carry
the label-only sentinel spans ``[0, 0)`` for both entities; such instances
are valid data but cannot be rendered by templates with entity slots.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

SENTINEL_SPAN: tuple[int, int] = (0, 0)

_FIELD_ORDER = ("id", "lang", "tokens", "subj_span", "obj_span", "label")


class DataFormatError(ValueError):
    """Malformed JSONL input; message carries the line number or instance id."""


class AutoLabelSpace:
    """Sentinel: derive the label space from the labels observed in the file."""

    def __repr__(self) -> str:  # pragma: no cover
        return "AUTO"


AUTO = AutoLabelSpace()


def _check_span(span: Sequence[int], n_tokens: int, which: str) -> tuple[int, int]:
    start, end = int(span[0]), int(span[1])
    if not (0 <= start < end <= n_tokens):
        raise DataFormatError(
            f"{which} span [{start},{end}) out of bounds for {n_tokens} tokens"
        )
    return start, end


@dataclass(frozen=True)
class RelationInstance:
    """One sentence with two marked entity spans and a relation label."""

    id: str
    lang: str
    tokens: tuple[str, ...]
    subj_span: tuple[int, int]
    obj_span: tuple[int, int]
    label: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "subj_span", tuple(int(i) for i in self.subj_span))
        object.__setattr__(self, "obj_span", tuple(int(i) for i in self.obj_span))
        if not self.tokens:
            raise DataFormatError(f"instance {self.id!r}: empty token list")
        if self.is_label_only:
            return
        _check_span(self.subj_span, len(self.tokens), "subj")
        _check_span(self.obj_span, len(self.tokens), "obj")

    @property
    def is_label_only(self) -> bool:
        """True for builder output whose entities were not located in `tokens`."""
        return self.subj_span == SENTINEL_SPAN and self.obj_span == SENTINEL_SPAN

    @property
    def subj_tokens(self) -> tuple[str, ...]:
        return self.tokens[self.subj_span[0] : self.subj_span[1]]

    @property
    def obj_tokens(self) -> tuple[str, ...]:
        return self.tokens[self.obj_span[0] : self.obj_span[1]]

    def to_json(self) -> str:
        obj = {
            "id": self.id,
            "lang": self.lang,
            "tokens": list(self.tokens),
            "subj_span": list(self.subj_span),
            "obj_span": list(self.obj_span),
            "label": self.label,
        }
        return json.dumps(obj, ensure_ascii=False)


@dataclass(frozen=True)
class LabelSpace:
    """Ordered set of relation-type strings with a label -> index bijection."""

    labels: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(set(self.labels)) != len(self.labels):
            dupes = sorted({x for x in self.labels if self.labels.count(x) > 1})
            raise DataFormatError(f"duplicate labels in label space: {dupes}")
        object.__setattr__(self, "index", {y: i for i, y in enumerate(self.labels)})

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.index


@dataclass(frozen=True)
class Dataset:
    name: str
    lang: str
    split: str
    instances: tuple[RelationInstance, ...]
    label_space: LabelSpace

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(self.instances))

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)


def _instance_from_obj(obj: dict, where: str) -> RelationInstance:
    missing = [k for k in _FIELD_ORDER if k not in obj]
    if missing:
        raise DataFormatError(f"{where}: missing keys {missing}")
    try:
        return RelationInstance(
            id=str(obj["id"]),
            lang=str(obj["lang"]),
            tokens=tuple(str(t) for t in obj["tokens"]),
            subj_span=tuple(obj["subj_span"]),
            obj_span=tuple(obj["obj_span"]),
            label=str(obj["label"]),
        )
    except DataFormatError as exc:
        raise DataFormatError(f"{where}: {exc}") from exc


def load_jsonl(
    path: str | Path,
    label_space: LabelSpace | AutoLabelSpace = AUTO,
    name: str | None = None,
    split: str = "",
) -> Dataset:
    """Load a JSONL dataset, validating every instance.

    With ``label_space=AUTO`` the label space is the sorted set of observed
    labels; with a fixed LabelSpace, an instance with an unknown label is an
    error. The dataset language is taken from the instances (which must
    agree).
    """
    path = Path(path)
    instances: list[RelationInstance] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise DataFormatError(f"{path}:{lineno}: expected a JSON object")
            inst = _instance_from_obj(obj, where=f"{path}:{lineno} (id={obj.get('id')!r})")
            if isinstance(label_space, LabelSpace) and inst.label not in label_space:
                raise DataFormatError(
                    f"{path}:{lineno}: instance {inst.id!r} has label {inst.label!r} "
                    f"not in the fixed label space"
                )
            instances.append(inst)

    if isinstance(label_space, AutoLabelSpace):
        space = LabelSpace(tuple(sorted({i.label for i in instances})))
    else:
        space = label_space
    langs = {i.lang for i in instances}
    if len(langs) > 1:
        raise DataFormatError(f"{path}: mixed languages in one dataset: {sorted(langs)}")
    lang = langs.pop() if langs else ""
    return Dataset(
        name=name if name is not None else path.stem,
        lang=lang,
        split=split or path.stem,
        instances=tuple(instances),
        label_space=space,
    )


def serialize(dataset: Dataset) -> str:
    """Canonical JSONL text: fixed key order, UTF-8, one instance per line."""
    return "".join(inst.to_json() + "\n" for inst in dataset.instances)


def save_jsonl(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(serialize(dataset), encoding="utf-8")


def split_counts(datasets: Iterable[Dataset]) -> dict[tuple[str, str, str], int]:
    """Instance counts keyed by (name, lang, split), in input order."""
    counts: dict[tuple[str, str, str], int] = {}
    for ds in datasets:
        key = (ds.name, ds.lang, ds.split)
        counts[key] = counts.get(key, 0) + len(ds)
    return counts


def validate(dataset: Dataset) -> list[str]:
    """Return a list of invariant violations (empty iff the dataset is clean).

    Violations are returned, not raised: ids must be unique, labels must be in
    the label space, languages must match the dataset, spans must be in
    bounds, and identical (tokens, subj, obj) keys may not carry conflicting
    labels.
    """
    violations: list[str] = []
    seen_ids: dict[str, int] = {}
    seen_keys: dict[tuple, str] = {}
    for inst in dataset.instances:
        if inst.id in seen_ids:
            violations.append(f"duplicate id {inst.id!r}")
        seen_ids[inst.id] = seen_ids.get(inst.id, 0) + 1
        if inst.label not in dataset.label_space:
            violations.append(
                f"instance {inst.id!r}: label {inst.label!r} not in label space"
            )
        if dataset.lang and inst.lang != dataset.lang:
            violations.append(
                f"instance {inst.id!r}: lang {inst.lang!r} != dataset lang {dataset.lang!r}"
            )
        if not inst.is_label_only:
            for which, span in (("subj", inst.subj_span), ("obj", inst.obj_span)):
                start, end = span
                if not (0 <= start < end <= len(inst.tokens)):
                    violations.append(
                        f"instance {inst.id!r}: {which} span [{start},{end}) "
                        f"out of bounds for {len(inst.tokens)} tokens"
                    )
        key = (inst.tokens, inst.subj_span, inst.obj_span)
        if not inst.is_label_only:
            prev = seen_keys.get(key)
            if prev is not None and prev != inst.label:
                violations.append(
                    f"instance {inst.id!r}: conflicting label {inst.label!r} for a "
                    f"(sentence, subj, obj) key previously labeled {prev!r}"
                )
            seen_keys.setdefault(key, inst.label)
    return violations
