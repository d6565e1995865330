"""Slot-based prompt templates and rendering to encoder/decoder sequences.

A template spec is a whitespace-separated string over the slot symbols
``{SENT}``, ``{ENT1}``, ``{ENT2}``, the separator token ``[MASK]``, the
framing tokens ``<s>`` and ``</s>``, and literal words. ``[MASK]`` is a
single reserved token used purely as a separator between the sentence and
the entities; it is never a prediction target. Double quotes attached to a
slot (``"{SENT}"``) are peeled off into two literal quote tokens around the
substituted sentence.

Nine templates ship built in (``Prompt_1`` .. ``Prompt_9``, three soft, two
hard, three hard-soft) plus ``none``, the plain fine-tuning template that
feeds the bare sentence to both sides.

Language-id wrapping is a separate pass: the data language's id token is
appended after the encoder's final ``</s>`` and prepended before the
decoder's initial ``<s>``; both sides always carry the same id.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .data import RelationInstance
from .langs import DEFAULT_LANGUAGES, require_language

BOS = "<s>"
EOS = "</s>"
MASK = "[MASK]"
SLOT_SENT = "{SENT}"
SLOT_ENT1 = "{ENT1}"
SLOT_ENT2 = "{ENT2}"

_SLOTS = (SLOT_SENT, SLOT_ENT1, SLOT_ENT2)
_SPECIALS = (BOS, EOS, MASK) + _SLOTS

FAMILIES = ("soft", "hard", "hard_soft", "none")


class TemplateError(ValueError):
    pass


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    family: str
    enc_spec: str
    dec_spec: str
    enc_items: tuple[str, ...]
    dec_items: tuple[str, ...]

    @property
    def uses_entities(self) -> bool:
        items = self.enc_items + self.dec_items
        return SLOT_ENT1 in items or SLOT_ENT2 in items

    @property
    def dec_has_mask(self) -> bool:
        return MASK in self.dec_items


@dataclass(frozen=True)
class RenderedPair:
    """Token sequences for both model sides, with slot bookkeeping.

    ``*_mask_positions`` index every [MASK] token; ``*_sent_positions`` index
    the tokens contributed by {SENT} slots (the only ones eligible for
    truncation). ``lang`` is None until wrap_language_ids has run.
    """

    enc_tokens: tuple[str, ...]
    dec_tokens: tuple[str, ...]
    enc_mask_positions: tuple[int, ...]
    dec_mask_positions: tuple[int, ...]
    enc_sent_positions: tuple[int, ...]
    dec_sent_positions: tuple[int, ...]
    lang: str | None = None


@dataclass(frozen=True)
class Verbalizer:
    """Injective mapping from relation labels to single label-word tokens."""

    mapping: dict[str, str]

    def __post_init__(self) -> None:
        words = list(self.mapping.values())
        if len(set(words)) != len(words):
            dupes = sorted({w for w in words if words.count(w) > 1})
            raise TemplateError(f"verbalizer is not injective; repeated words: {dupes}")

    def word(self, label: str) -> str:
        return self.mapping[label]


def _split_spec(spec: str) -> list[str]:
    """Tokenize a spec string, peeling quotes attached to slots."""
    items: list[str] = []
    for raw in spec.split():
        lead = []
        tail = []
        while raw.startswith('"') and len(raw) > 1:
            lead.append('"')
            raw = raw[1:]
        while raw.endswith('"') and len(raw) > 1:
            tail.append('"')
            raw = raw[:-1]
        items.extend(lead)
        items.append(raw)
        items.extend(tail)
    return items


def _validate_items(items: list[str], side: str, name: str) -> None:
    if not items or items[0] != BOS or items[-1] != EOS:
        raise TemplateError(
            f"template {name!r} {side} spec must begin with {BOS} and end with {EOS}"
        )
    for it in items:
        if it in _SPECIALS:
            continue
        if (it.startswith("{") and it.endswith("}")) or (
            it.startswith("[") and it.endswith("]")
        ):
            raise TemplateError(f"template {name!r} {side} spec: unknown slot symbol {it!r}")


def _infer_family(items: tuple[str, ...]) -> str:
    has_mask = MASK in items
    has_literal = any(it not in _SPECIALS for it in items)
    if has_literal and has_mask:
        return "hard_soft"
    if has_literal:
        return "hard"
    if has_mask:
        return "soft"
    return "none"


def parse_template_spec(enc: str, dec: str, name: str) -> PromptTemplate:
    """Parse user-supplied ENC/DEC spec strings and infer the family."""
    enc_items = _split_spec(enc)
    dec_items = _split_spec(dec)
    _validate_items(enc_items, "ENC", name)
    _validate_items(dec_items, "DEC", name)
    all_items = tuple(enc_items) + tuple(dec_items)
    return PromptTemplate(
        name=name,
        family=_infer_family(all_items),
        enc_spec=enc,
        dec_spec=dec,
        enc_items=tuple(enc_items),
        dec_items=tuple(dec_items),
    )


def load_template_file(path, name: str) -> PromptTemplate:
    """Template spec file: line 1 = ENC spec, line 2 = DEC spec."""
    from pathlib import Path

    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if len(lines) < 2:
        raise TemplateError(f"{path}: expected two non-empty lines (ENC spec, DEC spec)")
    return parse_template_spec(lines[0], lines[1], name)


_SOFT_ENC = f"{BOS} {SLOT_SENT} {MASK} {SLOT_ENT1} {MASK} {SLOT_ENT2} {EOS}"
_QUESTION_DEC = f"{BOS} What is the type of relationship between {SLOT_ENT1} and {SLOT_ENT2} {EOS}"
_QUOTED_ENC = f'{BOS} The sentence: "{SLOT_SENT}" includes {SLOT_ENT1} {MASK} {SLOT_ENT2} {EOS}'

_BUILTIN_SPECS: tuple[tuple[str, str, str], ...] = (
    ("Prompt_1", _SOFT_ENC, f"{BOS} {SLOT_SENT} {EOS}"),
    ("Prompt_2", _SOFT_ENC, f"{BOS} {SLOT_ENT1} {SLOT_ENT2} {EOS}"),
    ("Prompt_3", _SOFT_ENC, f"{BOS} {SLOT_ENT1} {MASK} {SLOT_ENT2} {EOS}"),
    ("Prompt_4", _SOFT_ENC, _SOFT_ENC),
    ("Prompt_5", f"{BOS} {SLOT_SENT} {EOS}", _QUESTION_DEC),
    (
        "Prompt_6",
        f"{BOS} The sentence of {SLOT_SENT} includes {SLOT_ENT1} and {SLOT_ENT2} {EOS}",
        _QUESTION_DEC,
    ),
    (
        "Prompt_7",
        f"{BOS} The sentence of {SLOT_SENT} includes {SLOT_ENT1} {MASK} {SLOT_ENT2} {EOS}",
        f"{BOS} The sentence of {SLOT_SENT} includes {SLOT_ENT1} {MASK} {SLOT_ENT2} {EOS}",
    ),
    ("Prompt_8", _QUOTED_ENC, f"{BOS} {SLOT_SENT} {EOS}"),
    ("Prompt_9", _QUOTED_ENC, f"{BOS} {SLOT_ENT1} {MASK} {SLOT_ENT2} {EOS}"),
    ("none", f"{BOS} {SLOT_SENT} {EOS}", f"{BOS} {SLOT_SENT} {EOS}"),
)


def builtin_templates() -> dict[str, PromptTemplate]:
    """The nine built-in templates plus `none` (plain fine-tuning)."""
    registry: dict[str, PromptTemplate] = {}
    for name, enc, dec in _BUILTIN_SPECS:
        tpl = parse_template_spec(enc, dec, name)
        if name == "none":
            tpl = replace(tpl, family="none")
        registry[name] = tpl
    return registry


def get_template(name: str) -> PromptTemplate:
    registry = builtin_templates()
    if name not in registry:
        raise TemplateError(
            f"unknown template {name!r}; built in: {', '.join(registry)}"
        )
    return registry[name]


def _render_side(items: tuple[str, ...], instance: RelationInstance, side: str):
    tokens: list[str] = []
    mask_positions: list[int] = []
    sent_positions: list[int] = []
    for item in items:
        if item == SLOT_SENT:
            sent_positions.extend(range(len(tokens), len(tokens) + len(instance.tokens)))
            tokens.extend(instance.tokens)
        elif item == SLOT_ENT1:
            tokens.extend(instance.subj_tokens)
        elif item == SLOT_ENT2:
            tokens.extend(instance.obj_tokens)
        else:
            if item == MASK:
                mask_positions.append(len(tokens))
            tokens.append(item)
    for tok in tokens:
        if tok in _SLOTS:  # template invariant breach, not user error
            raise RenderError(f"unsubstituted slot {tok!r} in rendered {side} side")
    return tuple(tokens), tuple(mask_positions), tuple(sent_positions)


def render(template: PromptTemplate, instance: RelationInstance) -> RenderedPair:
    """Substitute the instance into the template's ENC/DEC specs.

    Entity slots take the joined span tokens; {SENT} takes the full sentence.
    Label-only instances (sentinel spans) are only renderable by templates
    without entity slots.
    """
    if template.uses_entities and instance.is_label_only:
        raise RenderError(
            f"instance {instance.id!r} is label-only (sentinel spans) and cannot "
            f"be rendered by entity template {template.name!r}"
        )
    enc_tokens, enc_masks, enc_sents = _render_side(template.enc_items, instance, "ENC")
    dec_tokens, dec_masks, dec_sents = _render_side(template.dec_items, instance, "DEC")
    return RenderedPair(
        enc_tokens=enc_tokens,
        dec_tokens=dec_tokens,
        enc_mask_positions=enc_masks,
        dec_mask_positions=dec_masks,
        enc_sent_positions=enc_sents,
        dec_sent_positions=dec_sents,
    )


def wrap_language_ids(
    pair: RenderedPair, lang: str, languages=DEFAULT_LANGUAGES
) -> RenderedPair:
    """Append the language id after the encoder's final </s> and prepend it
    before the decoder's initial <s>. Both sides carry the same id."""
    id_token = require_language(lang, languages)
    if pair.lang is not None:
        raise TemplateError(f"pair already wrapped with language id for {pair.lang!r}")
    return RenderedPair(
        enc_tokens=pair.enc_tokens + (id_token,),
        dec_tokens=(id_token,) + pair.dec_tokens,
        enc_mask_positions=pair.enc_mask_positions,
        dec_mask_positions=tuple(p + 1 for p in pair.dec_mask_positions),
        enc_sent_positions=pair.enc_sent_positions,
        dec_sent_positions=tuple(p + 1 for p in pair.dec_sent_positions),
        lang=lang,
    )


def template_literals(template: PromptTemplate) -> tuple[str, ...]:
    """The literal (non-slot, non-reserved) tokens a template contributes."""
    out = []
    for item in template.enc_items + template.dec_items:
        if item not in _SPECIALS:
            out.append(item)
    return tuple(out)
