"""Multiclass accuracy and micro/macro F1 from prediction/gold label lists.

Accuracy is the exact-match rate. Micro-F1 comes from pooled TP/FP/FN
across classes (and therefore equals accuracy in single-label multiclass).
Macro-F1 is the unweighted mean of per-class F1, where a class with zero
gold support enters the average (with F1 = 0) only if it was predicted;
otherwise it is excluded.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

from .data import LabelSpace


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricBundle:
    accuracy: float
    micro_f1: float
    macro_f1: float
    per_class: dict[str, ClassMetrics]
    n_instances: int


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def metrics(
    preds: Sequence[str], golds: Sequence[str], label_space: LabelSpace
) -> MetricBundle:
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(golds)} golds")
    if not golds:
        raise ValueError("metrics require at least one instance")
    for label in set(preds) | set(golds):
        if label not in label_space:
            raise ValueError(f"label {label!r} not in the label space")

    n = len(golds)
    correct = sum(p == g for p, g in zip(preds, golds))

    per_class: dict[str, ClassMetrics] = {}
    macro_terms: list[float] = []
    for label in label_space.labels:
        tp = sum(1 for p, g in zip(preds, golds) if p == label and g == label)
        fp = sum(1 for p, g in zip(preds, golds) if p == label and g != label)
        fn = sum(1 for p, g in zip(preds, golds) if p != label and g == label)
        support = tp + fn
        precision = _safe_div(tp, tp + fp)
        recall = _safe_div(tp, tp + fn)
        f1 = _safe_div(2.0 * precision * recall, precision + recall)
        per_class[label] = ClassMetrics(precision, recall, f1, support)
        if support > 0 or (tp + fp) > 0:
            macro_terms.append(f1)

    pooled_tp = correct
    pooled_fp = n - correct
    pooled_fn = n - correct
    micro_f1 = _safe_div(2.0 * pooled_tp, 2.0 * pooled_tp + pooled_fp + pooled_fn)

    return MetricBundle(
        accuracy=correct / n,
        micro_f1=micro_f1,
        macro_f1=_safe_div(sum(macro_terms), len(macro_terms)),
        per_class=per_class,
        n_instances=n,
    )
