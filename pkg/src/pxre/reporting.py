"""Evaluation reports and table emission.

Tables have one row per model and one column per transfer direction
(e.g. En-Zh), plus an Avg. column. Averages are always recomputed as the
unweighted mean over directions; when a caller supplies a claimed average
that disagrees with the recomputed one, the table gets a footnote instead
of silently adopting the claim.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .metrics import ClassMetrics, MetricBundle

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EvalReport:
    direction: tuple[str, str]  # (source_lang, target_lang)
    accuracy: float
    micro_f1: float
    macro_f1: float
    per_class: dict[str, ClassMetrics]
    n_instances: int
    config_fingerprint: str
    model: str

    def __post_init__(self) -> None:
        for name in ("accuracy", "micro_f1", "macro_f1"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0,1]")
        support = sum(c.support for c in self.per_class.values())
        if support != self.n_instances:
            raise ValueError(
                f"per-class support sums to {support}, expected {self.n_instances}"
            )

    @property
    def direction_label(self) -> str:
        src, tgt = self.direction
        return f"{src.capitalize()}-{tgt.capitalize()}"

    def to_dict(self) -> dict:
        return {
            "direction": list(self.direction),
            "accuracy": self.accuracy,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "per_class": {
                y: {
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                    "support": c.support,
                }
                for y, c in self.per_class.items()
            },
            "n_instances": self.n_instances,
            "config_fingerprint": self.config_fingerprint,
            "model": self.model,
        }

    @staticmethod
    def from_dict(obj: dict) -> "EvalReport":
        return EvalReport(
            direction=tuple(obj["direction"]),
            accuracy=obj["accuracy"],
            micro_f1=obj["micro_f1"],
            macro_f1=obj["macro_f1"],
            per_class={
                y: ClassMetrics(c["precision"], c["recall"], c["f1"], c["support"])
                for y, c in obj["per_class"].items()
            },
            n_instances=obj["n_instances"],
            config_fingerprint=obj["config_fingerprint"],
            model=obj["model"],
        )


def report_from_metrics(
    bundle: MetricBundle,
    direction: tuple[str, str],
    config_fingerprint: str,
    model: str,
) -> EvalReport:
    return EvalReport(
        direction=direction,
        accuracy=bundle.accuracy,
        micro_f1=bundle.micro_f1,
        macro_f1=bundle.macro_f1,
        per_class=dict(bundle.per_class),
        n_instances=bundle.n_instances,
        config_fingerprint=config_fingerprint,
        model=model,
    )


@dataclass
class ReportTable:
    metric: str
    directions: list[str]
    rows: list[dict]  # {"model", "values": {direction: fraction}, "avg": fraction}
    footnotes: list[str] = field(default_factory=list)


def _build_table(
    reports: Sequence[EvalReport],
    metric: str,
    claimed_avgs: dict[str, float] | None,
) -> ReportTable:
    if not reports:
        raise ValueError("emit_report requires at least one report")
    directions: list[str] = []
    by_model: dict[str, dict[str, float]] = {}
    for r in reports:
        d = r.direction_label
        if d not in directions:
            directions.append(d)
        by_model.setdefault(r.model, {})[d] = getattr(r, metric)
    rows = []
    footnotes = []
    for model, values in by_model.items():
        avg = sum(values.values()) / len(values)
        rows.append({"model": model, "values": values, "avg": avg})
        if claimed_avgs and model in claimed_avgs:
            claimed = claimed_avgs[model]
            if abs(claimed - 100.0 * avg) > 0.05:
                footnotes.append(
                    f"{model}: claimed Avg. {claimed:.1f} differs from the "
                    f"recomputed mean {100.0 * avg:.2f}; the table shows the "
                    f"recomputed value"
                )
    return ReportTable(metric=metric, directions=directions, rows=rows, footnotes=footnotes)


def _pct(x: float) -> str:
    return f"{100.0 * x:.1f}"


def render_markdown(table: ReportTable) -> str:
    header = ["Model", *table.directions, "Avg."]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join(["---"] * len(header)) + "|",
    ]
    for row in table.rows:
        cells = [row["model"]]
        cells += [
            _pct(row["values"][d]) if d in row["values"] else "-" for d in table.directions
        ]
        cells.append(_pct(row["avg"]))
        lines.append("| " + " | ".join(cells) + " |")
    text = "\n".join(lines) + "\n"
    if table.footnotes:
        text += "\n" + "\n".join(f"> {note}" for note in table.footnotes) + "\n"
    return text


def render_json(table: ReportTable, reports: Sequence[EvalReport]) -> str:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "metric": table.metric,
        "directions": table.directions,
        "rows": table.rows,
        "footnotes": table.footnotes,
        "reports": [r.to_dict() for r in reports],
    }
    return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"


def reports_from_json(text: str) -> list[EvalReport]:
    payload = json.loads(text)
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema version: {version!r}")
    return [EvalReport.from_dict(obj) for obj in payload["reports"]]


def emit_report(
    reports: Sequence[EvalReport],
    format: str = "md",
    out_path: str | Path | None = None,
    metric: str = "micro_f1",
    claimed_avgs: dict[str, float] | None = None,
) -> str:
    """Render reports as a markdown table or JSON; optionally write to a file."""
    table = _build_table(reports, metric, claimed_avgs)
    if format == "md":
        text = render_markdown(table)
    elif format == "json":
        text = render_json(table, reports)
    else:
        raise ValueError(f"unknown report format {format!r} (choose md or json)")
    if out_path is not None:
        Path(out_path).write_text(text, encoding="utf-8")
    return text
