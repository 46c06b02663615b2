"""Evaluation reports: JSON documents and aligned text tables.

JSON layout (field names are fixed)::

    {"reports": [
        {"method": ..., "n_products": ..., "threshold": ...,
         "oracle_category": ..., "slice": ..., "coverage": ...,
         "category": {"OP", "OR", "OF1"}, "sub_category": {...},
         "family": {...}, "gender": {...},
         "attribute": {"OP", "OR", "OF1", "P@k", "R@k", "F1@k", "AP",
                       "mean_predicted", "mean_annotated",
                       "precision_annotations", "recall_annotations",
                       "precision_hidden", "recall_hidden"},
         "inconsistency_rate": ...}
    ]}

Absent values (no positives, no hidden truth) are ``null``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any


class ReportError(ValueError):
    """Raised when a report document cannot be parsed."""
    pass


@dataclass
class LevelScores:
    """Support-weighted overall precision, recall and F1 of one level."""
    op: float
    or_: float
    of1: float

    def to_dict(self) -> dict[str, float]:
        return {"OP": self.op, "OR": self.or_, "OF1": self.of1}

    @classmethod
    def from_dict(cls, data: dict[str, float]) -> LevelScores:
        return cls(op=data["OP"], or_=data["OR"], of1=data["OF1"])


# JSON key -> AttributeScores field
_ATTRIBUTE_KEYS = {
    "OP": "op",
    "OR": "or_",
    "OF1": "of1",
    "P@k": "p_at_k",
    "R@k": "r_at_k",
    "F1@k": "f1_at_k",
    "AP": "ap",
    "mean_predicted": "mean_predicted",
    "mean_annotated": "mean_annotated",
    "precision_annotations": "precision_annotations",
    "recall_annotations": "recall_annotations",
    "precision_hidden": "precision_hidden",
    "recall_hidden": "recall_hidden",
}


@dataclass
class AttributeScores:
    """Attribute-level metrics.

    OP/OR/OF1 use thresholded predictions against annotations; the @k
    metrics and AP use raw scores. ``*_hidden`` compare thresholded
    predictions with the generator's hidden truth.
    """
    op: float | None
    or_: float | None
    of1: float | None
    p_at_k: float | None
    r_at_k: float | None
    f1_at_k: float | None
    ap: float | None
    mean_predicted: float
    mean_annotated: float
    precision_annotations: float | None = None
    recall_annotations: float | None = None
    precision_hidden: float | None = None
    recall_hidden: float | None = None

    def to_dict(self) -> dict[str, float | None]:
        return {key: getattr(self, name) for key, name in _ATTRIBUTE_KEYS.items()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AttributeScores:
        return cls(**{name: data.get(key) for key, name in _ATTRIBUTE_KEYS.items()})


@dataclass
class EvalReport:
    """Metrics of one method on one evaluation set."""
    method: str
    n_products: int
    threshold: float
    category: LevelScores
    sub_category: LevelScores
    attribute: AttributeScores
    family: LevelScores
    gender: LevelScores
    inconsistency_rate: float
    coverage: float | None = None
    oracle_category: bool = False
    slice: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "n_products": self.n_products,
            "threshold": self.threshold,
            "oracle_category": self.oracle_category,
            "slice": self.slice,
            "coverage": self.coverage,
            "category": self.category.to_dict(),
            "sub_category": self.sub_category.to_dict(),
            "family": self.family.to_dict(),
            "gender": self.gender.to_dict(),
            "attribute": self.attribute.to_dict(),
            "inconsistency_rate": self.inconsistency_rate,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EvalReport:
        try:
            return cls(
                method=data["method"],
                n_products=data["n_products"],
                threshold=data["threshold"],
                category=LevelScores.from_dict(data["category"]),
                sub_category=LevelScores.from_dict(data["sub_category"]),
                attribute=AttributeScores.from_dict(data["attribute"]),
                family=LevelScores.from_dict(data["family"]),
                gender=LevelScores.from_dict(data["gender"]),
                inconsistency_rate=data["inconsistency_rate"],
                coverage=data.get("coverage"),
                oracle_category=data.get("oracle_category", False),
                slice=data.get("slice"),
            )
        except (KeyError, TypeError) as e:
            raise ReportError(f"Malformed report entry: missing or invalid {e}") from e


def dumps(reports: list[EvalReport]) -> str:
    return json.dumps({"reports": [r.to_dict() for r in reports]}, indent=2, sort_keys=True) + "\n"


def loads(text: str) -> list[EvalReport]:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ReportError(f"Report is not valid JSON: {e}") from e
    if not isinstance(document, dict) or not isinstance(document.get("reports"), list):
        raise ReportError("Report document must be an object with a 'reports' list")
    return [EvalReport.from_dict(entry) for entry in document["reports"]]


# ---------------------------------------------------------------------------
# Text tables
# ---------------------------------------------------------------------------

def _percent(value: float | None) -> str:
    return "-" if value is None else f"{100.0 * value:.2f}"


def render_table(title: str, header: list[str], rows: list[list[str]]) -> str:
    """Left-aligned first column, right-aligned value columns."""
    widths = [max(len(header[i]), *(len(row[i]) for row in rows)) for i in range(len(header))]

    def line(cells: list[str]) -> str:
        first = cells[0].ljust(widths[0])
        rest = [cell.rjust(width) for cell, width in zip(cells[1:], widths[1:])]
        return "  ".join([first, *rest]).rstrip()

    rule = "-" * len(line(header))
    return "\n".join([title, rule, line(header), rule, *(line(row) for row in rows), rule])


def _method_label(report: EvalReport) -> str:
    label = report.method
    if report.oracle_category:
        label += " (oracle category)"
    if report.slice:
        label += f" [{report.slice}]"
    return label


def render_reports(reports: list[EvalReport]) -> str:
    """One table per level, one row per method; values are percentages."""
    if not reports:
        return "No reports."
    level_header = ["Method", "OP", "OR", "OF1"]
    tables = []
    for title, attr in (
        ("Category", "category"),
        ("Sub-category", "sub_category"),
        ("Family (inferred)", "family"),
        ("Gender (inferred)", "gender"),
    ):
        rows = []
        for report in reports:
            scores: LevelScores = getattr(report, attr)
            rows.append([_method_label(report), _percent(scores.op), _percent(scores.or_), _percent(scores.of1)])
        tables.append(render_table(title, level_header, rows))

    attribute_header = ["Method", "OP", "OR", "OF1", "P@k", "R@k", "F1@k", "AP"]
    attribute_rows = []
    for report in reports:
        a = report.attribute
        attribute_rows.append([
            _method_label(report),
            *(_percent(v) for v in (a.op, a.or_, a.of1, a.p_at_k, a.r_at_k, a.f1_at_k, a.ap)),
        ])
    tables.append(render_table("Attributes", attribute_header, attribute_rows))

    summary_header = ["Method", "Products", "Coverage", "Inconsistent", "Attrs/product", "Annotated/product"]
    summary_rows = [
        [
            _method_label(r),
            str(r.n_products),
            _percent(r.coverage),
            _percent(r.inconsistency_rate),
            f"{r.attribute.mean_predicted:.2f}",
            f"{r.attribute.mean_annotated:.2f}",
        ]
        for r in reports
    ]
    tables.append(render_table("Summary", summary_header, summary_rows))
    return "\n\n".join(tables)
