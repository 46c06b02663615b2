"""Tests for report documents and tables."""

import json

import pytest
from tests.conftest import perfect_predictions

from core.evaluate import evaluate_predictions
from core.report import (
    AttributeScores,
    EvalReport,
    LevelScores,
    ReportError,
    dumps,
    loads,
    render_reports,
    render_table,
)


def sample_report(**overrides) -> EvalReport:
    values = dict(
        method="Final model",
        n_products=4,
        threshold=0.75,
        category=LevelScores(0.9, 0.8, 0.85),
        sub_category=LevelScores(0.7, 0.6, 0.65),
        attribute=AttributeScores(
            op=0.5, or_=0.4, of1=0.45, p_at_k=0.6, r_at_k=0.6, f1_at_k=0.6, ap=None,
            mean_predicted=1.5, mean_annotated=1.25,
        ),
        family=LevelScores(1.0, 1.0, 1.0),
        gender=LevelScores(1.0, 1.0, 1.0),
        inconsistency_rate=0.02,
    )
    values.update(overrides)
    return EvalReport(**values)


RENDERED_SAMPLE = """\
Category
--------------------------------
Method          OP     OR    OF1
--------------------------------
Final model  90.00  80.00  85.00
--------------------------------

Sub-category
--------------------------------
Method          OP     OR    OF1
--------------------------------
Final model  70.00  60.00  65.00
--------------------------------

Family (inferred)
-----------------------------------
Method           OP      OR     OF1
-----------------------------------
Final model  100.00  100.00  100.00
-----------------------------------

Gender (inferred)
-----------------------------------
Method           OP      OR     OF1
-----------------------------------
Final model  100.00  100.00  100.00
-----------------------------------

Attributes
---------------------------------------------------------
Method          OP     OR    OF1    P@k    R@k   F1@k  AP
---------------------------------------------------------
Final model  50.00  40.00  45.00  60.00  60.00  60.00   -
---------------------------------------------------------

Summary
-------------------------------------------------------------------------------
Method       Products  Coverage  Inconsistent  Attrs/product  Annotated/product
-------------------------------------------------------------------------------
Final model         4         -          2.00           1.50               1.25
-------------------------------------------------------------------------------"""

DUMPED_SAMPLE = """\
{
  "reports": [
    {
      "attribute": {
        "AP": null,
        "F1@k": 0.6,
        "OF1": 0.45,
        "OP": 0.5,
        "OR": 0.4,
        "P@k": 0.6,
        "R@k": 0.6,
        "mean_annotated": 1.25,
        "mean_predicted": 1.5,
        "precision_annotations": null,
        "precision_hidden": null,
        "recall_annotations": null,
        "recall_hidden": null
      },
      "category": {
        "OF1": 0.85,
        "OP": 0.9,
        "OR": 0.8
      },
      "coverage": null,
      "family": {
        "OF1": 1.0,
        "OP": 1.0,
        "OR": 1.0
      },
      "gender": {
        "OF1": 1.0,
        "OP": 1.0,
        "OR": 1.0
      },
      "inconsistency_rate": 0.02,
      "method": "Final model",
      "n_products": 4,
      "oracle_category": false,
      "slice": null,
      "sub_category": {
        "OF1": 0.65,
        "OP": 0.7,
        "OR": 0.6
      },
      "threshold": 0.75
    }
  ]
}
"""


class TestJson:
    def test_field_names(self):
        document = json.loads(dumps([sample_report()]))
        entry = document["reports"][0]
        assert entry["category"] == {"OP": 0.9, "OR": 0.8, "OF1": 0.85}
        assert entry["attribute"]["P@k"] == 0.6
        assert entry["attribute"]["AP"] is None
        assert entry["slice"] is None
        assert entry["coverage"] is None

    def test_round_trip(self):
        reports = [sample_report(), sample_report(method="Baseline", coverage=0.5, oracle_category=True, slice="bag")]
        assert loads(dumps(reports)) == reports

    def test_evaluated_report_round_trip(self, manifest, tree):
        report = evaluate_predictions("Perfect", perfect_predictions(manifest, tree), manifest, tree)
        assert loads(dumps([report])) == [report]

    def test_exact_text(self):
        assert dumps([sample_report()]) == DUMPED_SAMPLE

    def test_not_json(self):
        with pytest.raises(ReportError, match="not valid JSON"):
            loads("{")

    def test_missing_reports_list(self):
        with pytest.raises(ReportError, match="'reports' list"):
            loads('{"results": []}')

    def test_missing_field(self):
        document = json.loads(dumps([sample_report()]))
        del document["reports"][0]["category"]
        with pytest.raises(ReportError, match="category"):
            loads(json.dumps(document))


class TestTables:
    def test_render_table_alignment(self):
        text = render_table("Title", ["Method", "OP"], [["A", "1.00"], ["Longer", "10.00"]])
        assert text.splitlines() == [
            "Title",
            "-------------",
            "Method     OP",
            "-------------",
            "A        1.00",
            "Longer  10.00",
            "-------------",
        ]

    def test_render_reports(self):
        reports = [sample_report(), sample_report(method="Baseline", coverage=0.5, oracle_category=True, slice="bag")]
        text = render_reports(reports)
        for title in ("Category", "Sub-category", "Family (inferred)", "Gender (inferred)", "Attributes", "Summary"):
            assert f"\n{title}\n" in f"\n{text}"
        assert "Baseline (oracle category) [bag]" in text
        assert "90.00" in text

    def test_render_reports_exact_text(self):
        assert render_reports([sample_report()]) == RENDERED_SAMPLE

    def test_absent_values_as_dashes(self):
        row = [line for line in render_reports([sample_report()]).splitlines() if line.startswith("Final model")]
        # attribute row: AP is absent; summary row: coverage is absent
        assert row[4].endswith("-")
        assert row[5].split()[3] == "-"

    def test_no_reports(self):
        assert render_reports([]) == "No reports."
