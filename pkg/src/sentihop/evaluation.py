"""Metrics and reporting: accuracy and macro-F1 over the overall and
implicit slices, error breakdowns by sentiment type, and ambiguity counts."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import POLARITIES, Dataset, slice_dataset
from .rationale import RationaleRecord, ambiguity_flag
from .training import TrainedModel, predict

SLICE_NAMES = ("all", "isa")
ERROR_SLICES = ("explicit", "implicit")


def _check_aligned(pred: Sequence[str], gold: Sequence[str]) -> None:
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(gold)} golds")
    if not gold:
        raise ValueError("empty sequences")


def accuracy(pred: Sequence[str], gold: Sequence[str]) -> float:
    _check_aligned(pred, gold)
    return sum(p == g for p, g in zip(pred, gold)) / len(gold)


def macro_f1(pred: Sequence[str], gold: Sequence[str]) -> float:
    """Unweighted mean of per-class F1 over the fixed 3-label alphabet.

    A class absent from both gold and predictions contributes F1 = 0.
    """
    _check_aligned(pred, gold)
    f1s = []
    for label in POLARITIES:
        tp = sum(1 for p, g in zip(pred, gold) if p == label and g == label)
        fp = sum(1 for p, g in zip(pred, gold) if p == label and g != label)
        fn = sum(1 for p, g in zip(pred, gold) if p != label and g == label)
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom > 0 else 0.0)
    return sum(f1s) / len(f1s)


@dataclass(frozen=True)
class ErrorBreakdown:
    """Misclassified examples partitioned into (explicit/implicit, gold
    polarity) cells; ratios are cell count over total errors."""

    cells: dict
    total_errors: int

    def ratio(self, slice_name: str, gold: str) -> float:
        return self.cells[(slice_name, gold)]["ratio"]

    def rows(self) -> list[dict]:
        return [
            {
                "slice": s,
                "gold_polarity": g,
                "count": self.cells[(s, g)]["count"],
                "ratio": self.cells[(s, g)]["ratio"],
            }
            for s in ERROR_SLICES
            for g in POLARITIES
        ]


def error_breakdown(
    pred: Sequence[str], gold: Sequence[str], implicit_flags: Sequence[bool]
) -> ErrorBreakdown:
    _check_aligned(pred, gold)
    if len(implicit_flags) != len(gold):
        raise ValueError("implicit_flags must align with gold")
    counts = {(s, g): 0 for s in ERROR_SLICES for g in POLARITIES}
    total = 0
    for p, g, implicit in zip(pred, gold, implicit_flags):
        if p == g:
            continue
        total += 1
        counts[("implicit" if implicit else "explicit", g)] += 1
    cells = {
        key: {"count": n, "ratio": (n / total) if total > 0 else 0.0}
        for key, n in counts.items()
    }
    return ErrorBreakdown(cells=cells, total_errors=total)


@dataclass(frozen=True)
class AmbiguityCounts:
    wrong_count: int
    ambiguous_count: int
    total: int


def ambiguity_report(
    rationales: Sequence[RationaleRecord], gold: Sequence[str]
) -> AmbiguityCounts:
    """Count rationales whose resolved prediction is wrong or missing, and
    rationales mentioning multiple distinct polarities, over one population."""
    if len(rationales) != len(gold):
        raise ValueError("rationales and gold must align")
    wrong = 0
    ambiguous = 0
    for rec, g in zip(rationales, gold):
        resolved = rec.rationale.resolved
        if resolved is None or resolved != g:
            wrong += 1
        if ambiguity_flag(list(rec.rationale.polarity_mentions)):
            ambiguous += 1
    return AmbiguityCounts(wrong_count=wrong, ambiguous_count=ambiguous, total=len(gold))


@dataclass(frozen=True)
class SliceResult:
    n: int
    accuracy: float | None
    macro_f1: float | None


@dataclass
class EvalReport:
    dataset: str
    slices: dict[str, SliceResult]
    breakdown: ErrorBreakdown
    ambiguity: AmbiguityCounts
    fallback: dict = field(default_factory=lambda: {"count": 0, "total": 0})

    def to_json_obj(self) -> dict:
        return {
            "dataset": self.dataset,
            "slices": {
                name: {"n": s.n, "accuracy": s.accuracy, "macro_f1": s.macro_f1}
                for name, s in self.slices.items()
            },
            "error_breakdown": {
                "total_errors": self.breakdown.total_errors,
                "cells": self.breakdown.rows(),
            },
            "ambiguity": {
                "wrong_count": self.ambiguity.wrong_count,
                "ambiguous_count": self.ambiguity.ambiguous_count,
                "total": self.ambiguity.total,
            },
            "fallback": dict(self.fallback),
        }


def _slice_result(pred: Sequence[str], gold: Sequence[str]) -> SliceResult:
    if not gold:
        return SliceResult(n=0, accuracy=None, macro_f1=None)
    return SliceResult(n=len(gold), accuracy=accuracy(pred, gold), macro_f1=macro_f1(pred, gold))


def evaluate(
    model: TrainedModel,
    dataset: Dataset,
    rationales: Sequence[RationaleRecord] | None = None,
) -> EvalReport:
    """Predict over the test split and fill both slices; the ISA slice keeps
    only implicit examples. Ambiguity counts cover the supplied rationale
    store aligned against the dataset's gold labels (any split), since they
    describe generator quality rather than student predictions."""
    test = slice_dataset(dataset, "test")
    if not test:
        raise ValueError("test split is empty")
    fallback_before = len(model.fallback_log)
    preds = [predict(model, ex) for ex in test]
    fallback_count = len(model.fallback_log) - fallback_before
    gold = [ex.polarity for ex in test]
    flags = [ex.implicit for ex in test]

    isa_pred = [p for p, f in zip(preds, flags) if f]
    isa_gold = [g for g, f in zip(gold, flags) if f]

    if rationales:
        by_id = {rec.rationale.example_id: rec for rec in rationales}
        aligned = [(by_id[ex.id], ex.polarity) for ex in dataset.examples if ex.id in by_id]
        ambiguity = (
            ambiguity_report([r for r, _ in aligned], [g for _, g in aligned])
            if aligned
            else AmbiguityCounts(0, 0, 0)
        )
    else:
        ambiguity = AmbiguityCounts(0, 0, 0)

    return EvalReport(
        dataset=dataset.name,
        slices={
            "all": _slice_result(preds, gold),
            "isa": _slice_result(isa_pred, isa_gold),
        },
        breakdown=error_breakdown(preds, gold, flags),
        ambiguity=ambiguity,
        fallback={"count": fallback_count, "total": len(test)},
    )


def write_report_json(report: EvalReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(report.to_json_obj(), ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return path


def write_results_csv(
    report: EvalReport, path: str | Path, only_slice: str | None = None
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "slice", "n", "accuracy", "macro_f1"])
        for name in SLICE_NAMES:
            if only_slice is not None and name != only_slice:
                continue
            s = report.slices[name]
            writer.writerow(
                [
                    report.dataset,
                    name,
                    s.n,
                    "" if s.accuracy is None else f"{s.accuracy:.6f}",
                    "" if s.macro_f1 is None else f"{s.macro_f1:.6f}",
                ]
            )
    return path


def write_errors_csv(report: EvalReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slice", "gold_polarity", "count", "ratio"])
        for row in report.breakdown.rows():
            writer.writerow(
                [row["slice"], row["gold_polarity"], row["count"], f"{row['ratio']:.6f}"]
            )
    return path


def load_report_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
