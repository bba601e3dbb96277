"""Comparison statistics over pairs of detection result sets.

Covers three report families:

  - overlap reports: how often two detection sides agree, under the
    non-restrictive rule (any shared SDG counts as an overlap, optionally
    also two empty sets), plus per-side detection counts and the average
    number of SDGs per item with at least one detection;
  - per-SDG detection-rate tables (percentage of items in which each SDG
    appears, per side);
  - few-shot identification reports over a single-label truth sample: per
    true label, how often the label was emitted anywhere (total
    identification), how often the output matched the expected output, and
    how often the true label was recovered.

All percent fields are 100*count/denominator rounded half-up to 2 decimals
using exact rational arithmetic. Averages are kept unrounded and formatted
on output.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .corpus import SDG_MAX, SDG_MIN, Corpus, SdgLabelSet

ALL_SDGS = tuple(range(SDG_MIN, SDG_MAX + 1))


def percent(count: int, total: int) -> float:
    """100*count/total rounded half-up to 2 decimals, exactly."""
    if total == 0:
        raise ZeroDivisionError("percent denominator is zero")
    hundredths = Fraction(100 * count, total) * 100
    whole, remainder = divmod(hundredths.numerator, hundredths.denominator)
    if 2 * remainder >= hundredths.denominator:
        whole += 1
    return whole / 100.0


@dataclass(frozen=True)
class DetectionRecord:
    """One item's detections on two sides (e.g. LLM vs specialized model)."""

    doc_id: str
    side_a: SdgLabelSet
    side_b: SdgLabelSet


def make_records(
    a: dict[str, SdgLabelSet], b: dict[str, SdgLabelSet]
) -> list[DetectionRecord]:
    """Join two id->labels mappings; both sides must cover identical ids."""
    only_a = sorted(set(a) - set(b))
    only_b = sorted(set(b) - set(a))
    if only_a or only_b:
        parts = []
        if only_a:
            parts.append(f"ids only on side a: {only_a[:5]}")
        if only_b:
            parts.append(f"ids only on side b: {only_b[:5]}")
        raise ValueError("detection sides do not cover the same ids; " + "; ".join(parts))
    return [DetectionRecord(doc_id=i, side_a=a[i], side_b=b[i]) for i in sorted(a)]


def nonrestrictive_overlap(a: SdgLabelSet, b: SdgLabelSet, include_empty: bool = False) -> bool:
    """True iff the sides share at least one SDG (optionally: both empty).

    Symmetric, and monotone: enlarging either set never turns an overlap
    into a non-overlap. Counting any shared SDG as agreement makes the
    aggregate an upper bound on common detection.
    """
    if a & b:
        return True
    return include_empty and not a and not b


@dataclass
class OverlapReport:
    """Agreement statistics between two detection sides."""

    label_a: str
    label_b: str
    total: int
    intersection_including_empty: int
    intersection_including_empty_pct: float
    detected_a: int
    detected_a_pct: float
    detected_b: int
    detected_b_pct: float
    intersection_detected: int
    intersection_detected_pct: float
    avg_per_detected_a: float
    avg_per_detected_b: float
    avg_over_all_a: float
    avg_over_all_b: float

    def to_dict(self) -> dict:
        return {
            "label_a": self.label_a,
            "label_b": self.label_b,
            "total": self.total,
            "intersection_including_empty": {
                "count": self.intersection_including_empty,
                "pct": self.intersection_including_empty_pct,
            },
            "detected_a": {"count": self.detected_a, "pct": self.detected_a_pct},
            "detected_b": {"count": self.detected_b, "pct": self.detected_b_pct},
            "intersection_detected": {
                "count": self.intersection_detected,
                "pct": self.intersection_detected_pct,
            },
            "avg_per_detected_a": self.avg_per_detected_a,
            "avg_per_detected_b": self.avg_per_detected_b,
            "avg_over_all_a": self.avg_over_all_a,
            "avg_over_all_b": self.avg_over_all_b,
        }

    def rows(self) -> list[tuple[str, str, str]]:
        """(statistic, value, percent) rows for CSV / text rendering."""
        a, b = self.label_a, self.label_b
        return [
            ("Total", str(self.total), "--"),
            (
                f"Intersection: {a} vs {b} (including items with no detected SDGs)",
                str(self.intersection_including_empty),
                f"{self.intersection_including_empty_pct:.2f}",
            ),
            (f"Items with detected SDGs: {a}", str(self.detected_a), f"{self.detected_a_pct:.2f}"),
            (f"Items with detected SDGs: {b}", str(self.detected_b), f"{self.detected_b_pct:.2f}"),
            (
                f"Intersection: {a} vs {b}",
                str(self.intersection_detected),
                f"{self.intersection_detected_pct:.2f}",
            ),
            (f"Average SDGs per detected item: {a}", f"{self.avg_per_detected_a:.2f}", "--"),
            (f"Average SDGs per detected item: {b}", f"{self.avg_per_detected_b:.2f}", "--"),
        ]


def overlap_report(
    records: list[DetectionRecord], label_a: str = "A", label_b: str = "B"
) -> OverlapReport:
    """Compute the overlap statistics over one joined record list.

    The per-item averages use items with at least one detection on that
    side as the denominator; the all-items variant is reported alongside.
    """
    if not records:
        raise ValueError("overlap_report needs at least one record")
    seen: set[str] = set()
    for record in records:
        if record.doc_id in seen:
            raise ValueError(f"duplicate id in detection records: {record.doc_id!r}")
        seen.add(record.doc_id)
    total = len(records)
    inter_empty = sum(
        1 for r in records if nonrestrictive_overlap(r.side_a, r.side_b, include_empty=True)
    )
    inter = sum(1 for r in records if nonrestrictive_overlap(r.side_a, r.side_b))
    det_a = sum(1 for r in records if r.side_a)
    det_b = sum(1 for r in records if r.side_b)
    sum_a = sum(len(r.side_a) for r in records)
    sum_b = sum(len(r.side_b) for r in records)
    return OverlapReport(
        label_a=label_a,
        label_b=label_b,
        total=total,
        intersection_including_empty=inter_empty,
        intersection_including_empty_pct=percent(inter_empty, total),
        detected_a=det_a,
        detected_a_pct=percent(det_a, total),
        detected_b=det_b,
        detected_b_pct=percent(det_b, total),
        intersection_detected=inter,
        intersection_detected_pct=percent(inter, total),
        avg_per_detected_a=sum_a / det_a if det_a else 0.0,
        avg_per_detected_b=sum_b / det_b if det_b else 0.0,
        avg_over_all_a=sum_a / total,
        avg_over_all_b=sum_b / total,
    )


@dataclass
class DetectionRateTable:
    """Per-SDG detection counts and rates for one side."""

    side: str
    total: int
    counts: dict[int, int]
    rates: dict[int, float]

    def top(self, n: int = 3) -> list[int]:
        """SDGs ranked by rate descending, ties by SDG number ascending."""
        ranked = sorted(ALL_SDGS, key=lambda c: (-self.rates[c], c))
        return ranked[:n]

    def rows(self) -> list[tuple[int, int, float]]:
        return [(c, self.counts[c], self.rates[c]) for c in ALL_SDGS]


def detection_rates(
    records: list[DetectionRecord], side: str, label: str | None = None
) -> DetectionRateTable:
    """Count how often each SDG 1..17 is detected on one side."""
    if side not in ("a", "b"):
        raise ValueError("side must be 'a' or 'b'")
    if not records:
        raise ValueError("detection_rates needs at least one record")
    counts = {c: 0 for c in ALL_SDGS}
    for record in records:
        for c in record.side_a if side == "a" else record.side_b:
            counts[c] += 1
    total = len(records)
    return DetectionRateTable(
        side=label or side,
        total=total,
        counts=counts,
        rates={c: percent(counts[c], total) for c in ALL_SDGS},
    )


@dataclass
class FewShotRow:
    """Identification counts for one true label."""

    label: int
    n: int
    expected: int | None  # the label itself when it is an allowed tag, else None
    total_identification: int
    total_identification_pct: float | None
    as_expected: int
    as_expected_pct: float | None
    as_expected_bracketed: bool
    correct: int
    correct_pct: float | None


@dataclass
class FewShotReport:
    """Per-label identification statistics over a single-label truth sample."""

    expected_tags: SdgLabelSet
    rows: list[FewShotRow]
    total_items: int
    total_identifications: int
    total_as_expected: int
    total_as_expected_pct: float
    total_correct: int
    total_correct_pct: float
    items_with_any: int
    pct_items_with_any: float
    avg_per_identified: float

    def row(self, label: int) -> FewShotRow:
        return next(r for r in self.rows if r.label == label)

    def compact_rows(self) -> list[FewShotRow]:
        """Rows with any truth items; all 17 exist in ``rows``."""
        return [r for r in self.rows if r.n > 0]

    def to_dict(self) -> dict:
        return {
            "expected_tags": self.expected_tags.to_list(),
            "rows": [
                {
                    "label": r.label,
                    "n": r.n,
                    "expected": r.expected,
                    "total_identification": r.total_identification,
                    "total_identification_pct": r.total_identification_pct,
                    "as_expected": r.as_expected,
                    "as_expected_pct": r.as_expected_pct,
                    "as_expected_bracketed": r.as_expected_bracketed,
                    "correct": r.correct,
                    "correct_pct": r.correct_pct,
                }
                for r in self.rows
            ],
            "totals": {
                "n": self.total_items,
                "total_identification": self.total_identifications,
                "as_expected": self.total_as_expected,
                "as_expected_pct": self.total_as_expected_pct,
                "correct": self.total_correct,
                "correct_pct": self.total_correct_pct,
            },
            "items_with_any": self.items_with_any,
            "pct_items_with_any": self.pct_items_with_any,
            "avg_per_identified": self.avg_per_identified,
        }


def fewshot_report(
    truth: Corpus,
    predictions: dict[str, SdgLabelSet],
    expected_tags: SdgLabelSet,
) -> FewShotReport:
    """Score predictions against a single-label truth sample.

    Per true label y: N counts the truth items; the expected output is y
    itself when y is an allowed tag and the empty set otherwise. Total
    identification counts predictions containing y over ALL items (it can
    exceed N). As-expected counts truth-y items whose prediction contains y
    (allowed tag) or is empty (disallowed, reported bracketed). Correct
    counts truth-y items whose prediction contains y.
    """
    if len(truth.documents) == 0:
        raise ValueError("few-shot truth sample is empty")
    for doc in truth.documents:
        if len(doc.labels) != 1:
            raise ValueError(f"truth item {doc.id!r} is not single-label: {sorted(doc.labels)}")
        if doc.id not in predictions:
            raise ValueError(f"missing prediction for truth item {doc.id!r}")

    total_items = len(truth.documents)
    truth_label = {doc.id: next(iter(doc.labels)) for doc in truth.documents}
    rows: list[FewShotRow] = []
    for y in ALL_SDGS:
        n = sum(1 for v in truth_label.values() if v == y)
        expected = y if y in expected_tags else None
        total_id = sum(1 for doc in truth.documents if y in predictions[doc.id])
        if expected is None:
            as_exp = sum(
                1 for doc in truth.documents if truth_label[doc.id] == y and not predictions[doc.id]
            )
        else:
            as_exp = sum(
                1 for doc in truth.documents if truth_label[doc.id] == y and y in predictions[doc.id]
            )
        correct = sum(
            1 for doc in truth.documents if truth_label[doc.id] == y and y in predictions[doc.id]
        )
        rows.append(
            FewShotRow(
                label=y,
                n=n,
                expected=expected,
                total_identification=total_id,
                total_identification_pct=percent(total_id, n) if n else None,
                as_expected=as_exp,
                as_expected_pct=percent(as_exp, n) if n else None,
                as_expected_bracketed=expected is None,
                correct=correct,
                correct_pct=percent(correct, n) if n else None,
            )
        )

    total_identifications = sum(r.total_identification for r in rows)
    total_as_expected = sum(r.as_expected for r in rows)
    total_correct = sum(r.correct for r in rows)
    items_with_any = sum(1 for doc in truth.documents if predictions[doc.id])
    return FewShotReport(
        expected_tags=expected_tags,
        rows=rows,
        total_items=total_items,
        total_identifications=total_identifications,
        total_as_expected=total_as_expected,
        total_as_expected_pct=percent(total_as_expected, total_items),
        total_correct=total_correct,
        total_correct_pct=percent(total_correct, total_items),
        items_with_any=items_with_any,
        pct_items_with_any=percent(items_with_any, total_items),
        avg_per_identified=(
            total_identifications / items_with_any if items_with_any else 0.0
        ),
    )


# ---------------------------------------------------------------------------
# Detection-set files (the predict / compare interchange format)


def write_detections(detections: dict[str, SdgLabelSet], path: str | Path) -> None:
    """CSV with columns id,labels; labels semicolon-joined, sorted by id."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "labels"])
        for doc_id in sorted(detections):
            writer.writerow([doc_id, detections[doc_id].to_semicolon()])


def read_detections(path: str | Path) -> dict[str, SdgLabelSet]:
    detections: dict[str, SdgLabelSet] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "id" not in reader.fieldnames or "labels" not in reader.fieldnames:
            raise ValueError(f"{path}: detections CSV needs 'id' and 'labels' columns")
        for lineno, row in enumerate(reader, start=2):
            doc_id = row["id"]
            if doc_id in detections:
                raise ValueError(f"{path}:{lineno}: duplicate id {doc_id!r}")
            detections[doc_id] = SdgLabelSet.from_semicolon(row["labels"] or "")
    return detections
