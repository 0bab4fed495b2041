"""Entity-level scoring (strict span match) and the ablation summary table."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ShapeError
from .tags import Span

FLAG_NAMES = ("V1", "V2", "V3", "V4")


@dataclass(frozen=True)
class EvalReport:
    true_positives: int
    false_positives: int
    false_negatives: int

    @property
    def precision(self) -> float:
        denom = self.true_positives + self.false_positives
        return self.true_positives / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.true_positives + self.false_negatives
        return self.true_positives / denom if denom else 0.0

    @property
    def f1(self) -> float:
        # 2pr/(p+r) rewritten over raw counts; one division keeps it exact
        # on small rationals.
        denom = 2 * self.true_positives + self.false_positives + self.false_negatives
        return 2 * self.true_positives / denom if denom else 0.0

    def __add__(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(self.true_positives + other.true_positives,
                          self.false_positives + other.false_positives,
                          self.false_negatives + other.false_negatives)

    def key_value_lines(self) -> str:
        return "\n".join([
            f"tp={self.true_positives}",
            f"fp={self.false_positives}",
            f"fn={self.false_negatives}",
            f"precision={self.precision:.6f}",
            f"recall={self.recall:.6f}",
            f"f1={self.f1:.6f}",
        ])

    def pretty(self) -> str:
        return (f"entities  TP {self.true_positives}  FP {self.false_positives}"
                f"  FN {self.false_negatives}\n"
                f"precision {self.precision:7.4f}\n"
                f"recall    {self.recall:7.4f}\n"
                f"f1        {self.f1:7.4f}")


def score_sentence(gold: list[Span], pred: list[Span]) -> EvalReport:
    """Strict matching: a hit needs identical (start, end, type)."""
    gold_set, pred_set = set(gold), set(pred)
    tp = len(gold_set & pred_set)
    return EvalReport(tp, len(pred_set) - tp, len(gold_set) - tp)


def score_entities(gold: list[list[Span]], pred: list[list[Span]]) -> EvalReport:
    """Micro-averaged entity-level report over aligned sentences."""
    if len(gold) != len(pred):
        raise ShapeError(
            f"gold has {len(gold)} sentences, predictions have {len(pred)}")
    total = EvalReport(0, 0, 0)
    for g, p in zip(gold, pred):
        total = total + score_sentence(g, p)
    return total


def ablation_report(results) -> str:
    """Table of (flag-config, EvalReport) rows; full model sorts first.

    Each config is a mapping with boolean keys "V1".."V4" (dictionary,
    pre-trained embeddings, global decoding, char embeddings).
    """
    rows = []
    for flags, report in results:
        key = tuple(bool(flags[name]) for name in FLAG_NAMES)
        rows.append((key, report))
    rows.sort(key=lambda r: r[0], reverse=True)

    header = "  ".join(f"{n:>2}" for n in FLAG_NAMES) + "  " + \
        f"{'P':>8}  {'R':>8}  {'F1':>8}"
    lines = [header]
    for key, report in rows:
        marks = "  ".join(f"{'✓' if on else 'x':>2}" for on in key)
        lines.append(f"{marks}  {report.precision:8.4f}  "
                     f"{report.recall:8.4f}  {report.f1:8.4f}")
    return "\n".join(lines)
