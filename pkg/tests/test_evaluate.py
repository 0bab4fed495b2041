"""Entity scorer tests: hand-enumerated counts, micro-averaging, symmetry."""

import random

import pytest

from disner.errors import ShapeError
from disner.evaluate import EvalReport, ablation_report, score_entities
from disner.tags import Span


def D(a, b):
    return Span(a, b, "Disease")


class TestScoreEntities:
    def test_perfect_match(self):
        rep = score_entities([[D(3, 4)]], [[D(3, 4)]])
        assert (rep.precision, rep.recall, rep.f1) == (1.0, 1.0, 1.0)

    def test_boundary_miss_is_both_fp_and_fn(self):
        rep = score_entities([[D(3, 4)]], [[D(3, 3)]])
        assert (rep.true_positives, rep.false_positives, rep.false_negatives) == (0, 1, 1)
        assert rep.f1 == 0.0

    def test_hand_enumerated_confusion(self):
        gold = [[D(0, 1), D(4, 4)], [D(2, 3)]]
        pred = [[D(0, 1), D(6, 6)], [D(2, 3), D(5, 5)]]
        rep = score_entities(gold, pred)
        assert (rep.true_positives, rep.false_positives, rep.false_negatives) == (2, 2, 1)
        assert rep.precision == pytest.approx(0.5)
        assert rep.recall == pytest.approx(2 / 3)
        assert rep.f1 == pytest.approx(4 / 7)

    def test_type_mismatch_not_a_hit(self):
        rep = score_entities([[D(0, 1)]], [[Span(0, 1, "Chemical")]])
        assert rep.true_positives == 0

    def test_empty_everything(self):
        rep = score_entities([[], []], [[], []])
        assert (rep.precision, rep.recall, rep.f1) == (0.0, 0.0, 0.0)

    def test_sentence_count_mismatch(self):
        with pytest.raises(ShapeError, match="sentences"):
            score_entities([[]], [[], []])

    def test_swap_exchanges_fp_fn(self):
        gold = [[D(0, 1), D(4, 4)], []]
        pred = [[D(0, 1)], [D(9, 9)]]
        a = score_entities(gold, pred)
        b = score_entities(pred, gold)
        assert a.true_positives == b.true_positives
        assert a.false_positives == b.false_negatives
        assert a.false_negatives == b.false_positives

    def test_permutation_invariance(self):
        rng = random.Random(0)
        gold = [[D(i, i + 1)] for i in range(10)]
        pred = [[D(i, i + 1)] if i % 2 else [D(i, i)] for i in range(10)]
        order = list(range(10))
        rng.shuffle(order)
        a = score_entities(gold, pred)
        b = score_entities([gold[i] for i in order], [pred[i] for i in order])
        assert a == b

    def test_micro_average_equals_summed_counts(self):
        rng = random.Random(1)
        gold, pred = [], []
        for _ in range(40):
            g = [D(i * 3, i * 3 + rng.randint(0, 1)) for i in range(rng.randint(0, 4))]
            p = [s for s in g if rng.random() < 0.7]
            p += [D(90 + i, 90 + i) for i in range(rng.randint(0, 2))]
            gold.append(g)
            pred.append(p)
        whole = score_entities(gold, pred)
        cut = rng.randint(1, 39)
        first = score_entities(gold[:cut], pred[:cut])
        second = score_entities(gold[cut:], pred[cut:])
        assert first + second == whole
        assert (first + second).f1 == whole.f1


class TestAblationReport:
    def test_single_row(self):
        table = ablation_report([({"V1": True, "V2": True, "V3": True, "V4": True},
                                  EvalReport(8, 2, 2))])
        lines = table.splitlines()
        assert len(lines) == 2
        assert "V1" in lines[0] and "F1" in lines[0]
        assert "0.8000" in lines[1]

    def test_rows_ordered_by_flag_tuple(self):
        on = {"V1": True, "V2": True, "V3": True, "V4": True}
        off4 = dict(on, V4=False)
        table = ablation_report([(off4, EvalReport(1, 1, 1)), (on, EvalReport(2, 0, 0))])
        lines = table.splitlines()
        assert "✓   ✓   ✓   ✓" in lines[1].replace("  ", "   ") or lines[1].count("✓") == 4
        assert lines[2].count("✓") == 3 and "x" in lines[2]

    def test_full_grid_shape(self):
        rows = []
        base = {"V1": True, "V2": True, "V3": True, "V4": True}
        rows.append((dict(base), EvalReport(9, 1, 1)))
        for name in ("V1", "V2", "V3", "V4"):
            rows.append((dict(base, **{name: False}), EvalReport(8, 2, 2)))
        table = ablation_report(rows * 2)  # two schemes → 10 rows
        assert len(table.splitlines()) == 11


class TestReportArithmetic:
    def test_zero_denominators(self):
        assert EvalReport(0, 5, 0).recall == 0.0
        assert EvalReport(0, 0, 5).precision == 0.0
        assert EvalReport(0, 0, 0).f1 == 0.0

    def test_key_value_lines(self):
        text = EvalReport(2, 2, 1).key_value_lines()
        assert "tp=2" in text
        assert "f1=0.571429" in text

    def test_pretty_contains_counts(self):
        text = EvalReport(2, 2, 1).pretty()
        assert "TP 2" in text and "FP 2" in text and "FN 1" in text
