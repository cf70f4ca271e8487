from __future__ import annotations

import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from policyx.errors import GoldMissing, LengthMismatch
from policyx.evaluation import (
    build_report,
    hamming_loss,
    k_correct_distribution,
    micro_f1,
    render_report,
    reports_from_json,
    score_group,
    score_strategies_exact,
    score_strategies_partial,
    sort_reports,
)
from policyx.extraction import read_journal
from policyx.prompting import MethodId
from policyx.taxonomy import LegalStrategy, StrategyGroup

S = LegalStrategy


def oracle_counts(preds, golds):
    """Independent cell-by-cell recount used to cross-check the metrics."""
    tp = fp = fn = disagree = 0
    per_record_correct = []
    for pred_row, gold_row in zip(preds, golds):
        correct = 0
        for p, g in zip(pred_row, gold_row):
            if p == g:
                correct += 1
            else:
                disagree += 1
            if p == 1 and g == 1:
                tp += 1
            if p == 1 and g == 0:
                fp += 1
            if p == 0 and g == 1:
                fn += 1
        per_record_correct.append(correct)
    return tp, fp, fn, disagree, per_record_correct


class TestStrategyMatching:
    def test_exact_is_order_free(self):
        assert score_strategies_exact(frozenset({S.S1, S.S7}), frozenset({S.S7, S.S1}))

    def test_exact_rejects_strict_subset(self):
        assert not score_strategies_exact(frozenset({S.S1}), frozenset({S.S1, S.S7}))

    def test_exact_both_empty(self):
        assert score_strategies_exact(frozenset(), frozenset())

    def test_partial_on_intersection(self):
        assert score_strategies_partial(frozenset({S.S1}), frozenset({S.S1, S.S7}))

    def test_partial_disjoint(self):
        assert not score_strategies_partial(frozenset({S.S2}), frozenset({S.S1, S.S7}))

    def test_partial_empty_vs_nonempty(self):
        assert not score_strategies_partial(frozenset(), frozenset({S.S1}))

    def test_partial_both_empty(self):
        assert score_strategies_partial(frozenset(), frozenset())

    def test_group_restriction_equal(self):
        assert score_group(frozenset({S.S1}), frozenset({S.S1, S.S3}), StrategyGroup.GROUP_A)

    def test_group_restriction_differs(self):
        assert not score_group(frozenset({S.S1}), frozenset({S.S1, S.S3}), StrategyGroup.GROUP_B)

    def test_group_empty_restrictions(self):
        assert score_group(frozenset(), frozenset(), StrategyGroup.GROUP_A)
        assert score_group(frozenset(), frozenset(), StrategyGroup.GROUP_B)

    def test_partial_never_below_exact_seeded(self):
        rng = random.Random(20240901)
        strategies = list(S)
        for _ in range(500):
            pred = frozenset(rng.sample(strategies, rng.randint(0, 2)))
            gold = frozenset(rng.sample(strategies, rng.randint(0, 2)))
            if score_strategies_exact(pred, gold):
                assert score_strategies_partial(pred, gold)


class TestFoodMetrics:
    GOLDS = [[1, 0, 1, 0, 0, 0], [0, 1, 0, 0, 0, 0]]
    PREDS = [[1, 1, 1, 0, 0, 0], [0, 0, 0, 0, 0, 0]]

    def test_micro_f1_worked_example(self):
        # Oracle recount over the 12 cells: TP=2, FP=1, FN=1 -> 2*2/(4+1+1).
        tp, fp, fn, _, _ = oracle_counts(self.PREDS, self.GOLDS)
        assert (tp, fp, fn) == (2, 1, 1)
        assert micro_f1(self.PREDS, self.GOLDS) == pytest.approx(0.6667, abs=1e-4)

    def test_micro_f1_perfect(self):
        assert micro_f1(self.GOLDS, self.GOLDS) == 1.0

    def test_micro_f1_degenerate_all_zero(self):
        zeros = [[0] * 6, [0] * 6]
        assert micro_f1(zeros, zeros) == 1.0

    def test_hamming_worked_example(self):
        # Oracle recount: 2 disagreeing cells out of 12.
        _, _, _, disagree, _ = oracle_counts(self.PREDS, self.GOLDS)
        assert disagree == 2
        assert hamming_loss(self.PREDS, self.GOLDS) == pytest.approx(0.1667, abs=1e-4)

    def test_hamming_identity_and_complement(self):
        assert hamming_loss(self.GOLDS, self.GOLDS) == 0.0
        complement = [[1 - v for v in row] for row in self.GOLDS]
        assert hamming_loss(complement, self.GOLDS) == 1.0

    def test_k_distribution_worked_example(self):
        # Records engineered to have [6, 6, 5, 3] correct categories.
        golds = [[1, 0, 1, 0, 0, 0]] * 4
        preds = [
            [1, 0, 1, 0, 0, 0],
            [1, 0, 1, 0, 0, 0],
            [1, 0, 0, 0, 0, 0],
            [0, 1, 1, 0, 0, 1],
        ]
        _, _, _, _, correct = oracle_counts(preds, golds)
        assert correct == [6, 6, 5, 3]
        hist = k_correct_distribution(preds, golds)
        assert hist[6] == 50.0
        assert hist[5] == 25.0
        assert hist[3] == 25.0
        assert sum(hist) == pytest.approx(100.0, abs=0.01)

    def test_k_distribution_all_perfect(self):
        hist = k_correct_distribution(self.GOLDS, self.GOLDS)
        assert hist[6] == 100.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            micro_f1([[0] * 6], [[0] * 6, [0] * 6])
        with pytest.raises(LengthMismatch):
            hamming_loss([[0] * 5], [[0] * 6])

    @given(
        st.lists(
            st.tuples(
                st.lists(st.integers(0, 1), min_size=6, max_size=6),
                st.lists(st.integers(0, 1), min_size=6, max_size=6),
            ),
            min_size=1,
            max_size=8,
        )
    )
    def test_metrics_match_oracle_on_random_instances(self, rows):
        preds = [p for p, _ in rows]
        golds = [g for _, g in rows]
        tp, fp, fn, disagree, correct = oracle_counts(preds, golds)
        expected_f1 = 1.0 if tp == fp == fn == 0 else 2 * tp / (2 * tp + fp + fn)
        assert micro_f1(preds, golds) == expected_f1
        assert hamming_loss(preds, golds) == disagree / (6 * len(rows))
        hist = k_correct_distribution(preds, golds)
        for k in range(7):
            assert hist[k] == 100.0 * correct.count(k) / len(rows)

    def test_hamming_complements_mean_accuracy(self, eval_corpus, data_dir):
        extractions = read_journal(data_dir / "eval_journal.jsonl")
        report = build_report(extractions, eval_corpus)
        mean_acc = sum(report.food.per_category_acc.values()) / 6
        assert report.food.hamming_loss + mean_acc == pytest.approx(1.0, abs=1e-12)


class TestBuildReport:
    def test_perfect_extractions(self, fixture_corpus, tmp_path, mock_script):
        from policyx.extraction import run_extraction
        from policyx.gateway import BackendConfig, LlmGateway
        from policyx.prompting import TemplateSet

        gateway = LlmGateway(
            BackendConfig(kind="mock"), cache_dir=tmp_path / "cache", mock_script=mock_script
        )
        extractions = run_extraction(
            fixture_corpus, MethodId.ROLE_BASED, gateway, TemplateSet.load(), "mock-model"
        )
        report = build_report(extractions, fixture_corpus)
        assert report.attributes.state_acc == 1.0
        assert report.attributes.year_acc == 1.0
        assert report.attributes.policy_type_acc == 1.0
        assert report.strategies.exact_acc == 1.0
        assert report.food.hamming_loss == 0.0
        assert report.food.k_histogram[6] == 100.0
        assert report.hallucination_count == 0
        assert report.missing_count == 0

    def test_mixed_fixture_matches_hand_computation(self, eval_corpus, data_dir):
        extractions = read_journal(data_dir / "eval_journal.jsonl")
        report = build_report(extractions, eval_corpus)
        assert report.n_records == 4
        assert report.attributes.state_acc == 0.75
        assert report.attributes.year_acc == 0.75
        assert report.attributes.policy_type_acc == 0.75
        assert report.strategies.exact_acc == 0.5
        assert report.strategies.partial_acc == 1.0
        assert report.strategies.group_a_acc == 1.0
        assert report.strategies.group_b_acc == 0.75
        assert report.food.micro_f1 == pytest.approx(16 / 21)
        assert report.food.hamming_loss == pytest.approx(5 / 24)
        assert report.food.k_histogram == [0.0, 0.0, 0.0, 25.0, 0.0, 50.0, 25.0]
        assert report.hallucination_count == 2
        assert report.missing_count == 0

    def test_single_unrecognized_policy_type(self, eval_corpus, data_dir):
        extractions = [read_journal(data_dir / "eval_journal.jsonl")[1]]
        report = build_report(extractions, eval_corpus)
        assert report.attributes.policy_type_acc == 0.0
        assert report.hallucination_count == 1

    def test_gold_missing(self, eval_corpus, data_dir):
        extractions = read_journal(data_dir / "eval_journal.jsonl")
        extractions[0].record_id = "nope"
        with pytest.raises(GoldMissing):
            build_report(extractions, eval_corpus)

    def test_missing_strategies_score_incorrect_even_for_empty_gold(self, eval_corpus, data_dir):
        extractions = read_journal(data_dir / "eval_journal.jsonl")
        from policyx.extraction import MISSING

        entry = extractions[2]  # gold strategies are empty for e-003
        entry.strategies = MISSING
        report = build_report([entry], eval_corpus)
        assert report.strategies.exact_acc == 0.0
        assert report.strategies.partial_acc == 0.0
        assert report.missing_count == 1

    def test_scoring_is_permutation_invariant(self, eval_corpus, data_dir):
        extractions = read_journal(data_dir / "eval_journal.jsonl")
        a = build_report(extractions, eval_corpus)
        b = build_report(list(reversed(extractions)), eval_corpus)
        assert a == b


class TestRenderReport:
    @pytest.fixture()
    def report(self, eval_corpus, data_dir):
        extractions = read_journal(data_dir / "eval_journal.jsonl")
        return build_report(extractions, eval_corpus)

    def test_markdown_structure(self, report):
        text = render_report([report], "markdown")
        assert text.count("## ") == 3
        assert "| ZeroShot |" in text
        assert "76.19" in text  # micro-F1 as a percentage
        assert "20.83" in text  # hamming loss as a percentage

    def test_csv_round_numbers(self, report):
        text = render_report([report], "csv")
        lines = text.strip().splitlines()
        assert lines[0] == "table,method,metric,value"
        assert "attributes,ZeroShot,state_acc,75.00" in lines
        assert "food,ZeroShot,micro_f1,76.19" in lines
        assert "k_distribution,ZeroShot,k6,25.00" in lines

    def test_json_round_trips(self, report):
        text = render_report([report], "json")
        assert reports_from_json(text) == [report]

    def test_rows_follow_method_order(self, report):
        from dataclasses import replace

        other = replace(report, method=MethodId.ROLE_BASED)
        text = render_report([report, other], "markdown")
        assert text.index("| RoleBased |") < text.index("| ZeroShot |")
        assert [r.method for r in sort_reports([report, other])] == [
            MethodId.ROLE_BASED,
            MethodId.ZERO_SHOT,
        ]

    def test_same_report_twice_renders_identical_rows(self, report):
        text = render_report([report, report], "csv")
        lines = [l for l in text.splitlines() if l.startswith("attributes,ZeroShot,state_acc")]
        assert len(lines) == 2 and lines[0] == lines[1]
