"""Scoring extractions against gold annotations and rendering reports.

Scoring is strict: an UNRECOGNIZED or MISSING field is incorrect everywhere,
and every record stays in every denominator. The multi-label food metrics
treat a degraded cell as a guaranteed-wrong prediction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import PolicyRecord
from .errors import GoldMissing, LengthMismatch
from .extraction import MISSING, Extraction
from .prompting import MethodId
from .taxonomy import (
    CATEGORY_ORDER,
    FoodCategory,
    LegalStrategy,
    StrategyGroup,
    Taxonomy,
    default_taxonomy,
)

#: Column order used by the food accuracy table.
FOOD_TABLE_ORDER = (
    FoodCategory.GROW,
    FoodCategory.SURPLUS,
    FoodCategory.PROCESS,
    FoodCategory.MAKE,
    FoodCategory.DISTRIBUTE,
    FoodCategory.GET,
)

_METHOD_ORDER = {method: i for i, method in enumerate(MethodId)}


@dataclass(frozen=True)
class AttributeScores:
    """Exact-match accuracy fractions for the three scalar attributes."""

    state_acc: float
    year_acc: float
    policy_type_acc: float


@dataclass(frozen=True)
class StrategyScores:
    exact_acc: float
    partial_acc: float
    group_a_acc: float
    group_b_acc: float


@dataclass(frozen=True)
class FoodScores:
    per_category_acc: dict[FoodCategory, float]
    micro_f1: float
    hamming_loss: float
    k_histogram: list[float]  # index = K correct categories, values in percent


@dataclass(frozen=True)
class EvalReport:
    method: MethodId
    model_id: str
    n_records: int
    attributes: AttributeScores
    strategies: StrategyScores
    food: FoodScores
    hallucination_count: int
    missing_count: int


def score_strategies_exact(pred: frozenset[LegalStrategy], gold: frozenset[LegalStrategy]) -> bool:
    """Set equality, order-free; both-empty counts as agreement."""
    return set(pred) == set(gold)


def score_strategies_partial(pred: frozenset[LegalStrategy], gold: frozenset[LegalStrategy]) -> bool:
    """Non-empty intersection, or both sets empty."""
    if not pred and not gold:
        return True
    return bool(set(pred) & set(gold))


def score_group(
    pred: frozenset[LegalStrategy],
    gold: frozenset[LegalStrategy],
    group: StrategyGroup,
    taxonomy: Taxonomy | None = None,
) -> bool:
    """Presence/absence of the group's strategies agrees exactly."""
    members = (taxonomy or default_taxonomy()).group_members(group)
    return set(pred) & members == set(gold) & members


def _check_matrix(preds: Sequence[Sequence[int]], golds: Sequence[Sequence[int]]) -> None:
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(golds)} golds")
    for row_pred, row_gold in zip(preds, golds):
        if len(row_pred) != len(CATEGORY_ORDER) or len(row_gold) != len(CATEGORY_ORDER):
            raise LengthMismatch("every record must score all six categories")


def micro_f1(preds: Sequence[Sequence[int]], golds: Sequence[Sequence[int]]) -> float:
    """F1 over TP/FP/FN pooled across all record-by-category cells."""
    _check_matrix(preds, golds)
    tp = fp = fn = 0
    for row_pred, row_gold in zip(preds, golds):
        for p, g in zip(row_pred, row_gold):
            if p == 1 and g == 1:
                tp += 1
            elif p == 1 and g == 0:
                fp += 1
            elif p == 0 and g == 1:
                fn += 1
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def hamming_loss(preds: Sequence[Sequence[int]], golds: Sequence[Sequence[int]]) -> float:
    """Fraction of record-by-category cells where prediction and gold differ."""
    _check_matrix(preds, golds)
    disagree = sum(
        1
        for row_pred, row_gold in zip(preds, golds)
        for p, g in zip(row_pred, row_gold)
        if p != g
    )
    return disagree / (len(preds) * len(CATEGORY_ORDER))


def k_correct_distribution(
    preds: Sequence[Sequence[int]], golds: Sequence[Sequence[int]]
) -> list[float]:
    """Percentage of records with exactly K correct categories, K = 0..6."""
    _check_matrix(preds, golds)
    bins = [0] * (len(CATEGORY_ORDER) + 1)
    for row_pred, row_gold in zip(preds, golds):
        correct = sum(1 for p, g in zip(row_pred, row_gold) if p == g)
        bins[correct] += 1
    return [100.0 * count / len(preds) for count in bins]


def _food_rows(
    extraction: Extraction, gold_row: tuple[int, ...]
) -> tuple[list[int], list[int]]:
    """Prediction row with degraded cells coerced to the wrong value."""
    pred_row = []
    for category, gold_cell in zip(CATEGORY_ORDER, gold_row):
        if extraction.food is MISSING:
            cell: object = MISSING
        else:
            cell = extraction.food[category]
        pred_row.append(cell if cell in (0, 1) else 1 - gold_cell)
    return pred_row, list(gold_row)


def _count_missing(extraction: Extraction) -> int:
    count = 0
    for name in ("state", "effect_year", "policy_type", "strategies"):
        if getattr(extraction, name) is MISSING:
            count += 1
    if extraction.food is MISSING:
        count += len(CATEGORY_ORDER)
    else:
        count += sum(1 for c in CATEGORY_ORDER if extraction.food[c] is MISSING)
    return count


def build_report(
    extractions: Iterable[Extraction],
    corpus: Iterable[PolicyRecord],
    taxonomy: Taxonomy | None = None,
    model_id: str = "",
) -> EvalReport:
    """Score one method's extractions against the corpus gold annotations."""
    extractions = list(extractions)
    if not extractions:
        raise ValueError("cannot build a report from zero extractions")
    taxonomy = taxonomy or default_taxonomy()
    by_id = {record.id: record for record in corpus}

    ungolded = [
        e.record_id for e in extractions if e.record_id not in by_id or by_id[e.record_id].gold is None
    ]
    if ungolded:
        raise GoldMissing(f"records without gold annotation: {sorted(set(ungolded))}")

    methods = {e.method for e in extractions}
    if len(methods) > 1:
        raise ValueError(f"extractions mix methods: {sorted(m.value for m in methods)}")

    n = len(extractions)
    state_ok = year_ok = type_ok = 0
    exact_ok = partial_ok = group_a_ok = group_b_ok = 0
    pred_rows: list[list[int]] = []
    gold_rows: list[list[int]] = []
    hallucination_count = 0
    missing_count = 0

    for extraction in extractions:
        gold = by_id[extraction.record_id].gold
        assert gold is not None

        state_ok += int(extraction.state == gold.state)
        year_ok += int(extraction.effect_year == gold.effect_year)
        type_ok += int(extraction.policy_type == gold.policy_type)

        strategy_halluc = any(
            name == "strategies" or name.startswith("strategy")
            for name, _ in extraction.hallucinations
        )
        if extraction.strategies is MISSING:
            pred_strats = None
        else:
            pred_strats = extraction.strategies
        if pred_strats is not None:
            exact_ok += int(
                not strategy_halluc and score_strategies_exact(pred_strats, gold.strategies)
            )
            partial_ok += int(score_strategies_partial(pred_strats, gold.strategies))
            group_a_ok += int(
                score_group(pred_strats, gold.strategies, StrategyGroup.GROUP_A, taxonomy)
            )
            group_b_ok += int(
                score_group(pred_strats, gold.strategies, StrategyGroup.GROUP_B, taxonomy)
            )

        pred_row, gold_row = _food_rows(extraction, gold.food_row())
        pred_rows.append(pred_row)
        gold_rows.append(gold_row)

        hallucination_count += len(extraction.hallucinations)
        missing_count += _count_missing(extraction)

    per_category = {
        category: sum(1 for pred, gold_r in zip(pred_rows, gold_rows) if pred[i] == gold_r[i]) / n
        for i, category in enumerate(CATEGORY_ORDER)
    }

    return EvalReport(
        method=next(iter(methods)),
        model_id=model_id,
        n_records=n,
        attributes=AttributeScores(
            state_acc=state_ok / n,
            year_acc=year_ok / n,
            policy_type_acc=type_ok / n,
        ),
        strategies=StrategyScores(
            exact_acc=exact_ok / n,
            partial_acc=partial_ok / n,
            group_a_acc=group_a_ok / n,
            group_b_acc=group_b_ok / n,
        ),
        food=FoodScores(
            per_category_acc=per_category,
            micro_f1=micro_f1(pred_rows, gold_rows),
            hamming_loss=hamming_loss(pred_rows, gold_rows),
            k_histogram=k_correct_distribution(pred_rows, gold_rows),
        ),
        hallucination_count=hallucination_count,
        missing_count=missing_count,
    )


def sort_reports(reports: Iterable[EvalReport]) -> list[EvalReport]:
    return sorted(reports, key=lambda r: (_METHOD_ORDER[r.method], r.model_id))


def _pct(fraction: float) -> str:
    return f"{fraction * 100:.2f}"


def _md_table(header: list[str], rows: list[list[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |"]
    lines.append("|" + "---|" * len(header))
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return lines


def _render_markdown(reports: list[EvalReport]) -> str:
    lines = ["# Policy extraction evaluation", ""]

    lines.append("## Attribute and legal strategy accuracy (%)")
    lines.append("")
    lines.extend(
        _md_table(
            [
                "Method", "N", "State", "Year", "Policy Type", "Strategy (Exact)",
                "Strategy (Partial)", "Strategy (Type A)", "Strategy (Type B)",
                "Hallucinations", "Missing",
            ],
            [
                [
                    r.method.value,
                    str(r.n_records),
                    _pct(r.attributes.state_acc),
                    _pct(r.attributes.year_acc),
                    _pct(r.attributes.policy_type_acc),
                    _pct(r.strategies.exact_acc),
                    _pct(r.strategies.partial_acc),
                    _pct(r.strategies.group_a_acc),
                    _pct(r.strategies.group_b_acc),
                    str(r.hallucination_count),
                    str(r.missing_count),
                ]
                for r in reports
            ],
        )
    )
    lines.append("")

    lines.append("## Food system category accuracy (%)")
    lines.append("")
    lines.extend(
        _md_table(
            ["Method"] + [c.display for c in FOOD_TABLE_ORDER] + ["Micro-F1", "Hamming Loss"],
            [
                [r.method.value]
                + [_pct(r.food.per_category_acc[c]) for c in FOOD_TABLE_ORDER]
                + [_pct(r.food.micro_f1), _pct(r.food.hamming_loss)]
                for r in reports
            ],
        )
    )
    lines.append("")

    lines.append("## Correctly predicted food categories per policy (%)")
    lines.append("")
    ks = list(range(len(CATEGORY_ORDER), -1, -1))
    lines.extend(
        _md_table(
            ["Method"] + [str(k) for k in ks],
            [
                [r.method.value] + [f"{r.food.k_histogram[k]:.2f}" for k in ks]
                for r in reports
            ],
        )
    )
    lines.append("")

    return "\n".join(lines)


def _render_csv(reports: list[EvalReport]) -> str:
    rows = ["table,method,metric,value"]
    for r in reports:
        method = r.method.value
        rows.append(f"attributes,{method},n_records,{r.n_records}")
        rows.append(f"attributes,{method},state_acc,{_pct(r.attributes.state_acc)}")
        rows.append(f"attributes,{method},year_acc,{_pct(r.attributes.year_acc)}")
        rows.append(f"attributes,{method},policy_type_acc,{_pct(r.attributes.policy_type_acc)}")
        rows.append(f"attributes,{method},strategy_exact_acc,{_pct(r.strategies.exact_acc)}")
        rows.append(f"attributes,{method},strategy_partial_acc,{_pct(r.strategies.partial_acc)}")
        rows.append(f"attributes,{method},strategy_type_a_acc,{_pct(r.strategies.group_a_acc)}")
        rows.append(f"attributes,{method},strategy_type_b_acc,{_pct(r.strategies.group_b_acc)}")
        rows.append(f"attributes,{method},hallucination_count,{r.hallucination_count}")
        rows.append(f"attributes,{method},missing_count,{r.missing_count}")
        for category in FOOD_TABLE_ORDER:
            rows.append(
                f"food,{method},{category.key}_acc,{_pct(r.food.per_category_acc[category])}"
            )
        rows.append(f"food,{method},micro_f1,{_pct(r.food.micro_f1)}")
        rows.append(f"food,{method},hamming_loss,{_pct(r.food.hamming_loss)}")
        for k in range(len(CATEGORY_ORDER), -1, -1):
            rows.append(f"k_distribution,{method},k{k},{r.food.k_histogram[k]:.2f}")
    return "\n".join(rows) + "\n"


def report_to_dict(report: EvalReport) -> dict:
    return {
        "method": report.method.value,
        "model_id": report.model_id,
        "n_records": report.n_records,
        "attributes": {
            "state_acc": report.attributes.state_acc,
            "year_acc": report.attributes.year_acc,
            "policy_type_acc": report.attributes.policy_type_acc,
        },
        "strategies": {
            "exact_acc": report.strategies.exact_acc,
            "partial_acc": report.strategies.partial_acc,
            "group_a_acc": report.strategies.group_a_acc,
            "group_b_acc": report.strategies.group_b_acc,
        },
        "food": {
            "per_category_acc": {
                c.key: report.food.per_category_acc[c] for c in CATEGORY_ORDER
            },
            "micro_f1": report.food.micro_f1,
            "hamming_loss": report.food.hamming_loss,
            "k_histogram": report.food.k_histogram,
        },
        "hallucination_count": report.hallucination_count,
        "missing_count": report.missing_count,
    }


def report_from_dict(data: dict) -> EvalReport:
    return EvalReport(
        method=MethodId(data["method"]),
        model_id=data["model_id"],
        n_records=data["n_records"],
        attributes=AttributeScores(**data["attributes"]),
        strategies=StrategyScores(**data["strategies"]),
        food=FoodScores(
            per_category_acc={
                c: data["food"]["per_category_acc"][c.key] for c in CATEGORY_ORDER
            },
            micro_f1=data["food"]["micro_f1"],
            hamming_loss=data["food"]["hamming_loss"],
            k_histogram=list(data["food"]["k_histogram"]),
        ),
        hallucination_count=data["hallucination_count"],
        missing_count=data["missing_count"],
    )


def reports_from_json(text: str) -> list[EvalReport]:
    return [report_from_dict(d) for d in json.loads(text)["reports"]]


def render_report(reports: Iterable[EvalReport], fmt: str = "markdown") -> str:
    """Render reports as three tables, one row per method, in method order."""
    ordered = sort_reports(reports)
    if not ordered:
        raise ValueError("render_report needs at least one report")
    if fmt == "markdown":
        return _render_markdown(ordered)
    if fmt == "csv":
        return _render_csv(ordered)
    if fmt == "json":
        return json.dumps({"reports": [report_to_dict(r) for r in ordered]}, indent=2) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")
