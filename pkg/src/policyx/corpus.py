"""Loading, validating, serializing, and splitting policy corpora.

Corpora are flat CSV or JSONL files with one record per row/line. Gold
annotations, when present, are canonicalized through the taxonomy at load
time, so everything downstream works with closed-vocabulary values only.
"""

from __future__ import annotations

import csv
import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import DuplicateId, InsufficientGold, InvalidGoldLabel, MalformedFile
from .taxonomy import (
    CATEGORY_ORDER,
    MAX_STRATEGIES,
    UNRECOGNIZED,
    FoodCategory,
    LegalStrategy,
    PolicyType,
    Taxonomy,
    canonicalize_policy_type,
    canonicalize_strategy,
    default_taxonomy,
    parse_effective_year,
)

#: Fixed flat schema shared by CSV (column order) and JSONL (field names).
ID_COLUMNS = ("id", "title", "summary")
GOLD_COLUMNS = (
    "state",
    "effect_year",
    "policy_type",
    "strategy_1",
    "strategy_2",
    "grow",
    "process",
    "distribute",
    "get",
    "make",
    "surplus",
)
ALL_COLUMNS = ID_COLUMNS + GOLD_COLUMNS


@dataclass(frozen=True)
class GoldAnnotation:
    """Expert-annotated five-attribute profile of one policy."""

    state: str
    effect_year: int
    policy_type: PolicyType
    strategies: frozenset[LegalStrategy]
    food: dict[FoodCategory, int]

    def food_row(self) -> tuple[int, ...]:
        return tuple(self.food[c] for c in CATEGORY_ORDER)


@dataclass(frozen=True)
class PolicyRecord:
    """One corpus entry: identity, inputs, and optional gold annotation."""

    id: str
    title: str
    summary: str = ""
    gold: GoldAnnotation | None = None


@dataclass(frozen=True)
class CorpusSplit:
    """Disjoint partition of record ids into exemplars and evaluation set."""

    exemplar_ids: frozenset[str]
    eval_ids: frozenset[str]


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt:
        if fmt not in ("csv", "jsonl"):
            raise MalformedFile(f"unsupported corpus format {fmt!r}")
        return fmt
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    raise MalformedFile(f"cannot infer corpus format from {path.name!r}; pass format")


def _sorted_strategy_displays(strategies: frozenset[LegalStrategy]) -> list[str]:
    return [s.display for s in sorted(strategies, key=lambda s: s.code)]


def _parse_gold(cells: dict[str, object], row: int, taxonomy: Taxonomy) -> GoldAnnotation | None:
    present = {
        col: cells[col]
        for col in GOLD_COLUMNS
        if cells.get(col) is not None and str(cells[col]).strip() != ""
    }
    if not present:
        return None

    def cell(col: str) -> object:
        value = cells.get(col)
        if value is None or str(value).strip() == "":
            raise InvalidGoldLabel(row, col, value)
        return value

    state = taxonomy.canonicalize_state(str(cell("state")))
    if state is UNRECOGNIZED:
        raise InvalidGoldLabel(row, "state", cells["state"])

    year = parse_effective_year(cell("effect_year"))
    if year is None:
        raise InvalidGoldLabel(row, "effect_year", cells["effect_year"])

    policy_type = canonicalize_policy_type(str(cell("policy_type")))
    if policy_type is UNRECOGNIZED:
        raise InvalidGoldLabel(row, "policy_type", cells["policy_type"])

    strategies: list[LegalStrategy] = []
    for col in ("strategy_1", "strategy_2"):
        value = cells.get(col)
        if value is None or str(value).strip() == "":
            continue
        strategy = canonicalize_strategy(str(value))
        if strategy is UNRECOGNIZED:
            raise InvalidGoldLabel(row, col, value)
        if strategy in strategies:
            raise InvalidGoldLabel(row, col, value)
        strategies.append(strategy)
    if len(strategies) > MAX_STRATEGIES:
        raise InvalidGoldLabel(row, "strategy_2", cells.get("strategy_2"))

    food: dict[FoodCategory, int] = {}
    for category in CATEGORY_ORDER:
        value = cell(category.key)
        flag = str(value).strip()
        if flag not in ("0", "1"):
            raise InvalidGoldLabel(row, category.key, value)
        food[category] = int(flag)

    return GoldAnnotation(
        state=state,
        effect_year=year,
        policy_type=policy_type,
        strategies=frozenset(strategies),
        food=food,
    )


def _make_record(cells: dict[str, object], row: int, taxonomy: Taxonomy) -> PolicyRecord:
    record_id = str(cells.get("id") or "").strip()
    if not record_id:
        raise MalformedFile(f"row {row}: missing id")
    title = str(cells.get("title") or "").strip()
    if not title:
        raise MalformedFile(f"row {row}: title must be non-empty")
    summary = str(cells.get("summary") or "")
    return PolicyRecord(
        id=record_id,
        title=title,
        summary=summary,
        gold=_parse_gold(cells, row, taxonomy),
    )


def load_corpus(
    path: str | Path,
    fmt: str | None = None,
    taxonomy: Taxonomy | None = None,
) -> list[PolicyRecord]:
    """Load and validate a corpus file.

    Raises MalformedFile for unparseable input, DuplicateId for repeated
    record ids, and InvalidGoldLabel (with row and column) when a gold value
    fails canonicalization.
    """
    path = Path(path)
    fmt = _infer_format(path, fmt)
    taxonomy = taxonomy or default_taxonomy()

    rows: list[tuple[int, dict[str, object]]] = []
    if fmt == "csv":
        try:
            with path.open(newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                header = reader.fieldnames
                if header is None:
                    raise MalformedFile(f"{path}: empty file, header row required")
                unknown = set(header) - set(ALL_COLUMNS)
                if unknown:
                    raise MalformedFile(f"{path}: unknown columns {sorted(unknown)}")
                missing = set(ID_COLUMNS) - set(header)
                if missing:
                    raise MalformedFile(f"{path}: missing columns {sorted(missing)}")
                gold_cols = set(header) & set(GOLD_COLUMNS)
                if gold_cols and gold_cols != set(GOLD_COLUMNS):
                    absent = sorted(set(GOLD_COLUMNS) - gold_cols)
                    raise MalformedFile(f"{path}: incomplete gold columns, missing {absent}")
                for row_no, row in enumerate(reader, start=2):
                    rows.append((row_no, dict(row)))
        except (OSError, csv.Error) as exc:
            raise MalformedFile(f"cannot read {path}: {exc}") from exc
    else:
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise MalformedFile(f"cannot read {path}: {exc}") from exc
        for row_no, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedFile(f"{path}: line {row_no}: {exc}") from exc
            if not isinstance(obj, dict):
                raise MalformedFile(f"{path}: line {row_no}: expected a JSON object")
            unknown = set(obj) - set(ALL_COLUMNS)
            if unknown:
                raise MalformedFile(f"{path}: line {row_no}: unknown fields {sorted(unknown)}")
            rows.append((row_no, obj))

    records: list[PolicyRecord] = []
    seen: set[str] = set()
    for row_no, cells in rows:
        record = _make_record(cells, row_no, taxonomy)
        if record.id in seen:
            raise DuplicateId(f"row {row_no}: duplicate id {record.id!r}")
        seen.add(record.id)
        records.append(record)
    return records


def _record_to_flat(record: PolicyRecord) -> dict[str, object]:
    flat: dict[str, object] = {
        "id": record.id,
        "title": record.title,
        "summary": record.summary,
    }
    if record.gold is not None:
        gold = record.gold
        displays = _sorted_strategy_displays(gold.strategies)
        flat["state"] = gold.state
        flat["effect_year"] = gold.effect_year
        flat["policy_type"] = gold.policy_type.display
        flat["strategy_1"] = displays[0] if len(displays) > 0 else ""
        flat["strategy_2"] = displays[1] if len(displays) > 1 else ""
        for category in CATEGORY_ORDER:
            flat[category.key] = gold.food[category]
    return flat


def save_corpus(records: list[PolicyRecord], path: str | Path, fmt: str | None = None) -> None:
    """Serialize records back to the flat schema (round-trips with load)."""
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=ALL_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for record in records:
                flat = _record_to_flat(record)
                writer.writerow({col: flat.get(col, "") for col in ALL_COLUMNS})
    else:
        with path.open("w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(_record_to_flat(record), ensure_ascii=False))
                fh.write("\n")


def corpus_digest(records: list[PolicyRecord]) -> str:
    """Stable content digest of a corpus, independent of the file format."""
    canonical = []
    for record in sorted(records, key=lambda r: r.id):
        entry: dict[str, object] = {
            "id": record.id,
            "title": record.title,
            "summary": record.summary,
        }
        if record.gold is not None:
            gold = record.gold
            entry["gold"] = {
                "state": gold.state,
                "effect_year": gold.effect_year,
                "policy_type": gold.policy_type.display,
                "strategies": sorted(s.code for s in gold.strategies),
                "food": [gold.food[c] for c in CATEGORY_ORDER],
            }
        canonical.append(entry)
    payload = json.dumps(canonical, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _coverage_labels(record: PolicyRecord) -> frozenset[str]:
    gold = record.gold
    assert gold is not None
    return frozenset({f"type:{gold.policy_type.name}"} | {f"strategy:{s.code}" for s in gold.strategies})


def select_exemplars(records: list[PolicyRecord], k: int, seed: int) -> CorpusSplit:
    """Pick k few-shot exemplars by greedy label coverage.

    Each step takes the record contributing the most not-yet-covered policy
    type / strategy labels; ties are broken by a seeded pseudo-random draw.
    The remaining records form the evaluation set, so the two sides never
    overlap.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= len(records):
        raise ValueError(f"k={k} must be smaller than the corpus size {len(records)}")
    without_gold = [r.id for r in records if r.gold is None]
    if without_gold:
        raise InsufficientGold(
            f"records lack gold annotations needed for coverage scoring: {without_gold}"
        )

    rng = random.Random(seed)
    remaining = {r.id: _coverage_labels(r) for r in records}
    covered: set[str] = set()
    chosen: list[str] = []
    for _ in range(k):
        best_gain = max(len(labels - covered) for labels in remaining.values())
        tied = sorted(rid for rid, labels in remaining.items() if len(labels - covered) == best_gain)
        pick = rng.choice(tied)
        covered |= remaining.pop(pick)
        chosen.append(pick)

    exemplar_ids = frozenset(chosen)
    return CorpusSplit(
        exemplar_ids=exemplar_ids,
        eval_ids=frozenset(r.id for r in records) - exemplar_ids,
    )
