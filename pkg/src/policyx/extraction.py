"""Parsing model output into validated extractions and running the flows.

The role-based flow issues three independent completions per policy (one per
expert role) and merges their disjoint field sets; baselines issue a single
completion carrying the union schema. Out-of-vocabulary values degrade to
UNRECOGNIZED with a recorded hallucination; absent keys degrade to MISSING.
Degraded values are represented, never raised.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

from .corpus import GoldAnnotation, PolicyRecord
from .errors import ExemplarMismatch, MalformedFile, NoJsonFound
from .gateway import CompletionRequest, LlmGateway
from .prompting import (
    MethodId,
    RoleId,
    TemplateSet,
    render_baseline_prompt,
    render_role_prompt,
)
from .taxonomy import (
    CATEGORY_ORDER,
    MAX_STRATEGIES,
    UNRECOGNIZED,
    FoodCategory,
    LegalStrategy,
    Marker,
    PolicyType,
    Taxonomy,
    canonicalize_policy_type,
    canonicalize_strategy,
    default_taxonomy,
    parse_effective_year,
)

#: Marker for an expected key the model never produced.
MISSING = Marker("MISSING")

_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.IGNORECASE | re.DOTALL)
_STRATEGY_KEY_RE = re.compile(r"strategy(_\d+)?")


@dataclass(frozen=True)
class ParsedJson:
    """First well-formed JSON object recovered from model text."""

    obj: dict
    mode: str  # fenced | bare


@dataclass
class Extraction:
    """Validated five-attribute profile extracted for one record."""

    record_id: str
    method: MethodId
    state: str | Marker = MISSING
    effect_year: int | Marker = MISSING
    policy_type: PolicyType | Marker = MISSING
    strategies: frozenset[LegalStrategy] | Marker = MISSING
    strategy_overflow: bool = False
    food: dict[FoodCategory, int | Marker] | Marker = MISSING
    hallucinations: list[tuple[str, str]] = field(default_factory=list)
    raw_responses: list[tuple[str, str]] = field(default_factory=list)

    def degraded_fields(self) -> list[str]:
        """Names of fields that are MISSING, UNRECOGNIZED, or hallucinated."""
        out = []
        for name in ("state", "effect_year", "policy_type", "strategies"):
            if getattr(self, name) in (MISSING, UNRECOGNIZED):
                out.append(name)
        if self.food is MISSING:
            out.append("food")
        else:
            out.extend(c.key for c in CATEGORY_ORDER if self.food[c] in (MISSING, UNRECOGNIZED))
        for field_name, _ in self.hallucinations:
            if field_name not in out:
                out.append(field_name)
        return out


def _try_parse_object(text: str) -> dict | None:
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        return None
    return value if isinstance(value, dict) else None


def _balanced_span(text: str, start: int) -> int | None:
    """End index (exclusive) of the brace-balanced span opening at start."""
    depth = 0
    in_string = False
    escape = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i + 1
    return None


def extract_json_snippet(raw: str) -> ParsedJson:
    """Recover the first well-formed JSON object from model output.

    Fenced code blocks are tried first; any surrounding reasoning prose is
    ignored. Failing that, every balanced `{...}` substring is tried in
    order. Raises NoJsonFound when the text contains no parseable object.
    """
    for match in _FENCE_RE.finditer(raw):
        obj = _try_parse_object(match.group(1).strip())
        if obj is not None:
            return ParsedJson(obj=obj, mode="fenced")
    start = raw.find("{")
    while start != -1:
        end = _balanced_span(raw, start)
        if end is not None:
            obj = _try_parse_object(raw[start:end])
            if obj is not None:
                return ParsedJson(obj=obj, mode="bare")
        start = raw.find("{", start + 1)
    raise NoJsonFound("no JSON object found in model output")


def _lower_keys(obj: dict) -> dict[str, object]:
    return {str(k).strip().lower(): v for k, v in obj.items()}


def _is_blank(value: object) -> bool:
    return value is None or (isinstance(value, str) and not value.strip())


def _parse_policy_fields(obj: dict[str, object], taxonomy: Taxonomy) -> dict:
    hallucinations: list[tuple[str, str]] = []

    if "state" not in obj or _is_blank(obj["state"]):
        state: str | Marker = MISSING
    else:
        raw = str(obj["state"])
        state = taxonomy.canonicalize_state(raw)
        if state is UNRECOGNIZED:
            hallucinations.append(("state", raw))

    if "effect_year" not in obj or _is_blank(obj["effect_year"]):
        year: int | Marker = MISSING
    else:
        parsed = parse_effective_year(obj["effect_year"])
        if parsed is None:
            year = UNRECOGNIZED
            hallucinations.append(("effect_year", str(obj["effect_year"])))
        else:
            year = parsed

    if "policy_type" not in obj or _is_blank(obj["policy_type"]):
        policy_type: PolicyType | Marker = MISSING
    else:
        raw = str(obj["policy_type"])
        policy_type = canonicalize_policy_type(raw)
        if policy_type is UNRECOGNIZED:
            hallucinations.append(("policy_type", raw))

    return {
        "state": state,
        "effect_year": year,
        "policy_type": policy_type,
        "hallucinations": hallucinations,
    }


def _parse_strategy_fields(obj: dict[str, object]) -> dict:
    """Collect strategy slots in emission order; cap the set at two."""
    hallucinations: list[tuple[str, str]] = []
    slots: list[tuple[str, object]] = []
    for key, value in obj.items():
        if key == "strategies":
            items = value if isinstance(value, list) else [value]
            slots.extend(("strategies", item) for item in items)
        elif _STRATEGY_KEY_RE.fullmatch(key):
            slots.append((key, value))

    if not slots:
        return {"strategies": MISSING, "strategy_overflow": False, "hallucinations": []}

    recognized: list[LegalStrategy] = []
    for slot_name, value in slots:
        if _is_blank(value):
            continue
        raw = str(value)
        strategy = canonicalize_strategy(raw)
        if strategy is UNRECOGNIZED:
            hallucinations.append((slot_name, raw))
        elif strategy not in recognized:
            recognized.append(strategy)

    return {
        "strategies": frozenset(recognized[:MAX_STRATEGIES]),
        "strategy_overflow": len(recognized) > MAX_STRATEGIES,
        "hallucinations": hallucinations,
    }


def _coerce_flag(value: object) -> int | None:
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, int) and value in (0, 1):
        return value
    if isinstance(value, str) and value.strip() in ("0", "1"):
        return int(value.strip())
    return None


def _parse_food_fields(obj: dict[str, object]) -> dict:
    hallucinations: list[tuple[str, str]] = []
    if not any(category.key in obj for category in CATEGORY_ORDER):
        return {"food": MISSING, "hallucinations": []}

    food: dict[FoodCategory, int | Marker] = {}
    for category in CATEGORY_ORDER:
        if category.key not in obj:
            food[category] = MISSING
            continue
        flag = _coerce_flag(obj[category.key])
        if flag is None:
            food[category] = UNRECOGNIZED
            hallucinations.append((category.key, str(obj[category.key])))
        else:
            food[category] = flag
    return {"food": food, "hallucinations": hallucinations}


def parse_role_output(
    role: RoleId, parsed: ParsedJson, taxonomy: Taxonomy | None = None
) -> dict:
    """Map one role's JSON object onto its extraction fields."""
    taxonomy = taxonomy or default_taxonomy()
    obj = _lower_keys(parsed.obj)
    if role is RoleId.POLICY_ANALYST:
        return _parse_policy_fields(obj, taxonomy)
    if role is RoleId.LEGAL_STRATEGIST:
        return _parse_strategy_fields(obj)
    return _parse_food_fields(obj)


ROLE_ORDER = (RoleId.POLICY_ANALYST, RoleId.LEGAL_STRATEGIST, RoleId.FOOD_EXPERT)


def run_role_based(
    record: PolicyRecord,
    gateway: LlmGateway,
    templates: TemplateSet,
    model_id: str,
    taxonomy: Taxonomy | None = None,
    max_tokens: int = 1024,
) -> Extraction:
    """Issue the three role completions and merge their disjoint fields.

    A role whose output yields no JSON degrades only its own fields to
    MISSING; the other roles' results survive.
    """
    taxonomy = taxonomy or default_taxonomy()
    extraction = Extraction(record_id=record.id, method=MethodId.ROLE_BASED)
    for role in ROLE_ORDER:
        prompt = render_role_prompt(role, record, templates, model_id)
        response = gateway.complete(
            CompletionRequest(
                model_id=model_id,
                user_text=prompt.text,
                max_tokens=max_tokens,
                tag=f"{record.id}/{role.value}",
            )
        )
        extraction.raw_responses.append((role.value, response.text))
        try:
            parsed = extract_json_snippet(response.text)
        except NoJsonFound:
            continue  # this role's fields stay MISSING
        fields = parse_role_output(role, parsed, taxonomy)
        extraction.hallucinations.extend(fields.pop("hallucinations"))
        for name, value in fields.items():
            setattr(extraction, name, value)
    return extraction


def run_baseline(
    record: PolicyRecord,
    method: MethodId,
    gateway: LlmGateway,
    templates: TemplateSet,
    model_id: str,
    exemplars: list[tuple[PolicyRecord, GoldAnnotation]] | None = None,
    taxonomy: Taxonomy | None = None,
    max_tokens: int = 1024,
) -> Extraction:
    """Issue one union-schema completion and map all five attributes."""
    if method is MethodId.ROLE_BASED:
        raise ValueError("use run_role_based for the role-based method")
    if method is MethodId.FEW_SHOT and not exemplars:
        raise ExemplarMismatch("few-shot extraction requires exemplars")

    taxonomy = taxonomy or default_taxonomy()
    prompt = render_baseline_prompt(method, record, exemplars, templates, model_id)
    response = gateway.complete(
        CompletionRequest(
            model_id=model_id,
            user_text=prompt.text,
            max_tokens=max_tokens,
            tag=f"{record.id}/{method.value}",
        )
    )
    extraction = Extraction(record_id=record.id, method=method)
    extraction.raw_responses.append((method.value, response.text))
    try:
        parsed = extract_json_snippet(response.text)
    except NoJsonFound:
        return extraction
    obj = _lower_keys(parsed.obj)
    for fields in (
        _parse_policy_fields(obj, taxonomy),
        _parse_strategy_fields(obj),
        _parse_food_fields(obj),
    ):
        extraction.hallucinations.extend(fields.pop("hallucinations"))
        for name, value in fields.items():
            setattr(extraction, name, value)
    return extraction


def run_record(
    record: PolicyRecord,
    method: MethodId,
    gateway: LlmGateway,
    templates: TemplateSet,
    model_id: str,
    exemplars: list[tuple[PolicyRecord, GoldAnnotation]] | None = None,
    taxonomy: Taxonomy | None = None,
    max_tokens: int = 1024,
) -> Extraction:
    if method is MethodId.ROLE_BASED:
        return run_role_based(record, gateway, templates, model_id, taxonomy, max_tokens)
    return run_baseline(
        record, method, gateway, templates, model_id, exemplars, taxonomy, max_tokens
    )


def run_extraction(
    records: Iterable[PolicyRecord],
    method: MethodId,
    gateway: LlmGateway,
    templates: TemplateSet,
    model_id: str,
    exemplars: list[tuple[PolicyRecord, GoldAnnotation]] | None = None,
    taxonomy: Taxonomy | None = None,
    max_workers: int = 1,
    max_tokens: int = 1024,
    journal_fh: IO[str] | None = None,
) -> list[Extraction]:
    """Extract every record, optionally in parallel, in stable record order.

    When a journal file handle is given, each finished extraction is appended
    (and flushed) as soon as it is available, so aborted runs keep a partial
    journal.
    """
    records = list(records)
    if method is MethodId.FEW_SHOT and not exemplars:
        raise ExemplarMismatch("few-shot extraction requires exemplars")

    def work(record: PolicyRecord) -> Extraction:
        return run_record(
            record, method, gateway, templates, model_id, exemplars, taxonomy, max_tokens
        )

    results: list[Extraction] = []
    if max_workers <= 1:
        for record in records:
            extraction = work(record)
            if journal_fh is not None:
                journal_fh.write(extraction_to_json(extraction) + "\n")
                journal_fh.flush()
            results.append(extraction)
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(work, record) for record in records]
            for future in futures:  # submission order keeps the journal stable
                extraction = future.result()
                if journal_fh is not None:
                    journal_fh.write(extraction_to_json(extraction) + "\n")
                    journal_fh.flush()
                results.append(extraction)
    return results


def extraction_to_json(extraction: Extraction) -> str:
    """One journal line, stable field order. Sentinels serialize to null;

    a null plus a matching hallucination entry reads back as UNRECOGNIZED,
    a bare null as MISSING.
    """

    def scalar(value):
        return None if isinstance(value, Marker) else value

    if extraction.strategies is MISSING:
        strategies = None
    else:
        strategies = sorted(s.code for s in extraction.strategies)
    if extraction.food is MISSING:
        food = None
    else:
        food = {c.key: scalar(extraction.food[c]) for c in CATEGORY_ORDER}

    line = {
        "record_id": extraction.record_id,
        "method": extraction.method.value,
        "state": scalar(extraction.state),
        "effect_year": scalar(extraction.effect_year),
        "policy_type": None
        if isinstance(extraction.policy_type, Marker)
        else extraction.policy_type.display,
        "strategies": strategies,
        "strategy_overflow": extraction.strategy_overflow,
        "food": food,
        "hallucinations": [list(entry) for entry in extraction.hallucinations],
        "raw_responses": [list(entry) for entry in extraction.raw_responses],
    }
    return json.dumps(line, ensure_ascii=False)


def extraction_from_dict(data: dict) -> Extraction:
    hallucinated = {field_name for field_name, _ in data.get("hallucinations", [])}

    def revive(name: str, value):
        if value is None:
            return UNRECOGNIZED if name in hallucinated else MISSING
        return value

    policy_type = data.get("policy_type")
    if policy_type is not None:
        policy_type = PolicyType(policy_type)
    else:
        policy_type = revive("policy_type", None)

    strategies = data.get("strategies")
    if strategies is None:
        strategies_value: frozenset[LegalStrategy] | Marker = MISSING
    else:
        strategies_value = frozenset(LegalStrategy[code] for code in strategies)

    food_data = data.get("food")
    if food_data is None:
        food_value: dict[FoodCategory, int | Marker] | Marker = MISSING
    else:
        food_value = {c: revive(c.key, food_data.get(c.key)) for c in CATEGORY_ORDER}

    return Extraction(
        record_id=data["record_id"],
        method=MethodId(data["method"]),
        state=revive("state", data.get("state")),
        effect_year=revive("effect_year", data.get("effect_year")),
        policy_type=policy_type,
        strategies=strategies_value,
        strategy_overflow=bool(data.get("strategy_overflow", False)),
        food=food_value,
        hallucinations=[tuple(entry) for entry in data.get("hallucinations", [])],
        raw_responses=[tuple(entry) for entry in data.get("raw_responses", [])],
    )


def read_journal(path: str | Path) -> list[Extraction]:
    """Parse a run journal back into extractions."""
    path = Path(path)
    extractions = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise MalformedFile(f"cannot read journal {path}: {exc}") from exc
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedFile(f"{path}: line {line_no}: {exc}") from exc
        extractions.append(extraction_from_dict(data))
    return extractions


def write_manifest(path: str | Path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedFile(f"cannot read manifest {path}: {exc}") from exc
