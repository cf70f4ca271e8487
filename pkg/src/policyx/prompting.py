"""Prompt construction for the three expert roles and the three baselines.

Templates live on disk as UTF-8 text files (one per method/role) with
`{title}`, `{summary}`, and, for few-shot, `{examples}` placeholders.
Rendering is a pure function of its inputs, so identical inputs always yield
byte-identical prompt text.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .corpus import GoldAnnotation, PolicyRecord
from .errors import ExemplarMismatch, TemplateError
from .taxonomy import (
    CATEGORY_ORDER,
    FoodCategory,
    LegalStrategy,
    PolicyType,
)


class MethodId(Enum):
    """Extraction methods, in the fixed reporting order."""

    ROLE_BASED = "RoleBased"
    ZERO_SHOT = "ZeroShot"
    FEW_SHOT = "FewShot"
    CHAIN_OF_THOUGHT = "ChainOfThought"


class RoleId(Enum):
    POLICY_ANALYST = "PolicyAnalyst"
    LEGAL_STRATEGIST = "LegalStrategist"
    FOOD_EXPERT = "FoodExpert"


BASELINE_METHODS = (MethodId.ZERO_SHOT, MethodId.FEW_SHOT, MethodId.CHAIN_OF_THOUGHT)

#: Template file stem for each (method, role) pair.
TEMPLATE_NAMES: dict[tuple[MethodId, RoleId | None], str] = {
    (MethodId.ROLE_BASED, RoleId.POLICY_ANALYST): "role_based_policy_analyst",
    (MethodId.ROLE_BASED, RoleId.LEGAL_STRATEGIST): "role_based_legal_strategist",
    (MethodId.ROLE_BASED, RoleId.FOOD_EXPERT): "role_based_food_expert",
    (MethodId.ZERO_SHOT, None): "zero_shot",
    (MethodId.FEW_SHOT, None): "few_shot",
    (MethodId.CHAIN_OF_THOUGHT, None): "chain_of_thought",
}

#: Output schema identifier per (method, role).
OUTPUT_SCHEMAS: dict[tuple[MethodId, RoleId | None], str] = {
    (MethodId.ROLE_BASED, RoleId.POLICY_ANALYST): "policy_analyst",
    (MethodId.ROLE_BASED, RoleId.LEGAL_STRATEGIST): "legal_strategist",
    (MethodId.ROLE_BASED, RoleId.FOOD_EXPERT): "food_expert",
    (MethodId.ZERO_SHOT, None): "union",
    (MethodId.FEW_SHOT, None): "union",
    (MethodId.CHAIN_OF_THOUGHT, None): "union",
}

DEFINITIONS_START = "Label definitions:"
DEFINITIONS_END = "Use only the labels defined above."

_COMMENT_PREFIX = "#:"
_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


def parse_method(text: str) -> MethodId:
    """Parse a method name leniently ("role-based", "RoleBased", ...)."""
    squashed = re.sub(r"[^a-z]", "", text.lower())
    for method in MethodId:
        if squashed == method.value.lower():
            return method
    raise ValueError(f"unknown method {text!r}")


@dataclass(frozen=True)
class PromptTemplate:
    """A parameterized prompt with placeholder and schema identity."""

    method: MethodId
    role: RoleId | None
    body: str
    output_schema: str

    def required_placeholders(self) -> tuple[str, ...]:
        if self.method is MethodId.FEW_SHOT:
            return ("title", "summary", "examples")
        return ("title", "summary")

    def validate(self) -> None:
        found = _PLACEHOLDER_RE.findall(self.body)
        required = self.required_placeholders()
        for name in required:
            count = found.count(name)
            if count != 1:
                raise TemplateError(
                    f"template {self.method.value}/{self.role and self.role.value}: "
                    f"placeholder {{{name}}} must appear exactly once, found {count}"
                )
        unknown = sorted(set(found) - set(required))
        if unknown:
            raise TemplateError(
                f"template {self.method.value}/{self.role and self.role.value}: "
                f"unknown placeholders {unknown}"
            )

    def digest(self) -> str:
        return _sha256_of([self.method.value, self.role.value if self.role else "", self.body])


@dataclass(frozen=True)
class RenderedPrompt:
    """Fully substituted prompt text plus its content identity."""

    method: MethodId
    role: RoleId | None
    text: str
    record_id: str
    content_digest: str


def _sha256_of(parts: list[str]) -> str:
    payload = json.dumps(parts, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _strip_comments(raw: str) -> str:
    lines = [line for line in raw.splitlines() if not line.startswith(_COMMENT_PREFIX)]
    return "\n".join(lines).strip() + "\n"


class TemplateSet:
    """All six templates, loaded from a directory or the packaged defaults."""

    def __init__(self, templates: dict[tuple[MethodId, RoleId | None], PromptTemplate]):
        missing = set(TEMPLATE_NAMES) - set(templates)
        if missing:
            raise TemplateError(f"missing templates: {sorted(TEMPLATE_NAMES[m] for m in missing)}")
        self._templates = templates

    @classmethod
    def load(cls, template_dir: str | Path | None = None) -> "TemplateSet":
        templates: dict[tuple[MethodId, RoleId | None], PromptTemplate] = {}
        for key, stem in TEMPLATE_NAMES.items():
            filename = f"{stem}.txt"
            if template_dir is not None:
                path = Path(template_dir) / filename
                if not path.is_file():
                    raise TemplateError(f"template file not found: {path}")
                raw = path.read_text(encoding="utf-8")
            else:
                raw = (resources.files("policyx") / "templates" / filename).read_text(
                    encoding="utf-8"
                )
            template = PromptTemplate(
                method=key[0],
                role=key[1],
                body=_strip_comments(raw),
                output_schema=OUTPUT_SCHEMAS[key],
            )
            template.validate()
            templates[key] = template
        return cls(templates)

    def get(self, method: MethodId, role: RoleId | None = None) -> PromptTemplate:
        try:
            return self._templates[(method, role)]
        except KeyError:
            raise TemplateError(f"no template for {method.value}/{role and role.value}") from None

    def digests(self) -> dict[str, str]:
        return {TEMPLATE_NAMES[key]: tpl.digest() for key, tpl in self._templates.items()}


def gold_union_json(gold: GoldAnnotation) -> dict[str, object]:
    """Gold annotation as the flat union output object (year as string)."""
    displays = [s.display for s in sorted(gold.strategies, key=lambda s: s.code)]
    obj: dict[str, object] = {
        "state": gold.state,
        "effect_year": str(gold.effect_year),
        "policy_type": gold.policy_type.display,
        "strategy_1": displays[0] if len(displays) > 0 else "",
        "strategy_2": displays[1] if len(displays) > 1 else "",
    }
    for category in CATEGORY_ORDER:
        obj[category.key] = gold.food[category]
    return obj


def format_exemplars(exemplars: list[tuple[PolicyRecord, GoldAnnotation]]) -> str:
    """Serialize exemplars as numbered title -> gold-JSON lines."""
    lines = []
    for i, (record, gold) in enumerate(exemplars, start=1):
        payload = json.dumps(gold_union_json(gold), ensure_ascii=False)
        lines.append(
            f'Example {i} ({gold.policy_type.display}): Title: "{record.title}" -> {payload}'
        )
    return "\n".join(lines)


def _substitute(body: str, mapping: dict[str, str]) -> str:
    text = body
    for name, value in mapping.items():
        text = text.replace("{" + name + "}", value)
    residual = [m for m in _PLACEHOLDER_RE.findall(text) if m in ("title", "summary", "examples")]
    if residual:
        raise TemplateError(f"unsubstituted placeholders remain: {residual}")
    return text


def _rendered(
    template: PromptTemplate, record: PolicyRecord, mapping: dict[str, str], model_id: str
) -> RenderedPrompt:
    text = _substitute(template.body, mapping)
    digest = _sha256_of(
        [
            template.method.value,
            template.role.value if template.role else "",
            text,
            model_id,
        ]
    )
    return RenderedPrompt(
        method=template.method,
        role=template.role,
        text=text,
        record_id=record.id,
        content_digest=digest,
    )


def render_role_prompt(
    role: RoleId,
    record: PolicyRecord,
    templates: TemplateSet | None = None,
    model_id: str = "",
) -> RenderedPrompt:
    """Render the prompt for one expert role over one record."""
    templates = templates or TemplateSet.load()
    template = templates.get(MethodId.ROLE_BASED, role)
    mapping = {"title": record.title, "summary": record.summary}
    return _rendered(template, record, mapping, model_id)


def render_baseline_prompt(
    method: MethodId,
    record: PolicyRecord,
    exemplars: list[tuple[PolicyRecord, GoldAnnotation]] | None = None,
    templates: TemplateSet | None = None,
    model_id: str = "",
) -> RenderedPrompt:
    """Render one of the three single-call baseline prompts."""
    if method not in BASELINE_METHODS:
        raise ValueError(f"{method.value} is not a baseline method")
    if method is MethodId.FEW_SHOT:
        if not exemplars:
            raise ExemplarMismatch("few-shot prompting requires at least one exemplar")
    elif exemplars:
        raise ExemplarMismatch(f"{method.value} does not take exemplars")

    templates = templates or TemplateSet.load()
    template = templates.get(method, None)
    mapping = {"title": record.title, "summary": record.summary}
    if method is MethodId.FEW_SHOT:
        mapping["examples"] = format_exemplars(exemplars or [])
    return _rendered(template, record, mapping, model_id)


def definitions_block(text: str) -> str:
    """The label block between the definitions markers (empty when absent)."""
    lines = text.splitlines()
    try:
        start = lines.index(DEFINITIONS_START)
        end = lines.index(DEFINITIONS_END, start + 1)
    except ValueError:
        return ""
    return "\n".join(lines[start + 1 : end])


def expected_labels(method: MethodId, role: RoleId | None) -> list[str]:
    """Display names a prompt's definitions block must name exactly once."""
    types = [t.display for t in PolicyType]
    strategies = [s.display for s in LegalStrategy]
    food = [c.display for c in FoodCategory]
    if method is not MethodId.ROLE_BASED:
        return types + strategies + food
    return {
        RoleId.POLICY_ANALYST: types,
        RoleId.LEGAL_STRATEGIST: strategies,
        RoleId.FOOD_EXPERT: food,
    }[role]


def label_occurrences(text: str, label: str) -> int:
    """Whole-word occurrences of a canonical label (case-sensitive)."""
    pattern = r"(?<![A-Za-z])" + re.escape(label) + r"(?![A-Za-z])"
    return len(re.findall(pattern, text))


def closure_errors(prompt: RenderedPrompt) -> list[str]:
    """Labels whose definitions-block count differs from exactly one."""
    block = definitions_block(prompt.text)
    problems = []
    for label in expected_labels(prompt.method, prompt.role):
        count = label_occurrences(block, label)
        if count != 1:
            problems.append(f"{label!r} appears {count} times")
    return problems
