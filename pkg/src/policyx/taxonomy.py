"""Closed label vocabularies and canonicalization of free-text model output.

Every vocabulary here is closed: canonicalizers map arbitrary text into the
vocabulary or return the UNRECOGNIZED marker, never a guess. Out-of-set values
are what the evaluation layer counts as hallucinations.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigError


class Marker:
    """Singleton marker distinct from every domain value (repr-only)."""

    __slots__ = ("_name",)

    def __init__(self, name: str):
        self._name = name

    def __repr__(self) -> str:
        return self._name


#: Returned by canonicalizers for out-of-vocabulary input.
UNRECOGNIZED = Marker("UNRECOGNIZED")


class PolicyType(Enum):
    """The four policy types, distinguished by legal mechanism."""

    ADMINISTRATIVE_RULE = "Administrative Rule"
    LAW = "Law"
    EXECUTIVE_ORDER = "Executive Order"
    OTHER = "Other"

    @property
    def display(self) -> str:
        return self.value


POLICY_TYPE_DEFINITIONS: dict[PolicyType, str] = {
    PolicyType.ADMINISTRATIVE_RULE: "regulations or directives issued by government agencies",
    PolicyType.LAW: "legislation passed by legislatures",
    PolicyType.EXECUTIVE_ORDER: "directives issued by executives under existing authority",
    PolicyType.OTHER: "policies not clearly fitting the previous categories",
}


class LegalStrategy(Enum):
    """The seven legal strategies a policy may employ (at most two apply)."""

    S1 = "Creates a fund or enables access to funding streams"
    S2 = "Creates an exemption"
    S3 = "Creates an incentive for change"
    S4 = "Expressly allows something"
    S5 = "Prohibits or discourages something"
    S6 = "Provides education, promotes awareness, or provides information"
    S7 = "Requires something or sets standards"

    @property
    def code(self) -> str:
        return self.name

    @property
    def display(self) -> str:
        return self.value

    @property
    def index(self) -> int:
        return int(self.name[1])


#: Largest legal strategy set: a policy carries at most two strategies.
MAX_STRATEGIES = 2


class StrategyGroup(Enum):
    GROUP_A = "A"  # Funding/Access
    GROUP_B = "B"  # Incentives/Permissions
    UNGROUPED = "U"


# Group membership forced by the grouping's own examples; config may only
# assign the remaining strategies.
_FIXED_GROUPS: dict[LegalStrategy, StrategyGroup] = {
    LegalStrategy.S1: StrategyGroup.GROUP_A,
    LegalStrategy.S3: StrategyGroup.GROUP_B,
    LegalStrategy.S4: StrategyGroup.GROUP_B,
}


class FoodCategory(Enum):
    """Six binary food-system stages, in the canonical serialization order."""

    GROW = "grow"
    PROCESS = "process"
    DISTRIBUTE = "distribute"
    GET = "get"
    MAKE = "make"
    SURPLUS = "surplus"

    @property
    def key(self) -> str:
        return self.value

    @property
    def display(self) -> str:
        return self.value.capitalize()

    @property
    def definition(self) -> str:
        return FOOD_DEFINITIONS[self]


#: Canonical ordering used everywhere food flags are serialized.
CATEGORY_ORDER: tuple[FoodCategory, ...] = tuple(FoodCategory)

FOOD_DEFINITIONS: dict[FoodCategory, str] = {
    FoodCategory.GROW: "food production and resource access",
    FoodCategory.PROCESS: "transforming fresh foods for sale",
    FoodCategory.DISTRIBUTE: "transportation and marketing",
    FoodCategory.GET: "facilities and systems affecting food access",
    FoodCategory.MAKE: "non-commercial food preparation",
    FoodCategory.SURPLUS: "food recovery and waste management",
}

#: Validity window for effective years; values outside are implausible.
YEAR_MIN = 1800
YEAR_MAX = 2100


_US_STATES: tuple[str, ...] = (
    "Alabama", "Alaska", "Arizona", "Arkansas", "California", "Colorado",
    "Connecticut", "Delaware", "Florida", "Georgia", "Hawaii", "Idaho",
    "Illinois", "Indiana", "Iowa", "Kansas", "Kentucky", "Louisiana", "Maine",
    "Maryland", "Massachusetts", "Michigan", "Minnesota", "Mississippi",
    "Missouri", "Montana", "Nebraska", "Nevada", "New Hampshire", "New Jersey",
    "New Mexico", "New York", "North Carolina", "North Dakota", "Ohio",
    "Oklahoma", "Oregon", "Pennsylvania", "Rhode Island", "South Carolina",
    "South Dakota", "Tennessee", "Texas", "Utah", "Vermont", "Virginia",
    "Washington", "West Virginia", "Wisconsin", "Wyoming",
    "District of Columbia",
)

_USPS_CODES: dict[str, str] = {
    "AL": "Alabama", "AK": "Alaska", "AZ": "Arizona", "AR": "Arkansas",
    "CA": "California", "CO": "Colorado", "CT": "Connecticut",
    "DE": "Delaware", "FL": "Florida", "GA": "Georgia", "HI": "Hawaii",
    "ID": "Idaho", "IL": "Illinois", "IN": "Indiana", "IA": "Iowa",
    "KS": "Kansas", "KY": "Kentucky", "LA": "Louisiana", "ME": "Maine",
    "MD": "Maryland", "MA": "Massachusetts", "MI": "Michigan",
    "MN": "Minnesota", "MS": "Mississippi", "MO": "Missouri", "MT": "Montana",
    "NE": "Nebraska", "NV": "Nevada", "NH": "New Hampshire",
    "NJ": "New Jersey", "NM": "New Mexico", "NY": "New York",
    "NC": "North Carolina", "ND": "North Dakota", "OH": "Ohio",
    "OK": "Oklahoma", "OR": "Oregon", "PA": "Pennsylvania",
    "RI": "Rhode Island", "SC": "South Carolina", "SD": "South Dakota",
    "TN": "Tennessee", "TX": "Texas", "UT": "Utah", "VT": "Vermont",
    "VA": "Virginia", "WA": "Washington", "WV": "West Virginia",
    "WI": "Wisconsin", "WY": "Wyoming", "DC": "District of Columbia",
}

# Traditional citation-style abbreviations as they appear in legal titles
# ("N.Y.", "Wash."). Normalization strips the periods.
_CITATION_ABBREVS: dict[str, str] = {
    "Ala.": "Alabama", "Ariz.": "Arizona", "Ark.": "Arkansas",
    "Calif.": "California", "Colo.": "Colorado", "Conn.": "Connecticut",
    "Del.": "Delaware", "Fla.": "Florida", "Ga.": "Georgia",
    "Ill.": "Illinois", "Ind.": "Indiana", "Kan.": "Kansas",
    "Ky.": "Kentucky", "La.": "Louisiana", "Md.": "Maryland",
    "Mass.": "Massachusetts", "Mich.": "Michigan", "Minn.": "Minnesota",
    "Miss.": "Mississippi", "Mo.": "Missouri", "Mont.": "Montana",
    "Neb.": "Nebraska", "Nev.": "Nevada", "N.H.": "New Hampshire",
    "N.J.": "New Jersey", "N.M.": "New Mexico", "N.Y.": "New York",
    "N.C.": "North Carolina", "N.D.": "North Dakota", "Okla.": "Oklahoma",
    "Ore.": "Oregon", "Pa.": "Pennsylvania", "R.I.": "Rhode Island",
    "S.C.": "South Carolina", "S.D.": "South Dakota", "Tenn.": "Tennessee",
    "Vt.": "Vermont", "Va.": "Virginia", "Wash.": "Washington",
    "W.Va.": "West Virginia", "Wis.": "Wisconsin", "Wyo.": "Wyoming",
    "D.C.": "District of Columbia",
}


def _squash(text: str) -> str:
    """Lowercase and drop everything that is not a letter or digit."""
    return re.sub(r"[^a-z0-9]+", "", text.lower())


def _tokens(text: str) -> tuple[str, ...]:
    """Lowercased word tokens with punctuation stripped."""
    return tuple(re.findall(r"[a-z0-9]+", text.lower()))


def _norm_state(text: str) -> str:
    """Lowercase, strip periods/commas, collapse whitespace."""
    cleaned = re.sub(r"[.,]", "", text.lower())
    return " ".join(cleaned.split())


_POLICY_TYPE_LOOKUP: dict[str, PolicyType] = {}
for _pt in PolicyType:
    _POLICY_TYPE_LOOKUP[_squash(_pt.display)] = _pt
# Documented aliases: plural forms only. "Ordinance" is deliberately absent.
for _alias, _pt in {
    "Administrative Rules": PolicyType.ADMINISTRATIVE_RULE,
    "Laws": PolicyType.LAW,
    "Executive Orders": PolicyType.EXECUTIVE_ORDER,
}.items():
    _POLICY_TYPE_LOOKUP[_squash(_alias)] = _pt

_STRATEGY_BY_TOKENS: dict[tuple[str, ...], LegalStrategy] = {
    _tokens(s.display): s for s in LegalStrategy
}
_STRATEGY_BY_INDEX: dict[int, LegalStrategy] = {s.index: s for s in LegalStrategy}

_INDEX_ONLY_RE = re.compile(r"^\(?([1-7])\)?\.?$")
_LEADING_INDEX_RE = re.compile(r"^\(?([1-7])\)?[.:]?\s+")


def canonicalize_policy_type(raw: str) -> PolicyType | Marker:
    """Map free text onto one of the four policy types, or UNRECOGNIZED."""
    if not raw:
        return UNRECOGNIZED
    return _POLICY_TYPE_LOOKUP.get(_squash(raw), UNRECOGNIZED)


def canonicalize_strategy(raw: str) -> LegalStrategy | Marker:
    """Map free text onto one of the seven legal strategies, or UNRECOGNIZED.

    Accepts the canonical display string, a bare index form such as "(3)" or
    "3", or any punctuation/case variant whose word tokens match a canonical
    string (optionally prefixed by its index).
    """
    if not raw:
        return UNRECOGNIZED
    stripped = raw.strip()
    index_only = _INDEX_ONLY_RE.match(stripped)
    if index_only:
        return _STRATEGY_BY_INDEX[int(index_only.group(1))]
    by_tokens = _STRATEGY_BY_TOKENS.get(_tokens(stripped))
    if by_tokens is not None:
        return by_tokens
    # "(2) Creates an exemption": drop the leading index and rematch.
    without_index = _LEADING_INDEX_RE.sub("", stripped)
    if without_index != stripped:
        return _STRATEGY_BY_TOKENS.get(_tokens(without_index), UNRECOGNIZED)
    return UNRECOGNIZED


def _build_state_lookup(
    roster: Iterable[str], aliases: Mapping[str, str]
) -> dict[str, str]:
    lookup: dict[str, str] = {}

    def add(key: str, canonical: str) -> None:
        norm = _norm_state(key)
        if not norm:
            raise ConfigError(f"state alias {key!r} normalizes to nothing")
        existing = lookup.get(norm)
        if existing is not None and existing != canonical:
            raise ConfigError(
                f"state alias {key!r} is ambiguous: {existing!r} vs {canonical!r}"
            )
        lookup[norm] = canonical

    for name in roster:
        add(name, name)
    for alias, canonical in aliases.items():
        add(alias, canonical)
    return lookup


@dataclass(frozen=True)
class Taxonomy:
    """Immutable bundle of the configurable vocabularies.

    The state roster and alias table, and the strategy grouping, can be
    extended through a JSON config file; everything else is fixed.
    """

    state_roster: tuple[str, ...]
    state_lookup: Mapping[str, str]
    groups: Mapping[LegalStrategy, StrategyGroup]

    @classmethod
    def default(cls) -> "Taxonomy":
        aliases: dict[str, str] = {}
        aliases.update(_USPS_CODES)
        aliases.update(_CITATION_ABBREVS)
        groups = {s: _FIXED_GROUPS.get(s, StrategyGroup.UNGROUPED) for s in LegalStrategy}
        return cls(
            state_roster=_US_STATES,
            state_lookup=_build_state_lookup(_US_STATES, aliases),
            groups=groups,
        )

    @classmethod
    def from_config(cls, config: Mapping[str, object]) -> "Taxonomy":
        """Build from a parsed extension config (see `from_file`)."""
        unknown = set(config) - {"extra_states", "state_aliases", "strategy_groups"}
        if unknown:
            raise ConfigError(f"unknown taxonomy config keys: {sorted(unknown)}")

        extra = config.get("extra_states", [])
        if not isinstance(extra, list) or not all(isinstance(s, str) and s for s in extra):
            raise ConfigError("extra_states must be a list of non-empty strings")
        roster = _US_STATES + tuple(s for s in extra if s not in _US_STATES)

        aliases: dict[str, str] = {}
        aliases.update(_USPS_CODES)
        aliases.update(_CITATION_ABBREVS)
        user_aliases = config.get("state_aliases", {})
        if not isinstance(user_aliases, dict):
            raise ConfigError("state_aliases must be an object")
        for alias, canonical in user_aliases.items():
            if canonical not in roster:
                raise ConfigError(f"alias {alias!r} targets unknown state {canonical!r}")
            aliases[alias] = canonical

        groups = {s: _FIXED_GROUPS.get(s, StrategyGroup.UNGROUPED) for s in LegalStrategy}
        user_groups = config.get("strategy_groups", {})
        if not isinstance(user_groups, dict):
            raise ConfigError("strategy_groups must be an object")
        for code, letter in user_groups.items():
            try:
                strategy = LegalStrategy[code]
            except KeyError:
                raise ConfigError(f"unknown strategy code {code!r}") from None
            try:
                group = StrategyGroup(letter)
            except ValueError:
                raise ConfigError(f"strategy group must be A, B, or U, got {letter!r}") from None
            fixed = _FIXED_GROUPS.get(strategy)
            if fixed is not None and group is not fixed:
                raise ConfigError(
                    f"{code} is fixed to group {fixed.value} and cannot be reassigned"
                )
            groups[strategy] = group

        return cls(
            state_roster=roster,
            state_lookup=_build_state_lookup(roster, aliases),
            groups=groups,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "Taxonomy":
        """Load a taxonomy extension file (JSON object)."""
        try:
            config = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read taxonomy config {path}: {exc}") from exc
        if not isinstance(config, dict):
            raise ConfigError("taxonomy config must be a JSON object")
        return cls.from_config(config)

    def canonicalize_state(self, raw: str) -> str | Marker:
        """Map free text onto a canonical state name, or UNRECOGNIZED."""
        if not raw:
            return UNRECOGNIZED
        return self.state_lookup.get(_norm_state(raw), UNRECOGNIZED)

    def group_of(self, strategy: LegalStrategy) -> StrategyGroup:
        return self.groups[strategy]

    def group_members(self, group: StrategyGroup) -> frozenset[LegalStrategy]:
        return frozenset(s for s, g in self.groups.items() if g is group)


_DEFAULT = Taxonomy.default()


def default_taxonomy() -> Taxonomy:
    return _DEFAULT


def canonicalize_state(raw: str, taxonomy: Taxonomy | None = None) -> str | Marker:
    """Canonicalize against the default roster (50 states + DC) unless given."""
    return (taxonomy or _DEFAULT).canonicalize_state(raw)


def parse_effective_year(raw: object) -> int | None:
    """Parse a plausible 4-digit effective year from an int or digit string.

    A range such as "2017-2018" yields its first year. Returns None when the
    value cannot be read as a year inside the validity window.
    """
    if isinstance(raw, bool):
        return None
    if isinstance(raw, int):
        year = raw
    elif isinstance(raw, str):
        text = raw.strip()
        m = re.fullmatch(r"(\d{4})(?:\s*[-/–]\s*\d{4})?", text)
        if not m:
            return None
        year = int(m.group(1))
    else:
        return None
    if YEAR_MIN <= year <= YEAR_MAX:
        return year
    return None
