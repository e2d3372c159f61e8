"""Type-aware post-processing of slot predictions.

A deterministic entity tagger (gazetteer phrases, regex rules, and a
pronoun/kinship fallback) assigns each predicted chunk an entity type. A
positive prediction whose tag conflicts with its subtask's expected types is
nullified: decision drops to 0, the slot value becomes "Not Specified", and
the record is marked filtered. Negative decisions and exempt subtasks pass
through untouched, so the filter can only remove false (or true) positives,
never invent them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .multitask import PredictionRecord
from .preprocess import _PUNCT_TABLE


class NerFilterError(ValueError):
    """Bad gazetteer, rules, or type-map input."""


class EntityType(Enum):
    PERSON = "person"
    LOCATION = "location"
    ORGANIZATION = "organization"
    DATE = "date"
    DURATION = "duration"
    AGE = "age"
    OTHER = "other"


# Tie-break order for equal-length matches; OTHER is only a fallback.
_TYPE_ORDER = {
    EntityType.PERSON: 0,
    EntityType.LOCATION: 1,
    EntityType.ORGANIZATION: 2,
    EntityType.DATE: 3,
    EntityType.DURATION: 4,
    EntityType.AGE: 5,
    EntityType.OTHER: 6,
}

_PHRASE_FILES = {
    EntityType.PERSON: "person.txt",
    EntityType.LOCATION: "location.txt",
    EntityType.ORGANIZATION: "organization.txt",
    EntityType.DATE: "date.txt",
    EntityType.DURATION: "duration.txt",
    EntityType.AGE: "age.txt",
}
_REQUIRED_FILES = ("person.txt", "location.txt", "organization.txt", "rules.txt")

# Head-noun fallback: chunks containing these read as people.
_PERSON_CUES = frozenset(
    """
    i me my mine myself we us our ours he him his himself she her hers herself
    they them their theirs themselves who whom someone somebody anyone everybody
    mom mum mother dad father parent parents grandma grandmother grandpa
    grandfather granny husband wife spouse partner son daughter kid kids child
    children baby brother sister sibling uncle aunt auntie cousin nephew niece
    friend friends buddy neighbor neighbour neighbors neighbours roommate
    flatmate coworker colleague boss employee doctor nurse patient teacher
    student guy girl man woman lady gentleman folks people family relative
    relatives
    """.split()
)


@dataclass(frozen=True)
class Gazetteer:
    phrases: Mapping[EntityType, frozenset[str]]
    rules: tuple[tuple[EntityType, "re.Pattern[str]"], ...]

    def __post_init__(self):
        for etype, phrases in self.phrases.items():
            for p in phrases:
                if not p or p != p.strip() or p != p.lower():
                    raise NerFilterError(f"{etype.value} phrase {p!r} must be nonempty, trimmed, lowercase")


@dataclass(frozen=True)
class TypeMap:
    """Subtask name -> allowed entity types; absent names are exempt."""

    allowed: Mapping[str, frozenset[EntityType]]

    def __post_init__(self):
        for name, types in self.allowed.items():
            if not types:
                raise NerFilterError(f"type map entry {name!r} has an empty allowed set")


def _read_phrase_file(path: Path) -> frozenset[str]:
    phrases = set()
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        phrases.add(line.lower())
    return frozenset(phrases)


def _read_rules_file(path: Path) -> tuple[tuple[EntityType, "re.Pattern[str]"], ...]:
    rules = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2 or not parts[1].strip():
            raise NerFilterError(f"{path}:{lineno}: expected 'TYPE<TAB>pattern'")
        type_name, pattern = parts[0].strip(), parts[1].strip()
        try:
            etype = EntityType[type_name]
        except KeyError:
            raise NerFilterError(f"{path}:{lineno}: unknown entity type {type_name!r}") from None
        try:
            compiled = re.compile(pattern, re.IGNORECASE)
        except re.error as exc:
            raise NerFilterError(f"{path}:{lineno}: invalid regex: {exc}") from None
        rules.append((etype, compiled))
    return tuple(rules)


def load_gazetteer(directory: str | Path) -> Gazetteer:
    """Load phrase files plus rules.txt from a gazetteer directory.

    person.txt, location.txt, organization.txt, and rules.txt must exist;
    date.txt, duration.txt, and age.txt are optional phrase lists (those
    types are usually covered by regex rules).
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise NerFilterError(f"gazetteer directory not found: {directory}")
    for name in _REQUIRED_FILES:
        if not (directory / name).is_file():
            raise NerFilterError(f"gazetteer file missing: {directory / name}")
    phrases = {}
    for etype, name in _PHRASE_FILES.items():
        path = directory / name
        phrases[etype] = _read_phrase_file(path) if path.is_file() else frozenset()
    rules = _read_rules_file(directory / "rules.txt")
    return Gazetteer(phrases=phrases, rules=rules)


def save_gazetteer(gaz: Gazetteer, directory: str | Path) -> None:
    """Write the canonical form: sorted phrases, rules sorted by (type, pattern)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for etype, name in _PHRASE_FILES.items():
        entries = sorted(gaz.phrases.get(etype, frozenset()))
        if entries or name.split(".")[0] in ("person", "location", "organization"):
            (directory / name).write_text("".join(e + "\n" for e in entries), encoding="utf-8")
    lines = sorted(
        f"{etype.name}\t{pattern.pattern}\n" for etype, pattern in gaz.rules
    )
    (directory / "rules.txt").write_text("".join(lines), encoding="utf-8")


def default_gazetteer() -> Gazetteer:
    with resources.as_file(resources.files("tweetslots").joinpath("data", "gazetteer")) as p:
        return load_gazetteer(p)


def load_type_map(path: str | Path) -> TypeMap:
    """Read subtask<TAB>TYPE[,TYPE...] lines; the literal type 'exempt' opts out."""
    allowed: dict[str, frozenset[EntityType]] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise NerFilterError(f"{path}:{lineno}: expected 'subtask<TAB>TYPE[,TYPE...]'")
        name, spec_part = parts[0].strip(), parts[1].strip()
        if spec_part.lower() == "exempt":
            continue
        types = set()
        for piece in spec_part.split(","):
            try:
                types.add(EntityType[piece.strip()])
            except KeyError:
                raise NerFilterError(f"{path}:{lineno}: unknown entity type {piece.strip()!r}") from None
        allowed[name] = frozenset(types)
    return TypeMap(allowed=allowed)


def default_type_map() -> TypeMap:
    with resources.as_file(resources.files("tweetslots").joinpath("data", "type_map.txt")) as p:
        return load_type_map(p)


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text.translate(_PUNCT_TABLE).lower()).strip()


def _cached_matchers(gaz: Gazetteer) -> list[tuple[EntityType, "re.Pattern[str]"]]:
    """Per-type anchored phrase matchers, compiled once per gazetteer."""
    cached = getattr(gaz, "_matchers", None)
    if cached is not None:
        return cached
    matchers = []
    for etype in _TYPE_ORDER:
        phrases = gaz.phrases.get(etype) if etype is not EntityType.OTHER else None
        if not phrases:
            continue
        # Longest alternative first, so an anchored match returns the longest
        # phrase starting at that position.
        alts = sorted(phrases, key=len, reverse=True)
        pattern = "(?:" + "|".join(re.escape(p) for p in alts) + r")\b"
        matchers.append((etype, re.compile(pattern)))
    object.__setattr__(gaz, "_matchers", matchers)
    return matchers


def tag(chunk_text: str, gaz: Gazetteer) -> EntityType:
    """Entity type of a candidate chunk.

    Longest-match priority: gazetteer phrases beat regex rules beat the
    person-cue fallback; within a stage the longest matched substring wins
    and exact-length ties go to the earlier type in PERSON < LOCATION <
    ORGANIZATION < DATE < DURATION < AGE order.
    """
    text = _normalize(chunk_text)
    if not text:
        return EntityType.OTHER

    starts = [m.start() for m in re.finditer(r"\b\w", text)]
    best: tuple[int, int] | None = None  # (-match_len, type_order)
    best_type = EntityType.OTHER
    for etype, matcher in _cached_matchers(gaz):
        for s in starts:
            m = matcher.match(text, s)
            if m is None:
                continue
            cand = (-(m.end() - m.start()), _TYPE_ORDER[etype])
            if best is None or cand < best:
                best = cand
                best_type = etype
    if best is not None:
        return best_type

    for etype, pattern in gaz.rules:
        for m in pattern.finditer(text):
            cand = (-(m.end() - m.start()), _TYPE_ORDER[etype])
            if m.end() > m.start() and (best is None or cand < best):
                best = cand
                best_type = etype
    if best is not None:
        return best_type

    tokens = set(re.findall(r"\w+", text))
    if tokens & _PERSON_CUES:
        return EntityType.PERSON
    return EntityType.OTHER


NOT_SPECIFIED = "Not Specified"


def filter_predictions(
    records: Sequence[PredictionRecord],
    type_map: TypeMap,
    gaz: Gazetteer,
) -> list[PredictionRecord]:
    """Nullify positive predictions whose chunk type conflicts with the slot.

    Only decision-1 records of mapped subtasks are examined; a type conflict
    sets decision 0, filtered True, and replaces the slot text with
    "Not Specified". Everything else passes through unchanged, so the filter
    is idempotent and can never increase the positive count.
    """
    out = []
    for rec in records:
        allowed = type_map.allowed.get(rec.subtask.name)
        if rec.decision == 1 and allowed is not None and tag(rec.chunk_text, gaz) not in allowed:
            out.append(replace(rec, decision=0, filtered=True, chunk_text=NOT_SPECIFIED))
        else:
            out.append(replace(rec))
    return out
