"""Artifact filtering: reject generated QA pairs unfit for image-grounded QA.

A pair answering "What objects are in the image?" must read as if the model
saw the image; wording that leaks the text-only setup ("according to the
caption", "not specified") or assistant meta-talk gets dropped. Rules are
data, not code: regex patterns with a scope, loadable from YAML so operators
can extend the set without touching the package.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import yaml

from .errors import SchemaViolationError

if TYPE_CHECKING:
    from .generator import QAPair

SCOPES = ("question", "answer", "either")


@lru_cache(maxsize=256)
def _compile(pattern: str) -> re.Pattern:
    return re.compile(pattern, re.IGNORECASE)


@dataclass(frozen=True)
class FilterRule:
    rule_id: str
    scope: str
    pattern: str
    description: str = ""

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ValueError(f"rule {self.rule_id!r}: scope must be one of {SCOPES}")
        try:
            _compile(self.pattern)
        except re.error as exc:
            raise ValueError(f"rule {self.rule_id!r}: bad pattern ({exc})") from exc

    def matches(self, question: str, answer: str) -> bool:
        regex = _compile(self.pattern)
        if self.scope in ("question", "either") and regex.search(question):
            return True
        if self.scope in ("answer", "either") and regex.search(answer):
            return True
        return False


@dataclass
class FilterReport:
    kept: list["QAPair"]
    rejected: list[tuple["QAPair", str]]
    input_count: int = field(default=0)


def default_rules() -> list[FilterRule]:
    """The shipped rule set.

    Single-word patterns are word-boundary anchored ('captioning' does not
    trip the caption rule); phrase patterns are anchored at both ends.
    """
    return [
        FilterRule(
            rule_id="mentions-caption",
            scope="either",
            pattern=r"\bcaption\b",
            description="refers to the caption instead of the image",
        ),
        FilterRule(
            rule_id="not-specified-excuse",
            scope="either",
            pattern=r"\bnot specified\b|\baccording to the caption\b|\bin the caption\b",
            description="hedges about what the source text specifies",
        ),
        FilterRule(
            rule_id="empty-field",
            scope="either",
            pattern=r"\A\s*\Z",
            description="blank question or answer",
        ),
        FilterRule(
            rule_id="meta-refusal",
            scope="answer",
            pattern=r"\A\s*(?:as an ai\b|i cannot\b)",
            description="assistant meta-talk instead of an answer",
        ),
    ]


def _check_unique_ids(rules: Sequence[FilterRule]) -> None:
    seen: set[str] = set()
    for rule in rules:
        if rule.rule_id in seen:
            raise ValueError(f"duplicate rule_id {rule.rule_id!r}")
        seen.add(rule.rule_id)


def filter_artifacts(pairs: Iterable["QAPair"], rules: Sequence[FilterRule]) -> FilterReport:
    """Partition pairs into kept and rejected, preserving input order.

    A pair is rejected iff at least one rule matches its scoped fields; the
    first matching rule (in rule order) is recorded against it.
    """
    if not rules:
        raise ValueError("rules must be non-empty")
    _check_unique_ids(rules)
    kept: list[QAPair] = []
    rejected: list[tuple[QAPair, str]] = []
    count = 0
    for pair in pairs:
        count += 1
        hit = next((r.rule_id for r in rules if r.matches(pair.question, pair.answer)), None)
        if hit is None:
            kept.append(pair)
        else:
            rejected.append((pair, hit))
    return FilterReport(kept=kept, rejected=rejected, input_count=count)


def load_rules(path: str | Path) -> list[FilterRule]:
    """Read a YAML rule file: a top-level ``rules`` list of rule mappings."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or not isinstance(doc.get("rules"), list):
        raise SchemaViolationError(f"{path}: expected a top-level 'rules' list")
    rules: list[FilterRule] = []
    for i, entry in enumerate(doc["rules"]):
        try:
            rules.append(
                FilterRule(
                    rule_id=str(entry["rule_id"]),
                    scope=str(entry["scope"]),
                    pattern=str(entry["pattern"]),
                    description=str(entry.get("description", "")),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolationError(f"{path}: rule {i}: {exc}") from exc
    try:
        _check_unique_ids(rules)
    except ValueError as exc:
        raise SchemaViolationError(f"{path}: {exc}") from exc
    return rules


def save_rules(rules: Sequence[FilterRule], path: str | Path) -> None:
    doc = {
        "rules": [
            {
                "rule_id": r.rule_id,
                "scope": r.scope,
                "pattern": r.pattern,
                "description": r.description,
            }
            for r in rules
        ]
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, allow_unicode=True, sort_keys=False)
