"""Open-ended QA scoring with partial credit.

Each item carries up to several reference answers. A reference "matches"
either by containment in the prediction (after light normalization) or by
exact equality (after additionally dropping articles). The item score is
min(1, matches / 3) kept as an exact rational; the strict variant counts
exact equality only. Raw mode disables all normalization.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from fractions import Fraction

from .errors import DuplicateQuestionIdError

MATCH_CAP = 3
_ARTICLES = frozenset({"a", "an", "the"})
_WS = re.compile(r"\s+")


def normalize(text: str, *, drop_articles: bool = False) -> str:
    """Lowercase, strip token-edge punctuation, collapse whitespace."""
    tokens = []
    for token in _WS.split(text.lower().strip()):
        token = token.strip(string.punctuation)
        if not token:
            continue
        if drop_articles and token in _ARTICLES:
            continue
        tokens.append(token)
    return " ".join(tokens)


def _matches(prediction: str, reference: str, *, strict: bool, raw: bool) -> bool:
    if raw:
        return prediction == reference if strict else reference in prediction
    exact_pred = normalize(prediction, drop_articles=True)
    exact_ref = normalize(reference, drop_articles=True)
    if strict:
        return exact_pred == exact_ref
    loose_pred = normalize(prediction)
    loose_ref = normalize(reference)
    # Either containment after normalization or the strict form; the
    # latter keeps partial credit a superset of strict credit.
    return loose_ref in loose_pred or exact_ref == exact_pred


def pacc_score(prediction: str, references: list[str] | tuple[str, ...], *, raw: bool = False) -> Fraction:
    matched = sum(1 for ref in references if _matches(prediction, ref, strict=False, raw=raw))
    return Fraction(min(MATCH_CAP, matched), MATCH_CAP)


def acc_score(prediction: str, references: list[str] | tuple[str, ...], *, raw: bool = False) -> Fraction:
    matched = sum(1 for ref in references if _matches(prediction, ref, strict=True, raw=raw))
    return Fraction(min(MATCH_CAP, matched), MATCH_CAP)


@dataclass(frozen=True)
class VqaItem:
    question_id: str
    prediction: str
    references: tuple[str, ...]

    def __post_init__(self):
        if not self.references:
            raise ValueError(f"item {self.question_id}: references must be non-empty")


@dataclass(frozen=True)
class VqaItemScore:
    question_id: str
    score: Fraction


@dataclass(frozen=True)
class VqaResult:
    mean_score: Fraction
    per_item: tuple[VqaItemScore, ...]


def evaluate(items: list[VqaItem], *, strict: bool = False, raw: bool = False) -> VqaResult:
    """Score a batch; mean over items as an exact rational.

    ``strict=False`` gives partial credit by containment, ``strict=True``
    is exact-equality accuracy. An empty batch scores 0.
    """
    seen = set()
    scores: list[VqaItemScore] = []
    for item in items:
        if item.question_id in seen:
            raise DuplicateQuestionIdError(item.question_id)
        seen.add(item.question_id)
        fn = acc_score if strict else pacc_score
        scores.append(VqaItemScore(item.question_id, fn(item.prediction, item.references, raw=raw)))
    mean = sum((s.score for s in scores), Fraction(0)) / len(scores) if scores else Fraction(0)
    return VqaResult(mean_score=mean, per_item=tuple(scores))
