"""COCO-style annotation ingestion and the instruction-record dataset.

Input side: official COCO caption and instance JSON files. Output side: the
instruction dataset as JSONL, one record per line with a fixed key order
(``image_id``, ``question``, ``answer``, ``source_caption_ids``,
``provenance``) so files diff and hash cleanly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

from .errors import (
    IoFailureError,
    MalformedJsonError,
    MalformedLineError,
    MissingFileError,
    SchemaViolationError,
    UnknownCategoryIdError,
)

if TYPE_CHECKING:
    from .eval_hallucination import Lexicon

SPLITS = ("train", "val")


@dataclass(frozen=True)
class CaptionRecord:
    """One human-written caption of one image."""

    caption_id: int
    image_id: int
    text: str
    split: str = "train"


@dataclass(frozen=True)
class ObjectAnnotation:
    """Positive and negative object categories of one image.

    Negatives are the complement of the positives within the closed
    vocabulary; instance files never list them explicitly.
    """

    image_id: int
    positive_categories: frozenset[str]
    negative_categories: frozenset[str]


@dataclass(frozen=True)
class Provenance:
    model_id: str
    prompt_version: str
    attempt: int
    created_at: datetime


@dataclass(frozen=True)
class InstructionRecord:
    """A generated question-answer pair tied back to its source captions."""

    image_id: int
    question: str
    answer: str
    source_caption_ids: tuple[int, ...]
    provenance: Provenance


@dataclass(frozen=True)
class DatasetStats:
    n_records: int
    n_distinct_images: int
    avg_answer_words: float
    avg_question_words: float


def _load_json(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"no such file: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedJsonError(path, exc.pos, exc.msg) from exc
    return data


def load_coco_captions(path: str | Path, split: str = "train") -> list[CaptionRecord]:
    """Read a COCO caption-annotation JSON into caption records.

    One record per entry of the top-level ``annotations`` array, in file
    order; the returned count always equals the array length.
    """
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    data = _load_json(path)
    annotations = data.get("annotations")
    if not isinstance(annotations, list):
        raise SchemaViolationError(f"{path}: missing top-level 'annotations' array")

    records: list[CaptionRecord] = []
    seen_ids: set[int] = set()
    for i, entry in enumerate(annotations):
        if not isinstance(entry, dict):
            raise SchemaViolationError(f"{path}: annotation {i} is not an object")
        for field in ("id", "image_id", "caption"):
            if field not in entry:
                raise SchemaViolationError(f"{path}: annotation {i} missing field {field!r}")
        text = entry["caption"]
        if not isinstance(text, str) or not text.strip():
            raise SchemaViolationError(f"{path}: annotation {i} has an empty caption")
        caption_id = int(entry["id"])
        if caption_id in seen_ids:
            raise SchemaViolationError(f"{path}: annotation {i} reuses caption id {caption_id}")
        seen_ids.add(caption_id)
        records.append(
            CaptionRecord(
                caption_id=caption_id,
                image_id=int(entry["image_id"]),
                text=text,
                split=split,
            )
        )
    return records


def load_object_annotations(
    instances_path: str | Path, vocabulary: "Lexicon | Iterable[str]"
) -> list[ObjectAnnotation]:
    """Read a COCO instance-annotation JSON into per-image category sets.

    Positives are the categories with at least one instance annotation,
    restricted to the given vocabulary; negatives are the rest of the
    vocabulary. Images listed in the file but without annotations get empty
    positives.
    """
    names = getattr(vocabulary, "categories", vocabulary)
    vocab = list(dict.fromkeys(names))
    vocab_set = set(vocab)

    data = _load_json(instances_path)
    categories = data.get("categories")
    annotations = data.get("annotations")
    if not isinstance(categories, list) or not isinstance(annotations, list):
        raise SchemaViolationError(
            f"{instances_path}: expected top-level 'categories' and 'annotations' arrays"
        )

    id_to_name: dict[int, str] = {}
    for i, cat in enumerate(categories):
        if "id" not in cat or "name" not in cat:
            raise SchemaViolationError(f"{instances_path}: category {i} missing 'id' or 'name'")
        id_to_name[int(cat["id"])] = str(cat["name"])

    image_order: list[int] = []
    seen_images: set[int] = set()
    for img in data.get("images", []):
        image_id = int(img["id"]) if "id" in img else None
        if image_id is None:
            raise SchemaViolationError(f"{instances_path}: image entry missing 'id'")
        if image_id not in seen_images:
            seen_images.add(image_id)
            image_order.append(image_id)

    positives: dict[int, set[str]] = {image_id: set() for image_id in image_order}
    for i, ann in enumerate(annotations):
        if "image_id" not in ann or "category_id" not in ann:
            raise SchemaViolationError(
                f"{instances_path}: annotation {i} missing 'image_id' or 'category_id'"
            )
        category_id = int(ann["category_id"])
        if category_id not in id_to_name:
            raise UnknownCategoryIdError(
                f"{instances_path}: annotation {i} has unknown category_id {category_id}"
            )
        image_id = int(ann["image_id"])
        if image_id not in seen_images:
            seen_images.add(image_id)
            image_order.append(image_id)
            positives[image_id] = set()
        name = id_to_name[category_id]
        if name in vocab_set:
            positives[image_id].add(name)

    return [
        ObjectAnnotation(
            image_id=image_id,
            positive_categories=frozenset(positives[image_id]),
            negative_categories=frozenset(vocab_set - positives[image_id]),
        )
        for image_id in image_order
    ]


def _record_to_dict(record: InstructionRecord) -> dict:
    # Key order here defines the on-disk schema; do not reorder.
    return {
        "image_id": record.image_id,
        "question": record.question,
        "answer": record.answer,
        "source_caption_ids": list(record.source_caption_ids),
        "provenance": {
            "model_id": record.provenance.model_id,
            "prompt_version": record.provenance.prompt_version,
            "attempt": record.provenance.attempt,
            "created_at": record.provenance.created_at.isoformat(),
        },
    }


def record_to_line(record: InstructionRecord) -> str:
    return json.dumps(_record_to_dict(record), ensure_ascii=False)


def _record_from_dict(obj: dict, where: str) -> InstructionRecord:
    try:
        prov = obj["provenance"]
        created_at = datetime.fromisoformat(prov["created_at"])
        if created_at.tzinfo is None:
            created_at = created_at.replace(tzinfo=timezone.utc)
        record = InstructionRecord(
            image_id=int(obj["image_id"]),
            question=str(obj["question"]),
            answer=str(obj["answer"]),
            source_caption_ids=tuple(int(c) for c in obj["source_caption_ids"]),
            provenance=Provenance(
                model_id=str(prov["model_id"]),
                prompt_version=str(prov["prompt_version"]),
                attempt=int(prov["attempt"]),
                created_at=created_at,
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolationError(f"{where}: bad instruction record ({exc})") from exc
    if not record.question.strip() or not record.answer.strip():
        raise SchemaViolationError(f"{where}: question and answer must be non-empty")
    return record


def write_instructions(path: str | Path, records: Iterable[InstructionRecord]) -> int:
    """Write records as JSONL; returns the number of lines written."""
    path = Path(path)
    count = 0
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(record_to_line(record) + "\n")
                count += 1
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc
    return count


def read_instructions(path: str | Path) -> list[InstructionRecord]:
    """Inverse of :func:`write_instructions`."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"no such file: {path}")
    records: list[InstructionRecord] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLineError(path, line_no, exc.msg) from exc
            if not isinstance(obj, dict):
                raise MalformedLineError(path, line_no, "record is not a JSON object")
            records.append(_record_from_dict(obj, f"{path}:{line_no}"))
    return records


def dataset_stats(records: Iterable[InstructionRecord]) -> DatasetStats:
    """Counts and whitespace-token word averages; zeros for empty input."""
    records = list(records)
    if not records:
        return DatasetStats(0, 0, 0.0, 0.0)
    n = len(records)
    images = {r.image_id for r in records}
    answer_words = sum(len(r.answer.split()) for r in records)
    question_words = sum(len(r.question.split()) for r in records)
    return DatasetStats(
        n_records=n,
        n_distinct_images=len(images),
        avg_answer_words=answer_words / n,
        avg_question_words=question_words / n,
    )


_IMAGE_KEYS = ("image_id", "image", "img_id")


def scan_jsonl_stats(path: str | Path) -> DatasetStats:
    """Tolerant stats over arbitrary QA-style JSONL.

    Accepts records from other toolchains: any of the keys ``image_id``,
    ``image`` or ``img_id`` identifies the image; ``question``/``answer``
    fields feed the word averages when present (otherwise they count as
    empty). Useful to sanity-check externally published datasets.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"no such file: {path}")
    n = 0
    images: set = set()
    answer_words = 0
    question_words = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLineError(path, line_no, exc.msg) from exc
            if not isinstance(obj, dict):
                raise MalformedLineError(path, line_no, "record is not a JSON object")
            n += 1
            for key in _IMAGE_KEYS:
                if key in obj:
                    images.add(obj[key])
                    break
            question = obj.get("question", "")
            answer = obj.get("answer", "")
            if isinstance(question, str):
                question_words += len(question.split())
            if isinstance(answer, str):
                answer_words += len(answer.split())
    if n == 0:
        return DatasetStats(0, 0, 0.0, 0.0)
    return DatasetStats(n, len(images), answer_words / n, question_words / n)
