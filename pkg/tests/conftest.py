import json

import pytest

from cap2qa.eval_hallucination import Lexicon


def write_caption_file(path, entries, images=None):
    """entries: iterable of (caption_id, image_id, text)."""
    if images is None:
        images = sorted({image_id for _, image_id, _ in entries})
    payload = {
        "images": [{"id": i} for i in images],
        "annotations": [
            {"id": cid, "image_id": iid, "caption": text} for cid, iid, text in entries
        ],
    }
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def write_instance_file(path, categories, annotations, images=None):
    """categories: id -> name; annotations: iterable of (image_id, category_id)."""
    if images is None:
        images = sorted({image_id for image_id, _ in annotations})
    payload = {
        "images": [{"id": i} for i in images],
        "categories": [{"id": cid, "name": name} for cid, name in categories.items()],
        "annotations": [
            {"image_id": iid, "category_id": cid} for iid, cid in annotations
        ],
    }
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def lexicon():
    return Lexicon(
        categories=("cat", "dog", "dining table", "person", "cake", "bird"),
        synonyms={
            "person": frozenset({"man", "woman", "people"}),
            "dining table": frozenset({"table"}),
            "cake": frozenset({"cupcake"}),
        },
    )
