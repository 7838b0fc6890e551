"""Prompt assembly for caption-grounded QA generation.

A prompt has three parts: bottom rules (hard constraints that pin the
assistant to the given context), a task description, and conditions (further
restrictions on what may be generated). Rendering appends the caption under
a ``Caption:`` delimiter line. Prompt configs carry a content-derived version
tag so that any edit is visible in record provenance.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from .corpus import CaptionRecord
from .errors import EmptyCaptionError, SchemaViolationError

DEFAULT_BOTTOM_RULES = (
    "Any content should be included by the given context.",
    "Must answer to what asked. In other word, if not asked, nothing should be "
    "answered such as explanation neither any comment.",
)

DEFAULT_TASK_DESCRIPTION = (
    "Generate question-answer pairs from the following caption. "
    "Must avoid questioning and answering 'not specified in the caption'."
)

DEFAULT_CONDITIONS = (
    "The generated question-answer should be reasonable and question should not imply answer.",
    "Must avoid question-answer if answering the question is not valid due to no specification.",
    "Format each pair as 'Question: ...' and 'Answer: ...'.",
)


def _digest(bottom_rules: tuple[str, ...], task_description: str, conditions: tuple[str, ...]) -> str:
    payload = json.dumps(
        {"bottom_rules": list(bottom_rules), "task": task_description, "conditions": list(conditions)},
        ensure_ascii=False,
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class PromptConfig:
    bottom_rules: tuple[str, ...]
    task_description: str
    conditions: tuple[str, ...]
    version_tag: str

    @classmethod
    def from_parts(
        cls,
        bottom_rules,
        task_description: str,
        conditions,
        label: str = "custom",
    ) -> "PromptConfig":
        """Build a config whose version tag tracks the content hash."""
        bottom_rules = tuple(bottom_rules)
        conditions = tuple(conditions)
        if not bottom_rules or not task_description.strip() or not conditions:
            raise ValueError("prompt config needs non-empty bottom rules, task description and conditions")
        tag = f"{label}-{_digest(bottom_rules, task_description, conditions)[:12]}"
        return cls(bottom_rules, task_description, conditions, tag)


@dataclass(frozen=True)
class PromptBundle:
    config: PromptConfig
    caption_text: str
    rendered: str
    content_hash: str


def default_prompt_config() -> PromptConfig:
    """The shipped default rule set."""
    return PromptConfig.from_parts(
        DEFAULT_BOTTOM_RULES, DEFAULT_TASK_DESCRIPTION, DEFAULT_CONDITIONS, label="default"
    )


def render(config: PromptConfig, caption: CaptionRecord) -> PromptBundle:
    """Render the full prompt for one caption.

    Byte-deterministic for a given (config, caption): rules block, task
    block, conditions block, then the caption under a ``Caption:`` line.
    """
    if not caption.text.strip():
        raise EmptyCaptionError(f"caption {caption.caption_id} is empty")
    lines: list[str] = ["Rules:"]
    lines.extend(f"- {rule}" for rule in config.bottom_rules)
    lines.append("")
    lines.append("Task:")
    lines.append(config.task_description)
    lines.append("")
    lines.append("Conditions:")
    lines.extend(f"- {cond}" for cond in config.conditions)
    lines.append("")
    lines.append("Caption:")
    lines.append(caption.text)
    rendered = "\n".join(lines) + "\n"
    content_hash = hashlib.sha256(rendered.encode("utf-8")).hexdigest()
    return PromptBundle(config=config, caption_text=caption.text, rendered=rendered, content_hash=content_hash)


def save_prompt_config(config: PromptConfig, path: str | Path) -> None:
    """Write a config as YAML so operators can version prompts outside code."""
    label = config.version_tag.rsplit("-", 1)[0]
    doc = {
        "label": label,
        "bottom_rules": list(config.bottom_rules),
        "task_description": config.task_description,
        "conditions": list(config.conditions),
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, allow_unicode=True, sort_keys=False)


def load_prompt_config(path: str | Path) -> PromptConfig:
    """Read a YAML config; the version tag is recomputed from the content."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise SchemaViolationError(f"{path}: prompt config must be a mapping")
    try:
        bottom_rules = [str(r) for r in doc["bottom_rules"]]
        task_description = str(doc["task_description"])
        conditions = [str(c) for c in doc["conditions"]]
    except (KeyError, TypeError) as exc:
        raise SchemaViolationError(f"{path}: prompt config missing part ({exc})") from exc
    label = str(doc.get("label", path.stem))
    try:
        return PromptConfig.from_parts(bottom_rules, task_description, conditions, label=label)
    except ValueError as exc:
        raise SchemaViolationError(f"{path}: {exc}") from exc
