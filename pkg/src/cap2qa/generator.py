"""Caption-to-QA generation pipeline.

Per caption: render the prompt, ask the assistant, parse ``Question:`` /
``Answer:`` pairs out of the raw text, filter artifacts, and retry up to a
bounded number of attempts until at least one pair survives. Captions whose
attempts all come back empty are reported as exhausted rather than failing
the run.

The corpus driver fans captions out to a worker pool but writes output JSONL
strictly in caption input order through a bounded reorder window, and can
resume an interrupted run by skipping captions already present in the output.
"""

from __future__ import annotations

import logging
import re
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .clocks import Clock, SystemClock
from .corpus import (
    CaptionRecord,
    InstructionRecord,
    Provenance,
    read_instructions,
    record_to_line,
)
from .errors import Cap2qaError, IoFailureError
from .filters import FilterRule, default_rules, filter_artifacts
from .llm_client import AssistantClient, AssistantRequest, BackendSpec
from .promptkit import PromptConfig, default_prompt_config, render

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str


@dataclass
class GeneratorConfig:
    backend: BackendSpec
    prompt: PromptConfig = field(default_factory=default_prompt_config)
    rules: list[FilterRule] = field(default_factory=default_rules)
    retry: int = 3
    workers: int = 1
    cache_enabled: bool = False
    cache_dir: Path | None = None
    rate_limit_rpm: int | None = None
    model_id: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_output_tokens: int = 512
    keep_raw: bool = False

    def __post_init__(self):
        if self.retry < 1:
            raise ValueError("retry must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.cache_enabled and self.cache_dir is None:
            raise ValueError("cache_enabled requires cache_dir")


@dataclass
class GenerationOutcome:
    records: list[InstructionRecord]
    attempts_used: int
    raw_responses: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class RunSummary:
    n_captions: int
    n_covered_images: int
    n_records: int
    n_exhausted: int


_MARKER = re.compile(r"(?i)(?:\d+\s*[.)]\s*)?\b(question|answer)\s*:\s*")


def parse_qas(raw: str) -> list[QAPair]:
    """Extract question-answer pairs from raw assistant text.

    Scans for alternating ``Question:`` / ``Answer:`` markers
    (case-insensitive, optional ``1.`` style numbering) and pairs each
    question with the next answer. Text before the first marker is ignored,
    as is a trailing question with no answer. Unparseable text simply yields
    an empty list; the retry loop deals with it.
    """
    matches = list(_MARKER.finditer(raw))
    pairs: list[QAPair] = []
    pending_question: str | None = None
    for i, match in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(raw)
        content = raw[match.end() : end].strip().rstrip(",").strip()
        if match.group(1).lower() == "question":
            pending_question = content
        elif pending_question is not None:
            pairs.append(QAPair(question=pending_question, answer=content))
            pending_question = None
    return pairs


def make_client(config: GeneratorConfig, clock: Clock | None = None, **kwargs) -> AssistantClient:
    return AssistantClient(
        config.backend,
        cache_dir=config.cache_dir if config.cache_enabled else None,
        rate_limit_rpm=config.rate_limit_rpm,
        clock=clock,
        **kwargs,
    )


def generate_for_caption(
    caption: CaptionRecord,
    config: GeneratorConfig,
    *,
    client: AssistantClient | None = None,
    clock: Clock | None = None,
) -> GenerationOutcome:
    """Run the retry loop for one caption.

    Breaks on the first attempt whose filtered pair set is non-empty; each
    surviving pair becomes a record whose provenance carries the attempt
    index. After the last attempt the outcome may legitimately hold zero
    records (the caption is then uncovered). Backend failures propagate;
    content problems never raise.
    """
    clock = clock or SystemClock()
    client = client or make_client(config, clock)
    bundle = render(config.prompt, caption)
    request = AssistantRequest(
        prompt_text=bundle.rendered,
        model_id=config.model_id,
        temperature=config.temperature,
        max_output_tokens=config.max_output_tokens,
    )

    raw_responses: list[str] = []
    attempts_used = 0
    for attempt in range(1, config.retry + 1):
        attempts_used = attempt
        response = client.complete(request)
        if config.keep_raw:
            raw_responses.append(response.text)
        report = filter_artifacts(parse_qas(response.text), config.rules)
        if report.kept:
            records = [
                InstructionRecord(
                    image_id=caption.image_id,
                    question=pair.question,
                    answer=pair.answer,
                    source_caption_ids=(caption.caption_id,),
                    provenance=Provenance(
                        model_id=config.model_id,
                        prompt_version=config.prompt.version_tag,
                        attempt=attempt,
                        created_at=clock.now(),
                    ),
                )
                for pair in report.kept
            ]
            return GenerationOutcome(records=records, attempts_used=attempt, raw_responses=raw_responses)
    return GenerationOutcome(records=[], attempts_used=attempts_used, raw_responses=raw_responses)


def generate_corpus(
    captions: list[CaptionRecord],
    config: GeneratorConfig,
    out_path: str | Path,
    *,
    resume: bool = True,
    clock: Clock | None = None,
    client: AssistantClient | None = None,
) -> RunSummary:
    """Generate records for a caption list into a JSONL file.

    Output order equals caption input order regardless of worker completion
    order (bounded reorder window of 4x workers). With ``resume`` (default),
    captions that already contributed records to the output file are skipped
    and new records are appended. A backend failure drains the in-flight
    window, keeps everything completed so far, and then propagates, so the
    partial output stays resumable.
    """
    clock = clock or SystemClock()
    out_path = Path(out_path)

    existing: list[InstructionRecord] = []
    if resume and out_path.exists():
        existing = read_instructions(out_path)
    covered_ids = {cid for record in existing for cid in record.source_caption_ids}
    todo = [c for c in captions if c.caption_id not in covered_ids]
    if len(todo) < len(captions):
        log.info("resume: %d of %d captions already covered", len(captions) - len(todo), len(captions))

    client = client or make_client(config, clock)
    covered_images = {r.image_id for r in existing}
    n_records = 0
    n_exhausted = 0
    window_size = max(1, 4 * config.workers)
    failure: Cap2qaError | None = None

    try:
        out = open(out_path, "a" if existing else "w", encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot open {out_path}: {exc}") from exc

    with out:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:

            def flush_one(caption: CaptionRecord, future) -> None:
                nonlocal n_records, n_exhausted
                outcome = future.result()
                if not outcome.records:
                    n_exhausted += 1
                    log.warning("caption %d exhausted after %d attempts", caption.caption_id, outcome.attempts_used)
                    return
                for record in outcome.records:
                    out.write(record_to_line(record) + "\n")
                    n_records += 1
                    covered_images.add(record.image_id)

            window: deque = deque()
            for caption in todo:
                if failure is not None:
                    break
                window.append((caption, pool.submit(generate_for_caption, caption, config, client=client, clock=clock)))
                if len(window) >= window_size:
                    head_caption, head_future = window.popleft()
                    try:
                        flush_one(head_caption, head_future)
                    except Cap2qaError as exc:
                        failure = exc
            while window:
                head_caption, head_future = window.popleft()
                try:
                    flush_one(head_caption, head_future)
                except Cap2qaError as exc:
                    if failure is None:
                        failure = exc
        out.flush()

    if failure is not None:
        log.error("run aborted: %s (partial output kept at %s)", failure, out_path)
        raise failure
    return RunSummary(
        n_captions=len(captions),
        n_covered_images=len(covered_images),
        n_records=n_records,
        n_exhausted=n_exhausted,
    )
