"""Command-line entry points.

Subcommands:

- ``generate``      build an instruction corpus from captions
- ``eval-chair``    object-hallucination metrics over answers
- ``eval-vqa``      partial-credit QA accuracy
- ``eval-caption``  BLEU and CIDEr over captions
- ``stats``         corpus counting and word-length stats
- ``report``        re-render a saved report

Exit codes: 0 success, 1 bad input or arguments, 2 environment or backend
failure. Logs go to stderr; machine output goes to ``--report`` or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime
from pathlib import Path

import yaml

from . import __version__
from .clocks import Clock, FixedClock, SystemClock
from .corpus import (
    dataset_stats,
    load_coco_captions,
    load_object_annotations,
    read_instructions,
    scan_jsonl_stats,
)
from .errors import (
    RUNTIME_ERRORS,
    VALIDATION_ERRORS,
    MalformedLineError,
    MissingFileError,
    SchemaViolationError,
)
from .eval_caption import CaptionEvalSet, CaptionItem, bleu, cider
from .eval_hallucination import AnswerRecord, build_lexicon, chair_eval, default_lexicon
from .eval_vqa import VqaItem, evaluate
from .filters import load_rules
from .generator import GeneratorConfig, generate_corpus
from .llm_client import BackendSpec, MockScript
from .promptkit import load_prompt_config
from .reporting import Report, load_report, report_render, sha256_file

log = logging.getLogger("cap2qa")

ENV_BASE_URL = "CAP2QA_BASE_URL"
ENV_MODEL = "CAP2QA_MODEL"

def _read_jsonl(path: str) -> list[dict]:
    if not os.path.exists(path):
        raise MissingFileError(f"no such file: {path}")
    rows: list[dict] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLineError(path, line_no, exc.msg) from exc
            if not isinstance(obj, dict):
                raise MalformedLineError(path, line_no, "expected a JSON object")
            rows.append(obj)
    return rows


def _first_key(obj: dict, keys: tuple[str, ...], path: str, line_no: int):
    for key in keys:
        if key in obj:
            return obj[key]
    raise MalformedLineError(path, line_no, f"missing any of {keys}")


def _emit(report: Report, out_path: str | None) -> None:
    rendered = report_render(report, "json")
    if out_path:
        Path(out_path).write_text(rendered, encoding="utf-8")
        log.info("report written to %s", out_path)
    else:
        sys.stdout.write(rendered)


def _make_report(command: str, inputs: dict, metrics: dict, started: datetime, clock: Clock, details: dict | None = None) -> Report:
    return Report(
        command=command,
        inputs=inputs,
        metrics=metrics,
        started_at=started,
        finished_at=clock.now(),
        details=details or {},
    )


# --- generate -----------------------------------------------------------


def _layer(flag, env_name: str | None, config: dict, key: str, default):
    """flags > environment > config file > default."""
    if flag is not None:
        return flag
    if env_name:
        env = os.environ.get(env_name)
        if env:
            return env
    if key in config:
        return config[key]
    return default


def _cmd_generate(args: argparse.Namespace) -> int:
    file_config: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise SchemaViolationError(f"{args.config}: config must be a mapping")
        file_config = loaded

    backend_kind = _layer(args.backend, None, file_config, "backend", "http")
    base_url = _layer(args.base_url, ENV_BASE_URL, file_config, "base_url", None)
    model_id = _layer(args.model, ENV_MODEL, file_config, "model", "gpt-3.5-turbo")
    retry = int(_layer(args.retry, None, file_config, "retry", 3))
    workers = int(_layer(args.workers, None, file_config, "workers", 1))
    temperature = float(_layer(args.temperature, None, file_config, "temperature", 0.0))
    max_tokens = int(_layer(args.max_output_tokens, None, file_config, "max_output_tokens", 512))
    rate_limit = _layer(args.rate_limit_rpm, None, file_config, "rate_limit_rpm", None)
    cache_dir = _layer(args.cache_dir, None, file_config, "cache_dir", None)
    rules_path = _layer(args.rules, None, file_config, "rules", None)
    prompt_path = _layer(args.prompt, None, file_config, "prompt", None)
    script_path = _layer(args.script, None, file_config, "script", None)

    if backend_kind == "mock":
        if not script_path:
            raise SchemaViolationError("mock backend requires --script")
        backend = BackendSpec(kind="mock", script=MockScript.from_file(script_path))
    else:
        if not base_url:
            raise SchemaViolationError(f"http backend requires --base-url or {ENV_BASE_URL}")
        backend = BackendSpec(kind="http", base_url=base_url)

    kwargs: dict = {
        "backend": backend,
        "retry": retry,
        "workers": workers,
        "model_id": model_id,
        "temperature": temperature,
        "max_output_tokens": max_tokens,
        "keep_raw": args.keep_raw,
    }
    if rate_limit is not None:
        kwargs["rate_limit_rpm"] = int(rate_limit)
    if cache_dir is not None:
        kwargs["cache_enabled"] = True
        kwargs["cache_dir"] = Path(cache_dir)
    if rules_path:
        kwargs["rules"] = load_rules(rules_path)
    if prompt_path:
        kwargs["prompt"] = load_prompt_config(prompt_path)
    config = GeneratorConfig(**kwargs)

    clock: Clock = FixedClock(datetime.fromisoformat(args.fixed_clock)) if args.fixed_clock else SystemClock()
    started = clock.now()

    captions = load_coco_captions(args.captions, split=args.split)
    log.info("loaded %d captions from %s", len(captions), args.captions)
    summary = generate_corpus(captions, config, args.out, resume=args.resume, clock=clock)
    log.info(
        "generated %d records over %d images (%d captions, %d exhausted retries)",
        summary.n_records,
        summary.n_covered_images,
        summary.n_captions,
        summary.n_exhausted,
    )

    inputs = {str(args.captions): sha256_file(args.captions)}
    metrics = {
        "n_captions": summary.n_captions,
        "n_covered_images": summary.n_covered_images,
        "n_records": summary.n_records,
        "n_exhausted": summary.n_exhausted,
    }
    details = {"out": str(args.out), "prompt_version": config.prompt.version_tag, "model_id": model_id}
    _emit(_make_report("generate", inputs, metrics, started, clock, details), args.report)
    return 0


# --- eval-chair ---------------------------------------------------------


def _cmd_eval_chair(args: argparse.Namespace) -> int:
    clock = SystemClock()
    started = clock.now()
    if args.categories:
        lexicon = build_lexicon(args.categories, args.synonyms)
    else:
        lexicon = default_lexicon()

    answers = []
    for line_no, row in enumerate(_read_jsonl(args.answers), start=1):
        image_id = int(_first_key(row, ("image_id", "image", "img_id"), args.answers, line_no))
        text = str(_first_key(row, ("answer", "caption", "text"), args.answers, line_no))
        answers.append(AnswerRecord(image_id=image_id, text=text))

    annotations = {a.image_id: a for a in load_object_annotations(args.instances, lexicon)}
    result = chair_eval(answers, annotations, lexicon)

    inputs = {str(args.answers): sha256_file(args.answers), str(args.instances): sha256_file(args.instances)}
    if args.categories:
        inputs[str(args.categories)] = sha256_file(args.categories)
    if args.synonyms:
        inputs[str(args.synonyms)] = sha256_file(args.synonyms)
    metrics = {
        "chair_s": result.chair_s,
        "recall": result.recall,
        "recall_without_hallucination": result.recall_without_hallucination,
        "n_answers": result.n_answers,
        "n_hallucinating": result.n_hallucinating,
    }
    details = {
        "per_answer": [
            {
                "image_id": b.image_id,
                "mentioned": sorted(b.mentioned),
                "hallucinated": sorted(b.hallucinated),
                "true_positives": sorted(b.true_positives),
            }
            for b in result.per_answer
        ]
    }
    _emit(_make_report("eval-chair", inputs, metrics, started, clock, details), args.report)
    return 0


# --- eval-vqa -----------------------------------------------------------


def _load_references(path: str) -> dict[str, tuple[str, ...]]:
    refs: dict[str, tuple[str, ...]] = {}
    for line_no, row in enumerate(_read_jsonl(path), start=1):
        qid = str(_first_key(row, ("question_id", "qid", "id"), path, line_no))
        value = _first_key(row, ("references", "answers", "answer"), path, line_no)
        if isinstance(value, str):
            value = [value]
        refs[qid] = tuple(str(v) for v in value)
    return refs


def _cmd_eval_vqa(args: argparse.Namespace) -> int:
    clock = SystemClock()
    started = clock.now()
    references = _load_references(args.gt)
    items: list[VqaItem] = []
    for line_no, row in enumerate(_read_jsonl(args.pred), start=1):
        qid = str(_first_key(row, ("question_id", "qid", "id"), args.pred, line_no))
        prediction = str(_first_key(row, ("prediction", "answer", "text"), args.pred, line_no))
        if qid not in references:
            log.warning("prediction for unknown question %s ignored", qid)
            continue
        items.append(VqaItem(question_id=qid, prediction=prediction, references=references[qid]))
    missing = set(references) - {i.question_id for i in items}
    if missing:
        raise SchemaViolationError(f"{args.pred}: no prediction for questions {sorted(missing)[:5]}")

    strict = args.mode == "acc"
    result = evaluate(items, strict=strict, raw=args.raw_match)
    key = "acc" if strict else "pacc"
    inputs = {str(args.pred): sha256_file(args.pred), str(args.gt): sha256_file(args.gt)}
    metrics = {key: float(result.mean_score), "n_items": len(result.per_item)}
    details = {
        "mean_exact": f"{result.mean_score.numerator}/{result.mean_score.denominator}",
        "per_item": [
            {"question_id": s.question_id, "score": f"{s.score.numerator}/{s.score.denominator}"}
            for s in result.per_item
        ],
    }
    _emit(_make_report("eval-vqa", inputs, metrics, started, clock, details), args.report)
    return 0


# --- eval-caption -------------------------------------------------------


def _cmd_eval_caption(args: argparse.Namespace) -> int:
    clock = SystemClock()
    started = clock.now()
    references: dict[int, tuple[str, ...]] = {}
    for line_no, row in enumerate(_read_jsonl(args.refs), start=1):
        image_id = int(_first_key(row, ("image_id", "image", "img_id"), args.refs, line_no))
        value = _first_key(row, ("references", "captions", "caption"), args.refs, line_no)
        if isinstance(value, str):
            value = [value]
        references[image_id] = tuple(str(v) for v in value)

    items: list[CaptionItem] = []
    for line_no, row in enumerate(_read_jsonl(args.pred), start=1):
        image_id = int(_first_key(row, ("image_id", "image", "img_id"), args.pred, line_no))
        candidate = str(_first_key(row, ("caption", "prediction", "text"), args.pred, line_no))
        if image_id not in references:
            raise SchemaViolationError(f"{args.refs}: no references for image {image_id}")
        items.append(CaptionItem(image_id=image_id, candidate=candidate, references=references[image_id]))

    eval_set = CaptionEvalSet(items=items)
    bleu_scores = bleu(eval_set)
    cider_score = cider(eval_set, cider_d=args.cider_d)

    inputs = {str(args.pred): sha256_file(args.pred), str(args.refs): sha256_file(args.refs)}
    metrics = {
        "bleu_1": bleu_scores[0],
        "bleu_2": bleu_scores[1],
        "bleu_3": bleu_scores[2],
        "bleu_4": bleu_scores[3],
        "cider": cider_score,
        "n_items": len(items),
    }
    details = {"cider_variant": "cider-d" if args.cider_d else "cider"}
    _emit(_make_report("eval-caption", inputs, metrics, started, clock, details), args.report)
    return 0


# --- stats --------------------------------------------------------------


def _cmd_stats(args: argparse.Namespace) -> int:
    clock = SystemClock()
    started = clock.now()
    if args.lenient:
        stats = scan_jsonl_stats(args.dataset)
    else:
        stats = dataset_stats(read_instructions(args.dataset))
    inputs = {str(args.dataset): sha256_file(args.dataset)}
    metrics = {
        "n_records": stats.n_records,
        "n_distinct_images": stats.n_distinct_images,
        "avg_answer_words": stats.avg_answer_words,
        "avg_question_words": stats.avg_question_words,
    }
    _emit(_make_report("stats", inputs, metrics, started, clock), args.report)
    return 0


# --- report -------------------------------------------------------------


def _cmd_report(args: argparse.Namespace) -> int:
    report = load_report(args.in_path)
    sys.stdout.write(report_render(report, args.format))
    return 0


# --- parser -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cap2qa", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"cap2qa {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="build an instruction corpus from captions")
    gen.add_argument("--captions", required=True, help="COCO caption annotation JSON")
    gen.add_argument("--split", default="train", choices=("train", "val"))
    gen.add_argument("--out", required=True, help="output instruction JSONL")
    gen.add_argument("--config", help="YAML config file; flags and env override it")
    gen.add_argument("--backend", choices=("http", "mock"), default=None)
    gen.add_argument("--base-url", default=None, help=f"HTTP backend root (or {ENV_BASE_URL})")
    gen.add_argument("--model", default=None, help=f"model identifier (or {ENV_MODEL})")
    gen.add_argument("--retry", type=int, default=None, help="attempts per caption")
    gen.add_argument("--workers", type=int, default=None, help="parallel requests")
    gen.add_argument("--rules", default=None, help="filter rules YAML")
    gen.add_argument("--prompt", default=None, help="prompt config YAML")
    gen.add_argument("--script", default=None, help="mock backend script JSONL")
    gen.add_argument("--keep-raw", action="store_true", help="keep raw responses in memory for debugging")
    gen.add_argument("--resume", action=argparse.BooleanOptionalAction, default=True, help="skip captions already in --out")
    gen.add_argument("--cache-dir", default=None, help="enable the response cache at this directory")
    gen.add_argument("--rate-limit-rpm", type=int, default=None)
    gen.add_argument("--temperature", type=float, default=None)
    gen.add_argument("--max-output-tokens", type=int, default=None)
    gen.add_argument("--fixed-clock", default=None, metavar="ISO", help="freeze provenance timestamps (reproducible runs)")
    gen.add_argument("--report", default=None, help="write the run report JSON here instead of stdout")
    gen.set_defaults(func=_cmd_generate)

    chair = sub.add_parser("eval-chair", help="object-hallucination metrics")
    chair.add_argument("--answers", required=True, help="JSONL with image_id and answer fields")
    chair.add_argument("--instances", required=True, help="COCO instance annotation JSON")
    chair.add_argument("--categories", default=None, help="category list, one per line (default: built-in)")
    chair.add_argument("--synonyms", default=None, help="surface-form synonyms file")
    chair.add_argument("--report", default=None)
    chair.set_defaults(func=_cmd_eval_chair)

    vqa = sub.add_parser("eval-vqa", help="partial-credit QA accuracy")
    vqa.add_argument("--pred", required=True, help="JSONL with question_id and prediction")
    vqa.add_argument("--gt", required=True, help="JSONL with question_id and reference answers")
    vqa.add_argument("--mode", choices=("pacc", "acc"), default="pacc")
    vqa.add_argument("--raw-match", action="store_true", help="match without normalization")
    vqa.add_argument("--report", default=None)
    vqa.set_defaults(func=_cmd_eval_vqa)

    cap = sub.add_parser("eval-caption", help="BLEU and CIDEr")
    cap.add_argument("--pred", required=True, help="JSONL with image_id and caption")
    cap.add_argument("--refs", required=True, help="JSONL with image_id and reference captions")
    cap.add_argument("--cider-d", action="store_true", help="clipped variant with length penalty")
    cap.add_argument("--report", default=None)
    cap.set_defaults(func=_cmd_eval_caption)

    stats = sub.add_parser("stats", help="corpus stats")
    stats.add_argument("--dataset", required=True, help="instruction JSONL")
    stats.add_argument("--lenient", action="store_true", help="tolerate foreign field names")
    stats.add_argument("--report", default=None)
    stats.set_defaults(func=_cmd_stats)

    rep = sub.add_parser("report", help="re-render a saved report")
    rep.add_argument("--in", dest="in_path", required=True, help="report JSON")
    rep.add_argument("--format", choices=("json", "markdown"), default="markdown")
    rep.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        log.error("%s", exc)
        return 1
    except RUNTIME_ERRORS as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
