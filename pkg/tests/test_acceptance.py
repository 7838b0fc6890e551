"""Acceptance suite: one test per shipping criterion.

Each test is self-contained, uses deterministic seeds, and asserts its own
runtime budget. Criterion 6 needs the released validation split on disk and
skips with a notice when it is absent.
"""

import json
import math
import os
import random
import re
import string
import time
from collections import Counter
from datetime import datetime, timezone
from fractions import Fraction

import pytest

from cap2qa.cli import main
from cap2qa.clocks import FixedClock
from cap2qa.corpus import (
    CaptionRecord,
    InstructionRecord,
    ObjectAnnotation,
    Provenance,
    read_instructions,
    scan_jsonl_stats,
    write_instructions,
)
from cap2qa.errors import ScriptExhaustedError
from cap2qa.eval_caption import CaptionEvalSet, CaptionItem, bleu, cider_per_item, tokenize
from cap2qa.eval_hallucination import AnswerRecord, Lexicon, chair_eval, extract_objects
from cap2qa.eval_vqa import acc_score, pacc_score
from cap2qa.filters import default_rules, filter_artifacts
from cap2qa.generator import GeneratorConfig, QAPair, generate_for_caption
from cap2qa.llm_client import BackendSpec, MockScript, prompt_hash
from cap2qa.porter import stem
from cap2qa.promptkit import default_prompt_config, render

NOW = datetime(2024, 5, 1, tzinfo=timezone.utc)


def elapsed_since(start):
    return time.monotonic() - start


# --- 1: retry loop ------------------------------------------------------


def test_criterion_1_retry_loop_fidelity():
    start = time.monotonic()
    caption = CaptionRecord(caption_id=1, image_id=10, text="A cat sits on a mat.")

    # (a) breaks on the first attempt whose filtered set is non-empty
    script = MockScript(["no markers at all", "Question: What sits?\nAnswer: A cat.", "SENTINEL"])
    config = GeneratorConfig(backend=BackendSpec(kind="mock", script=script), retry=3)
    outcome = generate_for_caption(caption, config, clock=FixedClock(NOW))
    assert outcome.attempts_used == 2
    assert len(outcome.records) == 1
    # (c) provenance carries the attempt index that produced the record
    assert outcome.records[0].provenance.attempt == 2
    # the third scripted response was never consumed
    assert script.next_for("anything") == "SENTINEL"

    # (c) immediate success records attempt 1
    script = MockScript(["Question: Q?\nAnswer: A."])
    config = GeneratorConfig(backend=BackendSpec(kind="mock", script=script), retry=3)
    assert generate_for_caption(caption, config, clock=FixedClock(NOW)).records[0].provenance.attempt == 1

    # (b) persistent filtering consumes exactly RETRY attempts, then yields nothing
    filtered = "Question: What does the caption say?\nAnswer: Things in the caption."
    script = MockScript([filtered, filtered, filtered])
    config = GeneratorConfig(backend=BackendSpec(kind="mock", script=script), retry=3)
    outcome = generate_for_caption(caption, config, clock=FixedClock(NOW))
    assert outcome.records == []
    assert outcome.attempts_used == 3
    with pytest.raises(ScriptExhaustedError):
        script.next_for("a fourth attempt would be a bug")

    assert elapsed_since(start) < 1.0


# --- 2: artifact filter -------------------------------------------------


def test_criterion_2_artifact_filter_fidelity():
    start = time.monotonic()
    rules = default_rules()

    artifact = QAPair(
        question="Is the dessert 'in the caption' meant for one person or two people?",
        answer="It is meant for two people 'according to the caption'",
    )
    clean = QAPair(question="Is the dessert meant for one person or two people?", answer="It is meant for two people.")
    report = filter_artifacts([artifact, clean], rules)
    assert report.kept == [clean]
    assert [rule_id for _, rule_id in report.rejected] and report.rejected[0][0] == artifact

    # randomized property block: >= 1000 pairs
    rng = random.Random(2024)
    vocab = ["red", "dog", "tree", "holds", "two", "people", "plate", "sunny", "walks", "near"]
    artifacts = [
        "not specified in the context given",
        "according to the caption it is",
        "the caption mentions it",
        "as an AI I cannot see",
        "   ",
    ]
    pairs = []
    for _ in range(1200):
        words = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 7)))
        if rng.random() < 0.3:
            words = rng.choice(artifacts) if rng.random() < 0.5 else words + " " + rng.choice(artifacts)
        if rng.random() < 0.5:
            pairs.append(QAPair(question=words, answer="fine"))
        else:
            pairs.append(QAPair(question="What is here?", answer=words))

    report = filter_artifacts(pairs, rules)
    # partition: every input lands exactly once on one side, order preserved
    assert len(report.kept) + len(report.rejected) == len(pairs) == report.input_count
    ki = ri = 0
    for pair in pairs:
        if ki < len(report.kept) and report.kept[ki] is pair:
            ki += 1
        else:
            assert report.rejected[ri][0] is pair
            ri += 1
    assert ki == len(report.kept) and ri == len(report.rejected)

    # idempotence: the kept set is a fixed point
    again = filter_artifacts(report.kept, rules)
    assert again.kept == report.kept and again.rejected == []

    # monotonicity: more rules can only shrink the kept set
    for cut in (1, 2, 3):
        subset_kept = filter_artifacts(pairs, rules[:cut]).kept
        assert len(report.kept) <= len(subset_kept)
        full = Counter((p.question, p.answer) for p in report.kept)
        partial = Counter((p.question, p.answer) for p in subset_kept)
        assert all(full[key] <= partial[key] for key in full)

    assert elapsed_since(start) < 5.0


# --- 3: partial-match scoring -------------------------------------------


def _oracle_normalize(text, drop_articles):
    tokens = []
    for token in text.lower().split():
        token = token.strip(string.punctuation)
        if token and not (drop_articles and token in ("a", "an", "the")):
            tokens.append(token)
    return " ".join(tokens)


def _oracle_scores(prediction, references):
    loose_pred = _oracle_normalize(prediction, False)
    exact_pred = _oracle_normalize(prediction, True)
    partial = strict = 0
    for ref in references:
        exact_hit = _oracle_normalize(ref, True) == exact_pred
        if exact_hit:
            strict += 1
        if exact_hit or _oracle_normalize(ref, False) in loose_pred:
            partial += 1
    return Fraction(min(3, partial), 3), Fraction(min(3, strict), 3)


def test_criterion_3_partial_match_scoring_fidelity():
    start = time.monotonic()

    # worked examples: substring credit without exact-match credit
    fish = ("There are a fish and a boat.", ["fish", "boat", "water"])
    assert pacc_score(*fish) == Fraction(2, 3)
    assert acc_score(*fish) == Fraction(0)
    walk = ("The man is walking.", ["walk", "jog", "sprint"])
    assert pacc_score(*walk) == Fraction(1, 3)
    assert acc_score(*walk) == Fraction(0)

    rng = random.Random(7)
    words = ["fish", "boat", "walk", "red", "dog", "tree", "water", "cat", "sky", "run"]

    def phrase():
        body = " ".join(rng.choice(words) for _ in range(rng.randint(1, 4)))
        if rng.random() < 0.3:
            body = rng.choice(["a ", "an ", "the "]) + body
        if rng.random() < 0.3:
            body = body + rng.choice([".", "!", ","])
        if rng.random() < 0.2:
            body = body.upper()
        return body

    for _ in range(10_000):
        prediction = phrase()
        references = [phrase() for _ in range(rng.randint(1, 5))]
        expected_partial, expected_strict = _oracle_scores(prediction, references)
        got_partial = pacc_score(prediction, references)
        got_strict = acc_score(prediction, references)
        assert got_partial == expected_partial
        assert got_strict == expected_strict
        assert got_partial >= got_strict

    assert elapsed_since(start) < 10.0


# --- 4: hallucination metrics -------------------------------------------

VOCAB = ("cat", "dog", "bird", "cake", "person", "chair")
LEXICON = Lexicon(categories=VOCAB, synonyms={"person": frozenset({"man", "woman"})})


def _annotation(image_id, positives):
    positives = frozenset(positives)
    return ObjectAnnotation(image_id, positives, frozenset(VOCAB) - positives)


def test_criterion_4_hallucination_metric_fidelity():
    start = time.monotonic()

    # 10 answers, exactly 4 mention an absent object
    annotations = {i: _annotation(i, {"cat", "dog"}) for i in range(10)}
    answers = [AnswerRecord(i, "a cat and a dog") for i in range(6)]
    answers += [AnswerRecord(6 + i, "a cat near a cake") for i in range(4)]
    result = chair_eval(answers, annotations, LEXICON)
    assert result.chair_s == 0.40
    assert result.n_hallucinating == 4

    # saying nothing: no hallucination but no recall either
    silent = [AnswerRecord(i, "something is happening") for i in range(10)]
    silent_result = chair_eval(silent, annotations, LEXICON)
    assert silent_result.chair_s == 0.0
    assert silent_result.recall == 0.0

    # saying everything: full recall, but flagged and stripped of strict credit
    everything = [AnswerRecord(i, " ".join(VOCAB)) for i in range(10)]
    everything_result = chair_eval(everything, annotations, LEXICON)
    assert everything_result.recall == 1.0
    assert everything_result.chair_s == 1.0
    assert everything_result.recall_without_hallucination == 0.0

    # randomized brute-force equivalence on 1,000 fixtures
    rng = random.Random(11)
    fillers = ("blue", "near", "holds", "nothing")
    for _ in range(1000):
        n_images = rng.randint(1, 4)
        annotations = {
            i: _annotation(i, rng.sample(VOCAB, rng.randint(0, len(VOCAB))))
            for i in range(n_images)
        }
        answers = [
            AnswerRecord(
                rng.randrange(n_images),
                " ".join(rng.choice(VOCAB + fillers + ("man", "woman")) for _ in range(rng.randint(0, 6))),
            )
            for _ in range(rng.randint(0, 6))
        ]
        result = chair_eval(answers, annotations, LEXICON)

        hallucinating = truepos = clean_truepos = positives = 0
        for answer in answers:
            ann = annotations[answer.image_id]
            mentioned = extract_objects(answer.text, LEXICON)
            bad = mentioned & ann.negative_categories
            good = mentioned & ann.positive_categories
            hallucinating += bool(bad)
            truepos += len(good)
            if not bad:
                clean_truepos += len(good)
            positives += len(ann.positive_categories)
        assert result.chair_s == (hallucinating / len(answers) if answers else 0.0)
        assert result.recall == (truepos / positives if positives else 0.0)
        assert result.recall_without_hallucination == (clean_truepos / positives if positives else 0.0)

    assert elapsed_since(start) < 30.0


# --- 5: caption metrics -------------------------------------------------


def test_criterion_5_caption_metric_sanity():
    start = time.monotonic()

    identity = CaptionEvalSet(
        [
            CaptionItem(1, "a red bird sits on a branch", ("a red bird sits on a branch",)),
            CaptionItem(2, "two dogs run across the wide field", ("two dogs run across the wide field",)),
            CaptionItem(3, "a man rides a blue bicycle downtown", ("a man rides a blue bicycle downtown",)),
        ]
    )
    assert bleu(identity) == [1.0, 1.0, 1.0, 1.0]
    for score in cider_per_item(identity):
        assert score == pytest.approx(10.0)

    clipped = bleu(CaptionEvalSet([CaptionItem(1, "the the the", ("the cat",))]))
    assert clipped[0] == pytest.approx(1 / 3)

    # 3-item corpus against an independent TF-IDF computation
    items = [
        ("a cat sits on the mat", ("a cat sits on a mat", "the cat is on the mat")),
        ("a dog runs fast", ("the dog runs", "a brown dog running quickly")),
        ("two birds fly high over trees", ("birds flying over the tall trees",)),
    ]
    eval_set = CaptionEvalSet([CaptionItem(i, c, r) for i, (c, r) in enumerate(items)])

    def grams(text, n):
        toks = [stem(t) for t in tokenize(text)]
        return [tuple(toks[k: k + n]) for k in range(len(toks) - n + 1)]

    expected = []
    for cand, refs in items:
        per_n = []
        for n in range(1, 5):
            doc_freq = Counter()
            for _, other in items:
                doc_freq.update({g for ref in other for g in grams(ref, n)})

            def vec(text):
                tf = Counter(grams(text, n))
                return {g: v * (math.log(len(items)) - math.log(max(1, doc_freq[g]))) for g, v in tf.items()}

            cand_vec = vec(cand)
            cand_norm = math.sqrt(sum(v * v for v in cand_vec.values()))
            sims = []
            for ref in refs:
                ref_vec = vec(ref)
                ref_norm = math.sqrt(sum(v * v for v in ref_vec.values()))
                dot = sum(v * ref_vec.get(g, 0.0) for g, v in cand_vec.items())
                sims.append(dot / (cand_norm * ref_norm) if cand_norm and ref_norm else 0.0)
            per_n.append(sum(sims) / len(refs))
        expected.append(10.0 * sum(per_n) / 4)

    actual = cider_per_item(eval_set)
    for got, want in zip(actual, expected):
        assert abs(got - want) <= 1e-9

    assert elapsed_since(start) < 10.0


# --- 6: released val split counts ---------------------------------------

VAL_SPLIT_ENV = "CAP2QA_COCO_VAL"


def test_criterion_6_released_val_split_counts():
    path = os.environ.get(VAL_SPLIT_ENV)
    if not path or not os.path.exists(path):
        pytest.skip(
            f"released val split not present; set {VAL_SPLIT_ENV} to its JSONL path to enable this check"
        )
    stats = scan_jsonl_stats(path)
    assert stats.n_records == 38_600
    assert stats.n_distinct_images == 4_973


# --- 7: end-to-end determinism ------------------------------------------


def test_criterion_7_end_to_end_determinism(tmp_path):
    start = time.monotonic()

    entries = [(i, 1000 + i, f"Image number {i} shows a scene with object {i}.") for i in range(100)]
    captions_path = tmp_path / "captions.json"
    captions_path.write_text(
        json.dumps(
            {
                "images": [{"id": iid} for _, iid, _ in entries],
                "annotations": [{"id": c, "image_id": i, "caption": t} for c, i, t in entries],
            }
        ),
        encoding="utf-8",
    )
    prompt = default_prompt_config()
    script_path = tmp_path / "script.jsonl"
    with open(script_path, "w", encoding="utf-8") as fh:
        for cid, iid, text in entries:
            record = CaptionRecord(caption_id=cid, image_id=iid, text=text)
            fh.write(
                json.dumps(
                    {
                        "prompt_hash": prompt_hash(render(prompt, record).rendered),
                        "response_text": f"Question: What does image {cid} show?\nAnswer: Object {cid}.",
                    }
                )
                + "\n"
            )

    outputs = []
    for run, workers in (("a", 1), ("b", 1), ("c", 8)):
        out = tmp_path / f"out-{run}.jsonl"
        code = main(
            [
                "generate",
                "--captions", str(captions_path),
                "--out", str(out),
                "--backend", "mock",
                "--script", str(script_path),
                "--workers", str(workers),
                "--fixed-clock", "2024-05-01T00:00:00+00:00",
                "--report", str(tmp_path / f"report-{run}.json"),
            ]
        )
        assert code == 0
        outputs.append(out.read_bytes())

    assert outputs[0] == outputs[1] == outputs[2]
    assert len(read_instructions(tmp_path / "out-a.jsonl")) == 100
    assert elapsed_since(start) < 5.0


# --- 8: round trip ------------------------------------------------------


def test_criterion_8_record_round_trip(tmp_path):
    pool = (
        "plain words",
        "Füße im Schnee",
        "猫が座っている",
        "🙂 emoji and symbols ™",
        'quotes "inside" and \\ backslash',
        "tabs\tand\nnewlines",
        "мальчик с собакой",
    )
    rng = random.Random(42)
    records = []
    for i in range(1000):
        records.append(
            InstructionRecord(
                image_id=rng.randrange(10**9),
                question=f"{rng.choice(pool)} {i}?",
                answer=f"{rng.choice(pool)} {i}",
                source_caption_ids=tuple(rng.randrange(10**9) for _ in range(rng.randint(1, 3))),
                provenance=Provenance(
                    model_id=rng.choice(["gpt-3.5-turbo", "gpt-4"]),
                    prompt_version=f"default-{rng.randrange(16**12):012x}",
                    attempt=rng.randint(1, 5),
                    created_at=datetime(2024, rng.randint(1, 12), rng.randint(1, 28), tzinfo=timezone.utc),
                ),
            )
        )
    out = tmp_path / "round.jsonl"
    assert write_instructions(out, records) == 1000
    assert read_instructions(out) == records
