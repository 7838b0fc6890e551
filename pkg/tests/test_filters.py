import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cap2qa.errors import SchemaViolationError
from cap2qa.filters import (
    FilterRule,
    default_rules,
    filter_artifacts,
    load_rules,
    save_rules,
)
from cap2qa.generator import QAPair


def pair(question="What is shown?", answer="A dog."):
    return QAPair(question=question, answer=answer)


class TestRuleValidation:
    def test_bad_scope_rejected(self):
        with pytest.raises(ValueError):
            FilterRule(rule_id="x", scope="both", pattern="a")

    def test_bad_regex_rejected(self):
        with pytest.raises(ValueError):
            FilterRule(rule_id="x", scope="either", pattern="(unclosed")

    def test_duplicate_ids_rejected(self):
        rules = [
            FilterRule(rule_id="same", scope="either", pattern="a"),
            FilterRule(rule_id="same", scope="either", pattern="b"),
        ]
        with pytest.raises(ValueError):
            filter_artifacts([pair()], rules)

    def test_empty_rule_list_rejected(self):
        with pytest.raises(ValueError):
            filter_artifacts([pair()], [])


class TestDefaultRules:
    def test_caption_mention_rejected_either_field(self):
        report = filter_artifacts(
            [
                pair(question="What does the caption say?"),
                pair(answer="The caption mentions a dog."),
                pair(answer="A dog runs."),
            ],
            default_rules(),
        )
        assert len(report.kept) == 1
        assert len(report.rejected) == 2

    def test_captioning_not_rejected(self):
        # Word boundary: 'captioning' must survive the caption-mention rule.
        report = filter_artifacts([pair(answer="He studies captioning models.")], default_rules())
        assert len(report.kept) == 1

    def test_not_specified_rejected(self):
        report = filter_artifacts([pair(answer="Not specified in the text.")], default_rules())
        assert report.kept == []

    def test_empty_question_rejected(self):
        report = filter_artifacts([pair(question="   ")], default_rules())
        assert report.kept == []

    def test_refusal_answer_rejected(self):
        report = filter_artifacts([pair(answer="As an AI, I cannot see colors.")], default_rules())
        assert report.kept == []

    def test_case_insensitive(self):
        report = filter_artifacts([pair(answer="THE CAPTION SAYS HI")], default_rules())
        assert report.kept == []


class TestReport:
    def test_order_preserved_and_first_rule_recorded(self):
        rules = [
            FilterRule(rule_id="first", scope="answer", pattern="dog"),
            FilterRule(rule_id="second", scope="answer", pattern="dog here"),
        ]
        pairs = [pair(answer="cat"), pair(answer="dog here"), pair(answer="bird")]
        report = filter_artifacts(pairs, rules)
        assert [p.answer for p in report.kept] == ["cat", "bird"]
        assert report.rejected == [(pairs[1], "first")]
        assert report.input_count == 3

    def test_scope_restricts_matching(self):
        rules = [FilterRule(rule_id="q-only", scope="question", pattern="dog")]
        report = filter_artifacts([pair(question="cat?", answer="dog")], rules)
        assert len(report.kept) == 1


qa_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=60
)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(qa_text, qa_text), max_size=12))
def test_partition_property(raw_pairs):
    pairs = [QAPair(question=q, answer=a) for q, a in raw_pairs]
    rules = default_rules()
    report = filter_artifacts(pairs, rules)
    # kept + rejected is a partition preserving multiplicity
    assert len(report.kept) + len(report.rejected) == len(pairs)
    assert report.input_count == len(pairs)
    # idempotence: filtering the kept set changes nothing
    again = filter_artifacts(report.kept, rules)
    assert again.kept == report.kept
    assert again.rejected == []


class TestYamlRoundTrip:
    def test_save_load_identity(self, tmp_path):
        rules = default_rules()
        path = tmp_path / "rules.yaml"
        save_rules(rules, path)
        assert load_rules(path) == rules

    def test_missing_rules_key(self, tmp_path):
        path = tmp_path / "rules.yaml"
        path.write_text("nope: []\n", encoding="utf-8")
        with pytest.raises(SchemaViolationError):
            load_rules(path)
