"""Stage templates and output parsing."""

import re

import pytest
from hypothesis import given, settings, strategies as st

from explainkit.corpus import Instance, NLI_LABELS, Task
from explainkit.taskformat import (
    ParsedOutput,
    StageKind,
    TemplateError,
    label_vocabulary,
    parse_output,
    render_input,
    render_target,
)


@pytest.fixture
def nli():
    return Instance(
        id="n1", task=Task.NLI, gold_label="neutral",
        premise="A man is walking.", hypothesis="A person moves.",
        gold_explanations=("Not all birds are a duck.",),
    )


@pytest.fixture
def cqa():
    return Instance(
        id="c1", task=Task.CQA, gold_label="library",
        question="where do books live?", choices=("library", "kitchen", "garage"),
        gold_explanations=("books are kept in a library",),
    )


class TestRenderInput:
    def test_joint_nli(self, nli):
        assert render_input(nli, StageKind.JOINT) == (
            "explain nli Premise: A man is walking. Hypothesis: A person moves."
        )

    def test_etp_explainer_same_as_joint(self, nli):
        assert render_input(nli, StageKind.ETP_EXPLAINER) == render_input(nli, StageKind.JOINT)

    def test_pte_predictor_drops_explain(self, nli):
        assert render_input(nli, StageKind.PTE_PREDICTOR) == (
            "nli Premise: A man is walking. Hypothesis: A person moves."
        )

    def test_pte_explainer_label_suffix(self, nli):
        rendered = render_input(nli, StageKind.PTE_EXPLAINER, label="entailment")
        assert rendered == (
            "explain nli Premise: A man is walking. Hypothesis: A person moves. Label: entailment"
        )
        assert rendered.count(" Label: ") == 1

    def test_etp_predictor_explanation_suffix(self, nli):
        rendered = render_input(nli, StageKind.ETP_PREDICTOR, explanation="Birds vary.")
        assert rendered == (
            "nli Premise: A man is walking. Hypothesis: A person moves. Explanation: Birds vary."
        )
        assert rendered.count(" Explanation: ") == 1

    def test_cqa_choices_rendered_in_order(self, cqa):
        assert render_input(cqa, StageKind.ETP_EXPLAINER) == (
            "explain cos Question: where do books live? "
            "Choice: library Choice: kitchen Choice: garage"
        )
        assert render_input(cqa, StageKind.PTE_PREDICTOR).startswith("cos Question: ")

    def test_rtol_nli(self, nli):
        assert render_input(nli, StageKind.RTOL, explanation="Only an explanation.") == (
            "nli Explanation: Only an explanation."
        )

    def test_rtol_cqa_includes_choices(self, cqa):
        rendered = render_input(cqa, StageKind.RTOL, explanation="books live in libraries")
        assert rendered == (
            "cos Question-free. Choice: library Choice: kitchen Choice: garage "
            "Explanation: books live in libraries"
        )

    def test_missing_injections_raise(self, nli):
        with pytest.raises(TemplateError):
            render_input(nli, StageKind.PTE_EXPLAINER)
        with pytest.raises(TemplateError):
            render_input(nli, StageKind.ETP_PREDICTOR)
        with pytest.raises(TemplateError):
            render_input(nli, StageKind.RTOL)


class TestRenderTarget:
    def test_joint(self, nli):
        assert render_target(nli, StageKind.JOINT) == "neutral explanation Not all birds are a duck."

    def test_predictor(self, nli):
        assert render_target(nli, StageKind.PTE_PREDICTOR) == "neutral"
        assert render_target(nli, StageKind.ETP_PREDICTOR) == "neutral"
        assert render_target(nli, StageKind.RTOL) == "neutral"

    def test_explainer(self, nli):
        assert render_target(nli, StageKind.ETP_EXPLAINER) == "Not all birds are a duck."
        assert render_target(nli, StageKind.PTE_EXPLAINER) == "Not all birds are a duck."

    def test_missing_explanation(self):
        bare = Instance(id="b", task=Task.NLI, gold_label="neutral",
                        premise="p q", hypothesis="h k")
        with pytest.raises(TemplateError):
            render_target(bare, StageKind.JOINT)
        assert render_target(bare, StageKind.PTE_PREDICTOR) == "neutral"


class TestParseOutput:
    VOCAB = list(NLI_LABELS)

    def test_joint_clean(self):
        parsed = parse_output(
            "neutral explanation Not all birds are a duck.", StageKind.JOINT, self.VOCAB
        )
        assert parsed == ParsedOutput(
            raw="neutral explanation Not all birds are a duck.",
            label="neutral",
            explanation="Not all birds are a duck.",
            clean_parse=True,
        )

    def test_joint_missing_delimiter(self):
        parsed = parse_output("neutral", StageKind.JOINT, self.VOCAB)
        assert parsed.label == "neutral"
        assert parsed.explanation == ""
        assert not parsed.clean_parse

    def test_joint_explanation_containing_the_word(self):
        raw = "neutral explanation an explanation of the explanation"
        parsed = parse_output(raw, StageKind.JOINT, self.VOCAB)
        assert parsed.label == "neutral"
        assert parsed.explanation == "an explanation of the explanation"

    def test_predictor_out_of_vocabulary(self):
        parsed = parse_output("maybe", StageKind.PTE_PREDICTOR, self.VOCAB)
        assert parsed.label == "maybe"
        assert not parsed.clean_parse

    def test_predictor_case_insensitive_canonicalized(self):
        parsed = parse_output("  Neutral ", StageKind.PTE_PREDICTOR, self.VOCAB)
        assert parsed.label == "neutral"
        assert parsed.clean_parse

    def test_cqa_label_keeps_choice_spelling(self):
        parsed = parse_output("Library", StageKind.ETP_PREDICTOR, ["Library", "kitchen", "garage"])
        assert parsed.label == "Library"
        assert parsed.clean_parse

    def test_explainer_verbatim(self):
        parsed = parse_output("Any text at all", StageKind.ETP_EXPLAINER, [])
        assert parsed.explanation == "Any text at all"
        assert parsed.clean_parse
        assert not parse_output("   ", StageKind.PTE_EXPLAINER, []).clean_parse


WORDS = st.sampled_from(
    ["bird", "duck", "walk", "explanation", "move", "not", "all", "a", "the", "person"]
)
EXPLANATIONS = st.lists(WORDS, min_size=1, max_size=10).map(" ".join)


class TestProperties:
    @given(label=st.sampled_from(NLI_LABELS), explanation=EXPLANATIONS)
    @settings(max_examples=300, deadline=None)
    def test_joint_round_trip(self, label, explanation):
        inst = Instance(
            id="rt", task=Task.NLI, gold_label=label,
            premise="a premise here.", hypothesis="a hypothesis here.",
            gold_explanations=(explanation,),
        )
        parsed = parse_output(render_target(inst, StageKind.JOINT), StageKind.JOINT, NLI_LABELS)
        assert parsed.label == label
        assert parsed.explanation == explanation
        assert parsed.clean_parse

    @given(
        p1=st.text(alphabet="abcxyz ", min_size=1).filter(str.strip),
        p2=st.text(alphabet="abcxyz ", min_size=1).filter(str.strip),
    )
    @settings(max_examples=100, deadline=None)
    def test_render_injective_over_premises(self, p1, p2):
        def make(p):
            return Instance(id="i", task=Task.NLI, gold_label="neutral",
                            premise=p, hypothesis="fixed hypothesis.")
        if p1 != p2:
            for stage in (StageKind.JOINT, StageKind.PTE_PREDICTOR):
                assert render_input(make(p1), stage) != render_input(make(p2), stage)

    def test_stage_marker_multiplicity(self):
        inst = Instance(id="m", task=Task.NLI, gold_label="neutral",
                        premise="clean premise.", hypothesis="clean hypothesis.",
                        gold_explanations=("plain explanation text",))
        pte_expl = render_input(inst, StageKind.PTE_EXPLAINER, label="neutral")
        etp_pred = render_input(inst, StageKind.ETP_PREDICTOR, explanation="plain explanation text")
        assert pte_expl.count(" Label: ") == 1
        assert etp_pred.count(" Explanation: ") == 1
        assert " Explanation: " not in render_input(inst, StageKind.PTE_PREDICTOR)
        assert " Label: " not in render_input(inst, StageKind.JOINT)
