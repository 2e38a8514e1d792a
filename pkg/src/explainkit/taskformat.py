"""Renders instances into per-stage input/target strings and parses model output.

The templates are the wire-visible contract: single spaces, no trailing
space, exact keyword prefixes. Parsing never throws on degenerate text;
degraded parses are flagged via ``clean_parse`` instead, because generation
output is untrusted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .corpus import Instance, NLI_LABELS, Task


class StageKind(str, Enum):
    JOINT = "JointStage"
    PTE_PREDICTOR = "PtEPredictor"
    PTE_EXPLAINER = "PtEExplainer"
    ETP_EXPLAINER = "EtPExplainer"
    ETP_PREDICTOR = "EtPPredictor"
    RTOL = "RtoL"


PREDICTOR_STAGES = frozenset({StageKind.PTE_PREDICTOR, StageKind.ETP_PREDICTOR, StageKind.RTOL})
EXPLAINER_STAGES = frozenset({StageKind.PTE_EXPLAINER, StageKind.ETP_EXPLAINER})


class TemplateError(ValueError):
    """Raised when a stage rendering is missing a required injected field."""


@dataclass(frozen=True)
class ParsedOutput:
    """A parsed generation. ``clean_parse`` is False whenever the raw string
    deviated from the stage's expected grammar (missing delimiter, label not
    in the vocabulary, empty text)."""

    raw: str
    label: Optional[str] = None
    explanation: Optional[str] = None
    clean_parse: bool = False


def label_vocabulary(inst: Instance) -> tuple[str, ...]:
    if inst.task is Task.NLI:
        return NLI_LABELS
    return inst.choices


def _task_body(inst: Instance) -> str:
    if inst.task is Task.NLI:
        return f"Premise: {inst.premise} Hypothesis: {inst.hypothesis}"
    choices = "".join(f" Choice: {c}" for c in inst.choices)
    return f"Question: {inst.question}{choices}"


def _prefix(inst: Instance) -> str:
    return "nli" if inst.task is Task.NLI else "cos"


def render_input(
    inst: Instance,
    stage: StageKind,
    *,
    label: Optional[str] = None,
    explanation: Optional[str] = None,
) -> str:
    """Render the exact input string a stage consumes.

    ``label`` is required for the PtE explainer (it conditions on a class);
    ``explanation`` is required for the EtP predictor and the
    explanation-only RtoL stage.
    """
    prefix = _prefix(inst)
    body = _task_body(inst)
    if stage is StageKind.JOINT or stage is StageKind.ETP_EXPLAINER:
        return f"explain {prefix} {body}"
    if stage is StageKind.PTE_PREDICTOR:
        return f"{prefix} {body}"
    if stage is StageKind.PTE_EXPLAINER:
        if label is None:
            raise TemplateError(f"{stage.value} requires an injected label")
        return f"explain {prefix} {body} Label: {label}"
    if stage is StageKind.ETP_PREDICTOR:
        if explanation is None:
            raise TemplateError(f"{stage.value} requires an injected explanation")
        return f"{prefix} {body} Explanation: {explanation}"
    if stage is StageKind.RTOL:
        if explanation is None:
            raise TemplateError(f"{stage.value} requires an injected explanation")
        if inst.task is Task.NLI:
            return f"nli Explanation: {explanation}"
        choices = "".join(f" Choice: {c}" for c in inst.choices)
        return f"cos Question-free.{choices} Explanation: {explanation}"
    raise TemplateError(f"unknown stage {stage!r}")


def render_target(inst: Instance, stage: StageKind) -> str:
    """Render the training target for a stage: label, explanation, or both."""
    if stage in PREDICTOR_STAGES:
        return inst.gold_label
    if not inst.gold_explanations:
        raise TemplateError(f"{inst.id}: stage {stage.value} needs a gold explanation")
    explanation = inst.gold_explanations[0]
    if stage is StageKind.JOINT:
        return f"{inst.gold_label} explanation {explanation}"
    return explanation


# First standalone occurrence of the token "explanation"; first-occurrence so
# explanations that themselves contain the word stay intact.
_JOINT_DELIMITER = re.compile(r"(?:^|\s)explanation(?:\s|$)")


def parse_output(raw: str, stage: StageKind, label_vocab: Sequence[str]) -> ParsedOutput:
    """Parse an untrusted generation back into label/explanation fields.

    Labels are matched against ``label_vocab`` case-insensitively after
    trimming; a match is canonicalized to the vocabulary spelling, anything
    else is kept verbatim with ``clean_parse=False``.
    """
    if stage in EXPLAINER_STAGES:
        return ParsedOutput(raw=raw, explanation=raw, clean_parse=bool(raw.strip()))

    by_lower = {v.lower(): v for v in label_vocab}

    def resolve(text: str) -> tuple[str, bool]:
        trimmed = text.strip()
        canonical = by_lower.get(trimmed.lower())
        if canonical is not None:
            return canonical, True
        return trimmed, False

    if stage in PREDICTOR_STAGES:
        label, ok = resolve(raw)
        return ParsedOutput(raw=raw, label=label, clean_parse=ok)

    # Joint: "{label} explanation {text}", split on the first standalone
    # "explanation" token; the right part is kept verbatim.
    match = _JOINT_DELIMITER.search(raw)
    if match is None:
        label, _ = resolve(raw)
        return ParsedOutput(raw=raw, label=label, explanation="", clean_parse=False)
    label, ok = resolve(raw[: match.start()])
    explanation = raw[match.end():]
    return ParsedOutput(
        raw=raw,
        label=label,
        explanation=explanation,
        clean_parse=ok and bool(explanation),
    )
