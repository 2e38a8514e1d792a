"""The four pipeline structures: training-pair compilation, inference, and
semi-labeling.

Each structure is a factorization of p(label, explanation | input) into
stages, and the factorization is embodied entirely as *which (input, target)
pairs each stage trains on* and *which generated text feeds which stage at
inference*:

* joint   - one stage emits "label explanation text"; trains on the n
            explained instances only.
* etp     - explain-then-predict; both stages need explanations, so both
            train on the n explained instances (the predictor sees gold
            explanations during training but generated ones at inference).
* pte     - predict-then-explain; the predictor trains on all m+n labeled
            instances, the explainer on the n explained ones.
* etp_sl  - etp whose predictor trains on explainer-generated explanations
            for all m+n instances (semi-labeling).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

from .backend import Backend, GenerationConfig, Ledger
from .corpus import Dataset, DatasetView, Instance
from .taskformat import (
    StageKind,
    label_vocabulary,
    parse_output,
    render_input,
    render_target,
)

SEMI_LABELING_STAGE = "SemiLabeling"


class StructureKind(str, Enum):
    JOINT = "joint"
    ETP = "etp"
    PTE = "pte"
    ETP_SL = "etp_sl"


_STAGE_ORDER: dict[StructureKind, tuple[StageKind, ...]] = {
    StructureKind.JOINT: (StageKind.JOINT,),
    StructureKind.ETP: (StageKind.ETP_EXPLAINER, StageKind.ETP_PREDICTOR),
    StructureKind.ETP_SL: (StageKind.ETP_EXPLAINER, StageKind.ETP_PREDICTOR),
    StructureKind.PTE: (StageKind.PTE_PREDICTOR, StageKind.PTE_EXPLAINER),
}


@dataclass(frozen=True)
class StructureSpec:
    """A structure's stages, in inference order."""

    kind: StructureKind
    stages: tuple[StageKind, ...]


def structure(kind) -> StructureSpec:
    kind = StructureKind(kind)
    return StructureSpec(kind=kind, stages=_STAGE_ORDER[kind])


class Provenance(str, Enum):
    GOLD = "gold"
    SEMI_LABELED = "semi_labeled"


@dataclass(frozen=True)
class TrainingPair:
    stage: StageKind
    input: str
    target: str
    source_id: str
    provenance: Provenance = Provenance.GOLD


@dataclass(frozen=True)
class InferenceResult:
    id: str
    predicted_label: str
    generated_explanation: str
    per_stage_raw: Mapping[StageKind, str]
    per_stage_input: Mapping[StageKind, str]
    clean_parse: bool


class PipelineError(ValueError):
    pass


def pairs_by_stage(pairs: Sequence[TrainingPair]) -> dict[StageKind, list[TrainingPair]]:
    grouped: dict[StageKind, list[TrainingPair]] = {}
    for pair in pairs:
        grouped.setdefault(pair.stage, []).append(pair)
    return grouped


def explainer_training_pairs(view: DatasetView, stage: StageKind) -> list[TrainingPair]:
    """Gold explainer pairs over the explained subset; shared verbatim by
    etp and etp_sl (their explainers are the same model)."""
    pairs = []
    for inst in view.explained_instances():
        label = inst.gold_label if stage is StageKind.PTE_EXPLAINER else None
        pairs.append(
            TrainingPair(
                stage=stage,
                input=render_input(inst, stage, label=label),
                target=render_target(inst, stage),
                source_id=inst.id,
            )
        )
    return pairs


def compile_training_pairs(
    view: DatasetView,
    spec: StructureSpec,
    backend: Optional[Backend] = None,
    decode: Optional[GenerationConfig] = None,
    ledger: Optional[Ledger] = None,
) -> list[TrainingPair]:
    """Compile the stage-wise training pairs a structure is allowed to see.

    With n explained and m label-only instances the emitted counts are:
    joint n; etp n+n; pte (m+n)+n; etp_sl n explainer pairs plus (m+n)
    semi-labeled predictor pairs. ``backend`` is required only for etp_sl,
    whose predictor inputs carry freshly generated explanations.

    Pairs are returned grouped by stage, in the structure's stage order,
    dataset order within a stage.
    """
    kind = spec.kind
    if kind is StructureKind.ETP_SL and backend is None:
        raise PipelineError("etp_sl compilation requires a backend for semi-labeling")

    if kind is StructureKind.JOINT:
        return [
            TrainingPair(
                stage=StageKind.JOINT,
                input=render_input(inst, StageKind.JOINT),
                target=render_target(inst, StageKind.JOINT),
                source_id=inst.id,
            )
            for inst in view.explained_instances()
        ]

    if kind is StructureKind.ETP:
        pairs = explainer_training_pairs(view, StageKind.ETP_EXPLAINER)
        for inst in view.explained_instances():
            pairs.append(
                TrainingPair(
                    stage=StageKind.ETP_PREDICTOR,
                    input=render_input(inst, StageKind.ETP_PREDICTOR, explanation=inst.gold_explanations[0]),
                    target=inst.gold_label,
                    source_id=inst.id,
                )
            )
        return pairs

    if kind is StructureKind.PTE:
        pairs = [
            TrainingPair(
                stage=StageKind.PTE_PREDICTOR,
                input=render_input(inst, StageKind.PTE_PREDICTOR),
                target=inst.gold_label,
                source_id=inst.id,
            )
            for inst in view.base.instances
        ]
        pairs.extend(explainer_training_pairs(view, StageKind.PTE_EXPLAINER))
        return pairs

    # etp_sl: gold explainer pairs, then predictor pairs over *generated*
    # explanations for the whole base dataset.
    pairs = explainer_training_pairs(view, StageKind.ETP_EXPLAINER)
    generated = semi_label(view, backend, decode or GenerationConfig(), ledger=ledger)
    pairs.extend(semi_labeled_predictor_pairs(view, generated))
    return pairs


def semi_labeled_predictor_pairs(view: DatasetView, generated: Mapping[str, str]) -> list[TrainingPair]:
    pairs = []
    for inst in view.base.instances:
        if inst.id not in generated:
            raise PipelineError(f"no generated explanation for instance {inst.id}")
        pairs.append(
            TrainingPair(
                stage=StageKind.ETP_PREDICTOR,
                input=render_input(inst, StageKind.ETP_PREDICTOR, explanation=generated[inst.id]),
                target=inst.gold_label,
                source_id=inst.id,
                provenance=Provenance.SEMI_LABELED,
            )
        )
    return pairs


def semi_label(
    view: DatasetView,
    backend: Backend,
    decode: Optional[GenerationConfig] = None,
    ledger: Optional[Ledger] = None,
) -> dict[str, str]:
    """Generate one explanation per instance of the whole base dataset.

    The generation time is a distinct ledger stage, attributed to etp_sl:
    it is the extra cost that structure pays over plain etp.
    """
    decode = decode or GenerationConfig()
    instances = view.base.instances
    inputs = [render_input(inst, StageKind.ETP_EXPLAINER) for inst in instances]
    start = backend.now()
    outputs = backend.generate(inputs, decode)
    elapsed = backend.now() - start
    if ledger is not None:
        ledger.record(
            StructureKind.ETP_SL.value,
            SEMI_LABELING_STAGE,
            calls=len(inputs),
            wall_time=elapsed,
        )
    return {inst.id: out for inst, out in zip(instances, outputs)}


def _generate_stage(
    backend: Backend,
    inputs: list[str],
    decode: GenerationConfig,
    *,
    ledger: Optional[Ledger],
    structure_name: str,
    stage: StageKind,
) -> list[str]:
    start = backend.now()
    outputs = backend.generate(inputs, decode)
    if ledger is not None:
        ledger.record(structure_name, stage.value, calls=len(inputs), wall_time=backend.now() - start)
    return outputs


def run_inference(
    ds: Dataset,
    spec: StructureSpec,
    backend: Backend,
    decode: Optional[GenerationConfig] = None,
    ledger: Optional[Ledger] = None,
    stage_backends: Optional[Mapping[StageKind, Backend]] = None,
) -> list[InferenceResult]:
    """Run a structure's inference flow over a dataset, in dataset order.

    The chaining is the point: etp feeds the explainer's *raw generated*
    output (never the gold explanation) into the predictor input, and pte
    renders the explainer input with the *predicted* (never the gold) label.
    Per-stage raw strings are retained for audit.
    """
    decode = decode or GenerationConfig()
    stage_backends = stage_backends or {}
    name = spec.kind.value
    instances = list(ds.instances)

    def stage_backend(stage: StageKind) -> Backend:
        return stage_backends.get(stage, backend)

    results: list[InferenceResult] = []
    if spec.kind is StructureKind.JOINT:
        inputs = [render_input(inst, StageKind.JOINT) for inst in instances]
        raws = _generate_stage(stage_backend(StageKind.JOINT), inputs, decode, ledger=ledger, structure_name=name, stage=StageKind.JOINT)
        for inst, rendered, raw in zip(instances, inputs, raws):
            parsed = parse_output(raw, StageKind.JOINT, label_vocabulary(inst))
            results.append(
                InferenceResult(
                    id=inst.id,
                    predicted_label=parsed.label or "",
                    generated_explanation=parsed.explanation or "",
                    per_stage_raw={StageKind.JOINT: raw},
                    per_stage_input={StageKind.JOINT: rendered},
                    clean_parse=parsed.clean_parse,
                )
            )
        return results

    if spec.kind in (StructureKind.ETP, StructureKind.ETP_SL):
        expl_inputs = [render_input(inst, StageKind.ETP_EXPLAINER) for inst in instances]
        expl_raws = _generate_stage(stage_backend(StageKind.ETP_EXPLAINER), expl_inputs, decode, ledger=ledger, structure_name=name, stage=StageKind.ETP_EXPLAINER)
        pred_inputs = [
            render_input(inst, StageKind.ETP_PREDICTOR, explanation=raw)
            for inst, raw in zip(instances, expl_raws)
        ]
        pred_raws = _generate_stage(stage_backend(StageKind.ETP_PREDICTOR), pred_inputs, decode, ledger=ledger, structure_name=name, stage=StageKind.ETP_PREDICTOR)
        for inst, e_in, e_raw, p_in, p_raw in zip(instances, expl_inputs, expl_raws, pred_inputs, pred_raws):
            parsed = parse_output(p_raw, StageKind.ETP_PREDICTOR, label_vocabulary(inst))
            results.append(
                InferenceResult(
                    id=inst.id,
                    predicted_label=parsed.label or "",
                    generated_explanation=e_raw,
                    per_stage_raw={StageKind.ETP_EXPLAINER: e_raw, StageKind.ETP_PREDICTOR: p_raw},
                    per_stage_input={StageKind.ETP_EXPLAINER: e_in, StageKind.ETP_PREDICTOR: p_in},
                    clean_parse=parsed.clean_parse and bool(e_raw.strip()),
                )
            )
        return results

    if spec.kind is StructureKind.PTE:
        pred_inputs = [render_input(inst, StageKind.PTE_PREDICTOR) for inst in instances]
        pred_raws = _generate_stage(stage_backend(StageKind.PTE_PREDICTOR), pred_inputs, decode, ledger=ledger, structure_name=name, stage=StageKind.PTE_PREDICTOR)
        labels = [
            parse_output(raw, StageKind.PTE_PREDICTOR, label_vocabulary(inst))
            for inst, raw in zip(instances, pred_raws)
        ]
        expl_inputs = [
            render_input(inst, StageKind.PTE_EXPLAINER, label=parsed.label or "")
            for inst, parsed in zip(instances, labels)
        ]
        expl_raws = _generate_stage(stage_backend(StageKind.PTE_EXPLAINER), expl_inputs, decode, ledger=ledger, structure_name=name, stage=StageKind.PTE_EXPLAINER)
        for inst, p_in, p_raw, parsed, e_in, e_raw in zip(instances, pred_inputs, pred_raws, labels, expl_inputs, expl_raws):
            results.append(
                InferenceResult(
                    id=inst.id,
                    predicted_label=parsed.label or "",
                    generated_explanation=e_raw,
                    per_stage_raw={StageKind.PTE_PREDICTOR: p_raw, StageKind.PTE_EXPLAINER: e_raw},
                    per_stage_input={StageKind.PTE_PREDICTOR: p_in, StageKind.PTE_EXPLAINER: e_in},
                    clean_parse=parsed.clean_parse and bool(e_raw.strip()),
                )
            )
        return results

    raise PipelineError(f"unknown structure {spec.kind!r}")


def generate_conditioned(
    inst: Instance,
    label: str,
    backend: Backend,
    decode: Optional[GenerationConfig] = None,
) -> str:
    """Generate an explanation conditioned on a caller-chosen class label."""
    vocab = label_vocabulary(inst)
    by_lower = {v.lower(): v for v in vocab}
    canonical = by_lower.get(label.strip().lower())
    if canonical is None:
        raise PipelineError(f"label {label!r} not in vocabulary {list(vocab)}")
    rendered = render_input(inst, StageKind.PTE_EXPLAINER, label=canonical)
    return backend.generate([rendered], decode or GenerationConfig())[0]
