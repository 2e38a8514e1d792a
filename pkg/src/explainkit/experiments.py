"""Experiment orchestration: structure x budget grids, the explanation-only
label-informedness protocol, and efficiency comparison reports.

A grid cell is one (structure, budget, seed) run: sample the budget, compile
pairs, train each stage, infer on the evaluation splits, score, and write
reproducible artifacts (pairs/, generations/, report.json, ledger.json).
Failed cells are recorded, never silently averaged.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .backend import Backend, GenerationConfig, Ledger
from .corpus import Dataset, DatasetView, sample_budget
from .metrics import EvalPair, MetricReport, accuracy, evaluate, recover_ratio
from .pipelines import (
    InferenceResult,
    StructureKind,
    StructureSpec,
    TrainingPair,
    compile_training_pairs,
    explainer_training_pairs,
    pairs_by_stage,
    run_inference,
    semi_label,
    semi_labeled_predictor_pairs,
    structure,
)
from .taskformat import StageKind, label_vocabulary, parse_output, render_input

log = logging.getLogger(__name__)

GOLD_SOURCE = "gold"


@dataclass(frozen=True)
class ExperimentPlan:
    dataset: str
    budgets: tuple[float, ...]
    structures: tuple[StructureKind, ...]
    seeds: tuple[int, ...]
    repetitions: int = 3
    decode: GenerationConfig = field(default_factory=GenerationConfig)
    refs_policy: str = "first2"

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed required")

    def effective_seeds(self) -> tuple[int, ...]:
        """One seed per repetition; extends the list deterministically when
        fewer seeds than repetitions were given."""
        seeds = list(self.seeds)
        while len(seeds) < self.repetitions:
            seeds.append(seeds[-1] + 1)
        return tuple(seeds[: self.repetitions])

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "ExperimentPlan":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        decode = GenerationConfig(**raw.get("decode", {}))
        return cls(
            dataset=raw["dataset"],
            budgets=tuple(raw["budgets"]),
            structures=tuple(StructureKind(s) for s in raw["structures"]),
            seeds=tuple(raw.get("seeds", [13])),
            repetitions=int(raw.get("repetitions", 3)),
            decode=decode,
            refs_policy=raw.get("refs_policy", "first2"),
        )

    def to_record(self) -> dict:
        return {
            "dataset": self.dataset,
            "budgets": list(self.budgets),
            "structures": [s.value for s in self.structures],
            "seeds": list(self.seeds),
            "repetitions": self.repetitions,
            "decode": {
                "max_new_tokens": self.decode.max_new_tokens,
                "decode": self.decode.decode,
                "stop_on_eos": self.decode.stop_on_eos,
            },
            "refs_policy": self.refs_policy,
        }


@dataclass(frozen=True)
class RunRecord:
    cell_id: str
    structure: StructureKind
    budget: float
    seed: int
    reports: Mapping[str, MetricReport]
    ledger: Ledger
    artifact_dir: Optional[Path] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def build_eval_pairs(
    results: Sequence[InferenceResult],
    ds: Dataset,
    refs_policy: str = "first2",
) -> list[EvalPair]:
    """Join inference results with gold references.

    ``first2`` keeps the first two gold explanations per instance (the
    evaluation convention for 3-reference dev/test sets); ``all`` keeps
    every gold explanation.
    """
    if refs_policy not in ("first2", "all"):
        raise ValueError(f"unknown refs policy {refs_policy!r}")
    by_id = {inst.id: inst for inst in ds.instances}
    pairs = []
    for result in results:
        inst = by_id[result.id]
        refs = inst.gold_explanations
        if refs_policy == "first2":
            refs = refs[:2]
        pairs.append(
            EvalPair(
                id=result.id,
                candidate=result.generated_explanation,
                references=tuple(refs),
                gold_label=inst.gold_label,
                predicted_label=result.predicted_label,
            )
        )
    return pairs


def _train_stage(
    backend: Backend,
    spec_kind: StructureKind,
    stage: StageKind,
    pairs: Sequence[TrainingPair],
    ledger: Ledger,
    hyper: Optional[Mapping] = None,
) -> Backend:
    """Train one stage and return the backend view bound to the trained state."""
    start = backend.now()
    job = backend.train(pairs, hyper)
    status = backend.wait(job)
    if status.state != "done":
        raise RuntimeError(f"training failed for {stage.value}: {status.detail}")
    ledger.record(
        spec_kind.value,
        stage.value,
        calls=1,
        wall_time=backend.now() - start,
        pairs_used=len(pairs),
    )
    return backend.for_state(status.trained_state)


def run_structure(
    spec: StructureSpec,
    view: DatasetView,
    eval_splits: Mapping[str, Dataset],
    backend: Backend,
    decode: GenerationConfig,
    ledger: Ledger,
    refs_policy: str = "first2",
    hyper: Optional[Mapping] = None,
) -> tuple[dict[str, MetricReport], dict[str, list[InferenceResult]], list[TrainingPair]]:
    """Train one structure on a budget view and evaluate it on each split.

    For etp_sl the explainer is trained before semi-labeling, so generated
    predictor inputs come from the trained explainer state.
    """
    stage_backends: dict[StageKind, Backend] = {}
    if spec.kind is StructureKind.ETP_SL:
        explainer_pairs = explainer_training_pairs(view, StageKind.ETP_EXPLAINER)
        trained = _train_stage(backend, spec.kind, StageKind.ETP_EXPLAINER, explainer_pairs, ledger, hyper)
        stage_backends[StageKind.ETP_EXPLAINER] = trained
        generated = semi_label(view, trained, decode, ledger=ledger)
        predictor_pairs = semi_labeled_predictor_pairs(view, generated)
        stage_backends[StageKind.ETP_PREDICTOR] = _train_stage(
            backend, spec.kind, StageKind.ETP_PREDICTOR, predictor_pairs, ledger, hyper
        )
        pairs = explainer_pairs + predictor_pairs
    else:
        pairs = compile_training_pairs(view, spec)
        for stage, stage_pairs in pairs_by_stage(pairs).items():
            stage_backends[stage] = _train_stage(backend, spec.kind, stage, stage_pairs, ledger, hyper)

    reports: dict[str, MetricReport] = {}
    generations: dict[str, list[InferenceResult]] = {}
    for split_name, split_ds in eval_splits.items():
        results = run_inference(
            split_ds, spec, backend, decode, ledger=ledger, stage_backends=stage_backends
        )
        eval_pairs = build_eval_pairs(results, split_ds, refs_policy)
        n_failures = sum(1 for r in results if not r.clean_parse)
        reports[split_name] = evaluate(eval_pairs, n_parse_failures=n_failures)
        generations[split_name] = results
    return reports, generations, pairs


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_pairs(pairs: Sequence[TrainingPair], out_dir: Path) -> dict[str, Path]:
    """One line-delimited {stage, input, target, provenance} file per stage."""
    out: dict[str, Path] = {}
    for stage, stage_pairs in pairs_by_stage(pairs).items():
        path = out_dir / f"{stage.value}.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as f:
            for pair in stage_pairs:
                f.write(
                    json.dumps(
                        {
                            "stage": pair.stage.value,
                            "input": pair.input,
                            "target": pair.target,
                            "provenance": pair.provenance.value,
                        },
                        ensure_ascii=False,
                        separators=(",", ":"),
                    )
                )
                f.write("\n")
        out[stage.value] = path
    return out


def write_generations(results: Sequence[InferenceResult], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for r in results:
            f.write(
                json.dumps(
                    {
                        "id": r.id,
                        "predicted_label": r.predicted_label,
                        "generated_explanation": r.generated_explanation,
                        "clean_parse": r.clean_parse,
                        "per_stage_raw": {k.value: v for k, v in r.per_stage_raw.items()},
                    },
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
            )
            f.write("\n")


def run_grid(
    plan: ExperimentPlan,
    datasets: Mapping[str, Dataset],
    backend: Backend,
    out_dir: Optional[Union[str, Path]] = None,
    hyper: Optional[Mapping] = None,
) -> list[RunRecord]:
    """Run the full structure x budget x repetition grid.

    ``datasets`` maps split names to data; evaluation runs on every non-train
    split present (CosE-style datasets simply omit "test"). A failing cell is
    recorded with its error and the grid continues.
    """
    train = datasets.get("train")
    if train is None:
        raise ValueError("datasets must include a 'train' split")
    eval_splits = {name: ds for name, ds in datasets.items() if name != "train"}
    if not eval_splits:
        raise ValueError("datasets must include at least one evaluation split")
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        _write_json(out_path / "plan.json", plan.to_record())

    records: list[RunRecord] = []
    for kind in plan.structures:
        for budget in plan.budgets:
            for seed in plan.effective_seeds():
                cell_id = f"{plan.dataset}_{kind.value}_b{budget:g}_s{seed}"
                ledger = Ledger()
                cell_dir = out_path / cell_id if out_path is not None else None
                try:
                    view = sample_budget(train, budget, seed)
                    reports, generations, pairs = run_structure(
                        structure(kind), view, eval_splits, backend, plan.decode, ledger,
                        refs_policy=plan.refs_policy, hyper=hyper,
                    )
                except Exception as exc:  # deliberate: a cell failure must not kill the grid
                    log.exception("cell %s failed", cell_id)
                    records.append(
                        RunRecord(
                            cell_id=cell_id,
                            structure=kind,
                            budget=budget,
                            seed=seed,
                            reports={},
                            ledger=ledger,
                            artifact_dir=cell_dir,
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    )
                    continue
                if cell_dir is not None:
                    write_pairs(pairs, cell_dir / "pairs")
                    for split_name, results in generations.items():
                        write_generations(results, cell_dir / "generations" / f"{split_name}.jsonl")
                    _write_json(
                        cell_dir / "report.json",
                        {split: report.to_record() for split, report in reports.items()},
                    )
                    _write_json(cell_dir / "ledger.json", ledger.to_records())
                records.append(
                    RunRecord(
                        cell_id=cell_id,
                        structure=kind,
                        budget=budget,
                        seed=seed,
                        reports=reports,
                        ledger=ledger,
                        artifact_dir=cell_dir,
                    )
                )
    if out_path is not None:
        _write_json(out_path / "summary.json", summarize(records))
        (out_path / "summary.tsv").write_text(summary_tsv(records), encoding="utf-8")
        (out_path / "summary.txt").write_text(render_summary_table(records), encoding="utf-8")
    return records


_METRIC_COLUMNS = ("accuracy", "bleu", "meteor", "rouge_l")


def summarize(records: Sequence[RunRecord]) -> list[dict]:
    """Average metric values per (structure, budget, split) over repetitions."""
    cells: dict[tuple[str, float, str], list[MetricReport]] = {}
    failures: dict[tuple[str, float], int] = {}
    for record in records:
        key_base = (record.structure.value, record.budget)
        if record.failed:
            failures[key_base] = failures.get(key_base, 0) + 1
            continue
        for split, report in record.reports.items():
            cells.setdefault((*key_base, split), []).append(report)
    rows = []
    for (structure_name, budget, split), reports in sorted(cells.items()):
        row = {
            "structure": structure_name,
            "budget": budget,
            "split": split,
            "repetitions": len(reports),
            "failed": failures.get((structure_name, budget), 0),
        }
        for metric in _METRIC_COLUMNS:
            row[metric] = sum(getattr(r, metric) for r in reports) / len(reports)
        rows.append(row)
    for (structure_name, budget), count in sorted(failures.items()):
        if not any(r["structure"] == structure_name and r["budget"] == budget for r in rows):
            rows.append(
                {
                    "structure": structure_name,
                    "budget": budget,
                    "split": None,
                    "repetitions": 0,
                    "failed": count,
                }
            )
    return rows


def summary_tsv(records: Sequence[RunRecord]) -> str:
    header = ["structure", "budget", "split", "repetitions", "failed", *_METRIC_COLUMNS]
    lines = ["\t".join(header)]
    for row in summarize(records):
        lines.append(
            "\t".join(
                str(row.get(col, "")) if row.get(col) is not None else "" for col in header
            )
        )
    return "\n".join(lines) + "\n"


def render_summary_table(records: Sequence[RunRecord]) -> str:
    """Human-readable table in the Acc/BLEU/METEOR/Rouge-L column layout."""
    rows = summarize(records)
    header = f"{'Budget':>7} {'Model':<8} {'Split':<6} {'Acc':>7} {'BLEU':>7} {'METEOR':>7} {'Rouge-L':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        if row.get("split") is None:
            lines.append(f"{row['budget']:>6g}% {row['structure']:<8} {'(all repetitions failed)'}")
            continue
        lines.append(
            f"{row['budget']:>6g}% {row['structure']:<8} {row['split']:<6} "
            f"{100 * row['accuracy']:>7.2f} {row['bleu']:>7.2f} "
            f"{100 * row['meteor']:>7.2f} {100 * row['rouge_l']:>8.2f}"
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class InformednessRow:
    source: str
    accuracy: float
    recover_percent: float


def label_informedness(
    ds: Dataset,
    explanation_sources: Mapping[str, Mapping[str, str]],
    backend: Backend,
    decode: Optional[GenerationConfig] = None,
    eval_ds: Optional[Dataset] = None,
    gold_source: str = GOLD_SOURCE,
    hyper: Optional[Mapping] = None,
) -> list[InformednessRow]:
    """Explanation-only label prediction, per explanation source.

    Trains one explanation-to-label model per source, evaluates its accuracy,
    and reports each source's accuracy as a percentage of the gold source's
    (the gold row is exactly 100%).
    """
    if gold_source not in explanation_sources:
        raise ValueError(f"sources must include the gold source {gold_source!r}")
    eval_ds = eval_ds or ds
    decode = decode or GenerationConfig()

    accuracies: dict[str, float] = {}
    for name, source in explanation_sources.items():
        missing = [inst.id for inst in ds.instances if inst.id not in source]
        missing += [inst.id for inst in eval_ds.instances if inst.id not in source]
        if missing:
            raise ValueError(f"source {name!r} missing ids: {missing[:5]}")
        pairs = [
            TrainingPair(
                stage=StageKind.RTOL,
                input=render_input(inst, StageKind.RTOL, explanation=source[inst.id]),
                target=inst.gold_label,
                source_id=inst.id,
            )
            for inst in ds.instances
        ]
        job = backend.train(pairs, hyper)
        status = backend.wait(job)
        if status.state != "done":
            raise RuntimeError(f"informedness training failed for {name!r}: {status.detail}")
        trained = backend.for_state(status.trained_state)
        inputs = [
            render_input(inst, StageKind.RTOL, explanation=source[inst.id])
            for inst in eval_ds.instances
        ]
        outputs = trained.generate(inputs, decode)
        eval_pairs = [
            EvalPair(
                id=inst.id,
                candidate="",
                gold_label=inst.gold_label,
                predicted_label=parse_output(out, StageKind.RTOL, label_vocabulary(inst)).label or "",
            )
            for inst, out in zip(eval_ds.instances, outputs)
        ]
        accuracies[name] = accuracy(eval_pairs)

    gold_acc = accuracies[gold_source]
    rows = [InformednessRow(gold_source, gold_acc, recover_ratio(gold_acc, gold_acc))]
    for name, acc in accuracies.items():
        if name == gold_source:
            continue
        rows.append(InformednessRow(name, acc, recover_ratio(acc, gold_acc)))
    return rows


def render_informedness_table(rows: Sequence[InformednessRow]) -> str:
    lines = [f"{'Source':<12} {'Acc':>7} {'Recover':>9}"]
    for row in rows:
        lines.append(f"{row.source:<12} {100 * row.accuracy:>7.2f} {row.recover_percent:>8.2f}%")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class EfficiencyRow:
    structure: str
    wall_time: float
    pairs_trained: int
    generate_calls: int
    semi_labeling_time: float


def efficiency_report(records: Sequence[RunRecord]) -> list[EfficiencyRow]:
    """Per-structure totals of wall time, trained pairs, and generate calls,
    with the semi-labeling stage itemized for etp_sl."""
    if not records:
        raise ValueError("efficiency report requires at least one record")
    by_structure: dict[str, list[RunRecord]] = {}
    for record in records:
        if not record.failed:
            by_structure.setdefault(record.structure.value, []).append(record)
    rows = []
    for structure_name, recs in sorted(by_structure.items()):
        wall = 0.0
        pairs = 0
        calls = 0
        semi = 0.0
        for rec in recs:
            totals = rec.ledger.total(structure_name)
            wall += totals.wall_time
            pairs += totals.pairs_used
            calls += totals.calls
            semi += sum(
                e.wall_time
                for e in rec.ledger.entries
                if e.structure == structure_name and e.stage == "SemiLabeling"
            )
        rows.append(EfficiencyRow(structure_name, wall, pairs, calls, semi))
    return rows


def render_efficiency_table(rows: Sequence[EfficiencyRow]) -> str:
    lines = [f"{'Model':<8} {'Wall time':>11} {'Pairs':>8} {'Calls':>7} {'Semi-label':>11}"]
    for row in rows:
        lines.append(
            f"{row.structure:<8} {row.wall_time:>11.4f} {row.pairs_trained:>8} "
            f"{row.generate_calls:>7} {row.semi_labeling_time:>11.4f}"
        )
    return "\n".join(lines) + "\n"
