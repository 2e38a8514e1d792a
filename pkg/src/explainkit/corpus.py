"""Canonical data model, dataset ingestion, explanation-budget sampling, and statistics.

One internal schema (:class:`Instance`) backs every task; adapters translate the
source CSV layouts into it. Datasets round-trip losslessly through a
line-delimited canonical format, and budget views are seeded permutation
prefixes so that smaller budgets are always subsets of larger ones.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

log = logging.getLogger(__name__)

NLI_LABELS = ("entailment", "neutral", "contradiction")

MAX_EXPLANATIONS = 3


class Task(str, Enum):
    NLI = "nli"
    CQA = "cqa"


class Split(str, Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


class CorpusError(ValueError):
    """Raised for invalid instances, datasets, or ingestion inputs."""


@dataclass(frozen=True)
class Instance:
    """One task example: input fields, a gold label, and 0-3 gold explanations.

    NLI instances carry premise/hypothesis; CQA instances carry a question and
    3 or 5 answer choices, with the gold label equal to one of the choices.
    """

    id: str
    task: Task
    gold_label: str
    premise: str = ""
    hypothesis: str = ""
    question: str = ""
    choices: tuple[str, ...] = ()
    gold_explanations: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise CorpusError("instance id must be non-empty")
        if not self.gold_label:
            raise CorpusError(f"{self.id}: gold_label must be non-empty")
        if len(self.gold_explanations) > MAX_EXPLANATIONS:
            raise CorpusError(
                f"{self.id}: at most {MAX_EXPLANATIONS} gold explanations allowed"
            )
        for e in self.gold_explanations:
            if not e.strip():
                raise CorpusError(f"{self.id}: empty explanation entry")
        if self.task is Task.NLI:
            if not self.premise or not self.hypothesis:
                raise CorpusError(f"{self.id}: NLI requires premise and hypothesis")
            if self.question or self.choices:
                raise CorpusError(f"{self.id}: NLI instance must not carry question/choices")
            if self.gold_label not in NLI_LABELS:
                raise CorpusError(
                    f"{self.id}: unknown NLI label {self.gold_label!r}"
                )
        else:
            if not self.question:
                raise CorpusError(f"{self.id}: CQA requires a question")
            if self.premise or self.hypothesis:
                raise CorpusError(f"{self.id}: CQA instance must not carry premise/hypothesis")
            if len(self.choices) not in (3, 5):
                raise CorpusError(
                    f"{self.id}: CQA requires 3 or 5 choices, got {len(self.choices)}"
                )
            if self.gold_label not in self.choices:
                raise CorpusError(
                    f"{self.id}: answer {self.gold_label!r} not among choices"
                )

    def input_text(self) -> str:
        """Raw input text used for dataset statistics (premise+hypothesis, or question)."""
        if self.task is Task.NLI:
            return f"{self.premise} {self.hypothesis}"
        return self.question


@dataclass(frozen=True)
class Dataset:
    name: str
    split: Split
    instances: tuple[Instance, ...]

    def __post_init__(self):
        seen = set()
        for inst in self.instances:
            if inst.id in seen:
                raise CorpusError(f"duplicate instance id {inst.id!r} in {self.name}")
            seen.add(inst.id)
            if self.split is Split.TRAIN and len(inst.gold_explanations) > 1:
                raise CorpusError(
                    f"{inst.id}: training instances carry at most one explanation"
                )

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def by_id(self, instance_id: str) -> Instance:
        for inst in self.instances:
            if inst.id == instance_id:
                return inst
        raise KeyError(instance_id)


@dataclass(frozen=True)
class DatasetView:
    """A seeded budget view: which instances expose explanations vs labels only."""

    base: Dataset
    budget_percent: float
    seed: int
    explained_ids: frozenset[str]

    def explained_instances(self) -> list[Instance]:
        return [i for i in self.base.instances if i.id in self.explained_ids]

    def label_only_instances(self) -> list[Instance]:
        return [i for i in self.base.instances if i.id not in self.explained_ids]

    @property
    def n_explained(self) -> int:
        return len(self.explained_ids)

    @property
    def n_label_only(self) -> int:
        return len(self.base.instances) - len(self.explained_ids)


@dataclass(frozen=True)
class DatasetStats:
    count: int
    mean_input_tokens: float
    sd_input_tokens: float
    mean_expl_tokens: float
    sd_expl_tokens: float


@dataclass(frozen=True)
class RowError:
    row: int
    reason: str


@dataclass(frozen=True)
class CoseMapping:
    """Column mapping for CosE-style CSVs, whose distributed layouts vary.

    ``choices`` is either a sequence of column names (one per choice) or a
    single column name holding all choices joined by ``choices_sep``.
    """

    question: str = "question"
    choices: Union[tuple[str, ...], str] = ("choice_0", "choice_1", "choice_2")
    answer: str = "answer"
    explanation: str = "explanation"
    id: Optional[str] = None
    choices_sep: str = "|"

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "CoseMapping":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(raw.get("choices"), list):
            raw["choices"] = tuple(raw["choices"])
        return cls(**raw)


# Canonical record keys, in serialization order.
_CANONICAL_KEYS = ("id", "task", "premise", "hypothesis", "question", "choices", "label", "explanations")


def instance_to_record(inst: Instance) -> dict:
    record: dict = {"id": inst.id, "task": inst.task.value}
    if inst.task is Task.NLI:
        record["premise"] = inst.premise
        record["hypothesis"] = inst.hypothesis
    else:
        record["question"] = inst.question
        record["choices"] = list(inst.choices)
    record["label"] = inst.gold_label
    record["explanations"] = list(inst.gold_explanations)
    return record


def instance_from_record(record: Mapping) -> Instance:
    return Instance(
        id=str(record["id"]),
        task=Task(record["task"]),
        gold_label=record["label"],
        premise=record.get("premise", ""),
        hypothesis=record.get("hypothesis", ""),
        question=record.get("question", ""),
        choices=tuple(record.get("choices") or ()),
        gold_explanations=tuple(record.get("explanations") or ()),
    )


def export_jsonl(ds: Dataset, path: Union[str, Path]) -> None:
    """Write the canonical line-delimited form; byte-identical for equal datasets."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for inst in ds.instances:
            f.write(json.dumps(instance_to_record(inst), ensure_ascii=False, separators=(",", ":")))
            f.write("\n")


def ingest_with_report(
    path: Union[str, Path],
    format: str,
    split: Union[str, Split],
    *,
    name: Optional[str] = None,
    mapping: Optional[CoseMapping] = None,
) -> tuple[Dataset, list[RowError]]:
    """Parse a source file into a Dataset, collecting per-row errors.

    Rows that fail validation (empty or unknown label, CQA answer not among
    the choices, malformed structure) are skipped and reported with their
    1-based row number; everything else becomes an :class:`Instance`.
    """
    path = Path(path)
    split = Split(split)
    name = name or path.stem
    if not path.exists():
        raise CorpusError(f"no such file: {path}")

    readers = {
        "esnli_csv": _iter_esnli_csv,
        "cose_csv": lambda p, s: _iter_cose_csv(p, s, mapping or CoseMapping()),
        "canonical_jsonl": _iter_canonical_jsonl,
    }
    if format not in readers:
        raise CorpusError(f"unknown ingest format {format!r}")

    instances: list[Instance] = []
    errors: list[RowError] = []
    seen_ids: set[str] = set()
    for row_num, outcome in readers[format](path, split):
        if isinstance(outcome, RowError):
            errors.append(outcome)
            continue
        try:
            if split is Split.TRAIN and len(outcome.gold_explanations) > 1:
                raise CorpusError("training instances carry at most one explanation")
            if outcome.id in seen_ids:
                raise CorpusError(f"duplicate id {outcome.id!r}")
        except CorpusError as exc:
            errors.append(RowError(row_num, str(exc)))
            continue
        seen_ids.add(outcome.id)
        instances.append(outcome)

    for err in errors:
        log.warning("%s row %d rejected: %s", path.name, err.row, err.reason)
    return Dataset(name=name, split=split, instances=tuple(instances)), errors


def ingest(
    path: Union[str, Path],
    format: str,
    split: Union[str, Split],
    *,
    name: Optional[str] = None,
    mapping: Optional[CoseMapping] = None,
) -> Dataset:
    ds, _ = ingest_with_report(path, format, split, name=name, mapping=mapping)
    return ds


def _iter_esnli_csv(path: Path, split: Split):
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for i, row in enumerate(reader):
            row_num = i + 2  # header is row 1
            try:
                label = (row.get("gold_label") or "").strip()
                if not label:
                    raise CorpusError("empty gold_label")
                explanations = []
                for col in ("Explanation_1", "Explanation_2", "Explanation_3"):
                    text = (row.get(col) or "").strip()
                    if text:
                        explanations.append(text)
                inst_id = (row.get("pairID") or "").strip() or f"{split.value}-{i:06d}"
                yield row_num, Instance(
                    id=inst_id,
                    task=Task.NLI,
                    gold_label=label,
                    premise=(row.get("Sentence1") or "").strip(),
                    hypothesis=(row.get("Sentence2") or "").strip(),
                    gold_explanations=tuple(explanations),
                )
            except (CorpusError, KeyError) as exc:
                yield row_num, RowError(row_num, str(exc))


def _iter_cose_csv(path: Path, split: Split, mapping: CoseMapping):
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for i, row in enumerate(reader):
            row_num = i + 2
            try:
                if isinstance(mapping.choices, str):
                    raw = (row.get(mapping.choices) or "").strip()
                    choices = tuple(c.strip() for c in raw.split(mapping.choices_sep) if c.strip())
                else:
                    choices = tuple((row.get(col) or "").strip() for col in mapping.choices)
                answer = (row.get(mapping.answer) or "").strip()
                if not answer:
                    raise CorpusError("empty gold_label")
                explanation = (row.get(mapping.explanation) or "").strip()
                inst_id = ""
                if mapping.id:
                    inst_id = (row.get(mapping.id) or "").strip()
                yield row_num, Instance(
                    id=inst_id or f"{split.value}-{i:06d}",
                    task=Task.CQA,
                    gold_label=answer,
                    question=(row.get(mapping.question) or "").strip(),
                    choices=choices,
                    gold_explanations=(explanation,) if explanation else (),
                )
            except (CorpusError, KeyError) as exc:
                yield row_num, RowError(row_num, str(exc))


def _iter_canonical_jsonl(path: Path, split: Split):
    with path.open("r", encoding="utf-8") as f:
        for i, line in enumerate(f):
            row_num = i + 1
            if not line.strip():
                continue
            try:
                yield row_num, instance_from_record(json.loads(line))
            except (CorpusError, KeyError, json.JSONDecodeError, ValueError) as exc:
                yield row_num, RowError(row_num, str(exc))


def sample_budget(base: Dataset, budget_percent: float, seed: int) -> DatasetView:
    """Select the explanation budget: a seeded permutation prefix of the
    explanation-bearing ids.

    The prefix rule makes budgets nest: with an equal seed, the 10% set is a
    subset of the 30% set is a subset of the 100% set. The target size is
    floor(budget_percent/100 * |base|), capped at the number of instances
    that actually carry an explanation.
    """
    if not 0 < budget_percent <= 100:
        raise CorpusError(f"budget_percent must be in (0, 100], got {budget_percent}")
    bearing = [inst.id for inst in base.instances if inst.gold_explanations]
    k = min(math.floor(budget_percent / 100.0 * len(base.instances)), len(bearing))
    order = list(bearing)
    random.Random(seed).shuffle(order)
    return DatasetView(
        base=base,
        budget_percent=budget_percent,
        seed=seed,
        explained_ids=frozenset(order[:k]),
    )


def _mean(values: Sequence[int]) -> float:
    if not values:
        return float("nan")
    return sum(values) / len(values)


def _sample_sd(values: Sequence[int]) -> float:
    # Sample (n-1) standard deviation; a single observation has sd 0 by
    # convention here, and no observations are marked undefined (NaN).
    if not values:
        return float("nan")
    if len(values) == 1:
        return 0.0
    m = _mean(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / (len(values) - 1))


def compute_stats(ds: Dataset) -> DatasetStats:
    """Whitespace-token statistics over inputs and explanations."""
    input_counts = [len(inst.input_text().split()) for inst in ds.instances]
    expl_counts = [len(e.split()) for inst in ds.instances for e in inst.gold_explanations]
    return DatasetStats(
        count=len(ds.instances),
        mean_input_tokens=_mean(input_counts),
        sd_input_tokens=_sample_sd(input_counts),
        mean_expl_tokens=_mean(expl_counts),
        sd_expl_tokens=_sample_sd(expl_counts),
    )
