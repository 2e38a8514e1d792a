"""Shared fixtures: deterministic synthetic datasets and mock backends."""

from __future__ import annotations

import random

import pytest

from explainkit.corpus import Dataset, Instance, Split, Task

NOUNS = ["dog", "bird", "woman", "child", "artist", "driver", "duck", "runner"]
VERBS = ["walking", "painting", "singing", "running", "sleeping", "jumping", "reading", "swimming"]
PLACES = ["in the park", "on the beach", "near the river", "at the market",
          "under a tree", "on the stage", "by the window", "in the garden"]
NLI_LABEL_CYCLE = ["entailment", "neutral", "contradiction"]
CQA_CHOICE_BANK = ["kitchen", "library", "forest", "office", "garage", "museum", "harbor", "meadow"]


def make_nli_instance(i: int, rng: random.Random, n_explanations: int = 1) -> Instance:
    noun = NOUNS[rng.randrange(len(NOUNS))]
    verb = VERBS[rng.randrange(len(VERBS))]
    place = PLACES[rng.randrange(len(PLACES))]
    label = NLI_LABEL_CYCLE[i % 3]
    explanations = tuple(
        f"not every {noun} is {verb} {place} case {i} variant {k}"
        for k in range(n_explanations)
    )
    return Instance(
        id=f"nli-{i:05d}",
        task=Task.NLI,
        gold_label=label,
        premise=f"a {noun} number {i} is {verb} {place}.",
        hypothesis=f"someone is {verb} somewhere {i}.",
        gold_explanations=explanations,
    )


def make_nli_dataset(
    n: int,
    split: str = "train",
    seed: int = 0,
    n_explanations: int = 1,
    name: str = "synth-nli",
) -> Dataset:
    rng = random.Random(seed)
    return Dataset(
        name=name,
        split=Split(split),
        instances=tuple(make_nli_instance(i, rng, n_explanations) for i in range(n)),
    )


def make_cqa_instance(i: int, rng: random.Random, n_choices: int = 3) -> Instance:
    start = rng.randrange(len(CQA_CHOICE_BANK) - n_choices + 1)
    choices = tuple(CQA_CHOICE_BANK[start : start + n_choices])
    answer = choices[i % n_choices]
    return Instance(
        id=f"cqa-{i:05d}",
        task=Task.CQA,
        gold_label=answer,
        question=f"where would item {i} most likely be found?",
        choices=choices,
        gold_explanations=(f"item {i} belongs in the {answer} by common sense",),
    )


def make_cqa_dataset(n: int, split: str = "train", seed: int = 0, n_choices: int = 3) -> Dataset:
    rng = random.Random(seed)
    return Dataset(
        name="synth-cqa",
        split=Split(split),
        instances=tuple(make_cqa_instance(i, rng, n_choices) for i in range(n)),
    )


@pytest.fixture
def nli_train() -> Dataset:
    return make_nli_dataset(10, split="train", seed=11)


@pytest.fixture
def nli_dev() -> Dataset:
    return make_nli_dataset(12, split="dev", seed=23, n_explanations=2)


@pytest.fixture
def cqa_train() -> Dataset:
    return make_cqa_dataset(9, split="train", seed=5)
