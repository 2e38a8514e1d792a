"""Acceptance suite: one test per release criterion, at pinned tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion. The truly exhaustive ROUGE-L sweep (every pair with both sides up
to 8 tokens, ~97M pairs) is behind the ``slow`` marker; the default run
covers the full cross-product at total length <= 8 plus a seeded dense
sample at the full radius.
"""

import itertools
import json
import random
import time
from pathlib import Path

import pytest

from explainkit.backend import GenerationConfig, Ledger, MockBackend
from explainkit.corpus import Instance, NLI_LABELS, Task, sample_budget
from explainkit.experiments import label_informedness, run_structure
from explainkit.metrics import EvalPair, corpus_bleu, meteor, recover_ratio, rouge_l
from explainkit.pipelines import (
    Provenance,
    compile_training_pairs,
    pairs_by_stage,
    run_inference,
    structure,
)
from explainkit.taskformat import StageKind, parse_output, render_input, render_target

from conftest import make_nli_dataset

DATA = Path(__file__).parent / "data"
CONFIG = GenerationConfig()


def _passed(name):
    print(f"\nACCEPTANCE {name}: PASS")


def test_pair_count_factorizations():
    """n=100 explained, m=900 label-only: joint 100; etp 100+100;
    pte 1000+100; etp_sl 100 + 1000 semi-labeled. Zero tolerance, <1s."""
    started = time.perf_counter()
    base = make_nli_dataset(1000, seed=42)
    view = sample_budget(base, 10, seed=5)
    assert view.n_explained == 100 and view.n_label_only == 900

    mock = MockBackend.echo()
    counts = {}
    for kind in ("joint", "etp", "pte", "etp_sl"):
        grouped = pairs_by_stage(compile_training_pairs(view, structure(kind), backend=mock))
        counts[kind] = {stage.value: len(ps) for stage, ps in grouped.items()}

    assert counts["joint"] == {"JointStage": 100}
    assert counts["etp"] == {"EtPExplainer": 100, "EtPPredictor": 100}
    assert counts["pte"] == {"PtEPredictor": 1000, "PtEExplainer": 100}
    assert counts["etp_sl"] == {"EtPExplainer": 100, "EtPPredictor": 1000}

    sl_grouped = pairs_by_stage(compile_training_pairs(view, structure("etp_sl"), backend=mock))
    assert all(p.provenance is Provenance.SEMI_LABELED for p in sl_grouped[StageKind.ETP_PREDICTOR])
    assert time.perf_counter() - started < 1.0
    _passed("pair-count factorizations")


def test_budget_independence_of_pte_predictor():
    """PtE predictor pair multiset is byte-identical across 10/30/100%. <1s."""
    started = time.perf_counter()
    base = make_nli_dataset(300, seed=9)
    serialized = []
    for budget in (10, 30, 100):
        view = sample_budget(base, budget, seed=17)
        grouped = pairs_by_stage(compile_training_pairs(view, structure("pte")))
        serialized.append(
            "\n".join(
                json.dumps({"input": p.input, "target": p.target}, ensure_ascii=False)
                for p in grouped[StageKind.PTE_PREDICTOR]
            ).encode("utf-8")
        )
    assert serialized[0] == serialized[1] == serialized[2]
    assert time.perf_counter() - started < 1.0
    _passed("budget independence of the pte predictor")


def test_exposure_bias_audit():
    """1,000-instance fixture, traceable mock: every etp predictor input
    embeds the explainer's raw output verbatim (never the gold explanation);
    every pte explainer input embeds the predicted label. Zero violations."""
    ds = make_nli_dataset(1000, split="dev", seed=77)
    trace_table = {}
    label_cycle = list(NLI_LABELS)
    for k, inst in enumerate(ds.instances):
        trace_table[render_input(inst, StageKind.ETP_EXPLAINER)] = f"TRACE {inst.id} output"
        trace_table[render_input(inst, StageKind.PTE_PREDICTOR)] = label_cycle[(k + 1) % 3]
    mock = MockBackend.from_table(trace_table)

    etp_results = run_inference(ds, structure("etp"), mock, CONFIG)
    violations = 0
    for inst, result in zip(ds.instances, etp_results):
        raw = result.per_stage_raw[StageKind.ETP_EXPLAINER]
        expected_input = render_input(inst, StageKind.ETP_PREDICTOR, explanation=raw)
        if result.per_stage_input[StageKind.ETP_PREDICTOR] != expected_input:
            violations += 1
        if inst.gold_explanations[0] in result.per_stage_input[StageKind.ETP_PREDICTOR]:
            violations += 1
        if raw != f"TRACE {inst.id} output":
            violations += 1
    assert violations == 0

    pte_results = run_inference(ds, structure("pte"), mock, CONFIG)
    for inst, result in zip(ds.instances, pte_results):
        expected_input = render_input(inst, StageKind.PTE_EXPLAINER, label=result.predicted_label)
        if result.per_stage_input[StageKind.PTE_EXPLAINER] != expected_input:
            violations += 1
        if not result.per_stage_input[StageKind.PTE_EXPLAINER].endswith(
            f" Label: {result.predicted_label}"
        ):
            violations += 1
    assert violations == 0
    _passed("exposure-bias audit (1000 instances, zero violations)")


def test_joint_format_round_trip_10k():
    """parse(render_target(joint)) recovers (label, explanation) exactly on
    10,000 randomized instances, including explanations containing the word
    'explanation'. Zero failures."""
    rng = random.Random(1234)
    words = ["birds", "explanation", "a", "duck", "not", "all", "are", "the",
             "painting", "image", "portrait", "of", "explanations", "explain"]
    choices_bank = ["Seattle", "beach", "warm room", "puncture wound", "library", "talk"]
    failures = 0
    for i in range(10_000):
        expl = " ".join(rng.choice(words) for _ in range(rng.randint(1, 12)))
        if rng.random() < 0.5:
            inst = Instance(
                id=f"rt-{i}", task=Task.NLI,
                gold_label=rng.choice(NLI_LABELS),
                premise="p fixed.", hypothesis="h fixed.",
                gold_explanations=(expl,),
            )
            vocab = NLI_LABELS
        else:
            start = rng.randrange(len(choices_bank) - 2)
            vocab = tuple(choices_bank[start : start + 3])
            inst = Instance(
                id=f"rt-{i}", task=Task.CQA,
                gold_label=rng.choice(vocab),
                question="q fixed?", choices=vocab,
                gold_explanations=(expl,),
            )
        parsed = parse_output(render_target(inst, StageKind.JOINT), StageKind.JOINT, vocab)
        if parsed.label != inst.gold_label or parsed.explanation != expl:
            failures += 1
    assert failures == 0
    _passed("joint format round trip (10,000 instances, zero failures)")


def test_bleu_oracle_suite():
    """20 vectors frozen from the reference scorer, agreement within 1e-4;
    hand-derived 'a b c d e'/'a b c d' = 66.87 +/- 0.01."""
    data = json.loads((DATA / "bleu_oracle_vectors.json").read_text())
    cases = data["cases"]
    assert len(cases) == 20
    for case in cases:
        pairs = [
            EvalPair(id=f"{case['name']}-{i}", candidate=c, references=tuple(refs))
            for i, (c, refs) in enumerate(zip(case["candidates"], case["references"]))
        ]
        got = corpus_bleu(pairs)
        assert got == pytest.approx(case["expected"], abs=1e-4), case["name"]
    hand = corpus_bleu([EvalPair(id="h", candidate="a b c d e", references=("a b c d",))])
    assert hand == pytest.approx(66.87, abs=0.01)
    _passed("bleu oracle suite (20 vectors within 1e-4)")


def _lcs_oracle(a, b):
    # plainly-written textbook DP, independent of the metric kernels
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def _rouge_f1_oracle(a, b):
    lcs = _lcs_oracle(a, b)
    if lcs == 0 or not a or not b:
        return 0.0
    p, r = lcs / len(a), lcs / len(b)
    return 2 * p * r / (p + r)


def _assert_rouge_matches(a, b):
    cand = " ".join(a)
    ref = " ".join(b)
    got = rouge_l([EvalPair(id="x", candidate=cand, references=(ref,))])
    want = _rouge_f1_oracle(a, b)
    assert got == want, (a, b, got, want)


def test_rouge_l_exhaustive_small_domain():
    """ROUGE-L equals the brute-force LCS oracle, zero tolerance: exhaustive
    over every ordered pair with total length <= 8 over a 3-symbol alphabet
    (83,653 pairs), plus 20,000 seeded pairs at the full <=8 x <=8 radius."""
    alphabet = ("a", "b", "c")
    strings_by_len = [
        [tuple()] if n == 0 else [s for s in itertools.product(alphabet, repeat=n)]
        for n in range(9)
    ]
    checked = 0
    for la in range(9):
        for lb in range(9 - la):
            for a in strings_by_len[la]:
                for b in strings_by_len[lb]:
                    _assert_rouge_matches(a, b)
                    checked += 1
    assert checked == 83_653

    rng = random.Random(99)
    for _ in range(20_000):
        a = tuple(rng.choice(alphabet) for _ in range(rng.randint(0, 8)))
        b = tuple(rng.choice(alphabet) for _ in range(rng.randint(0, 8)))
        _assert_rouge_matches(a, b)
    _passed("rouge-l vs brute-force LCS oracle (exhaustive small domain)")


@pytest.mark.slow
def test_rouge_l_exhaustive_full_radius():
    """Every ordered pair with each side up to 8 tokens over a 3-symbol
    alphabet (~96.8M pairs). Runs for on the order of an hour; the default
    suite covers the tractable exhaustive domain above."""
    alphabet = ("a", "b", "c")
    all_strings = [
        s
        for n in range(9)
        for s in ([tuple()] if n == 0 else itertools.product(alphabet, repeat=n))
    ]
    for a in all_strings:
        for b in all_strings:
            _assert_rouge_matches(a, b)
    _passed("rouge-l exhaustive full radius")


def test_meteor_formula_checks():
    """Identical single-token pair scores exactly 0.5; 'the cat sat'
    self-pair scores 0.98148 +/- 1e-4."""
    single = meteor([EvalPair(id="1", candidate="hello", references=("hello",))])
    assert single == 0.5
    triple = meteor([EvalPair(id="2", candidate="the cat sat", references=("the cat sat",))])
    assert triple == pytest.approx(0.98148, abs=1e-4)
    _passed("meteor formula checks")


def test_recover_ratio_published_table():
    """(90.31, 97.81)->92.33%, (61.54, 86.63)->71.04%, (57.99, 69.12)->83.89%,
    each +/- 0.01 percentage points."""
    for generated, gold, expected in [
        (90.31, 97.81, 92.33),
        (61.54, 86.63, 71.04),
        (57.99, 69.12, 83.89),
    ]:
        assert recover_ratio(generated, gold) == pytest.approx(expected, abs=0.01)
    _passed("recover-ratio arithmetic")


def test_oracle_end_to_end():
    """Perfect-oracle backend: all four structures reach accuracy 1.0 and
    BLEU 100.0 on a 200-instance fixture; gold-source label informedness
    recovers exactly 100%."""
    train = make_nli_dataset(200, split="train", seed=55)
    dev = make_nli_dataset(200, split="dev", seed=56, n_explanations=2)

    for kind in ("joint", "etp", "etp_sl", "pte"):
        backend = MockBackend.oracle(train, dev)
        ledger = Ledger()
        reports, _, _ = run_structure(
            structure(kind), sample_budget(train, 100, seed=1),
            {"dev": dev}, backend, CONFIG, ledger,
        )
        assert reports["dev"].accuracy == 1.0, kind
        assert reports["dev"].bleu == pytest.approx(100.0), kind

    gold = {inst.id: inst.gold_explanations[0] for inst in dev.instances}
    rows = label_informedness(dev, {"gold": gold}, MockBackend.oracle(dev))
    assert rows[0].accuracy == 1.0
    assert rows[0].recover_percent == 100.0
    _passed("oracle end-to-end (acc 1.0, BLEU 100.0, recover 100%)")


def test_ledger_identity_semi_labeling_cost():
    """Fixed-latency mock: total(etp_sl) - total(etp) is exactly |base|
    generation calls' worth of time."""
    train = make_nli_dataset(120, split="train", seed=66)
    dev = make_nli_dataset(30, split="dev", seed=67, n_explanations=2)
    latency = 1.0

    totals = {}
    for kind in ("etp", "etp_sl"):
        backend = MockBackend.oracle(train, dev, latency=latency)
        ledger = Ledger()
        run_structure(
            structure(kind), sample_budget(train, 50, seed=3),
            {"dev": dev}, backend, CONFIG, ledger,
        )
        totals[kind] = ledger.total(kind).wall_time

    assert totals["etp_sl"] - totals["etp"] == latency * len(train)
    _passed("ledger identity: semi-labeling costs exactly |base| calls")
