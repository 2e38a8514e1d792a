"""Classification accuracy and explanation-quality metrics.

corpus_bleu is corpus-level 4-gram BLEU with clipped precisions, brevity
penalty, and exponential smoothing of zero match counts, matching the
standard reference scorer (13a tokenization, per-segment max clip counts,
closest reference length with ties broken toward the shorter reference).
rouge_l is sentence-level LCS F1 averaged over the corpus, meteor the
classic exact+stem aligner with alpha=0.9, beta=3, gamma=0.5. Multi-reference
pairs take the max over references for the per-pair metrics.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from . import kernels
from .porter import stem
from .tokenizers import tokenize_13a

BLEU_ORDER = 4

METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5

# Matches the reference scorer's log floor for zero precisions.
_LOG_FLOOR = -9999999999

_ALIGN_NODE_CAP = 100_000


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class EvalPair:
    """One evaluated instance: generated text vs references, plus labels."""

    id: str
    candidate: str
    references: tuple[str, ...] = ()
    gold_label: str = ""
    predicted_label: str = ""


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    bleu: float
    rouge_l: float
    meteor: float
    n_evaluated: int
    n_parse_failures: int = 0

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise MetricError(f"accuracy out of range: {self.accuracy}")
        if not 0.0 <= self.bleu <= 100.0:
            raise MetricError(f"bleu out of range: {self.bleu}")
        if not 0.0 <= self.rouge_l <= 1.0:
            raise MetricError(f"rouge_l out of range: {self.rouge_l}")
        if not 0.0 <= self.meteor <= 1.0:
            raise MetricError(f"meteor out of range: {self.meteor}")
        if self.n_parse_failures > self.n_evaluated:
            raise MetricError("n_parse_failures exceeds n_evaluated")

    def to_record(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "bleu": self.bleu,
            "rouge_l": self.rouge_l,
            "meteor": self.meteor,
            "n_evaluated": self.n_evaluated,
            "n_parse_failures": self.n_parse_failures,
        }


def _require_pairs(pairs: Sequence[EvalPair], references_needed: bool = False) -> None:
    if not pairs:
        raise MetricError("metric requires a non-empty pair list")
    if references_needed:
        for pair in pairs:
            if not pair.references:
                raise MetricError(f"pair {pair.id!r} has no references")


def _normalize_label(label: str) -> str:
    return label.strip().lower()


def accuracy(pairs: Sequence[EvalPair]) -> float:
    """Fraction of pairs whose normalized predicted label equals the gold
    label; unparseable (empty) predictions count as wrong."""
    _require_pairs(pairs)
    hits = sum(
        1
        for p in pairs
        if p.gold_label and _normalize_label(p.predicted_label) == _normalize_label(p.gold_label)
    )
    return hits / len(pairs)


def _my_log(value: float) -> float:
    if value == 0.0:
        return _LOG_FLOOR
    return math.log(value)


def corpus_bleu(pairs: Sequence[EvalPair]) -> float:
    """Corpus-level BLEU on the 0-100 scale, exp smoothing for zero counts."""
    _require_pairs(pairs, references_needed=True)

    intern: dict[str, int] = {}

    def to_ids(tokens: list[str]) -> list[int]:
        return [intern.setdefault(t, len(intern)) for t in tokens]

    correct = [0] * BLEU_ORDER
    total = [0] * BLEU_ORDER
    sys_len = 0
    ref_len = 0
    for pair in pairs:
        cand_ids = to_ids(tokenize_13a(pair.candidate))
        ref_ids = [to_ids(tokenize_13a(r)) for r in pair.references]
        c, t, sl, rl = kernels.bleu_segment_stats(cand_ids, ref_ids, BLEU_ORDER)
        for n in range(BLEU_ORDER):
            correct[n] += c[n]
            total[n] += t[n]
        sys_len += sl
        ref_len += rl

    precisions = [0.0] * BLEU_ORDER
    smooth = 1.0
    for n in range(BLEU_ORDER):
        if total[n] == 0:
            break
        if correct[n] == 0:
            smooth *= 2.0
            precisions[n] = 100.0 / (smooth * total[n])
        else:
            precisions[n] = 100.0 * correct[n] / total[n]

    if sys_len < ref_len:
        brevity_penalty = math.exp(1 - ref_len / sys_len) if sys_len > 0 else 0.0
    else:
        brevity_penalty = 1.0
    score = brevity_penalty * math.exp(sum(_my_log(p) for p in precisions) / BLEU_ORDER)
    # exp(mean of identical logs) can land a few ULPs above 100
    return min(score, 100.0)


def _match_tokens(text: str) -> list[str]:
    return [t.lower() for t in tokenize_13a(text)]


def _lcs_f1(cand: Sequence[int], ref: Sequence[int]) -> float:
    if not cand or not ref:
        return 0.0
    lcs = kernels.lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def rouge_l(pairs: Sequence[EvalPair]) -> float:
    """Sentence-level ROUGE-L F1 (beta=1), max over references, averaged."""
    _require_pairs(pairs, references_needed=True)
    intern: dict[str, int] = {}

    def to_ids(text: str) -> list[int]:
        return [intern.setdefault(t, len(intern)) for t in _match_tokens(text)]

    score = 0.0
    for pair in pairs:
        cand = to_ids(pair.candidate)
        score += max(_lcs_f1(cand, to_ids(r)) for r in pair.references)
    return score / len(pairs)


def _stage_quotas(cand: list[str], ref: list[str]) -> tuple[dict[str, int], dict[str, int], list[str], list[str]]:
    """Match counts per class: exact word matches first, then stem matches
    over each side's leftovers. Counts are assignment-independent because
    equal words always share a stem."""
    cand_words = Counter(cand)
    ref_words = Counter(ref)
    exact = {w: min(c, ref_words[w]) for w, c in cand_words.items() if w in ref_words}
    cand_stems = [stem(w) for w in cand]
    ref_stems = [stem(w) for w in ref]
    rem_cand: Counter = Counter()
    for w, c in cand_words.items():
        rem_cand[stem(w)] += c - exact.get(w, 0)
    rem_ref: Counter = Counter()
    for w, c in ref_words.items():
        rem_ref[stem(w)] += c - exact.get(w, 0)
    stems = {
        s: min(c, rem_ref[s]) for s, c in rem_cand.items() if c > 0 and rem_ref.get(s, 0) > 0
    }
    return exact, stems, cand_stems, ref_stems


class _AlignmentSearch:
    """Finds the position assignment with the fewest chunks, given the
    per-class match quotas; falls back to the greedy in-order alignment
    when the search space exceeds the node cap."""

    def __init__(self, cand, ref, cand_stems, ref_stems, exact_quota, stem_quota):
        self.cand = cand
        self.ref = ref
        self.cand_stems = cand_stems
        self.ref_stems = ref_stems
        self.exact_quota = exact_quota
        self.stem_quota = stem_quota
        self.ref_by_word: dict[str, list[int]] = {}
        self.ref_by_stem: dict[str, list[int]] = {}
        for j, w in enumerate(ref):
            self.ref_by_word.setdefault(w, []).append(j)
        for j, s in enumerate(ref_stems):
            self.ref_by_stem.setdefault(s, []).append(j)
        self.nodes = 0

    def greedy(self) -> list[tuple[int, int]]:
        pairs: list[tuple[int, int]] = []
        used_ref = [False] * len(self.ref)
        need1 = dict(self.exact_quota)
        matched_c = [False] * len(self.cand)
        for i, w in enumerate(self.cand):
            if need1.get(w, 0) > 0:
                for j in self.ref_by_word.get(w, []):
                    if not used_ref[j]:
                        pairs.append((i, j))
                        used_ref[j] = True
                        matched_c[i] = True
                        need1[w] -= 1
                        break
        need2 = dict(self.stem_quota)
        for i, s in enumerate(self.cand_stems):
            if matched_c[i] or need2.get(s, 0) <= 0:
                continue
            for j in self.ref_by_stem.get(s, []):
                if not used_ref[j] and self.ref[j] != self.cand[i]:
                    pairs.append((i, j))
                    used_ref[j] = True
                    need2[s] -= 1
                    break
        pairs.sort()
        return pairs

    def search(self) -> list[tuple[int, int]]:
        best = self.greedy()
        best_chunks = _count_chunks(best)
        if best_chunks <= 1:
            return best
        self.best_pairs = best
        self.best_chunks = best_chunks
        used_ref = [False] * len(self.ref)
        try:
            self._dfs(0, [], used_ref, dict(self.exact_quota), dict(self.stem_quota), 0, (-2, -2))
        except _SearchBudgetExceeded:
            pass
        return self.best_pairs

    def _dfs(self, i, pairs, used_ref, need1, need2, chunks, last):
        self.nodes += 1
        if self.nodes > _ALIGN_NODE_CAP:
            raise _SearchBudgetExceeded
        if chunks >= self.best_chunks:
            return
        if i == len(self.cand):
            if any(v > 0 for v in need1.values()) or any(v > 0 for v in need2.values()):
                return
            self.best_chunks = chunks
            self.best_pairs = list(pairs)
            return
        # Feasibility: every outstanding quota must fit in the suffix.
        remaining = len(self.cand) - i
        if sum(need1.values()) + sum(need2.values()) > remaining:
            return
        w = self.cand[i]
        s = self.cand_stems[i]
        candidates: list[tuple[int, Optional[str]]] = []
        if need1.get(w, 0) > 0:
            candidates.extend((j, "exact") for j in self.ref_by_word.get(w, []) if not used_ref[j])
        if need2.get(s, 0) > 0:
            candidates.extend(
                (j, "stem")
                for j in self.ref_by_stem.get(s, [])
                if not used_ref[j] and self.ref[j] != w
            )
        for j, kind in candidates:
            new_chunks = chunks if (last[0] == i - 1 and last[1] == j - 1) else chunks + 1
            used_ref[j] = True
            if kind == "exact":
                need1[w] -= 1
            else:
                need2[s] -= 1
            pairs.append((i, j))
            self._dfs(i + 1, pairs, used_ref, need1, need2, new_chunks, (i, j))
            pairs.pop()
            if kind == "exact":
                need1[w] += 1
            else:
                need2[s] += 1
            used_ref[j] = False
        # Leave this position unmatched.
        self._dfs(i + 1, pairs, used_ref, need1, need2, chunks, last)


class _SearchBudgetExceeded(Exception):
    pass


def _count_chunks(pairs: list[tuple[int, int]]) -> int:
    chunks = 0
    last = (-2, -2)
    for i, j in pairs:
        if not (i == last[0] + 1 and j == last[1] + 1):
            chunks += 1
        last = (i, j)
    return chunks


def _meteor_single(cand: list[str], ref: list[str]) -> float:
    if not cand or not ref:
        return 0.0
    exact_quota, stem_quota, cand_stems, ref_stems = _stage_quotas(cand, ref)
    matches = sum(exact_quota.values()) + sum(stem_quota.values())
    if matches == 0:
        return 0.0
    aligner = _AlignmentSearch(cand, ref, cand_stems, ref_stems, exact_quota, stem_quota)
    chunks = _count_chunks(aligner.search())
    precision = matches / len(cand)
    recall = matches / len(ref)
    fmean = precision * recall / (METEOR_ALPHA * precision + (1 - METEOR_ALPHA) * recall)
    penalty = METEOR_GAMMA * (chunks / matches) ** METEOR_BETA
    return fmean * (1 - penalty)


def meteor(pairs: Sequence[EvalPair]) -> float:
    """Classic METEOR with exact and stem modules, max over references."""
    _require_pairs(pairs, references_needed=True)
    score = 0.0
    for pair in pairs:
        cand = _match_tokens(pair.candidate)
        score += max(_meteor_single(cand, _match_tokens(r)) for r in pair.references)
    return score / len(pairs)


def recover_ratio(acc_generated: float, acc_gold: float) -> float:
    """Performance recover ratio: generated-explanation accuracy as a
    percentage of gold-explanation accuracy."""
    if acc_gold <= 0:
        raise MetricError("recover ratio undefined for zero gold accuracy")
    return acc_generated / acc_gold * 100.0


def evaluate(pairs: Sequence[EvalPair], n_parse_failures: int = 0) -> MetricReport:
    """Bundle all four metrics over one evaluation run."""
    _require_pairs(pairs, references_needed=True)
    return MetricReport(
        accuracy=accuracy(pairs),
        bleu=corpus_bleu(pairs),
        rouge_l=rouge_l(pairs),
        meteor=meteor(pairs),
        n_evaluated=len(pairs),
        n_parse_failures=n_parse_failures,
    )
