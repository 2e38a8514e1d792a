"""Pure-Python metric kernels: the fallback twin of the compiled module.

Both implementations expose the same two functions over integer token ids
and must return identical values; the test suite runs against both.
"""

from __future__ import annotations

from typing import Sequence

IMPLEMENTATION = "pure"


def lcs_length(a: Sequence[int], b: Sequence[int]) -> int:
    """Length of the longest common subsequence of two token-id sequences."""
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    curr = [0] * (len(b) + 1)
    for x in a:
        for j, y in enumerate(b):
            if x == y:
                curr[j + 1] = prev[j] + 1
            else:
                left = curr[j]
                up = prev[j + 1]
                curr[j + 1] = left if left >= up else up
        prev, curr = curr, prev
    return prev[len(b)]


def bleu_segment_stats(
    cand: Sequence[int],
    refs: Sequence[Sequence[int]],
    max_order: int = 4,
) -> tuple[list[int], list[int], int, int]:
    """Per-segment sufficient statistics for corpus BLEU.

    Returns (clipped matches per order, totals per order, candidate length,
    closest reference length). Clipping is against the per-n-gram maximum
    count over all references; the closest reference length breaks ties
    toward the shorter reference.
    """
    cand = tuple(cand)
    sys_len = len(cand)

    closest_diff = None
    closest_len = 0
    ref_counts: dict[tuple[int, ...], int] = {}
    for ref in refs:
        ref = tuple(ref)
        diff = abs(sys_len - len(ref))
        if closest_diff is None or diff < closest_diff or (diff == closest_diff and len(ref) < closest_len):
            closest_diff = diff
            closest_len = len(ref)
        for n in range(1, max_order + 1):
            seen: dict[tuple[int, ...], int] = {}
            for i in range(len(ref) - n + 1):
                gram = ref[i : i + n]
                seen[gram] = seen.get(gram, 0) + 1
            for gram, count in seen.items():
                if count > ref_counts.get(gram, 0):
                    ref_counts[gram] = count

    correct = [0] * max_order
    total = [0] * max_order
    for n in range(1, max_order + 1):
        cand_counts: dict[tuple[int, ...], int] = {}
        for i in range(sys_len - n + 1):
            gram = cand[i : i + n]
            cand_counts[gram] = cand_counts.get(gram, 0) + 1
        for gram, count in cand_counts.items():
            total[n - 1] += count
            limit = ref_counts.get(gram, 0)
            correct[n - 1] += count if count <= limit else limit
    return correct, total, sys_len, closest_len
