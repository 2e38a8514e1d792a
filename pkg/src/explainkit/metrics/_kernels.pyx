# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled metric kernels: LCS length and BLEU segment statistics.

Mirrors ``_pykernels`` exactly; selected at import by ``kernels`` when the
extension built successfully.
"""

from cpython.mem cimport PyMem_Free, PyMem_Malloc

IMPLEMENTATION = "compiled"


cdef long* _to_c_array(seq, Py_ssize_t n) except NULL:
    cdef long* data = <long*> PyMem_Malloc(n * sizeof(long))
    if data == NULL:
        raise MemoryError()
    cdef Py_ssize_t i
    for i in range(n):
        data[i] = seq[i]
    return data


def lcs_length(a, b):
    """Length of the longest common subsequence of two token-id sequences."""
    cdef Py_ssize_t la = len(a)
    cdef Py_ssize_t lb = len(b)
    if la == 0 or lb == 0:
        return 0
    if lb > la:
        a, b = b, a
        la, lb = lb, la

    cdef long* xa = _to_c_array(a, la)
    cdef long* xb
    cdef long* prev
    cdef long* curr
    cdef long* swap
    cdef Py_ssize_t i, j
    cdef long x, left, up
    try:
        xb = _to_c_array(b, lb)
    except BaseException:
        PyMem_Free(xa)
        raise
    prev = <long*> PyMem_Malloc((lb + 1) * sizeof(long))
    curr = <long*> PyMem_Malloc((lb + 1) * sizeof(long))
    if prev == NULL or curr == NULL:
        PyMem_Free(xa)
        PyMem_Free(xb)
        if prev != NULL:
            PyMem_Free(prev)
        if curr != NULL:
            PyMem_Free(curr)
        raise MemoryError()
    for j in range(lb + 1):
        prev[j] = 0
        curr[j] = 0
    try:
        for i in range(la):
            x = xa[i]
            for j in range(lb):
                if x == xb[j]:
                    curr[j + 1] = prev[j] + 1
                else:
                    left = curr[j]
                    up = prev[j + 1]
                    curr[j + 1] = left if left >= up else up
            swap = prev
            prev = curr
            curr = swap
        return prev[lb]
    finally:
        PyMem_Free(xa)
        PyMem_Free(xb)
        PyMem_Free(prev)
        PyMem_Free(curr)


def bleu_segment_stats(cand, refs, int max_order=4):
    """Per-segment sufficient statistics for corpus BLEU.

    Returns (clipped matches per order, totals per order, candidate length,
    closest reference length); identical contract to the pure kernel.
    """
    cand = tuple(cand)
    cdef Py_ssize_t sys_len = len(cand)
    cdef Py_ssize_t ref_len, i
    cdef Py_ssize_t closest_diff = -1
    cdef Py_ssize_t closest_len = 0
    cdef Py_ssize_t diff
    cdef int n
    cdef dict ref_counts = {}
    cdef dict seen
    cdef dict cand_counts

    for ref_seq in refs:
        ref = tuple(ref_seq)
        ref_len = len(ref)
        diff = sys_len - ref_len if sys_len >= ref_len else ref_len - sys_len
        if closest_diff < 0 or diff < closest_diff or (diff == closest_diff and ref_len < closest_len):
            closest_diff = diff
            closest_len = ref_len
        for n in range(1, max_order + 1):
            seen = {}
            for i in range(ref_len - n + 1):
                gram = ref[i : i + n]
                seen[gram] = seen.get(gram, 0) + 1
            for gram, count in seen.items():
                if count > ref_counts.get(gram, 0):
                    ref_counts[gram] = count

    correct = [0] * max_order
    total = [0] * max_order
    for n in range(1, max_order + 1):
        cand_counts = {}
        for i in range(sys_len - n + 1):
            gram = cand[i : i + n]
            cand_counts[gram] = cand_counts.get(gram, 0) + 1
        for gram, count in cand_counts.items():
            total[n - 1] += count
            limit = ref_counts.get(gram, 0)
            correct[n - 1] += count if count <= limit else limit
    return correct, total, sys_len, closest_len
