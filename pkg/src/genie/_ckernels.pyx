# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_pykernels`` for the reference semantics."""

from libc.stdlib cimport malloc, free, qsort
from libc.stdint cimport int64_t

cdef struct Point:
    double sec
    double f1
    Py_ssize_t idx


cdef int _cmp(const void* a, const void* b) noexcept nogil:
    cdef const Point* p = <const Point*>a
    cdef const Point* q = <const Point*>b
    if p.sec < q.sec:
        return -1
    if p.sec > q.sec:
        return 1
    if p.f1 > q.f1:
        return -1
    if p.f1 < q.f1:
        return 1
    return (p.idx > q.idx) - (p.idx < q.idx)


def signed_rank_counts(ranks2):
    cdef Py_ssize_t n = len(ranks2)
    if n > 62:
        raise OverflowError("exact counts overflow int64 beyond 62 ranks")
    cdef Py_ssize_t total = 0, i, s, reach = 0, r
    for x in ranks2:
        if x < 0:
            raise ValueError("ranks must be non-negative")
        total += x
    cdef int64_t* counts = <int64_t*>malloc((total + 1) * sizeof(int64_t))
    if counts == NULL:
        raise MemoryError()
    try:
        for s in range(total + 1):
            counts[s] = 0
        counts[0] = 1
        for i in range(n):
            r = ranks2[i]
            s = reach
            while s >= 0:
                if counts[s]:
                    counts[s + r] += counts[s]
                s -= 1
            reach += r
        return [counts[s] for s in range(total + 1)]
    finally:
        free(counts)


def pareto_mask(f1, seconds):
    cdef Py_ssize_t n = len(f1), i, j, k
    if len(seconds) != n:
        raise ValueError("f1 and seconds differ in length")
    mask = [False] * n
    if n == 0:
        return mask
    cdef Point* pts = <Point*>malloc(n * sizeof(Point))
    if pts == NULL:
        raise MemoryError()
    cdef double best = float("-inf"), top, sec
    try:
        for i in range(n):
            pts[i].sec = seconds[i]
            pts[i].f1 = f1[i]
            pts[i].idx = i
        qsort(pts, n, sizeof(Point), _cmp)
        i = 0
        while i < n:
            sec = pts[i].sec
            top = pts[i].f1
            j = i
            while j < n and pts[j].sec == sec:
                j += 1
            if top > best:
                for k in range(i, j):
                    if pts[k].f1 == top:
                        mask[pts[k].idx] = True
                best = top
            i = j
        return mask
    finally:
        free(pts)
