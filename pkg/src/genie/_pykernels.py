"""Pure-Python kernels; same API as the compiled ``_ckernels`` module."""

from __future__ import annotations

from typing import Sequence


def signed_rank_counts(ranks2: Sequence[int]) -> list[int]:
    """Number of sign assignments per value of the positive rank sum.

    ``ranks2`` holds doubled ranks, so average ranks on ties stay integral.
    Entry ``s`` of the result counts assignments whose positive doubled ranks
    sum to ``s``.
    """
    total = sum(ranks2)
    counts = [0] * (total + 1)
    counts[0] = 1
    reach = 0
    for r in ranks2:
        if r < 0:
            raise ValueError("ranks must be non-negative")
        for s in range(reach, -1, -1):
            c = counts[s]
            if c:
                counts[s + r] += c
        reach += r
    return counts


def pareto_mask(f1: Sequence[float], seconds: Sequence[float]) -> list[bool]:
    """True for points not dominated when maximizing f1 and minimizing seconds."""
    n = len(f1)
    if len(seconds) != n:
        raise ValueError("f1 and seconds differ in length")
    order = sorted(range(n), key=lambda i: (seconds[i], -f1[i]))
    mask = [False] * n
    best = float("-inf")
    i = 0
    while i < n:
        j = i
        sec = seconds[order[i]]
        top = f1[order[i]]
        while j < n and seconds[order[j]] == sec:
            j += 1
        if top > best:
            for k in range(i, j):
                if f1[order[k]] == top:
                    mask[order[k]] = True
            best = top
        i = j
    return mask
