"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import random
import timeit

from genie import _pykernels

try:
    from genie import _ckernels
except ImportError:
    _ckernels = None


def cases(rng: random.Random):
    ranks = [2 * r for r in range(1, 26)]  # largest exact case: 25 untied differences
    f1 = [rng.random() for _ in range(5000)]
    secs = [rng.uniform(0, 60) for _ in range(5000)]
    return {
        "signed_rank_counts(n=25)": ("signed_rank_counts", (ranks,)),
        "pareto_mask(n=5000)": ("pareto_mask", (f1, secs)),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    mods = {"python": _pykernels}
    if _ckernels is not None:
        mods["cython"] = _ckernels
    print(f"{'kernel':28} " + " ".join(f"{m:>12}" for m in mods) + ("     speedup" if len(mods) == 2 else ""))
    for label, (fn, fargs) in cases(random.Random(args.seed)).items():
        best = {}
        for name, mod in mods.items():
            f = getattr(mod, fn)
            best[name] = min(timeit.repeat(lambda: f(*fargs), number=1, repeat=args.repeat))
        row = f"{label:28} " + " ".join(f"{best[m] * 1e3:10.2f}ms" for m in mods)
        if len(mods) == 2:
            row += f" {best['python'] / best['cython']:10.1f}x"
        print(row)


if __name__ == "__main__":
    main()
