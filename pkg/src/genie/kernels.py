"""Kernel selection: the compiled extension when built, else pure Python.

Set ``GENIE_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
signed_rank_counts = _pykernels.signed_rank_counts
pareto_mask = _pykernels.pareto_mask

if not os.environ.get("GENIE_PURE_PYTHON"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        signed_rank_counts = _ckernels.signed_rank_counts
        pareto_mask = _ckernels.pareto_mask
        BACKEND = "cython"
