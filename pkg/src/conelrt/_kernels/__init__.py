"""Kernel backend selection: compiled extension if present, else pure Python.

Set CONELRT_FORCE_PYTHON=1 to force the fallback (used by the benchmark and
for debugging).  `BACKEND` records which implementation is active.
"""

import os

if os.environ.get("CONELRT_FORCE_PYTHON"):
    from ._pava_py import pava_batch, pava_single

    BACKEND = "python"
else:
    try:
        from ._pava import pava_batch, pava_single

        BACKEND = "compiled"
    except ImportError:  # extension not built
        from ._pava_py import pava_batch, pava_single

        BACKEND = "python"

__all__ = ["pava_batch", "pava_single", "BACKEND"]
