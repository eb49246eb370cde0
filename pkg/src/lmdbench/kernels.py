"""Kernel selection: compiled extension if importable, else the Python twins.

Set ``LMDBENCH_PURE_PYTHON=1`` before import to force the fallback.
"""

import os

from . import _kernels_py as python

if os.environ.get("LMDBENCH_PURE_PYTHON", "") not in ("", "0"):
    compiled = None
else:
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else python
BACKEND = "compiled" if compiled is not None else "python"

penta_factor = _impl.penta_factor
penta_solve = _impl.penta_solve
marching_segments = _impl.marching_segments
