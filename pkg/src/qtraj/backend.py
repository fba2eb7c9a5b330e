"""Kernel backend selection.

Imports the compiled extension when it is built, otherwise falls back to the
pure-Python kernels.  Set ``QTRAJ_FORCE_PYTHON=1`` to force the fallback
(used by the benchmark and the parity tests).  Both backends implement the
same floating-point operation order, so switching them does not change
results.
"""

from __future__ import annotations

import os

if os.environ.get("QTRAJ_FORCE_PYTHON", "") not in ("", "0"):
    from . import _pycore as kernels
    HAVE_COMPILED = False
else:
    try:
        from . import _core as kernels  # type: ignore[no-redef]
        HAVE_COMPILED = True
    except ImportError:
        from . import _pycore as kernels  # type: ignore[no-redef]
        HAVE_COMPILED = False

BACKEND = "compiled" if HAVE_COMPILED else "python"

forward_walk = kernels.forward_walk
backward_walk = kernels.backward_walk
STATUS_OK = kernels.STATUS_OK
STATUS_STEP_TOO_LARGE = kernels.STATUS_STEP_TOO_LARGE
STATUS_ZERO_NORM = kernels.STATUS_ZERO_NORM
