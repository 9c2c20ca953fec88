"""Kernel backend selection.

The hot primitives (stream hashing, inverse-cdf sampling, normal and
student-t scalars) exist twice: a Cython extension (``rsel._ckernel``) and
a pure-Python twin (``rsel._pykernel``) with bit-identical output.  The
compiled one is preferred; set ``RSEL_BACKEND=pure`` or
``RSEL_BACKEND=compiled`` to force a choice.  ``benchmarks/`` compares the
two.
"""

from __future__ import annotations

import os

_forced = os.environ.get("RSEL_BACKEND")

if _forced == "pure":
    from . import _pykernel as kernel
elif _forced == "compiled":
    from . import _ckernel as kernel  # type: ignore[no-redef]
elif _forced:
    raise ImportError(f"RSEL_BACKEND must be 'pure' or 'compiled', got {_forced!r}")
else:
    try:
        from . import _ckernel as kernel  # type: ignore[no-redef]
    except ImportError:
        from . import _pykernel as kernel  # type: ignore[no-redef]

BACKEND = kernel.BACKEND_NAME
