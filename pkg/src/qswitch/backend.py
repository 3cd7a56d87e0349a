"""Kernel backend selection.

The compiled Cython kernels are used when the extension built; otherwise the
numpy reference kernels take over with identical semantics.  Set
``QSWITCH_BACKEND=python`` to force the fallback (used by the benchmark and
by tests that compare the two).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("QSWITCH_BACKEND", "").lower() == "python":
    _impl = _kernels_py
    COMPILED = False
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        COMPILED = True
    except ImportError:
        _impl = _kernels_py
        COMPILED = False

propagate_cosine = _impl.propagate_cosine
lindblad_rk4_cosine = _impl.lindblad_rk4_cosine


def backend_name() -> str:
    return "compiled" if COMPILED else "python"
