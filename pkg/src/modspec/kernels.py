"""Backend selection for the stochastic stepping loop.

The compiled extension is used when it was built; otherwise the numpy fallback.
Setting ``MODSPEC_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _sde_fallback

fallback_propagate = _sde_fallback.propagate

try:
    if os.environ.get("MODSPEC_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from ._sde_kernel import propagate as compiled_propagate
except ImportError:
    compiled_propagate = None

propagate = compiled_propagate or fallback_propagate
BACKEND = "compiled" if compiled_propagate is not None else "python"


def get_propagate(backend: str | None = None):
    """Stepping function for ``"compiled"``, ``"python"`` or ``None`` (the import-time choice)."""
    if backend is None:
        return propagate
    if backend == "python":
        return fallback_propagate
    if backend == "compiled":
        if compiled_propagate is None:
            raise ImportError("compiled SDE kernel is not available in this installation")
        return compiled_propagate
    raise ValueError(f"unknown backend {backend!r}")
