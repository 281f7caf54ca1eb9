"""Kernel backend selection.

The compiled extension is used when importable; set SRFMBENCH_NO_EXT=1 to
force the pure-Python fallback (used by the backend-equivalence tests and
the kernel benchmark).  Both backends expose the same two functions and
produce bit-identical results.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _speedups
except ImportError:  # extension not built
    _speedups = None  # type: ignore[assignment]

_disabled = os.environ.get("SRFMBENCH_NO_EXT", "") not in ("", "0")

if _speedups is not None and not _disabled:
    BACKEND = "compiled"
    step_pedestrians_arrays = _speedups.step_pedestrians_arrays
    frechet_arrays = _speedups.frechet_arrays
else:
    BACKEND = "python"
    step_pedestrians_arrays = _kernels_py.step_pedestrians_arrays
    frechet_arrays = _kernels_py.frechet_arrays


def available_backends() -> dict:
    """Name -> module for every importable backend (for tests/benchmarks)."""
    out = {"python": _kernels_py}
    if _speedups is not None:
        out["compiled"] = _speedups
    return out
