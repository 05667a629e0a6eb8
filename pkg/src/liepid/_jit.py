"""Kernel backend selection.

Hot kernels are written in the subset of NumPy that numba compiles. Set
``LIEPID_BACKEND=numpy`` before the first import to run them as plain
Python/NumPy instead; the default is ``numba`` whenever it is importable.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_requested = os.environ.get("LIEPID_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"LIEPID_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numba" if (_requested == "numba" and numba is not None) else "numpy"


def njit(fn):
    """Compile ``fn`` with numba in nopython mode, or return it untouched."""
    if BACKEND == "numba":
        return numba.njit(cache=True, nogil=True)(fn)
    return fn
