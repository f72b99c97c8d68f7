"""Kernel backend selection.

``RESHUFFLE_BACKEND=numpy`` forces the pure numpy/Python code paths even when
numba is importable; the default is ``numba`` whenever it is installed.
"""
import os

try:
    import numba  # noqa: F401
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

ENV_VAR = "RESHUFFLE_BACKEND"


def backend():
    """Return the active backend name, ``"numba"`` or ``"numpy"``."""
    requested = os.environ.get(ENV_VAR, "numba").strip().lower()
    if requested not in ("numba", "numpy"):
        raise ValueError(f"{ENV_VAR} must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numba" and HAVE_NUMBA:
        return "numba"
    return "numpy"


def use_numba():
    return backend() == "numba"
