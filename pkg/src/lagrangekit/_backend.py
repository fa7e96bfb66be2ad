"""Backend selection for the numeric kernels.

The hot kernels in ``_kernels`` are compiled with numba when it is available.
Setting the environment variable ``LAGRANGEKIT_BACKEND`` to ``numpy`` forces
the pure-numpy fallback (useful for debugging and for benchmarking the
compiled path against the interpreted one); setting it to ``numba`` requires
numba and raises if the import fails. The choice is frozen at import time.
"""

from __future__ import annotations

import os

ENV_VAR = "LAGRANGEKIT_BACKEND"

try:
    from numba import njit as _njit

    _HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env-flag subprocess tests
    _njit = None
    _HAS_NUMBA = False


def _select_backend() -> str:
    requested = os.environ.get(ENV_VAR, "").strip().lower()
    if requested == "numpy":
        return "numpy"
    if requested == "numba":
        if not _HAS_NUMBA:
            raise ImportError(
                f"{ENV_VAR}=numba but numba is not importable; install numba "
                f"or set {ENV_VAR}=numpy"
            )
        return "numba"
    if requested:
        raise ValueError(f"unknown {ENV_VAR}={requested!r}; valid values: numba, numpy")
    return "numba" if _HAS_NUMBA else "numpy"


BACKEND = _select_backend()


def kernel(fn):
    """Decorate a hot kernel: njit-compiled under numba, plain function under numpy."""
    if BACKEND == "numba":
        return _njit(cache=True)(fn)
    return fn
