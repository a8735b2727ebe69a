"""JIT switch for the hot simulation loops.

Kernels are written once as scalar loops and compiled with numba when it is
importable.  Setting ``PSSMP_DISABLE_NUMBA=1`` routes every ensemble through
the vectorised numpy implementations instead; results agree to round-off.
"""

from __future__ import annotations

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

BACKENDS = ("numba", "numpy")


def numba_disabled() -> bool:
    return os.environ.get("PSSMP_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")


def resolve_backend(backend: str | None = None) -> str:
    """Map ``None``/``"auto"`` to the active backend and validate explicit picks."""
    if backend in (None, "auto"):
        return "numba" if HAVE_NUMBA and not numba_disabled() else "numpy"
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


if HAVE_NUMBA:
    njit = numba.njit(cache=True, nogil=True)
else:  # pragma: no cover
    def njit(fn):
        return fn
