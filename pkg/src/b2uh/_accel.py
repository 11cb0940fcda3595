"""JIT switch shared by every hot kernel.

Kernels are written once as plain loops and compiled with numba when it is
importable. Setting ``B2UH_NO_JIT=1`` in the environment forces the
uncompiled/numpy paths, which is how the benchmarks and fallback tests run.
"""

import os

_FLAG = os.environ.get("B2UH_NO_JIT", "").strip().lower()
JIT_DISABLED = _FLAG in {"1", "true", "yes", "on"}

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba ships with the dev image
    _numba = None

USE_NUMBA = _numba is not None and not JIT_DISABLED


def njit(fn=None, **options):
    """Compile ``fn`` with ``numba.njit`` when enabled, else return it unchanged."""
    options.setdefault("cache", True)

    def wrap(f):
        if USE_NUMBA:
            return _numba.njit(**options)(f)
        return f

    if fn is None:
        return wrap
    return wrap(fn)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
