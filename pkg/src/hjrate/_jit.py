"""Backend switch for the hot kernels.

Set ``HJRATE_DISABLE_JIT=1`` before import to run every kernel as plain
Python/numpy. The flag is read once; the benchmark script flips it per
subprocess.
"""

import os

USE_JIT = os.environ.get("HJRATE_DISABLE_JIT", "").strip().lower() in ("", "0", "false", "no")

if USE_JIT:
    try:
        import numba
    except ImportError:  # pragma: no cover
        USE_JIT = False


def jit(fn):
    """``numba.njit`` with caching and released GIL, or identity when disabled."""
    if not USE_JIT:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend_name() -> str:
    return "numba" if USE_JIT else "numpy"
