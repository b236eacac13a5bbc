"""JIT switch for the hot kernels.

Set ``IFSCA_DISABLE_JIT=1`` to route every kernel through the pure-numpy
implementations instead of the numba ones.
"""
import os

try:
    import numba
    from numba import njit, prange

    NUMBA_AVAILABLE = True
    if not os.environ.get("NUMBA_THREADING_LAYER"):
        # the TBB build found on many systems is too old; avoid the noisy probe
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    prange = range


def _flag_disabled() -> bool:
    return os.environ.get("IFSCA_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes")


def use_jit() -> bool:
    """True when the numba kernels should run (read on every call)."""
    return NUMBA_AVAILABLE and not _flag_disabled()


def set_threads(n: int | None) -> None:
    if n is None or not NUMBA_AVAILABLE:
        return
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
