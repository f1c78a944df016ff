"""Optional numba acceleration.

Hot kernels are written twice: a loop form compiled with numba and a
vectorized numpy form. ``HFM_DISABLE_NUMBA=1`` in the environment selects the
numpy form globally; :func:`use_numba` switches at runtime (tests, benchmarks).
"""
import contextlib
import logging
import os

logger = logging.getLogger(__name__)

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_disabled = os.environ.get("HFM_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")
_enabled = HAVE_NUMBA and not _disabled


def njit(func):
    """Compile ``func`` in nopython mode, or return it untouched without numba."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def numba_enabled():
    return _enabled


def set_numba(flag):
    global _enabled
    if flag and not HAVE_NUMBA:
        logger.warning("numba requested but not importable; staying on numpy kernels")
        flag = False
    _enabled = bool(flag)


@contextlib.contextmanager
def use_numba(flag):
    previous = _enabled
    set_numba(flag)
    try:
        yield
    finally:
        set_numba(previous)
