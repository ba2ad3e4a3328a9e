"""Backend switch for the numeric kernels.

Numba is used when it imports and ``BESOVLAB_NUMBA`` is not set to ``0``.
The flag is read once, at import time; flipping it afterwards has no effect
on an already imported package.
"""

from __future__ import annotations

import functools
import os
import warnings

_FLAG = os.environ.get("BESOVLAB_NUMBA", "1").strip().lower()

try:
    if _FLAG in ("0", "false", "no", "off"):
        raise ImportError("numba disabled by BESOVLAB_NUMBA")
    import numba

    HAVE_NUMBA = True
    jit = functools.partial(numba.njit, cache=True, nogil=True)
except ImportError:
    numba = None
    HAVE_NUMBA = False
    jit = None

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def set_threads(k: int | None) -> None:
    """Cap numba's thread pool. No-op on the numpy backend."""
    if k is None or not HAVE_NUMBA:
        return
    k = max(1, min(int(k), numba.config.NUMBA_NUM_THREADS))
    with warnings.catch_warnings():
        # numba probes every threading layer on first use and warns about old TBB builds
        warnings.simplefilter("ignore", numba.NumbaWarning)
        numba.set_num_threads(k)
