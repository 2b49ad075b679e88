"""Backend selection for the compute kernels.

``SEGCLASS_BACKEND`` picks the implementation at import time:

* ``numba`` (or unset/``auto``): compiled kernels from ``kernels_numba``,
  falling back silently to numpy when numba cannot be imported;
* ``numpy``: the pure-numpy kernels, always available.

``benchmarks/bench_kernels.py`` times both paths side by side.
"""

import os

from . import kernels_numpy
from .errors import ConfigError

try:
    from . import kernels_numba

    _HAVE_NUMBA = kernels_numba.NUMBA_AVAILABLE
except ImportError:  # pragma: no cover
    kernels_numba = None
    _HAVE_NUMBA = False


def _select():
    choice = os.environ.get("SEGCLASS_BACKEND", "auto").strip().lower()
    if choice in ("", "auto"):
        choice = "numba" if _HAVE_NUMBA else "numpy"
    if choice == "numba" and not _HAVE_NUMBA:
        choice = "numpy"
    if choice not in ("numba", "numpy"):
        raise ConfigError(f"SEGCLASS_BACKEND must be 'numba' or 'numpy', got {choice!r}")
    return choice


BACKEND = _select()
_impl = kernels_numba if BACKEND == "numba" else kernels_numpy

conv_fwd = _impl.conv_fwd
conv_bwd = _impl.conv_bwd
maxpool_fwd = _impl.maxpool_fwd
maxpool_bwd = _impl.maxpool_bwd
