"""Kernel backend selection.

The hot numeric loops exist twice: jitted with numba (``_kernels_nb``)
and as plain numpy (``_kernels_np``).  The environment variable
``DMLL_NUMBA`` picks the path at import time:

* unset or ``1`` — use numba when it imports, numpy otherwise;
* ``0`` — force the pure-numpy path.

``benchmarks/bench_kernels.py`` compares the two paths directly.
"""

import os

from . import _kernels_np

ENV_FLAG = "DMLL_NUMBA"


def resolve_backend(flag: str | None, numba_available: bool) -> str:
    """Decide which kernel set to use; pure so it can be unit-tested."""
    if flag is not None and flag.strip() == "0":
        return "numpy"
    return "numba" if numba_available else "numpy"


def _load():
    flag = os.environ.get(ENV_FLAG)
    if resolve_backend(flag, True) == "numpy":
        return "numpy", _kernels_np
    try:
        from . import _kernels_nb
    except ImportError:
        return "numpy", _kernels_np
    return "numba", _kernels_nb


BACKEND, _mod = _load()

soft_bce = _mod.soft_bce
set_bce = _mod.set_bce
powerset_expected_loss = _mod.powerset_expected_loss
ranking_terms = _mod.ranking_terms
