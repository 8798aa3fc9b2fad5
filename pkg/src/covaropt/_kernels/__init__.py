"""Hot-loop kernels: compiled extension when available, NumPy fallback otherwise.

Set ``COVAROPT_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and the backend-agreement tests).
"""

import os

_force_pure = os.environ.get("COVAROPT_PURE_PYTHON", "") not in ("", "0")

if _force_pure:
    from . import pure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        from . import pure as _impl

        BACKEND = "pure"

gjr_filter = _impl.gjr_filter
dcc_nll = _impl.dcc_nll
dcc_simulate = _impl.dcc_simulate

__all__ = ["BACKEND", "gjr_filter", "dcc_nll", "dcc_simulate"]
