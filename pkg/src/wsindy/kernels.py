"""Kernel selection: the compiled extension when importable, else the numpy fallback.

Setting WSINDY_PURE_PYTHON=1 in the environment forces the fallback.
"""

import os

from . import _kernels_py as fallback

compiled = None
if os.environ.get("WSINDY_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else fallback
BACKEND = "compiled" if compiled is not None else "python"

accumulate = _impl.accumulate
moving_sum_lastaxis = _impl.moving_sum_lastaxis
