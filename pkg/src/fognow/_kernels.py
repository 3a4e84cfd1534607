"""Select the split-search backend at import time.

Set ``FOGNOW_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _split_py

if os.environ.get("FOGNOW_PURE_PYTHON", "") not in ("", "0"):
    best_splits = _split_py.best_splits
    BACKEND = "python"
else:
    try:
        from ._split_cy import best_splits
    except ImportError:
        best_splits = _split_py.best_splits
        BACKEND = "python"
    else:
        BACKEND = "cython"

BACKENDS = {"python": _split_py.best_splits}
try:
    from ._split_cy import best_splits as _cy
except ImportError:
    pass
else:
    BACKENDS["cython"] = _cy
