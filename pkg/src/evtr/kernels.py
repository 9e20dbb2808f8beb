"""Kernel backend selection.

The compiled extension is used when it was built; otherwise (or when
``EVTR_PURE_PYTHON=1`` is set) the numpy fallback is loaded. Both expose the
same four functions and produce identical outputs.
"""

import os

if os.environ.get("EVTR_PURE_PYTHON", "") not in ("", "0"):
    from evtr import _pykernels as _impl

    BACKEND = "python"
else:
    try:
        from evtr import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        from evtr import _pykernels as _impl

        BACKEND = "python"

accumulate_packed = _impl.accumulate_packed
stamp_events = _impl.stamp_events
window_packed = _impl.window_packed
compress_packed = _impl.compress_packed
