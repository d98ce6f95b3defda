"""Kernel backend selection.

Prefers the compiled extension when it imported cleanly; falls back to the
pure-Python twin otherwise.  Set POOLSCREEN_PURE_KERNELS=1 to force the
fallback (used by the equivalence tests and the benchmark).
"""

import os

from . import _kernels_py

if os.environ.get("POOLSCREEN_PURE_KERNELS", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

KERNEL_BACKEND = _impl.NAME

g_table = _impl.g_table
nt_trials = _impl.nt_trials
