"""Numeric kernel backend selection.

Prefers the compiled extension; falls back to the NumPy implementations
when the extension is not built. Set DNSEG_PURE_PYTHON=1 to force the
fallback (used by the backend-comparison benchmark and tests).
"""

import os

from dnseg.kernels import _fallback

if os.environ.get("DNSEG_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from dnseg.kernels import _core as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

lut_apply = _impl.lut_apply
directed_hausdorff = _impl.directed_hausdorff

__all__ = ["BACKEND", "lut_apply", "directed_hausdorff"]
