"""Kernel selection at import time.

The compiled extension ``predcacc._kernels`` is used when importable,
otherwise the pure-Python ``predcacc._pykernels``. Set
``PREDCACC_BACKEND=python`` to force the fallback, or ``=compiled`` to fail
loudly when the extension is missing.
"""
import os

from predcacc import _pykernels

_choice = os.environ.get("PREDCACC_BACKEND", "").strip().lower()

try:
    from predcacc import _kernels
except ImportError:
    _kernels = None
    if _choice == "compiled":
        raise

if _kernels is not None and _choice != "python":
    _impl = _kernels
    NAME = "compiled"
else:
    _impl = _pykernels
    NAME = "python"

hqr = _impl.hqr
platoon_loop = _impl.platoon_loop


def available() -> dict:
    """Importable kernel modules keyed by backend name."""
    mods = {"python": _pykernels}
    if _kernels is not None:
        mods["compiled"] = _kernels
    return mods
