"""Kernel backend selection.

The compiled extension is optional; the numpy fallback is always available.
Each backend is deterministic and bitwise-repeatable with itself; across
backends results agree to a few ulp (different summation orders).
NSTORUS_KERNEL=python|cython forces a backend (cython raises if the
extension is missing).
"""

import os

from . import _pykernels

_forced = os.environ.get("NSTORUS_KERNEL", "").strip().lower()

if _forced == "python":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _forced == "cython":
            raise ImportError(
                "NSTORUS_KERNEL=cython but the compiled extension is not built; "
                "run: python3 setup.py build_ext --inplace"
            )
        _impl = _pykernels

BACKEND = _impl.BACKEND
drift_batch = _impl.drift_batch
rk4_batch = _impl.rk4_batch


def get_backend(name=None):
    """Return (name, module) for an explicit backend, for benchmarks/tests."""
    if name in (None, "", "auto"):
        return BACKEND, _impl
    if name == "python":
        return "python", _pykernels
    if name == "cython":
        from . import _ckernels
        return "cython", _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
