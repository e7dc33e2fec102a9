"""Kernel backend selection.

The compiled extension is used when importable; ``XCONFLICT_KERNELS=python``
forces the numpy fallback and ``XCONFLICT_KERNELS=compiled`` makes a missing
extension an import error.
"""

import importlib
import os

from . import _pykernels

IDENTITY, RELU, TANH = _pykernels.IDENTITY, _pykernels.RELU, _pykernels.TANH


def load_backend(name: str = "auto"):
    if name == "python":
        return _pykernels
    try:
        return importlib.import_module("xconflict._ckernels")
    except ImportError:
        if name == "compiled":
            raise
        return _pykernels


def backend_name(module) -> str:
    return "python" if module is _pykernels else "compiled"


def available_backends() -> dict:
    out = {"python": _pykernels}
    try:
        out["compiled"] = importlib.import_module("xconflict._ckernels")
    except ImportError:
        pass
    return out


backend = load_backend(os.environ.get("XCONFLICT_KERNELS", "auto"))
BACKEND = backend_name(backend)
