"""Kernel selection: compiled extension when importable, numpy otherwise.

Set ``AGORA_POLAR_PURE_PYTHON=1`` to force the numpy kernels.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py

_compiled: ModuleType | None
try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

AVAILABLE = {"python": _kernels_py}
if _compiled is not None:
    AVAILABLE["cython"] = _compiled

if os.environ.get("AGORA_POLAR_PURE_PYTHON") or _compiled is None:
    DEFAULT = "python"
else:
    DEFAULT = "cython"


def get_kernels(name: str | None = None) -> ModuleType:
    name = name or DEFAULT
    try:
        return AVAILABLE[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available (have {sorted(AVAILABLE)})") from None
