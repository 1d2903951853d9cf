"""Select the compiled kernels when available, else the numpy fallback."""

from __future__ import annotations

import os

BACKEND = "python"

if os.environ.get("TRSLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._wigner_ext import wigner_grid  # noqa: F401

        BACKEND = "cython"
    except ImportError:
        from ._wigner_py import wigner_grid  # noqa: F401
else:
    from ._wigner_py import wigner_grid  # noqa: F401
