"""Kernel selection: compiled extension when importable, pure Python otherwise.

Set ``TANDEMQ_PURE_PYTHON=1`` to force the fallback.
"""

import os

from ._pykernel import PyKernel

KERNELS = {"python": PyKernel}

try:
    from ._ckernel import CKernel
except ImportError:  # extension not built
    CKernel = None
else:
    KERNELS["cython"] = CKernel

if CKernel is not None and not os.environ.get("TANDEMQ_PURE_PYTHON"):
    DEFAULT = "cython"
else:
    DEFAULT = "python"


def get_kernel(name=None):
    name = name or DEFAULT
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable simulator backend {name!r}; have {sorted(KERNELS)}") from None
