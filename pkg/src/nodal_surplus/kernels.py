"""Backend selection for the hot kernels.

The compiled extension is used when it imports; setting the environment
variable ``NODAL_SURPLUS_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py.secular_det

if os.environ.get("NODAL_SURPLUS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        _impl = _ckernels.secular_det

_CHUNK = 1 << 16


def secular_det(S, phases):
    """Batched ``det(I - diag(exp(i*phase)) S)`` over the leading axes of ``phases``."""
    S = np.ascontiguousarray(S, dtype=float)
    phases = np.asarray(phases, dtype=float)
    lead = phases.shape[:-1]
    flat = np.ascontiguousarray(phases.reshape(-1, S.shape[0]))
    if flat.shape[0] <= _CHUNK:
        out = _impl(S, flat)
    else:
        out = np.concatenate([_impl(S, flat[i:i + _CHUNK]) for i in range(0, flat.shape[0], _CHUNK)])
    return out.reshape(lead)
