"""Backend selection for the hot recurrence loop.

The compiled extension is used when it imports; otherwise, or when
``AFM_PURE_PYTHON`` is set to a non-empty value, the numpy fallback is used.
"""
import os

import numpy as np

from afm import _kernels_py

LINEAR, TANH, LURE = _kernels_py.LINEAR, _kernels_py.TANH, _kernels_py.LURE
PSI_CODES = {"zero": 0, "linear": 1, "tanh": 2, "atan": 3}

_compiled = None
if not os.environ.get("AFM_PURE_PYTHON"):
    try:
        from afm import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def available_backends():
    return ["python"] + (["cython"] if _compiled is not None else [])


def simulate(kind, A, B, C, X0, U, psi_kind=0, psi_gain=0.0, backend=None):
    backend = backend or BACKEND
    impl = _compiled if backend == "cython" else _kernels_py
    if impl is None:
        raise RuntimeError("compiled kernels are not available")
    A = np.ascontiguousarray(A, dtype=float)
    B = np.ascontiguousarray(np.reshape(B, -1), dtype=float)
    C = np.ascontiguousarray(np.reshape(C, -1), dtype=float)
    X0 = np.ascontiguousarray(np.atleast_2d(X0), dtype=float)
    U = np.ascontiguousarray(np.atleast_2d(U), dtype=float)
    if X0.shape[0] == 1 and U.shape[0] > 1:
        X0 = np.ascontiguousarray(np.repeat(X0, U.shape[0], axis=0))
    return impl.simulate(int(kind), A, B, C, X0, U, int(psi_kind), float(psi_gain))
