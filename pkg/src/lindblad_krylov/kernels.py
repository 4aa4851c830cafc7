"""Backend selection for the propagation kernels.

The compiled extension is used when it imports; otherwise the numpy/scipy
fallback is used.  Setting ``LINDBLAD_KRYLOV_PURE_PYTHON=1`` forces the
fallback.
"""
from __future__ import annotations

import os

import numpy as np
from scipy import sparse

from . import _fallback

try:
    if os.environ.get("LINDBLAD_KRYLOV_PURE_PYTHON"):
        raise ImportError("pure-Python backend forced")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = ("compiled", "python") if _compiled is not None else ("python",)
DEFAULT_BACKEND = BACKENDS[0]


def _csr_arrays(m):
    m = sparse.csr_matrix(m)
    m.sort_indices()
    return (np.ascontiguousarray(m.data, dtype=np.complex128),
            np.ascontiguousarray(m.indices, dtype=np.intp),
            np.ascontiguousarray(m.indptr, dtype=np.intp))


def _pack(mats, d):
    if not mats:
        return (np.zeros(0, np.complex128), np.zeros(0, np.intp),
                np.zeros(0, np.intp), np.zeros(0, np.intp))
    parts = [_csr_arrays(m) for m in mats]
    offsets = np.cumsum([0] + [p[0].size for p in parts[:-1]]).astype(np.intp)
    return (np.concatenate([p[0] for p in parts]),
            np.concatenate([p[1] for p in parts]),
            np.concatenate([p[2] for p in parts]),
            offsets)


def make_kernel(model, backend: str | None = None):
    """Build the sparse generator object for ``model`` on the chosen backend."""
    backend = backend or DEFAULT_BACKEND
    heff, h1, jumps = model.sparse_parts()
    d = model.dim
    drive = None if model.drive is None else (model.drive.f0, model.drive.f1, model.drive.omega)
    if backend == "python":
        return _fallback.SparseLindblad(
            d, heff.tocsr(), None, None if h1 is None else h1.tocsr(), None, drive,
            [j.tocsr() for j in jumps], None)
    if backend != "compiled" or _compiled is None:
        raise ValueError(f"backend {backend!r} is not available (have {BACKENDS})")
    adj = [sparse.csr_matrix(j.conj().T) for j in jumps]
    return _compiled.SparseLindblad(
        d,
        _csr_arrays(heff), _csr_arrays(heff.conj().T),
        None if h1 is None else _csr_arrays(h1),
        None if h1 is None else _csr_arrays(h1.conj().T),
        drive, _pack(jumps, d), _pack(adj, d))
