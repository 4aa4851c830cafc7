"""Bosonic operator algebra on truncated Fock spaces.

Operators are plain dense ``complex128`` numpy arrays; the :class:`HilbertSpec`
that describes the space they act on is carried separately.  Basis ordering is
``|n_1 n_2 ... n_L>`` with site 1 as the slowest index (``np.kron`` order), and
vectorization is row-major throughout the package.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10


@dataclass(frozen=True)
class HilbertSpec:
    """Shape of a truncated bosonic Hilbert space.

    In full-space mode the dimension is ``(n_max + 1) ** sites``.  In sector
    mode (``sector=N``) only two modes are allowed and the space is the
    ``N + 1`` dimensional fixed-particle-number block, with basis
    ``|n, N - n>`` for ``n = 0..N``.
    """

    sites: int
    n_max: int
    sector: int | None = None

    def __post_init__(self):
        if self.sites < 1:
            raise ValueError("sites must be >= 1")
        if self.sector is None:
            if self.n_max < 1:
                raise ValueError("n_max must be >= 1")
        else:
            if self.sites != 2:
                raise ValueError("sector mode requires exactly 2 sites")
            if self.sector < 1:
                raise ValueError("sector particle number must be >= 1")

    @classmethod
    def two_mode_sector(cls, n_total: int) -> "HilbertSpec":
        return cls(sites=2, n_max=n_total, sector=n_total)

    @property
    def local_dim(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        if self.sector is not None:
            return self.sector + 1
        return self.local_dim ** self.sites


def destroy(n_max: int) -> np.ndarray:
    """Truncated annihilation operator with ``<n-1|a|n> = sqrt(n)``."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1 (a one-level space has no ladder)")
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(complex)


def create(n_max: int) -> np.ndarray:
    return destroy(n_max).conj().T


def number(n_max: int) -> np.ndarray:
    return np.diag(np.arange(n_max + 1, dtype=float)).astype(complex)


def embed(local: np.ndarray, site: int, space: HilbertSpec) -> np.ndarray:
    """Place ``local`` on ``site`` (1-based) of a full-space chain.

    Returns ``I x ... x local x ... x I`` with site 1 leftmost.
    """
    if space.sector is not None:
        raise ValueError("embed is not defined in sector mode; use sector_ladder")
    local = np.asarray(local, dtype=complex)
    if local.shape != (space.local_dim, space.local_dim):
        raise ValueError(
            f"local operator has shape {local.shape}, expected {(space.local_dim,) * 2}"
        )
    if not 1 <= site <= space.sites:
        raise ValueError(f"site {site} out of range 1..{space.sites}")
    eye = np.eye(space.local_dim, dtype=complex)
    factors = [local if s == site else eye for s in range(1, space.sites + 1)]
    return reduce(np.kron, factors)


def sector_ladder(kind: str, n_total: int) -> np.ndarray:
    """Two-mode operators restricted to the ``N = n_total`` particle sector.

    ``kind`` is one of ``"a1dag_a2"``, ``"a2dag_a1"``, ``"n1"``, ``"n2"``.
    Basis state ``|n>`` holds ``n`` particles in mode 1 and ``N - n`` in mode 2.
    """
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    n = np.arange(n_total + 1, dtype=float)
    if kind == "n1":
        return np.diag(n).astype(complex)
    if kind == "n2":
        return np.diag(n_total - n).astype(complex)
    # <n+1| a1^dag a2 |n> = sqrt((n+1)(N-n))
    hop = np.diag(np.sqrt((n[:-1] + 1) * (n_total - n[:-1])), k=-1).astype(complex)
    if kind == "a1dag_a2":
        return hop
    if kind == "a2dag_a1":
        return hop.conj().T
    raise ValueError(f"unknown sector operator {kind!r}")


def hs_inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product ``Tr[a^dag b]``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def hs_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def vectorize(a: np.ndarray) -> np.ndarray:
    """Row-major flattening: ``[[a, b], [c, d]] -> (a, b, c, d)``."""
    return np.asarray(a).reshape(-1).copy()


def devectorize(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    if dim * dim != v.size:
        raise ValueError(f"vector of length {v.size} is not a square operator")
    return v.reshape(dim, dim).copy()


class DensityMatrix:
    """Validated density matrix: Hermitian with unit trace.

    Positivity is expensive to check and is only verified by :meth:`check_psd`.
    The object behaves like an array through ``__array__``.
    """

    __slots__ = ("data", "space")

    def __init__(self, data: np.ndarray, space: HilbertSpec | None = None):
        data = np.array(data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValueError("density matrix must be square")
        if space is not None and space.dim != data.shape[0]:
            raise ValueError("density matrix does not match the Hilbert space")
        if np.linalg.norm(data - data.conj().T) >= HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(data) - 1.0) >= TRACE_TOL:
            raise ValueError(f"density matrix trace {np.trace(data)} != 1")
        data.setflags(write=False)
        self.data = data
        self.space = space

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.data)[0])

    def check_psd(self, tol: float = PSD_TOL) -> bool:
        return self.min_eigenvalue() >= -tol


def random_density_matrix(dim: int, seed: int | None = None) -> DensityMatrix:
    """Full-rank random state ``G G^dag / Tr[G G^dag]`` with Ginibre ``G``."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho / np.trace(rho).real)


def fock_projector(space: HilbertSpec, occupations: Sequence[int]) -> np.ndarray:
    """``|n_1 ... n_L><n_1 ... n_L|`` in full-space mode."""
    if len(occupations) != space.sites:
        raise ValueError("one occupation per site is required")
    index = 0
    for n in occupations:
        if not 0 <= n <= space.n_max:
            raise ValueError("occupation exceeds cutoff")
        index = index * space.local_dim + n
    out = np.zeros((space.dim, space.dim), dtype=complex)
    out[index, index] = 1.0
    return out


# --- binary operator format ------------------------------------------------
# header: magic, dim, sites, n_max, sector (-1 = full space), count
_MAGIC = b"LKOP"
_HEADER = struct.Struct("<4siiiii")


def save_operators(path, operators: Iterable[np.ndarray], space: HilbertSpec) -> None:
    """Write operators as a small header plus row-major interleaved (re, im) float64."""
    ops = [np.asarray(op, dtype=np.complex128) for op in operators]
    for op in ops:
        if op.shape != (space.dim, space.dim):
            raise ValueError("operator does not match the Hilbert space")
    sector = -1 if space.sector is None else space.sector
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, space.dim, space.sites, space.n_max, sector, len(ops)))
        for op in ops:
            # complex128 in C order is already (re, im) interleaved
            fh.write(np.ascontiguousarray(op).astype("<c16").tobytes())


def load_operators(path) -> tuple[HilbertSpec, list[np.ndarray]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, dim, sites, n_max, sector, count = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not an operator dump")
    space = HilbertSpec(sites=sites, n_max=n_max, sector=None if sector < 0 else sector)
    if space.dim != dim:
        raise ValueError(f"{path}: header dimension {dim} inconsistent with space")
    body = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if body.size != count * dim * dim:
        raise ValueError(f"{path}: truncated operator data")
    ops = [body[i * dim * dim:(i + 1) * dim * dim].reshape(dim, dim).astype(complex)
           for i in range(count)]
    return space, ops
