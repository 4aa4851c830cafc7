"""Lindblad generators applied at the operator level.

The superoperator is never formed here.  A :class:`LindbladModel` stores the
static Hamiltonian, an optional ``f(t) = f0 + f1 cos(omega t)`` drive term and
jump operators with their rates already folded in as ``sqrt(gamma)``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import sparse

from .operators import HERMITIAN_TOL, HilbertSpec


@dataclass(frozen=True)
class Drive:
    """Periodic modulation ``f(t) * H1`` with ``f(t) = f0 + f1 cos(omega t)``."""

    h1: np.ndarray
    f0: float
    f1: float
    omega: float

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("drive frequency must be positive")

    def f(self, t: float) -> float:
        return self.f0 + self.f1 * math.cos(self.omega * t)

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus jump operators (``sqrt(rate)`` folded into each jump)."""

    space: HilbertSpec
    h0: np.ndarray
    jumps: tuple[np.ndarray, ...] = ()
    drive: Drive | None = None
    name: str = "model"
    params: dict = field(default_factory=dict)

    @classmethod
    def build(cls, space: HilbertSpec, h0, jumps: Sequence[tuple[np.ndarray, float]] = (),
              drive: Drive | None = None, name: str = "model", params: dict | None = None):
        """Validate inputs and fold each rate into its jump operator."""
        dim = space.dim
        h0 = np.array(h0, dtype=complex)
        _check_square(h0, dim, "h0")
        if np.linalg.norm(h0 - h0.conj().T) >= HERMITIAN_TOL * max(1.0, np.linalg.norm(h0)):
            raise ValueError("static Hamiltonian is not Hermitian")
        if drive is not None:
            h1 = np.array(drive.h1, dtype=complex)
            _check_square(h1, dim, "h1")
            if np.linalg.norm(h1 - h1.conj().T) >= HERMITIAN_TOL * max(1.0, np.linalg.norm(h1)):
                raise ValueError("drive Hamiltonian is not Hermitian")
            drive = Drive(h1, float(drive.f0), float(drive.f1), float(drive.omega))
        folded = []
        for op, rate in jumps:
            if rate < 0:
                raise ValueError(f"negative rate {rate}")
            op = np.array(op, dtype=complex)
            _check_square(op, dim, "jump")
            if rate > 0:
                folded.append(math.sqrt(rate) * op)
        return cls(space, h0, tuple(folded), drive, name, dict(params or {}))

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def period(self) -> float | None:
        return None if self.drive is None else self.drive.period

    @property
    def is_periodic(self) -> bool:
        return self.drive is not None

    @cached_property
    def jump_products(self) -> tuple[np.ndarray, ...]:
        return tuple(j.conj().T @ j for j in self.jumps)

    @cached_property
    def h_eff(self) -> np.ndarray:
        """Static part of ``H - (i/2) sum J^dag J``."""
        out = self.h0.astype(complex, copy=True)
        for jj in self.jump_products:
            out -= 0.5j * jj
        return out

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.space, self.name)).encode())
        for arr in (self.h0, *self.jumps):
            h.update(np.ascontiguousarray(arr).tobytes())
        if self.drive is not None:
            h.update(np.ascontiguousarray(self.drive.h1).tobytes())
            h.update(repr((self.drive.f0, self.drive.f1, self.drive.omega)).encode())
        return h.hexdigest()[:16]

    def generator_norm_bound(self) -> float:
        """Upper bound on the spectral radius of the Liouvillian."""
        return self._norm_bound

    @cached_property
    def _norm_bound(self) -> float:
        # ||[H, .]|| <= max eig(H) - min eig(H); the spread is subadditive, so
        # the drive contributes at most max|f| * spread(H1)
        def spread(h):
            w = np.linalg.eigvalsh(h)
            return w[-1] - w[0]
        hpart = spread(self.h0)
        if self.drive is not None:
            hpart += (abs(self.drive.f0) + abs(self.drive.f1)) * spread(self.drive.h1)
        return float(hpart + sum(2.0 * np.linalg.norm(j, 2) ** 2 for j in self.jumps))

    def sparse_parts(self):
        """CSR pieces consumed by the propagation kernels."""
        heff = sparse.csr_matrix(self.h_eff)
        h1 = None if self.drive is None else sparse.csr_matrix(self.drive.h1)
        jumps = [sparse.csr_matrix(j) for j in self.jumps]
        return heff, h1, jumps


def _check_square(op: np.ndarray, dim: int, label: str):
    if op.shape != (dim, dim):
        raise ValueError(f"{label} has shape {op.shape}, expected {(dim, dim)}")


def hamiltonian_at(model: LindbladModel, t: float) -> np.ndarray:
    if model.drive is None:
        return model.h0
    return model.h0 + model.drive.f(t) * model.drive.h1


def apply_liouvillian(model: LindbladModel, rho, t: float = 0.0) -> np.ndarray:
    """``-i[H(t), rho] + sum_mu (J rho J^dag - {J^dag J, rho}/2)``.

    Reference dense implementation; the propagator uses the sparse kernels in
    :mod:`lindblad_krylov.kernels`, which are checked against this.
    """
    rho = np.asarray(rho)
    if rho.shape != (model.dim, model.dim):
        raise ValueError(f"rho has shape {rho.shape}, model dimension is {model.dim}")
    h = hamiltonian_at(model, t)
    out = -1j * (h @ rho - rho @ h)
    for j, jj in zip(model.jumps, model.jump_products):
        out += j @ rho @ j.conj().T
        out -= 0.5 * (jj @ rho + rho @ jj)
    return out


def expectation(op: np.ndarray, rho) -> complex:
    """``Tr[op rho]``."""
    op = np.asarray(op)
    rho = np.asarray(rho)
    if op.shape != rho.shape:
        raise ValueError(f"dimension mismatch: {op.shape} vs {rho.shape}")
    # Tr[A B] = sum_ij A_ij B_ji
    return complex(np.sum(op * rho.T))
