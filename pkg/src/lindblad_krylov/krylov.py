"""Arnoldi iteration over time-evolution snapshots.

Each new Krylov element is obtained by evolving the previous orthonormal
basis element over a fixed interval ``T`` with the master equation, so the
projected (upper Hessenberg) matrix approximates the evolution map
``E = exp(L T)``, or the one-period map for periodically driven models.
Ritz values ``eps`` map back to generator eigenvalues through
``eps = exp(lambda T)``.
"""
from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg

from .generator import LindbladModel
from .operators import DensityMatrix, hs_inner
from .propagator import IntegratorConfig, kernel_for, propagate, propagate_many

BREAKDOWN_RTOL = 1e-12
REORTH_TRIGGER = 0.5
REORTH_OVERLAP = 1e-12
ORTHO_TOL = 1e-10
# |Im eps| below this (relative to |eps|) counts as a real eigenvalue
REAL_TOL = 1e-10
# |arg eps| above this fraction of pi is close enough to the branch cut that
# Im(lambda) may be aliased by a multiple of 2 pi / T
ALIAS_FRACTION = 0.9
PREFILTER_FACTOR = 10.0

TERMINATIONS = ("converged", "happy_breakdown", "max_iterations")


class RitzFailure(np.linalg.LinAlgError):
    def __init__(self, message, hessenberg):
        super().__init__(message)
        self.hessenberg = hessenberg


class KrylovBasis:
    """Orthonormal snapshot basis and its projected map.

    Basis elements live as rows of one preallocated array (row-major
    ``vec`` of each operator), so lifting Ritz vectors and auditing
    orthogonality are single matrix products.  ``_h`` holds the rectangular
    ``(k+1) x k`` Arnoldi relation; the square leading block is exposed as
    :attr:`hessenberg`.
    """

    def __init__(self, interval: float, shape: tuple, capacity: int = 16):
        self.interval = interval
        self.shape = tuple(shape)
        self.scale: float | None = None  # norm of the first snapshot, for breakdown
        self.closed = False  # an exact invariant subspace was captured
        self._store = np.empty((max(capacity, 1), int(np.prod(shape))), dtype=complex)
        self._count = 0
        self._h = np.zeros((1, 0), dtype=complex)

    @classmethod
    def start(cls, rho0, interval: float, capacity: int = 16) -> "KrylovBasis":
        rho0 = np.asarray(rho0, dtype=complex)
        nrm = np.linalg.norm(rho0)
        if not nrm > 0:
            raise ValueError("initial operator is zero")
        out = cls(interval, rho0.shape, capacity)
        out._append(rho0 / nrm)
        return out

    def __len__(self) -> int:
        return self._count

    @property
    def basis(self) -> list[np.ndarray]:
        return [self._store[i].reshape(self.shape) for i in range(self._count)]

    @property
    def vectors(self) -> np.ndarray:
        """``(k, n)`` view; row ``i`` is the flattened ``sigma_i``."""
        return self._store[: self._count]

    def element(self, i: int) -> np.ndarray:
        if not -self._count <= i < self._count:
            raise IndexError(i)
        return self._store[i % self._count].reshape(self.shape)

    @property
    def steps_taken(self) -> int:
        """Number of filled Hessenberg columns (snapshots taken)."""
        return self._h.shape[1]

    @property
    def hessenberg(self) -> np.ndarray:
        k = self.steps_taken
        return self._h[:k, :k].copy()

    @property
    def subdiagonal(self) -> float:
        """Last ``h_{k+1,k}``; zero after a happy breakdown."""
        k = self.steps_taken
        return 0.0 if k == 0 or self.closed else abs(self._h[k, k - 1])

    def orthogonality_error(self) -> float:
        """``max |<sigma_i, sigma_j> - delta_ij|`` over the stored basis."""
        s = self.vectors
        g = s.conj() @ s.T
        return float(np.max(np.abs(g - np.eye(len(s))))) if len(s) else 0.0

    def _append(self, w: np.ndarray):
        if self._count == self._store.shape[0]:
            grown = np.empty((2 * self._count, self._store.shape[1]), dtype=complex)
            grown[: self._count] = self._store
            self._store = grown
        self._store[self._count] = w.ravel()
        self._count += 1

    def _grow(self):
        k = self._h.shape[1]
        h = np.zeros((k + 2, k + 1), dtype=complex)
        h[: k + 1, :k] = self._h
        self._h = h


def orthonormalize_step(basis: KrylovBasis, nu) -> tuple[KrylovBasis, float]:
    """Modified Gram-Schmidt of a new snapshot against the basis.

    The coefficients ``Tr[sigma_j^dag nu]`` fill the next Hessenberg column.
    One reorthogonalization pass is made when the orthogonalized norm drops
    below half the input norm, or when the orthogonalized vector still has an
    overlap above ``1e-12`` of its norm with the basis.  Returns the basis (updated in place) and the
    subdiagonal ``||nu_orth||``; when that is below ``1e-12`` times the first
    snapshot norm no element is appended and ``basis.closed`` is set.
    """
    if basis.closed:
        raise ValueError("basis already spans an invariant subspace")
    w = np.array(nu, dtype=complex)
    if w.shape != basis.shape:
        raise ValueError(f"snapshot shape {w.shape} does not match basis {basis.shape}")
    w = w.ravel()
    norm_in = float(np.linalg.norm(w))
    if basis.scale is None:
        basis.scale = norm_in
    basis._grow()
    col = basis.steps_taken - 1
    rows = basis.vectors
    for j in range(len(rows)):
        c = np.vdot(rows[j], w)
        basis._h[j, col] += c
        w -= c * rows[j]
    sub = float(np.linalg.norm(w))
    # second pass on heavy cancellation, or when the residual overlap with the
    # basis is measurably nonzero (rounding accumulates with the conditioning
    # of the whole snapshot sequence, which the norm test alone does not see)
    overlap = rows.conj() @ w
    if sub < REORTH_TRIGGER * norm_in or np.abs(overlap).max(initial=0.0) > REORTH_OVERLAP * sub:
        basis._h[: len(rows), col] += overlap
        w -= overlap @ rows
        sub = float(np.linalg.norm(w))
    if sub < BREAKDOWN_RTOL * basis.scale:
        basis.closed = True
        basis._h = basis._h[:-1, :]
        return basis, sub
    basis._h[col + 1, col] = sub
    basis._append(w / sub)
    return basis, sub


def eps_to_lambda(eps: complex, T: float) -> complex:
    """Principal-branch ``log(eps) / T``, with ``arg`` in ``(-pi, pi]``."""
    if not T > 0:
        raise ValueError("T must be positive")
    eps = complex(eps)
    if eps == 0:
        raise ValueError("eps = 0 has no logarithm (decay faster than resolvable)")
    arg = math.atan2(eps.imag, eps.real)
    if arg == -math.pi:
        arg = math.pi
    return complex(math.log(abs(eps)), arg) / T


def alias_flag(eps: complex) -> bool:
    eps = complex(eps)
    return abs(math.atan2(eps.imag, eps.real)) > ALIAS_FRACTION * math.pi


@dataclass
class RitzPair:
    eps: complex
    lam: complex
    eigenmatrix: np.ndarray
    residual: float = math.nan
    converged: bool = False
    estimate: float = math.nan  # Arnoldi estimate h_{k+1,k} |y_k|
    conjugate_of: int | None = None  # index of the pair this one mirrors
    alias: bool = False

    @property
    def is_real(self) -> bool:
        return abs(self.eps.imag) <= REAL_TOL * max(abs(self.eps), 1e-300)

    def conjugate(self, index: int | None = None) -> "RitzPair":
        """Partner ``(conj(eps), rho^dag)``; valid because the generator
        preserves Hermiticity."""
        return replace(self, eps=self.eps.conjugate(), lam=self.lam.conjugate(),
                       eigenmatrix=self.eigenmatrix.conj().T.copy(), conjugate_of=index)


def ritz_extract(basis: KrylovBasis, count: int | None = None) -> list[RitzPair]:
    """Eigenpairs of the square Hessenberg block, lifted to operators.

    Sorted by ``|eps|`` descending, ties put ``Im eps >= 0`` first.  Only the
    first ``count`` pairs get an eigenmatrix (the rest carry ``None``).
    """
    k = basis.steps_taken
    if k < 1:
        raise ValueError("need at least one snapshot before extracting Ritz pairs")
    h = basis._h[:k, :k]
    try:
        vals, vecs = scipy.linalg.eig(h)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RitzFailure(f"Hessenberg eigensolve failed: {exc}", h.copy()) from exc
    if not np.all(np.isfinite(vals)):
        raise RitzFailure("Hessenberg eigenvalues are not finite", h.copy())
    sub = 0.0 if basis.closed else abs(basis._h[k, k - 1])
    order = sorted(range(k), key=lambda i: (-round(abs(vals[i]), 12), -vals[i].imag))
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    n_lift = k if count is None else min(count, k)
    lifted = vecs[:, order[:n_lift]].T @ basis.vectors[:k]
    lifted /= np.linalg.norm(lifted, axis=1, keepdims=True)
    pairs = []
    for rank, i in enumerate(order):
        eps = complex(vals[i])
        lam = eps_to_lambda(eps, basis.interval) if eps != 0 else complex(-math.inf)
        mat = lifted[rank].reshape(basis.shape) if rank < n_lift else None
        pairs.append(RitzPair(eps, lam, mat, estimate=float(sub * abs(vecs[-1, i])),
                              alias=alias_flag(eps) if eps != 0 else False))
    return pairs


def residual_check(model: LindbladModel, pairs: Sequence[RitzPair], T: float, tol: float,
                   cfg: IntegratorConfig | None = None, prefilter: bool = True,
                   workers: int = 1) -> list[RitzPair]:
    """Full-propagation residuals ``||E rho_j - eps_j rho_j||_F``.

    Pairs whose Arnoldi estimate already exceeds ``10 * tol`` are not
    propagated; their residual is set to the estimate.  Returns new pairs.
    """
    out = [replace(p) for p in pairs]
    todo = [i for i, p in enumerate(out)
            if not (prefilter and math.isfinite(p.estimate) and p.estimate > PREFILTER_FACTOR * tol)]
    for i, p in enumerate(out):
        if i not in todo:
            p.residual, p.converged = p.estimate, False
    evolved = propagate_many(model, [out[i].eigenmatrix for i in todo], 0.0, T, cfg, workers)
    for i, e in zip(todo, evolved):
        p = out[i]
        p.residual = float(np.linalg.norm(e - p.eps * p.eigenmatrix))
        p.converged = p.residual < tol
    return out


@dataclass
class SpectralResult:
    pairs: list[RitzPair]
    iterations: int
    wall_time: float
    termination: str
    T: float
    m: int
    tol: float
    model_hash: str = ""
    basis: KrylovBasis | None = None
    ritz_values: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def simulated_time(self) -> float:
        """Total evolution time spent building the basis."""
        return self.iterations * self.T

    @property
    def converged_pairs(self) -> list[RitzPair]:
        return [p for p in self.pairs if p.converged]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs])

    def to_dict(self, config: dict | None = None) -> dict:
        return {
            "source": "arnoldi-lindblad",
            "model_hash": self.model_hash,
            "T": self.T,
            "m": self.m,
            "tol": self.tol,
            "iterations": self.iterations,
            "simulated_time": self.simulated_time,
            "termination": self.termination,
            "wall_time": self.wall_time,
            "metadata": self.metadata,
            "config": config or {},
            "pairs": [_pair_record(p) for p in self.pairs],
        }

    def to_json(self, path, config: dict | None = None) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(config), fh, indent=2)


def _pair_record(p: RitzPair) -> dict:
    return {
        "re_eps": p.eps.real, "im_eps": p.eps.imag,
        "re_lambda": p.lam.real, "im_lambda": p.lam.imag,
        "residual": p.residual, "converged": bool(p.converged),
        "alias_flag": bool(p.alias),
        "conjugate_of": p.conjugate_of,
    }


def load_spectrum_json(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    for p in doc.get("pairs", []):
        p["eps"] = complex(p["re_eps"], p["im_eps"])
        p["lambda"] = complex(p["re_lambda"], p["im_lambda"])
    return doc


def _representatives(pairs: list[RitzPair], m: int) -> list[RitzPair]:
    """Real pairs and ``Im eps > 0`` members covering the ``m`` leading eigenvalues.

    A non-real representative stands for two eigenvalues, so the last one
    may bring in eigenvalue ``m + 1`` for free.
    """
    reps, count = [], 0
    for p in pairs:
        if count >= m:
            break
        if p.is_real:
            reps.append(p)
            count += 1
        elif p.eps.imag > 0:
            reps.append(p)
            count += 2
    return reps


def _covered(reps: list[RitzPair]) -> int:
    return sum(1 if p.is_real else 2 for p in reps)


def _with_partners(reps: list[RitzPair]) -> list[RitzPair]:
    out = []
    for p in reps:
        out.append(p)
        if not p.is_real:
            out.append(p.conjugate(len(out) - 1))
    return out


def arnoldi_lindblad(model: LindbladModel, rho0, T: float | None = None, m: int = 1,
                     tol: float = 1e-3, check_every: int = 10, max_iter: int = 300,
                     cfg: IntegratorConfig | None = None, workers: int = 1,
                     keep_basis: bool = False, callback=None) -> SpectralResult:
    """Slowest eigenpairs of the Liouvillian from time-evolution snapshots.

    Parameters
    ----------
    model : LindbladModel
    rho0 : array_like
        Seed operator; a physical state overlaps with the steady state.
    T : float, optional
        Snapshot interval.  Periodic models require (and default to) the
        drive period; time-independent models default to 0.05.
    m : int
        Number of slowest eigenvalues wanted, conjugates counted separately.
        Partners ``(conj(eps), rho^dag)`` come without extra propagation, so
        the result can hold ``m + 1`` pairs.
    tol : float
        Residual threshold for ``||E rho - eps rho||_F``.
    check_every : int
        Ritz extraction and residual checks happen every this many snapshots.
    max_iter : int
        Snapshot budget; exceeding it returns a flagged partial result.
    cfg : IntegratorConfig, optional
    workers : int
        Threads used for the residual propagations.
    keep_basis : bool
        Attach the Krylov basis to the result.
    callback : callable, optional
        Called as ``callback(iteration, pairs)`` after every check.

    Returns
    -------
    SpectralResult
    """
    t_start = time.perf_counter()
    if m < 1:
        raise ValueError("m must be >= 1")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if check_every < 1 or max_iter < 1:
        raise ValueError("check_every and max_iter must be >= 1")
    if model.is_periodic:
        if T is None:
            T = model.period
        elif not math.isclose(T, model.period, rel_tol=1e-12):
            raise ValueError(f"periodic model: T must equal the drive period {model.period!r}, got {T!r}")
    elif T is None:
        T = 0.05
    if not T > 0:
        raise ValueError("T must be positive")
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (model.dim, model.dim):
        raise ValueError(f"rho0 has shape {rho0.shape}, model dimension is {model.dim}")
    kernel_for(model, (cfg or IntegratorConfig()).backend)

    basis = KrylovBasis.start(rho0, T, capacity=max_iter + 1)
    termination = "max_iterations"
    pairs: list[RitzPair] = []
    n_checks = n_props = 0
    while True:
        # every snapshot starts at t = 0: E (or the period map) is the same each time
        nu = propagate(model, basis.element(-1), 0.0, T, cfg)
        orthonormalize_step(basis, nu)
        k = basis.steps_taken
        last = basis.closed or k >= max_iter
        if k % check_every and not last:
            continue
        n_checks += 1
        reps = _representatives(ritz_extract(basis, 2 * m + 2), m)
        enough = _covered(reps) >= m
        ok = enough or basis.closed
        checked = []
        for p in reps:
            if ok and not (p.estimate > PREFILTER_FACTOR * tol):
                (p,) = residual_check(model, [p], T, tol, cfg, prefilter=False)
                n_props += 1
                ok = p.converged
            else:
                p.residual = p.estimate
                ok = False
            checked.append(p)
        pairs = _with_partners(checked)
        if callback is not None:
            callback(k, pairs)
        if ok and enough:
            termination = "converged"
            break
        if basis.closed:
            termination = "happy_breakdown"
            break
        if k >= max_iter:
            break

    if basis.closed and termination == "happy_breakdown":
        # an exact invariant subspace: every Ritz pair is an eigenpair
        allp = ritz_extract(basis)
        reps = residual_check(model, _representatives(allp, len(allp)), T, tol, cfg,
                              prefilter=False, workers=workers)
        pairs = _with_partners(reps)
    ritz = np.array([p.eps for p in ritz_extract(basis, 0)]) if basis.steps_taken else np.array([])
    meta = {
        "checks": n_checks,
        "residual_propagations": n_props,
        "breakdown": basis.closed,
        "orthogonality_error": basis.orthogonality_error(),
        "integrator": _cfg_dict(cfg),
        "periodic": model.is_periodic,
    }
    if model.is_periodic:
        meta["period"] = model.period
    return SpectralResult(pairs, basis.steps_taken, time.perf_counter() - t_start, termination,
                          T, m, tol, model.fingerprint, basis if keep_basis else None, ritz, meta)


def _cfg_dict(cfg):
    cfg = cfg or IntegratorConfig()
    return {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}


class NotPositiveWarning(UserWarning):
    pass


def steady_state_extract(result: SpectralResult, psd_tol: float = 1e-6,
                         strict: bool = False) -> DensityMatrix:
    """Hermitized, unit-trace eigenmatrix of the converged pair nearest ``eps = 1``.

    A smallest eigenvalue below ``-psd_tol`` triggers a
    :class:`NotPositiveWarning`, or a ``ValueError`` when ``strict``.
    """
    cands = [p for p in result.pairs if p.converged and p.conjugate_of is None]
    if not cands:
        raise ValueError("no converged pair in the result")
    best = min(cands, key=lambda p: abs(p.eps - 1))
    if abs(best.eps - 1) >= 0.1:
        raise ValueError(f"no converged pair near eps = 1 (closest {best.eps}); "
                         "not converged or T too small")
    near = [p for p in cands if abs(p.eps - 1) < result.tol]
    if len(near) > 1:
        warnings.warn(f"{len(near)} converged pairs with |eps - 1| < tol: the steady state "
                      "is degenerate and the extracted one depends on the seed", stacklevel=2)
    rho = best.eigenmatrix
    tr = np.trace(rho)
    if abs(tr) < 1e-8 * np.linalg.norm(rho) * math.sqrt(rho.shape[0]):
        raise ValueError("selected eigenmatrix is traceless; it cannot be a state")
    # dividing by the trace removes the arbitrary phase before Hermitizing
    rho = rho / tr
    dm = DensityMatrix(0.5 * (rho + rho.conj().T))
    if not dm.check_psd(psd_tol):
        msg = f"steady state is not positive: min eigenvalue {dm.min_eigenvalue():.3g}"
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, NotPositiveWarning, stacklevel=2)
    return dm


def trace_indicator(model: LindbladModel, rho, t: float = 0.0, backend: str | None = None) -> dict:
    """Trace-based convergence diagnostic for a normalized eigenmatrix.

    Reports the Rayleigh quotient ``r = Tr[rho^dag L rho]``, ``|r|^2``,
    ``Tr[rho^dag L^2 rho]`` and ``||L rho||^2 = Tr[(L rho)^dag L rho]``.  For an
    exact eigenmatrix ``||L rho||^2 - |r|^2 = 0``; that gap is ``indicator``.
    For driven models ``L`` is evaluated at time ``t``.
    """
    kern = kernel_for(model, backend)
    rho = np.asarray(rho, dtype=complex)
    rho = rho / np.linalg.norm(rho)
    l1 = kern.rhs(rho, t)
    l2 = kern.rhs(l1, t)
    r = hs_inner(rho, l1)
    q = hs_inner(rho, l2)
    n2 = float(np.linalg.norm(l1) ** 2)
    return {"rayleigh": r, "abs_rayleigh_sq": abs(r) ** 2, "tr_rho_L2_rho": q,
            "norm_L_rho_sq": n2, "indicator": abs(n2 - abs(r) ** 2)}


def match_eigenvalues(found: Sequence[complex], reference: Sequence[complex]) -> list[int]:
    """Greedy nearest-neighbour assignment of ``found`` onto ``reference``.

    Returns, for each element of ``found``, the index of its partner.
    """
    ref = list(map(complex, reference))
    free = set(range(len(ref)))
    out = []
    for f in map(complex, found):
        if not free:
            raise ValueError("more values to match than reference values")
        j = min(free, key=lambda i: abs(ref[i] - f))
        free.remove(j)
        out.append(j)
    return out
