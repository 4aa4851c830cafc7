"""Reference machinery for small systems.

Explicit superoperator matrices in row-major vectorization, dense exact
diagonalization, a generic Arnoldi iteration on any linear map, the shift
bound for Arnoldi on ``L + mu I``, the dense one-period map of a driven model
and the exponential-fit extrapolation used as a baseline.

With row-major ``vec``, ``vec(A rho B) = (A kron B^T) vec(rho)``, so

    -i[H, rho]          ->  -i (H kron I - I kron H^T)
    J rho J^dag         ->  J kron conj(J)
    -{J^dag J, rho}/2   ->  -(J^dag J kron I + I kron (J^dag J)^T) / 2
"""
from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy import optimize, sparse
from scipy.sparse.linalg import expm_multiply

from .generator import LindbladModel
from .krylov import KrylovBasis, orthonormalize_step, ritz_extract
from .operators import devectorize, vectorize
from .propagator import IntegratorConfig, propagate_many

DEFAULT_MAX_DIM = 256
SOURCES = ("liouvillian", "floquet_map", "evolution")


class SizeGuardError(ValueError):
    """The dense superoperator would exceed the configured size limit."""


def _guard(dim: int, max_dim: int | None):
    if max_dim is not None and dim > max_dim:
        raise SizeGuardError(
            f"Hilbert dimension {dim} exceeds the dense-oracle limit {max_dim} "
            f"(superoperator would be {dim**2} x {dim**2}); use the Arnoldi-Lindblad "
            "`spectrum` command instead, or raise max_dim explicitly")


def liouvillian_sparse(model: LindbladModel, t: float = 0.0) -> sparse.csr_matrix:
    """Sparse ``d^2 x d^2`` Liouvillian at time ``t`` (no size guard)."""
    d = model.dim
    eye = sparse.identity(d, dtype=complex, format="csr")
    h = sparse.csr_matrix(model.h0)
    if model.drive is not None:
        h = h + model.drive.f(t) * sparse.csr_matrix(model.drive.h1)
    out = -1j * (sparse.kron(h, eye) - sparse.kron(eye, h.T))
    for j in model.jumps:
        js = sparse.csr_matrix(j)
        jj = (js.conj().T @ js).tocsr()
        out = out + sparse.kron(js, js.conj()) - 0.5 * (sparse.kron(jj, eye) + sparse.kron(eye, jj.T))
    return sparse.csr_matrix(out)


@dataclass
class SuperoperatorMatrix:
    """Dense superoperator acting on row-major vectorized operators."""

    matrix: np.ndarray
    source: str
    dim: int
    t: float = 0.0
    period: float | None = None
    convention: str = "row-major"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if self.matrix.shape != (self.dim ** 2, self.dim ** 2):
            raise ValueError("matrix shape does not match dim^2")

    def apply(self, rho) -> np.ndarray:
        return devectorize(self.matrix @ vectorize(rho), self.dim)


def build_liouvillian_matrix(model: LindbladModel, t: float = 0.0,
                             max_dim: int | None = DEFAULT_MAX_DIM) -> SuperoperatorMatrix:
    """Dense Liouvillian; refuses Hilbert dimensions above ``max_dim``."""
    _guard(model.dim, max_dim)
    return SuperoperatorMatrix(liouvillian_sparse(model, t).toarray(), "liouvillian",
                               model.dim, t=t)


def evolution_matrix(mat: SuperoperatorMatrix, T: float,
                     max_dim: int | None = DEFAULT_MAX_DIM) -> SuperoperatorMatrix:
    """Dense ``exp(L T)`` by scaling and squaring, for cross-checks."""
    if mat.source != "liouvillian":
        raise ValueError("need a Liouvillian source")
    _guard(mat.dim, max_dim)
    return SuperoperatorMatrix(scipy.linalg.expm(mat.matrix * T), "evolution", mat.dim,
                               t=mat.t, period=T)


def evolve_exact(model: LindbladModel, rho0, times: Sequence[float]) -> list[np.ndarray]:
    """``exp(L t) rho0`` on a time grid for time-independent models.

    Uses the action of the exponential on the sparse Liouvillian, so no dense
    ``d^2 x d^2`` matrix is formed.
    """
    if model.is_periodic:
        raise ValueError("exact exponential only for time-independent models")
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be ascending and non-negative")
    lsp = liouvillian_sparse(model).tocsc()
    v = vectorize(rho0).astype(complex)
    out, t_prev = [], 0.0
    for t in times:
        if t > t_prev:
            v = expm_multiply(lsp * (t - t_prev), v)
        out.append(devectorize(v, model.dim))
        t_prev = t
    return out


def hermitian_basis(d: int) -> sparse.csr_matrix:
    """Unitary ``d^2 x d^2`` map from real coordinates to row-major ``vec``.

    Columns are the vectorized orthonormal Hermitian basis ``E_ii``,
    ``(E_ij + E_ji)/sqrt 2`` and ``i (E_ij - E_ji)/sqrt 2`` (``i < j``).
    A Hermiticity-preserving superoperator is real in this basis.
    """
    rows, cols, vals = [], [], []
    c = 0
    s = 1.0 / math.sqrt(2.0)
    for i in range(d):
        rows.append(i * d + i); cols.append(c); vals.append(1.0)
        c += 1
    for i in range(d):
        for j in range(i + 1, d):
            rows += [i * d + j, j * d + i]; cols += [c, c]; vals += [s, s]
            rows += [i * d + j, j * d + i]; cols += [c + 1, c + 1]; vals += [1j * s, -1j * s]
            c += 2
    return sparse.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(d * d, d * d))


def real_form(mat: SuperoperatorMatrix) -> np.ndarray:
    """``U^dag M U`` in the Hermitian basis; must be real for these sources."""
    u = hermitian_basis(mat.dim)
    a = np.asarray(u.conj().T @ np.asarray((u.T @ mat.matrix.T).T))
    scale = max(np.abs(a).max(), 1e-300)
    if np.abs(a.imag).max() > 1e-10 * scale:
        raise ValueError("superoperator does not preserve Hermiticity")
    return np.ascontiguousarray(a.real)


@dataclass
class Spectrum:
    """Sorted eigenvalues (and optionally eigenmatrices) of a superoperator."""

    values: np.ndarray
    source: str
    dim: int
    vectors: np.ndarray | None = None  # columns are row-major vec of norm-1 eigenmatrices
    period: float | None = None
    wall_time: float = 0.0

    @property
    def steady_index(self) -> int:
        if self.source == "liouvillian":
            return int(np.argmin(np.abs(self.values)))
        return int(np.argmin(np.abs(self.values - 1)))

    def eigenmatrix(self, i: int) -> np.ndarray:
        if self.vectors is None:
            raise ValueError("spectrum was computed without eigenvectors")
        return devectorize(self.vectors[:, i], self.dim)

    def lambdas(self) -> np.ndarray:
        """Generator eigenvalues; for map sources ``log(phi) / period``."""
        if self.source == "liouvillian":
            return self.values.copy()
        with np.errstate(divide="ignore"):
            return np.log(self.values.astype(complex)) / self.period

    def to_dict(self, config: dict | None = None, count: int | None = None) -> dict:
        n = len(self.values) if count is None else min(count, len(self.values))
        lam = self.lambdas()
        pairs = []
        for i in range(n):
            rec = {"re_lambda": float(lam[i].real), "im_lambda": float(lam[i].imag),
                   "re_eps": None, "im_eps": None, "residual": None, "converged": True,
                   "alias_flag": False}
            if self.source != "liouvillian":
                rec["re_eps"], rec["im_eps"] = float(self.values[i].real), float(self.values[i].imag)
            pairs.append(rec)
        return {"source": "oracle", "kind": self.source, "dim": self.dim,
                "n_eigenvalues": len(self.values), "period": self.period,
                "wall_time": self.wall_time, "config": config or {}, "pairs": pairs}

    def to_json(self, path, config: dict | None = None, count: int | None = None) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(config, count), fh, indent=2)


def exact_spectrum(mat: SuperoperatorMatrix, vectors: bool = True,
                   keep: int | None = None) -> Spectrum:
    """Dense eigendecomposition of a superoperator.

    Both Liouvillians and evolution maps preserve Hermiticity, so the
    decomposition runs on the real representation from :func:`real_form`,
    which is several times cheaper than the complex one.

    Parameters
    ----------
    mat : SuperoperatorMatrix
    vectors : bool
        Also compute eigenmatrices (normalized to Frobenius norm 1).
    keep : int, optional
        Keep only the first ``keep`` eigenvectors after sorting.

    Returns
    -------
    Spectrum
        Liouvillian sources sorted by ``|Re lambda|`` ascending, map sources
        by ``|phi|`` descending; ties put ``Im >= 0`` first.
    """
    t0 = time.perf_counter()
    a = real_form(mat)
    if vectors:
        vals, vecs = scipy.linalg.eig(a, overwrite_a=True, check_finite=False)
    else:
        vals, vecs = scipy.linalg.eigvals(a, overwrite_a=True, check_finite=False), None
    if not np.all(np.isfinite(vals)):
        raise np.linalg.LinAlgError("eigensolver returned non-finite values")
    if mat.source == "liouvillian":
        order = np.lexsort((-vals.imag, -np.round(vals.real, 10)))
    else:
        order = np.lexsort((-vals.imag, -np.round(np.abs(vals), 12)))
    vals = vals[order]
    if vecs is not None:
        idx = order if keep is None else order[:keep]
        u = hermitian_basis(mat.dim)
        vecs = np.asarray(u @ vecs[:, idx])
        vecs /= np.linalg.norm(vecs, axis=0)
    return Spectrum(vals, mat.source, mat.dim, vecs, mat.period, time.perf_counter() - t0)


@dataclass
class ArnoldiResult:
    values: np.ndarray
    vectors: list
    residuals: np.ndarray
    converged: np.ndarray
    iterations: int
    termination: str


def generic_arnoldi(apply: Callable[[np.ndarray], np.ndarray], v0, m: int = 1, tol: float = 1e-8,
                    max_iter: int = 500, check_every: int = 1) -> ArnoldiResult:
    """Arnoldi iteration on a black-box linear map.

    The ``m`` Ritz values of largest magnitude are accepted once each has
    ``||A x - theta x|| < tol`` for its normalized Ritz vector ``x``.  Works
    for vectors or for operators (anything ``apply`` maps to its own shape).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    basis = KrylovBasis.start(v0, 1.0, capacity=min(max_iter + 1, 64))
    termination = "max_iterations"
    while True:
        orthonormalize_step(basis, apply(basis.element(-1)))
        k = basis.steps_taken
        if k % check_every and not basis.closed and k < max_iter:
            continue
        pairs = ritz_extract(basis, m)[:m]
        res = np.array([np.linalg.norm(apply(p.eigenmatrix) - p.eps * p.eigenmatrix)
                        for p in pairs])
        conv = res < tol
        if len(pairs) >= m and conv.all():
            termination = "converged"
            break
        if basis.closed:
            termination = "happy_breakdown"
            break
        if k >= max_iter:
            break
    return ArnoldiResult(np.array([p.eps for p in pairs]), [p.eigenmatrix for p in pairs],
                         res, conv, k, termination)


@dataclass(frozen=True)
class ShiftBound:
    """Shift bound and two convergence-rate proxies.

    ``ratio`` is ``max_{j != 0} |lambda_j| / mu``.  ``rate_proxy`` is
    ``2 min_{j != 0} |Re lambda_j| / max_j |Im lambda_j|``, the slowest
    relaxation compared with the fastest oscillation, which is what limits
    Arnoldi on ``L / mu + I`` when imaginary parts dominate.
    """

    mu: float
    ratio: float
    rate_proxy: float
    argmax: complex  # eigenvalue attaining mu


def shift_bound(eigenvalues: Sequence[complex], zero_tol: float = 1e-8) -> ShiftBound:
    """``mu = max_{j != 0} |lambda_j|^2 / (-2 Re lambda_j)`` for Arnoldi on ``L + mu I``.

    ``lambda_0`` is the eigenvalue of smallest modulus; others with
    ``|lambda| <= zero_tol * max|lambda|`` are also treated as zero modes.
    """
    lam = np.asarray(eigenvalues, dtype=complex)
    if lam.size < 2 or not np.any(lam != 0):
        raise ValueError("need lambda_0 and at least one non-zero eigenvalue")
    scale = np.abs(lam).max()
    i0 = int(np.argmin(np.abs(lam)))
    rest = np.delete(lam, i0)
    rest = rest[np.abs(rest) > zero_tol * scale]
    if rest.size == 0:
        raise ValueError("all eigenvalues are zero")
    if np.any(rest.real >= 0):
        raise ValueError("a non-steady eigenvalue has non-negative real part")
    bounds = np.abs(rest) ** 2 / (-2.0 * rest.real)
    k = int(np.argmax(bounds))
    mu = float(bounds[k])
    im_max = float(np.abs(rest.imag).max())
    proxy = 2.0 * float(np.abs(rest.real).min()) / im_max if im_max > 0 else math.inf
    return ShiftBound(mu, float(np.abs(rest).max() / mu), proxy, complex(rest[k]))


def floquet_map_matrix(model: LindbladModel, cfg: IntegratorConfig | None = None,
                       workers: int = 1, max_dim: int | None = DEFAULT_MAX_DIM,
                       progress: Callable[[int, int], None] | None = None) -> SuperoperatorMatrix:
    """Dense one-period map from evolving every ``|i><j|`` over a period.

    Stored in action form: column ``i d + j`` is ``vec(F(|i><j|))``, so
    ``vec(F rho) = M vec(rho)``.  Stacking the same images as rows instead
    gives the transpose.  Only ``i <= j`` is evolved;
    ``F(|j><i|) = F(|i><j|)^dag`` because the map preserves Hermiticity.
    """
    if not model.is_periodic:
        raise ValueError("floquet_map_matrix needs a periodically driven model")
    d = model.dim
    _guard(d, max_dim)
    T = model.period
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    out = np.empty((d * d, d * d), dtype=complex)
    chunk = max(1, 4 * max(workers, 1))
    done = 0
    for start in range(0, len(pairs), chunk):
        block = pairs[start:start + chunk]
        seeds = []
        for i, j in block:
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            seeds.append(e)
        images = propagate_many(model, seeds, 0.0, T, cfg, workers)
        for (i, j), img in zip(block, images):
            out[:, i * d + j] = vectorize(img)
            if i != j:
                out[:, j * d + i] = vectorize(img.conj().T)
        done += len(block)
        if progress is not None:
            progress(done, len(pairs))
    return SuperoperatorMatrix(out, "floquet_map", d, period=T)


@dataclass
class FitResult:
    ss: float
    amplitude: float
    rate: complex  # Re < 0; imaginary part is the oscillation frequency
    residual: float
    converged: bool
    kind: str  # "exponential" or "oscillatory"
    message: str = ""
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"ss": self.ss, "amplitude": self.amplitude,
                "re_rate": self.rate.real, "im_rate": self.rate.imag,
                "residual": self.residual, "converged": self.converged,
                "kind": self.kind, "message": self.message, "params": self.params}


def _exp_model(t, ss, c, a):
    return ss + c * np.exp(a * t)


def _osc_model(t, ss, a, b, c, w):
    return ss + np.exp(a * t) * (b * np.cos(w * t) + c * np.sin(w * t))


def exp_fit_extrapolate(t, values, window: tuple[float, float] | None = None,
                        kind: str = "auto", noise_floor: float | None = None) -> FitResult:
    """Fit ``ss + c exp(lambda t)`` to the tail of a trajectory.

    Parameters
    ----------
    t, values : array_like
        Sample times and (real) observable values.  Complex input is accepted
        when ``|Im| < 1e-10``.
    window : (t_lo, t_hi), optional
        Only samples in this closed interval are fitted.
    kind : {"auto", "exponential", "oscillatory"}
        ``auto`` tries the damped oscillation ``ss + e^{a t}(b cos wt + c sin wt)``
        when the pure exponential leaves a residual above 10x the noise floor.
    noise_floor : float, optional
        RMS noise level; default is 1e-12 times the data scale.

    Returns
    -------
    FitResult
        ``amplitude`` and ``rate`` refer to the window start as time origin.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values)
    if np.iscomplexobj(y):
        if np.abs(y.imag).max(initial=0.0) >= 1e-10:
            raise ValueError("observable series has a non-negligible imaginary part")
        y = y.real
    y = y.astype(float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, y = t[sel], y[sel]
    if kind not in ("auto", "exponential", "oscillatory"):
        raise ValueError(f"unknown fit kind {kind!r}")
    need = 15 if kind == "oscillatory" else 9
    if t.size < need:
        raise ValueError(f"need at least {need} samples in the fit window, got {t.size}")
    tau = t - t[0]
    scale = max(np.abs(y).max(), 1e-300)
    floor = 1e-12 * scale if noise_floor is None else noise_floor
    fits = []
    if kind in ("auto", "exponential"):
        fits.append(_fit_exponential(tau, y))
    if kind == "oscillatory" or (kind == "auto" and fits[0].residual > 10 * floor):
        fits.append(_fit_oscillatory(tau, y))
    ok = [f for f in fits if f.converged] or fits
    return min(ok, key=lambda f: f.residual)


def _rms(r):
    return float(np.sqrt(np.mean(r ** 2)))


def _fit_exponential(tau, y):
    ss0 = y[-1]
    span = tau[-1] if tau[-1] > 0 else 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (y[-1] - y[len(y) // 2]) / (y[len(y) // 2] - y[0])
    a0 = -1.0 / span
    if np.isfinite(ratio) and 0 < ratio < 1:
        a0 = math.log(ratio) / (tau[-1] - tau[len(y) // 2] or span)
    p0 = (ss0, y[0] - ss0, a0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", optimize.OptimizeWarning)
            p, _ = optimize.curve_fit(_exp_model, tau, y, p0=p0, maxfev=20000,
                                      bounds=([-np.inf, -np.inf, -np.inf], [np.inf, np.inf, 0.0]))
        res = _rms(y - _exp_model(tau, *p))
        return FitResult(float(p[0]), float(p[1]), complex(p[2]), res, True, "exponential",
                         params=dict(zip(("ss", "c", "a"), map(float, p))))
    except (RuntimeError, ValueError) as exc:
        return FitResult(float(ss0), float(y[0] - ss0), complex(a0), _rms(y - ss0), False,
                         "exponential", message=str(exc))


def _fit_oscillatory(tau, y):
    ss0 = float(np.mean(y[len(y) // 2:]))
    dy = y - ss0
    # dominant frequency from the zero-padded spectrum of the detrended series
    n = 8 * len(y)
    dt = float(np.mean(np.diff(tau))) if len(tau) > 1 else 1.0
    spec = np.abs(np.fft.rfft(dy - dy.mean(), n))
    freqs = 2 * np.pi * np.fft.rfftfreq(n, dt)
    w0 = float(freqs[1 + np.argmax(spec[1:])]) if len(spec) > 1 else 1.0
    span = tau[-1] if tau[-1] > 0 else 1.0
    best = None
    for a0 in (-0.3 / span, -3.0 / span):
        p0 = (ss0, a0, dy[0], 0.0, w0)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", optimize.OptimizeWarning)
                p, _ = optimize.curve_fit(
                    _osc_model, tau, y, p0=p0, maxfev=40000,
                    bounds=([-np.inf, -np.inf, -np.inf, -np.inf, 0.0], [np.inf, 0.0, np.inf, np.inf, np.inf]))
        except (RuntimeError, ValueError) as exc:
            if best is None:
                best = FitResult(ss0, float(dy[0]), complex(a0, w0), _rms(dy), False,
                                 "oscillatory", message=str(exc))
            continue
        res = _rms(y - _osc_model(tau, *p))
        cand = FitResult(float(p[0]), float(math.hypot(p[2], p[3])), complex(p[1], p[4]), res,
                         True, "oscillatory",
                         params=dict(zip(("ss", "a", "b", "c", "w"), map(float, p))))
        if best is None or not best.converged or cand.residual < best.residual:
            best = cand
    return best
