"""Direct time evolution of the master equation.

Fixed-step classical RK4 runs on the sparse kernels from
:mod:`lindblad_krylov.kernels`; the adaptive 4(5) pair is delegated to
:func:`scipy.integrate.solve_ivp`.  Absolute time is threaded through every
stage, so periodically driven models integrate correctly from any ``t0``.
Inputs need not be physical states; nothing is renormalized along the way.
"""
from __future__ import annotations

import csv
import math
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .generator import LindbladModel, expectation
from .kernels import make_kernel

METHODS = ("rk4", "rk45")


class IntegrationError(RuntimeError):
    """Integration failed; ``time`` is where the integrator gave up."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (at t = {time:.6g})")
        self.time = time


@dataclass(frozen=True)
class IntegratorConfig:
    """How to integrate one interval.

    Parameters
    ----------
    method : {"rk4", "rk45"}
        Fixed-step classical Runge-Kutta or the adaptive Dormand-Prince pair.
    dt : float, optional
        RK4 step.  Takes precedence over ``substeps``.
    substeps : int, optional
        RK4 steps per interval.  When neither ``dt`` nor ``substeps`` is given
        the count is ``max(min_substeps, ceil(T * ||L|| / stability))``.
    rtol, atol : float
        Adaptive tolerances.  ``rtol`` also serves as the nominal integration
        tolerance quoted by the property checks.
    min_substeps : int
        Floor for the automatic RK4 step count.
    stability : float
        Largest ``|z| = ||L|| dt`` the automatic rule allows.  Classical RK4 is
        stable up to about 2.8 on the imaginary axis.
    """

    method: str = "rk4"
    dt: float | None = None
    substeps: int | None = None
    rtol: float = 1e-8
    atol: float = 1e-10
    min_substeps: int = 200
    stability: float = 2.5
    backend: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.substeps is not None and self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.min_substeps < 1 or not self.stability > 0:
            raise ValueError("min_substeps must be >= 1 and stability > 0")

    @property
    def tolerance(self) -> float:
        return self.rtol

    def steps_for(self, model: LindbladModel, T: float) -> int:
        """Number of RK4 steps used for an interval of length ``T``."""
        if self.dt is not None:
            return max(1, math.ceil(T / self.dt - 1e-9))
        if self.substeps is not None:
            return self.substeps
        return max(self.min_substeps, math.ceil(T * model.generator_norm_bound() / self.stability))


DEFAULT_CONFIG = IntegratorConfig()

_kernel_cache: "weakref.WeakKeyDictionary[LindbladModel, dict]" = weakref.WeakKeyDictionary()


def kernel_for(model: LindbladModel, backend: str | None = None):
    """Kernel object for ``model``, built once per model and backend."""
    per_model = _kernel_cache.setdefault(model, {})
    if backend not in per_model:
        per_model[backend] = make_kernel(model, backend)
    return per_model[backend]


def _check_input(model, rho):
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (model.dim, model.dim):
        raise ValueError(f"operator has shape {rho.shape}, model dimension is {model.dim}")
    if not np.all(np.isfinite(rho)):
        raise ValueError("operator has non-finite entries")
    return rho


def propagate(model: LindbladModel, rho0, t0: float = 0.0, T: float = 1.0,
              cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Evolve ``rho0`` from ``t0`` to ``t0 + T`` under the master equation.

    Parameters
    ----------
    model : LindbladModel
    rho0 : array_like
        Any ``dim x dim`` operator; the map is linear so unphysical inputs
        (Krylov basis elements) are fine.
    t0, T : float
        Start time and interval length, ``T > 0``.
    cfg : IntegratorConfig, optional

    Returns
    -------
    numpy.ndarray
        ``rho(t0 + T)``.

    Raises
    ------
    IntegrationError
        Adaptive step size underflow, or a non-finite state.
    """
    cfg = cfg or DEFAULT_CONFIG
    if not T > 0:
        raise ValueError("interval T must be positive")
    rho0 = _check_input(model, rho0)
    if cfg.method == "rk4":
        n = cfg.steps_for(model, T)
        out = kernel_for(model, cfg.backend).rk4(rho0, float(t0), T / n, n)
        if not np.all(np.isfinite(out)):
            raise IntegrationError("RK4 produced non-finite values; reduce dt", t0 + T)
        return out
    return _rk45(model, rho0, t0, T, cfg)


def _rk45(model, rho0, t0, T, cfg):
    kern = kernel_for(model, cfg.backend)
    d = model.dim

    def f(t, y):
        return kern.rhs(y.reshape(d, d), t).ravel()

    sol = solve_ivp(f, (t0, t0 + T), rho0.ravel(), method="RK45",
                    rtol=cfg.rtol, atol=cfg.atol)
    if sol.status != 0:
        raise IntegrationError(f"adaptive integrator failed: {sol.message}", float(sol.t[-1]))
    return sol.y[:, -1].reshape(d, d)


def propagate_many(model: LindbladModel, rhos: Sequence, t0: float, T: float,
                   cfg: IntegratorConfig | None = None, workers: int = 1) -> list[np.ndarray]:
    """Propagate independent operators, optionally on a thread pool.

    The compiled RK4 loop releases the GIL, so threads overlap there.
    """
    if workers <= 1 or len(rhos) <= 1:
        return [propagate(model, r, t0, T, cfg) for r in rhos]
    kernel_for(model, (cfg or DEFAULT_CONFIG).backend)  # build before fanning out
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: propagate(model, r, t0, T, cfg), rhos))


@dataclass
class Trajectory:
    """Sampled expectation values, one row per time."""

    times: np.ndarray
    names: list[str]
    values: np.ndarray  # shape (len(times), len(names)), complex

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"{p}({n})" for n in self.names for p in ("re", "im")])
            for t, row in zip(self.times, self.values):
                w.writerow([repr(float(t))] + [repr(float(x)) for v in row for x in (v.real, v.imag)])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if not header or header[0] != "t" or len(header) % 2 != 1:
            raise ValueError(f"{path}: not a trajectory table")
        names = [h[3:-1] for h in header[1::2]]
        data = np.array([[float(x) for x in r] for r in body], dtype=float).reshape(len(body), -1)
        vals = data[:, 1::2] + 1j * data[:, 2::2]
        return cls(data[:, 0], names, vals)


def observable_trajectory(model: LindbladModel, rho0, times: Sequence[float],
                          observables: Mapping[str, np.ndarray] | Sequence[np.ndarray],
                          cfg: IntegratorConfig | None = None) -> Trajectory:
    """Expectation values ``Tr[O rho(t)]`` sampled along one integration pass.

    The state starts at ``times[0]``; every following sample continues from
    the previous one.  With a fixed ``dt`` each gap uses ``ceil(gap / dt)``
    steps, otherwise the automatic rule of :class:`IntegratorConfig`.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("need a non-empty 1-d list of times")
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("times must be ascending and start at t >= 0")
    if isinstance(observables, Mapping):
        names, ops = list(observables), [np.asarray(o) for o in observables.values()]
    else:
        ops = [np.asarray(o) for o in observables]
        names = [f"O{i}" for i in range(len(ops))]
    rho = _check_input(model, rho0)
    values = np.empty((times.size, len(ops)), dtype=complex)
    for k, t in enumerate(times):
        if k and t > times[k - 1]:
            rho = propagate(model, rho, times[k - 1], t - times[k - 1], cfg)
        values[k] = [expectation(o, rho) for o in ops]
    return Trajectory(times, names, values)
