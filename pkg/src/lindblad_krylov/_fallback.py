"""Pure numpy / scipy.sparse twin of the compiled kernels in ``_kernels.pyx``."""
from __future__ import annotations

import math

import numpy as np


class SparseLindblad:
    """Same constructor and methods as the Cython class, built on scipy.sparse."""

    def __init__(self, d, heff, heff_adj, h1, h1_adj, drive, jumps, jumps_adj):
        self.d = d
        self.heff = heff
        self.driven = h1 is not None
        self.h1 = h1
        self.f0, self.f1, self.omega = drive if drive is not None else (0.0, 0.0, 0.0)
        self.jumps = jumps
        self.njumps = len(jumps)

    def rhs(self, rho, t=0.0):
        rho = np.asarray(rho, dtype=complex)
        # rho @ A^dag == (A @ rho^dag)^dag keeps every product sparse-times-dense
        rho_h = rho.conj().T
        out = -1j * (self.heff @ rho)
        out += 1j * (self.heff @ rho_h).conj().T
        if self.driven:
            ft = self.f0 + self.f1 * math.cos(self.omega * t)
            out += (-1j * ft) * (self.h1 @ rho)
            out += (1j * ft) * (self.h1 @ rho_h).conj().T
        for j in self.jumps:
            x = j @ rho
            out += (j @ x.conj().T).conj().T
        return np.ascontiguousarray(out)

    def rk4(self, rho, t0, dt, nsteps):
        y = np.array(rho, dtype=complex, copy=True)
        for n in range(nsteps):
            t = t0 + n * dt
            k1 = self.rhs(y, t)
            k2 = self.rhs(y + (0.5 * dt) * k1, t + 0.5 * dt)
            k3 = self.rhs(y + (0.5 * dt) * k2, t + 0.5 * dt)
            k4 = self.rhs(y + dt * k3, t + dt)
            y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return y
