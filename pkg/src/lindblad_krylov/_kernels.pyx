# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Lindblad right-hand side and fixed-step RK4 loop.

Operators arrive as CSR triplets; the density matrix is a dense C-ordered
complex array.  All loops are written so that the dense operand is walked
row by row.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos

cnp.import_array()

ctypedef double complex cplx


cdef inline void _row_left(cplx alpha, const cplx[::1] data, const Py_ssize_t[::1] ind,
                           const Py_ssize_t[::1] ptr, Py_ssize_t p0, Py_ssize_t q0, Py_ssize_t r,
                           const cplx[:, ::1] x, cplx* row, Py_ssize_t d) noexcept nogil:
    # row += alpha * (A @ x)[r, :]; real arithmetic on the interleaved layout vectorizes
    cdef Py_ssize_t p, c
    cdef cplx a
    cdef double ar, ai, xre, xim
    cdef double* out = <double*>row
    cdef const double* xr
    for p in range(ptr[q0 + r], ptr[q0 + r + 1]):
        a = alpha * data[p0 + p]
        ar = a.real
        ai = a.imag
        xr = <const double*>&x[ind[p0 + p], 0]
        for c in range(d):
            xre = xr[2 * c]
            xim = xr[2 * c + 1]
            out[2 * c] += ar * xre - ai * xim
            out[2 * c + 1] += ar * xim + ai * xre


cdef inline void _row_right(cplx alpha, const cplx[::1] data, const Py_ssize_t[::1] ind,
                            const Py_ssize_t[::1] ptr, Py_ssize_t p0, Py_ssize_t q0,
                            const cplx* xrow, cplx* row, Py_ssize_t d) noexcept nogil:
    # row += alpha * xrow @ B  with B in CSR
    cdef Py_ssize_t p, k, j
    cdef cplx xv
    cdef double xr, xi, br, bi
    cdef double* out = <double*>row
    for k in range(d):
        xv = xrow[k]
        if xv == 0:
            continue
        xv = alpha * xv
        xr = xv.real
        xi = xv.imag
        for p in range(ptr[q0 + k], ptr[q0 + k + 1]):
            j = ind[p0 + p]
            br = data[p0 + p].real
            bi = data[p0 + p].imag
            out[2 * j] += xr * br - xi * bi
            out[2 * j + 1] += xr * bi + xi * br


cdef class SparseLindblad:
    """Sparse Lindblad generator ``L(t)`` acting on dense operators."""

    cdef readonly Py_ssize_t d
    cdef readonly int njumps
    cdef readonly bint driven
    cdef double f0, f1, omega
    # effective Hamiltonian and its adjoint
    cdef cplx[::1] he_d, hea_d
    cdef Py_ssize_t[::1] he_i, he_p, hea_i, hea_p
    # drive Hamiltonian and its adjoint
    cdef cplx[::1] h1_d, h1a_d
    cdef Py_ssize_t[::1] h1_i, h1_p, h1a_i, h1a_p
    # packed jumps: data/indices concatenated, indptr stacked (njumps * (d + 1))
    cdef cplx[::1] j_d, ja_d
    cdef Py_ssize_t[::1] j_i, j_p, ja_i, ja_p, j_off, ja_off

    def __init__(self, Py_ssize_t d, heff, heff_adj, h1, h1_adj, drive, jumps, jumps_adj):
        self.d = d
        self.he_d, self.he_i, self.he_p = heff
        self.hea_d, self.hea_i, self.hea_p = heff_adj
        self.driven = h1 is not None
        if self.driven:
            self.h1_d, self.h1_i, self.h1_p = h1
            self.h1a_d, self.h1a_i, self.h1a_p = h1_adj
            self.f0, self.f1, self.omega = drive
        else:
            self.f0 = self.f1 = self.omega = 0.0
        self.njumps = len(jumps[3])
        self.j_d, self.j_i, self.j_p, self.j_off = jumps
        self.ja_d, self.ja_i, self.ja_p, self.ja_off = jumps_adj

    cdef void _rhs(self, double t, const cplx[:, ::1] rho, cplx[:, ::1] out,
                   cplx* jrow) noexcept nogil:
        # one pass per output row keeps that row hot in cache; the J rho
        # intermediate is built row by row in the caller's scratch ``jrow``
        # (per call, so concurrent threads never share it)
        cdef Py_ssize_t d = self.d, r, c, mu
        cdef double ft = 0.0
        cdef cplx* row
        if self.driven:
            ft = self.f0 + self.f1 * cos(self.omega * t)
        for r in range(d):
            row = &out[r, 0]
            for c in range(d):
                row[c] = 0
            _row_left(-1j, self.he_d, self.he_i, self.he_p, 0, 0, r, rho, row, d)
            _row_right(1j, self.hea_d, self.hea_i, self.hea_p, 0, 0, &rho[r, 0], row, d)
            if self.driven:
                _row_left(-1j * ft, self.h1_d, self.h1_i, self.h1_p, 0, 0, r, rho, row, d)
                _row_right(1j * ft, self.h1a_d, self.h1a_i, self.h1a_p, 0, 0, &rho[r, 0], row, d)
            for mu in range(self.njumps):
                for c in range(d):
                    jrow[c] = 0
                _row_left(1.0, self.j_d, self.j_i, self.j_p, self.j_off[mu], mu * (d + 1),
                          r, rho, jrow, d)
                _row_right(1.0, self.ja_d, self.ja_i, self.ja_p, self.ja_off[mu], mu * (d + 1),
                           jrow, row, d)

    def rhs(self, rho, double t=0.0):
        cdef const cplx[:, ::1] x = np.ascontiguousarray(rho, dtype=np.complex128)
        out = np.empty((self.d, self.d), dtype=np.complex128)
        cdef cplx[:, ::1] o = out
        cdef cplx[::1] scratch = np.empty(self.d, dtype=np.complex128)
        with nogil:
            self._rhs(t, x, o, &scratch[0])
        return out

    def rk4(self, rho, double t0, double dt, Py_ssize_t nsteps):
        """Classical RK4 for ``nsteps`` steps of size ``dt`` starting at ``t0``."""
        cdef Py_ssize_t d = self.d, n, r, c
        y_arr = np.array(rho, dtype=np.complex128, order="C", copy=True)
        cdef cplx[:, ::1] y = y_arr
        cdef cplx[:, ::1] acc = np.empty((d, d), dtype=np.complex128)
        cdef cplx[:, ::1] ys = np.empty((d, d), dtype=np.complex128)
        cdef cplx[:, ::1] k = np.empty((d, d), dtype=np.complex128)
        cdef cplx[::1] scratch = np.empty(d, dtype=np.complex128)
        cdef cplx* jrow = &scratch[0]
        cdef double t, h2 = 0.5 * dt, h3 = dt / 3.0, h6 = dt / 6.0
        with nogil:
            for n in range(nsteps):
                t = t0 + n * dt
                self._rhs(t, y, k, jrow)
                for r in range(d):
                    for c in range(d):
                        acc[r, c] = y[r, c] + h6 * k[r, c]
                        ys[r, c] = y[r, c] + h2 * k[r, c]
                self._rhs(t + h2, ys, k, jrow)
                for r in range(d):
                    for c in range(d):
                        acc[r, c] = acc[r, c] + h3 * k[r, c]
                        ys[r, c] = y[r, c] + h2 * k[r, c]
                self._rhs(t + h2, ys, k, jrow)
                for r in range(d):
                    for c in range(d):
                        acc[r, c] = acc[r, c] + h3 * k[r, c]
                        ys[r, c] = y[r, c] + dt * k[r, c]
                self._rhs(t + dt, ys, k, jrow)
                for r in range(d):
                    for c in range(d):
                        y[r, c] = acc[r, c] + h6 * k[r, c]
        return y_arr
