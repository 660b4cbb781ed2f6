# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled recurrence kernels for the builtin state-space families.

Mirrors :mod:`afm._kernels_py` exactly; see that module for the contract.
"""
import numpy as np

from libc.math cimport tanh, atan

cdef int LINEAR = 0
cdef int TANH = 1
cdef int LURE = 2


cdef inline double _psi(int kind, double gain, double z) noexcept nogil:
    if kind == 0:
        return 0.0
    elif kind == 1:
        return gain * z
    elif kind == 2:
        return gain * tanh(z)
    return gain * atan(z)


def simulate(int kind, const double[:, ::1] A, const double[::1] B, const double[::1] C,
             const double[:, ::1] X0, const double[:, ::1] U,
             int psi_kind=0, double psi_gain=0.0):
    cdef Py_ssize_t nb = U.shape[0]
    cdef Py_ssize_t T = U.shape[1]
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t b, t, i, j
    cdef double acc, v, y
    out = np.empty((nb, T + 1, n), dtype=np.float64)
    cdef double[:, :, ::1] X = out
    with nogil:
        for b in range(nb):
            for i in range(n):
                X[b, 0, i] = X0[b, i]
            for t in range(T):
                if kind == LURE:
                    y = 0.0
                    for j in range(n):
                        y = y + C[j] * X[b, t, j]
                    v = _psi(psi_kind, psi_gain, U[b, t] - y)
                else:
                    v = U[b, t]
                for i in range(n):
                    acc = B[i] * v
                    for j in range(n):
                        acc = acc + A[i, j] * X[b, t, j]
                    if kind == TANH:
                        acc = tanh(acc)
                    X[b, t + 1, i] = acc
    return out
