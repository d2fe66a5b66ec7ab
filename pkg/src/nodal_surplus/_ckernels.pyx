# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel: batched det(I - diag(exp(i*phase)) S) by complex LU."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef double complex cplx


cdef inline double cabs1(cplx z) noexcept nogil:
    return (z.real if z.real >= 0 else -z.real) + (z.imag if z.imag >= 0 else -z.imag)


cdef cplx lu_det(cplx* a, int n) noexcept nogil:
    cdef int i, j, r, p
    cdef double best, v
    cdef cplx det = 1.0, piv, f, tmp
    for j in range(n):
        p = j
        best = cabs1(a[j * n + j])
        for r in range(j + 1, n):
            v = cabs1(a[r * n + j])
            if v > best:
                best = v
                p = r
        if best == 0.0:
            return 0.0
        if p != j:
            for i in range(n):
                tmp = a[j * n + i]
                a[j * n + i] = a[p * n + i]
                a[p * n + i] = tmp
            det = -det
        piv = a[j * n + j]
        det = det * piv
        for r in range(j + 1, n):
            f = a[r * n + j] / piv
            if f != 0:
                for i in range(j + 1, n):
                    a[r * n + i] = a[r * n + i] - f * a[j * n + i]
    return det


def secular_det(double[:, ::1] S, double[:, ::1] phases):
    """Return det(I - diag(exp(i*phases[b])) S) for every row b."""
    cdef Py_ssize_t nb = phases.shape[0]
    cdef int n = S.shape[0]
    if S.shape[1] != n or phases.shape[1] != n:
        raise ValueError("shape mismatch between S and phases")
    out = np.empty(nb, dtype=np.complex128)
    cdef cplx[::1] res = out
    cdef cplx* a = <cplx*> malloc(n * n * sizeof(cplx))
    cdef cplx* u = <cplx*> malloc(n * sizeof(cplx))
    cdef Py_ssize_t b
    cdef int r, c
    if a == NULL or u == NULL:
        free(a)
        free(u)
        raise MemoryError()
    with nogil:
        for b in range(nb):
            for r in range(n):
                u[r] = cos(phases[b, r]) + 1j * sin(phases[b, r])
            for r in range(n):
                for c in range(n):
                    a[r * n + c] = -u[r] * S[r, c]
                a[r * n + r] = a[r * n + r] + 1.0
            res[b] = lu_det(a, n)
    free(a)
    free(u)
    return out
