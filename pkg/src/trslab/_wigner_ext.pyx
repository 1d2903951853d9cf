# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Wigner kernel: same recurrence as the numpy fallback, one grid point at a time."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, M_PI

cnp.import_array()


def wigner_grid(double complex[:, ::1] rho_in, alpha_in):
    alpha_arr = np.ascontiguousarray(alpha_in, dtype=np.complex128)
    shape = alpha_arr.shape
    flat = alpha_arr.ravel()
    cdef double[::1] ar = np.ascontiguousarray(flat.real)
    cdef double[::1] ai = np.ascontiguousarray(flat.imag)
    cdef double[:, ::1] rr = np.ascontiguousarray(np.asarray(rho_in).real)
    cdef double[:, ::1] ri = np.ascontiguousarray(np.asarray(rho_in).imag)
    cdef Py_ssize_t npts = ar.shape[0]
    cdef Py_ssize_t n_max = rr.shape[0]
    cdef double[::1] out = np.zeros(npts)
    # w holds <m|D P D^dag|n>/pi for the current row, split into real and imaginary parts
    cdef double[::1] wr = np.zeros(n_max)
    cdef double[::1] wi = np.zeros(n_max)
    cdef double[::1] sq = np.sqrt(np.arange(n_max, dtype=np.float64))
    cdef double[::1] isq = np.zeros(n_max)
    cdef Py_ssize_t k, m, n
    cdef double xr, xi, pr, pi_, nr, ni, acc, sm
    for n in range(1, n_max):
        isq[n] = 1.0 / sq[n]
    with nogil:
        for k in range(npts):
            xr = 2.0 * ar[k]
            xi = 2.0 * ai[k]
            wr[0] = exp(-0.5 * (xr * xr + xi * xi)) / M_PI
            wi[0] = 0.0
            acc = rr[0, 0] * wr[0]
            for n in range(1, n_max):
                wr[n] = (xr * wr[n - 1] - xi * wi[n - 1]) * isq[n]
                wi[n] = (xr * wi[n - 1] + xi * wr[n - 1]) * isq[n]
                acc = acc + 2.0 * (rr[0, n] * wr[n] - ri[0, n] * wi[n])
            for m in range(1, n_max):
                sm = sq[m]
                pr = wr[m]
                pi_ = wi[m]
                # conj(2 alpha) * prev - sqrt(m) w[m-1]
                wr[m] = (xr * pr + xi * pi_ - sm * wr[m - 1]) * isq[m]
                wi[m] = (xr * pi_ - xi * pr - sm * wi[m - 1]) * isq[m]
                acc = acc + rr[m, m] * wr[m]
                for n in range(m + 1, n_max):
                    nr = (xr * wr[n - 1] - xi * wi[n - 1] - sm * pr) * isq[n]
                    ni = (xr * wi[n - 1] + xi * wr[n - 1] - sm * pi_) * isq[n]
                    pr = wr[n]
                    pi_ = wi[n]
                    wr[n] = nr
                    wi[n] = ni
                    acc = acc + 2.0 * (rr[m, n] * nr - ri[m, n] * ni)
            out[k] = acc
    return np.asarray(out).reshape(shape)
