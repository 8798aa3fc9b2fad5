# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled recursion kernels.

Signatures and state conventions mirror ``pure.py`` exactly; the tests
assert numerical agreement between the two backends.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, sqrt
from libc.stdlib cimport free, malloc

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093453


cdef int _chol_lower(double* a, Py_ssize_t m) noexcept nogil:
    """In-place lower Cholesky of a row-major m-by-m matrix; 0 on success."""
    cdef Py_ssize_t i, j, k
    cdef double s
    for j in range(m):
        s = a[j * m + j]
        for k in range(j):
            s -= a[j * m + k] * a[j * m + k]
        if s <= 0.0:
            return -1
        a[j * m + j] = sqrt(s)
        for i in range(j + 1, m):
            s = a[i * m + j]
            for k in range(j):
                s -= a[i * m + k] * a[j * m + k]
            a[i * m + j] = s / a[j * m + j]
    return 0


def gjr_filter(returns, double a0, double a1, double a2, double a3,
               double kappa, double rate, double sigma0):
    """Asymmetric-GARCH variance filter; see the NumPy twin for the contract."""
    cdef const double[::1] r = np.ascontiguousarray(returns, dtype=np.float64)
    cdef Py_ssize_t n = r.shape[0]
    sigma_arr = np.empty(n)
    eps_arr = np.empty(n)
    cdef double[::1] sigma = sigma_arr
    cdef double[::1] eps = eps_arr
    cdef double s = sigma0
    cdef double e, nll = 0.0
    cdef Py_ssize_t t
    with nogil:
        for t in range(n):
            sigma[t] = s
            e = r[t] - rate - kappa * sqrt(s) + 0.5 * s
            eps[t] = e
            nll += 0.5 * (LOG_2PI + log(s) + e * e / s)
            s = a0 + (a1 + (a2 if e < 0.0 else 0.0)) * e * e + a3 * s
    return sigma_arr, eps_arr, nll


def dcc_nll(u, inno, c_bar, double b1, double b2):
    """Correlation-stage negative quasi-log-likelihood of the DCC recursion."""
    cdef const double[:, ::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[:, ::1] ee = np.ascontiguousarray(inno, dtype=np.float64)
    cdef const double[:, ::1] cc = np.ascontiguousarray(c_bar, dtype=np.float64)
    cdef Py_ssize_t n = uu.shape[0]
    cdef Py_ssize_t m = uu.shape[1]
    cdef double* d = <double*> malloc(m * m * sizeof(double))
    cdef double* corr = <double*> malloc(m * m * sizeof(double))
    cdef double* w = <double*> malloc(m * sizeof(double))
    cdef double* rootd = <double*> malloc(m * sizeof(double))
    if d == NULL or corr == NULL or w == NULL or rootd == NULL:
        free(d); free(corr); free(w); free(rootd)
        raise MemoryError()
    cdef double icoef = 1.0 - b1 - b2
    cdef double nll = 0.0, s, logdet, uquad, usq
    cdef Py_ssize_t t, i, j, k
    cdef int fail = 0
    with nogil:
        for i in range(m):
            for j in range(m):
                d[i * m + j] = cc[i, j]
        for t in range(n):
            if t > 0:
                for i in range(m):
                    for j in range(m):
                        d[i * m + j] = (icoef * cc[i, j]
                                        + b1 * ee[t - 1, i] * ee[t - 1, j]
                                        + b2 * d[i * m + j])
            for i in range(m):
                rootd[i] = sqrt(d[i * m + i])
            for i in range(m):
                for j in range(m):
                    corr[i * m + j] = d[i * m + j] / (rootd[i] * rootd[j])
            if _chol_lower(corr, m) != 0:
                fail = 1
                break
            logdet = 0.0
            for i in range(m):
                logdet += 2.0 * log(corr[i * m + i])
            uquad = 0.0
            usq = 0.0
            for i in range(m):
                s = uu[t, i]
                usq += s * s
                for k in range(i):
                    s -= corr[i * m + k] * w[k]
                w[i] = s / corr[i * m + i]
                uquad += w[i] * w[i]
            nll += 0.5 * (logdet + uquad - usq)
    free(d); free(corr); free(w); free(rootd)
    if fail:
        return float("inf")
    return nll


def dcc_simulate(z, alphas, kappas, double rate, c_bar, double b1, double b2,
                 sigma1, d1, bint risk_neutral, bint standardized):
    """Joint GARCH/DCC return-path simulation; see the NumPy twin."""
    cdef const double[:, :, ::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[:, ::1] al = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef const double[::1] kp = np.ascontiguousarray(kappas, dtype=np.float64)
    cdef const double[:, ::1] cc = np.ascontiguousarray(c_bar, dtype=np.float64)
    cdef const double[::1] s1 = np.ascontiguousarray(sigma1, dtype=np.float64)
    cdef const double[:, ::1] dd = np.ascontiguousarray(d1, dtype=np.float64)
    cdef Py_ssize_t paths = zz.shape[0]
    cdef Py_ssize_t steps = zz.shape[1]
    cdef Py_ssize_t m = zz.shape[2]
    out_arr = np.empty((paths, steps, m))
    cdef double[:, :, ::1] out = out_arr
    cdef double* d = <double*> malloc(m * m * sizeof(double))
    cdef double* corr = <double*> malloc(m * m * sizeof(double))
    cdef double* sig = <double*> malloc(m * sizeof(double))
    cdef double* prev = <double*> malloc(m * sizeof(double))
    cdef double* shock = <double*> malloc(m * sizeof(double))
    cdef double* rootd = <double*> malloc(m * sizeof(double))
    if (d == NULL or corr == NULL or sig == NULL or prev == NULL
            or shock == NULL or rootd == NULL):
        free(d); free(corr); free(sig); free(prev); free(shock); free(rootd)
        raise MemoryError()
    cdef double icoef = 1.0 - b1 - b2
    cdef double s, vol, eq, inno
    cdef Py_ssize_t p, t, i, j, k
    cdef int fail = 0
    with nogil:
        for p in range(paths):
            for i in range(m):
                sig[i] = s1[i]
            for i in range(m):
                for j in range(m):
                    d[i * m + j] = dd[i, j]
            for t in range(steps):
                if t > 0:
                    for i in range(m):
                        for j in range(m):
                            d[i * m + j] = (icoef * cc[i, j]
                                            + b1 * prev[i] * prev[j]
                                            + b2 * d[i * m + j])
                for i in range(m):
                    rootd[i] = sqrt(d[i * m + i])
                for i in range(m):
                    for j in range(m):
                        corr[i * m + j] = d[i * m + j] / (rootd[i] * rootd[j])
                if _chol_lower(corr, m) != 0:
                    fail = 1
                    break
                for i in range(m):
                    s = 0.0
                    for k in range(i + 1):
                        s += corr[i * m + k] * zz[p, t, k]
                    shock[i] = s
                for i in range(m):
                    vol = sqrt(sig[i])
                    eq = vol * shock[i]
                    if risk_neutral:
                        out[p, t, i] = rate - 0.5 * sig[i] + eq
                        inno = eq - kp[i] * vol
                    else:
                        out[p, t, i] = rate + kp[i] * vol - 0.5 * sig[i] + eq
                        inno = eq
                    sig[i] = (al[i, 0]
                              + (al[i, 1] + (al[i, 2] if inno < 0.0 else 0.0))
                              * inno * inno
                              + al[i, 3] * sig[i])
                    prev[i] = inno / vol if standardized else inno
            if fail:
                break
    free(d); free(corr); free(sig); free(prev); free(shock); free(rootd)
    if fail:
        raise FloatingPointError("correlation recursion lost positive definiteness")
    return out_arr
