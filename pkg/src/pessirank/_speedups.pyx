# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled special-function kernels; mirrors ``_fallback`` line for line."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, log1p, exp, fabs, INFINITY

cnp.import_array()

cdef double LANCZOS_G = 607.0 / 128.0
cdef double HALF_LOG_2PI = 0.91893853320467274178
cdef double FPMIN = 1e-300
cdef double CF_EPS = 1e-16
cdef int CF_MAXIT = 100000
cdef int QUANTILE_MAXIT = 2000
cdef double[15] LANCZOS_COEF = [
    0.99999999999999709182,
    57.156235665862923517,
    -59.597960355475491248,
    14.136097974741747174,
    -0.49191381609762019978,
    0.33994649984811888699e-4,
    0.46523628927048575665e-4,
    -0.98374475304879564677e-4,
    0.15808870322491248884e-3,
    -0.21026444172410488319e-3,
    0.21743961811521264320e-3,
    -0.16431810653676389022e-3,
    0.84418223983852743293e-4,
    -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
]


cdef inline double _lanczos_log_gamma(double x) nogil:
    cdef double s = 0.0
    cdef double tmp
    cdef int i
    for i in range(14, 0, -1):
        s += LANCZOS_COEF[i] / (x + i)
    s += LANCZOS_COEF[0]
    tmp = x + LANCZOS_G + 0.5
    return (x + 0.5) * log(tmp) - tmp + HALF_LOG_2PI + log(s / x)


cdef inline double _log_gamma(double x) nogil:
    if x < 0.5:
        return _lanczos_log_gamma(x + 1.0) - log(x)
    return _lanczos_log_gamma(x)


cdef inline double _log_beta(double a, double b) nogil:
    return _log_gamma(a) + _log_gamma(b) - _log_gamma(a + b)


cdef double _betacf(double a, double b, double x) nogil:
    cdef double qab = a + b
    cdef double qap = a + 1.0
    cdef double qam = a - 1.0
    cdef double c = 1.0
    cdef double d = 1.0 - qab * x / qap
    cdef double h, aa, delta
    cdef int m, m2
    if fabs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if fabs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if fabs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if fabs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if fabs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < CF_EPS:
            break
    return h


cdef double _betainc(double a, double b, double x) nogil:
    cdef double front
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = a * log(x) + b * log1p(-x) - _log_beta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return exp(front) * _betacf(a, b, x) / a
    return 1.0 - exp(front) * _betacf(b, a, 1.0 - x) / b


cdef double _betaincinv(double a, double b, double q) nogil:
    cdef double lbeta, lo, hi, x, f, log_pdf, pdf, x_new
    cdef int it
    if q <= 0.0:
        return 0.0
    if q >= 1.0:
        return 1.0
    lbeta = _log_beta(a, b)
    lo = 0.0
    hi = 1.0
    x = a / (a + b)
    for it in range(QUANTILE_MAXIT):
        f = _betainc(a, b, x) - q
        if f == 0.0:
            return x
        if f < 0.0:
            lo = x
        else:
            hi = x
        if hi - lo <= 2.2e-16 * hi:
            break
        log_pdf = (a - 1.0) * log(x) + (b - 1.0) * log1p(-x) - lbeta
        pdf = exp(log_pdf) if log_pdf < 700.0 else INFINITY
        if pdf > 1e-290:
            x_new = x - f / pdf
        else:
            x_new = -1.0
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if x_new == x:
            break
        x = x_new
    return x


def log_gamma(double x):
    return _log_gamma(x)


def betainc(double a, double b, double x):
    return _betainc(a, b, x)


def betaincinv(double a, double b, double q):
    return _betaincinv(a, b, q)


def log_gamma_array(x):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xs.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = _log_gamma(xs[i])
    return out.reshape(np.shape(x))


def _broadcast3(a, b, c):
    a, b, c = np.broadcast_arrays(
        np.asarray(a, np.float64), np.asarray(b, np.float64), np.asarray(c, np.float64)
    )
    shape = a.shape
    return (
        np.ascontiguousarray(a).ravel(),
        np.ascontiguousarray(b).ravel(),
        np.ascontiguousarray(c).ravel(),
        shape,
    )


def betainc_array(a, b, x):
    aa, bb, xx, shape = _broadcast3(a, b, x)
    cdef const double[::1] av = aa
    cdef const double[::1] bv = bb
    cdef const double[::1] xv = xx
    cdef Py_ssize_t n = av.shape[0]
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            ov[i] = _betainc(av[i], bv[i], xv[i])
    return out.reshape(shape)


def betaincinv_array(a, b, q):
    aa, bb, qq, shape = _broadcast3(a, b, q)
    cdef const double[::1] av = aa
    cdef const double[::1] bv = bb
    cdef const double[::1] qv = qq
    cdef Py_ssize_t n = av.shape[0]
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            ov[i] = _betaincinv(av[i], bv[i], qv[i])
    return out.reshape(shape)
