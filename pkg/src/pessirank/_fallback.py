"""Pure-Python special-function kernels.

Same algorithms and constants as the compiled ``_speedups`` module; used when
the extension is not built or ``PESSIRANK_PURE_PYTHON`` is set.
"""
import math

import numpy as np

# Lanczos approximation, g = 607/128, 15 terms.
LANCZOS_G = 607.0 / 128.0
LANCZOS_COEF = (
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
)
HALF_LOG_2PI = 0.91893853320467274178

FPMIN = 1e-300
CF_EPS = 1e-16
CF_MAXIT = 100000
QUANTILE_MAXIT = 2000


def _lanczos_log_gamma(x):
    # valid for x >= 0.5
    s = 0.0
    for i in range(len(LANCZOS_COEF) - 1, 0, -1):
        s += LANCZOS_COEF[i] / (x + i)
    s += LANCZOS_COEF[0]
    tmp = x + LANCZOS_G + 0.5
    return (x + 0.5) * math.log(tmp) - tmp + HALF_LOG_2PI + math.log(s / x)


def log_gamma(x):
    if x < 0.5:
        return _lanczos_log_gamma(x + 1.0) - math.log(x)
    return _lanczos_log_gamma(x)


def _betacf(a, b, x):
    """Modified Lentz evaluation of the incomplete-beta continued fraction."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < CF_EPS:
            break
    return h


def _log_beta(a, b):
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


def betainc(a, b, x):
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(front) * _betacf(b, a, 1.0 - x) / b


def betaincinv(a, b, q):
    """Bracketed Newton search for x with I_x(a, b) = q."""
    if q <= 0.0:
        return 0.0
    if q >= 1.0:
        return 1.0
    lbeta = _log_beta(a, b)
    lo, hi = 0.0, 1.0
    x = a / (a + b)
    for _ in range(QUANTILE_MAXIT):
        f = betainc(a, b, x) - q
        if f == 0.0:
            return x
        if f < 0.0:
            lo = x
        else:
            hi = x
        if hi - lo <= 2.2e-16 * hi:
            break
        log_pdf = (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - lbeta
        pdf = math.exp(log_pdf) if log_pdf < 700.0 else math.inf
        x_new = x - f / pdf if pdf > 1e-290 else math.nan
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if x_new == x:
            break
        x = x_new
    return x


def log_gamma_array(x):
    x = np.asarray(x, dtype=np.float64)
    return np.vectorize(log_gamma, otypes=[np.float64])(x)


def betainc_array(a, b, x):
    a, b, x = np.broadcast_arrays(
        np.asarray(a, np.float64), np.asarray(b, np.float64), np.asarray(x, np.float64)
    )
    out = np.empty(a.shape)
    for idx in np.ndindex(a.shape):
        out[idx] = betainc(a[idx], b[idx], x[idx])
    return out


def betaincinv_array(a, b, q):
    a, b, q = np.broadcast_arrays(
        np.asarray(a, np.float64), np.asarray(b, np.float64), np.asarray(q, np.float64)
    )
    out = np.empty(a.shape)
    for idx in np.ndindex(a.shape):
        out[idx] = betaincinv(a[idx], b[idx], q[idx])
    return out
