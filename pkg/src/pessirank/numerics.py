"""Special functions and confidence-bound kernels.

The scalar functions validate their arguments and raise :class:`DomainError`;
the ``*_array`` variants assume validated input and are what the estimators
call in bulk.
"""
import math
from dataclasses import dataclass

import numpy as np

from pessirank._backend import kernels
from pessirank.errors import DomainError, EmptyStatsError

DEFAULT_PINV_TOLERANCE = 1e-10


@dataclass(frozen=True)
class BetaPrior:
    """Beta(alpha, beta) prior on a Bernoulli mean."""

    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"prior {name} must be positive and finite, got {v!r}")

    @property
    def mean(self):
        return self.alpha / (self.alpha + self.beta)


@dataclass(frozen=True)
class BinomialStats:
    """Positive/negative pseudo-counts for one Bernoulli parameter.

    Counts may be fractional (position-weighted PBM impressions).
    """

    pos: float = 0.0
    neg: float = 0.0

    def __post_init__(self):
        for name in ("pos", "neg"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be finite and non-negative, got {v!r}")

    @property
    def n(self):
        return self.pos + self.neg


def _check_positive(name, v):
    if not (math.isfinite(v) and v > 0):
        raise DomainError(f"{name} must be positive and finite, got {v!r}")


def _check_delta(delta):
    if not (0.0 < delta <= 1.0):
        raise DomainError(f"delta must lie in (0, 1], got {delta!r}")


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    _check_positive("x", x)
    return kernels.log_gamma(float(x))


def regularized_incomplete_beta(a, b, x):
    """``I_x(a, b)``, the Beta(a, b) CDF evaluated at ``x``."""
    _check_positive("a", a)
    _check_positive("b", b)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x!r}")
    return kernels.betainc(float(a), float(b), float(x))


def beta_quantile(a, b, q):
    """Inverse of :func:`regularized_incomplete_beta` in ``x``."""
    _check_positive("a", a)
    _check_positive("b", b)
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q!r}")
    return kernels.betaincinv(float(a), float(b), float(q))


def hoeffding_lcb(stats, delta):
    """Empirical mean minus the Hoeffding half-width ``sqrt(log(1/delta) / 2n)``.

    Not clamped: the result can be negative for small ``n``.
    """
    _check_delta(delta)
    n = stats.pos + stats.neg
    if n <= 0:
        raise EmptyStatsError("Hoeffding bound needs at least one observation")
    return stats.pos / n - math.sqrt(math.log(1.0 / delta) / (2.0 * n))


def bayes_lcb(stats, prior, delta):
    """Lower ``delta / 2`` quantile of the Beta posterior.

    ``delta = 1`` gives the posterior median; with no data, a prior quantile.
    """
    _check_delta(delta)
    return kernels.betaincinv(prior.alpha + stats.pos, prior.beta + stats.neg, delta / 2.0)


def hoeffding_lcb_array(pos, neg, delta):
    """Vectorised :func:`hoeffding_lcb`; entries with ``n == 0`` come back as -inf."""
    pos = np.asarray(pos, dtype=np.float64)
    n = pos + np.asarray(neg, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    out = np.full(np.broadcast_shapes(n.shape, delta.shape), -np.inf)
    seen = np.broadcast_to(n > 0, out.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = pos / n - np.sqrt(np.log(1.0 / delta) / (2.0 * n))
    out[seen] = np.broadcast_to(val, out.shape)[seen]
    return out


def bayes_lcb_array(pos, neg, alpha, beta, delta):
    """Vectorised :func:`bayes_lcb` with broadcastable prior parameters."""
    a = np.asarray(alpha, np.float64) + np.asarray(pos, np.float64)
    b = np.asarray(beta, np.float64) + np.asarray(neg, np.float64)
    return kernels.betaincinv_array(a, b, np.asarray(delta, np.float64) / 2.0)


def log_gamma_array(x):
    return kernels.log_gamma_array(np.asarray(x, dtype=np.float64))


def pseudoinverse(m, tolerance=DEFAULT_PINV_TOLERANCE):
    """Moore-Penrose pseudoinverse of a dense real matrix.

    Singular values below ``tolerance`` times the largest one are treated as
    zero.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DomainError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix has non-finite entries")
    if m.size == 0:
        return np.zeros((m.shape[1], m.shape[0]))
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    cutoff = tolerance * (s[0] if s.size else 0.0)
    inv = np.zeros_like(s)
    keep = s > cutoff
    inv[keep] = 1.0 / s[keep]
    return (vt.T * inv) @ u.T
