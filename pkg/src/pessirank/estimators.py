"""Sufficient statistics, point estimates and lower-confidence-bound tables.

Statistics are kept as dense ``(contexts, items)`` and ``(contexts, K)``
arrays over sorted vocabularies; the dictionary views on :class:`StatsTable`
exist for inspection and tests.
"""
import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from pessirank.core import PARAMS_TYPES, GroundTruth, ModelKind
from pessirank.dataset import as_batch
from pessirank.errors import ConfigError, DomainError, EmptyStatsError, SizeError
from pessirank.numerics import (
    BetaPrior,
    BinomialStats,
    bayes_lcb_array,
    hoeffding_lcb_array,
    log_gamma_array,
)

DEFAULT_PRIOR_GRID = tuple(2.0 ** (i - 1) for i in range(1, 11))


def prior_grid(m):
    """``{2^(i-1)}`` for ``i = 1..m``."""
    if m < 1:
        raise ConfigError(f"grid size must be positive, got {m}")
    return tuple(2.0 ** (i - 1) for i in range(1, m + 1))


class BoundKind(str, enum.Enum):
    MLE = "mle"
    MAP = "map"
    HOEFFDING = "hoeffding"
    BAYES = "bayes"

    @classmethod
    def parse(cls, value):
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            raise ConfigError(f"unknown bound kind {value!r}") from None


class UnionBound(str, enum.Enum):
    NONE = "none"
    ITEMS = "items"
    FULL = "items_and_contexts"

    @classmethod
    def parse(cls, value):
        value = str(getattr(value, "value", value)).lower()
        if value == "full":
            return cls.FULL
        try:
            return cls(value)
        except ValueError:
            raise ConfigError(f"unknown union-bound mode {value!r}") from None


@dataclass(frozen=True)
class EstimatorConfig:
    """How parameters are estimated from statistics.

    ``prior`` is used by MAP and Bayes when ``prior_source`` is ``"fixed"``;
    ``"empirical_bayes"`` fits it on ``prior_grid``, pooling items across
    contexts unless ``prior_sharing`` is ``"per_context"``. Position
    parameters get point estimates unless ``bound_positions`` is set.
    """

    kind: BoundKind = BoundKind.HOEFFDING
    delta: float = 0.05
    prior: BetaPrior = field(default_factory=BetaPrior)
    union_bound: UnionBound = UnionBound.FULL
    prior_source: str = "fixed"
    prior_grid: tuple = DEFAULT_PRIOR_GRID
    prior_sharing: str = "pooled"
    bound_positions: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", BoundKind.parse(self.kind))
        object.__setattr__(self, "union_bound", UnionBound.parse(self.union_bound))
        if not (0.0 < self.delta <= 1.0):
            raise ConfigError(f"delta must lie in (0, 1], got {self.delta!r}")
        if self.prior_source not in ("fixed", "empirical_bayes"):
            raise ConfigError(f"unknown prior source {self.prior_source!r}")
        if self.prior_sharing not in ("pooled", "per_context"):
            raise ConfigError(f"unknown prior sharing {self.prior_sharing!r}")
        if not self.prior_grid or any(not (g > 0) for g in self.prior_grid):
            raise ConfigError("prior grid must be a non-empty set of positive reals")

    def effective_delta(self, n_items, n_contexts):
        if self.union_bound is UnionBound.ITEMS:
            return self.delta / max(n_items, 1)
        if self.union_bound is UnionBound.FULL:
            return self.delta / max(n_items * n_contexts, 1)
        return self.delta


@dataclass
class StatsTable:
    """Per-parameter binomial statistics for one click model.

    ``shown[c, e]`` marks items displayed at least once in context ``c``; these
    are the candidates for list construction. ``position_pos/neg`` hold the
    DCM last-click statistics (estimating ``1 - lam``) or, for PBM, clicks
    and non-clicks per position. ``p_hat`` is set for PBM only.
    """

    model_kind: ModelKind
    k: int
    contexts: tuple
    items: tuple
    item_pos: np.ndarray
    item_neg: np.ndarray
    shown: np.ndarray
    position_pos: np.ndarray
    position_neg: np.ndarray
    p_hat: Optional[np.ndarray] = None

    @property
    def item_stats(self):
        return {
            (self.contexts[c], self.items[e]): BinomialStats(float(self.item_pos[c, e]), float(self.item_neg[c, e]))
            for c, e in zip(*np.nonzero(self.shown))
        }

    @property
    def position_stats(self):
        if self.model_kind is ModelKind.CM:
            return {}
        return {
            (ctx, j): BinomialStats(float(self.position_pos[c, j]), float(self.position_neg[c, j]))
            for c, ctx in enumerate(self.contexts)
            for j in range(self.k)
        }

    @property
    def item_counts(self):
        """Observation counts ``n_{a,X}`` keyed by ``(context, item)``."""
        return {key: s.n for key, s in self.item_stats.items()}


def _empty_table(kind, batch, ground_set):
    items = sorted(set(batch.items) | set(ground_set or ()))
    remap = np.array([items.index(a) for a in batch.items], dtype=np.int64)
    c, e, k = len(batch.contexts), len(items), batch.k
    shown = np.zeros((c, e), dtype=bool)
    item_idx = remap[batch.item_idx] if len(batch) else batch.item_idx
    if len(batch):
        shown[batch.ctx_idx[:, None], item_idx] = True
    if ground_set:
        shown[:, [items.index(a) for a in ground_set]] = True
    table = StatsTable(
        kind, k, batch.contexts, tuple(items),
        np.zeros((c, e)), np.zeros((c, e)), shown, np.zeros((c, k)), np.zeros((c, k)),
    )
    return table, item_idx


def _add_items(table, batch, item_idx, pos_w, neg_w):
    rows = np.broadcast_to(batch.ctx_idx[:, None], item_idx.shape)
    np.add.at(table.item_pos, (rows, item_idx), pos_w)
    np.add.at(table.item_neg, (rows, item_idx), neg_w)


def collect_stats_cm(log, ground_set=None):
    """Cascade statistics: positions down to the first click are examined.

    Clicks below the first one cannot happen under the cascade model and are
    dropped.
    """
    batch = as_batch(log)
    table, item_idx = _empty_table(ModelKind.CM, batch, ground_set)
    if len(batch):
        clicks = batch.clicks.astype(np.int64)
        before = np.cumsum(clicks, axis=1) - clicks
        examined = before == 0
        first = (clicks == 1) & examined
        _add_items(table, batch, item_idx, first, examined & ~first)
    return table


def collect_stats_dcm(log, ground_set=None):
    """Dependent-click statistics.

    Items down to the last click (all items if none) are examined. Position
    ``k`` gains a positive when its click is the last one and a negative when
    more clicks follow.
    """
    batch = as_batch(log)
    table, item_idx = _empty_table(ModelKind.DCM, batch, ground_set)
    if len(batch):
        clicks = batch.clicks.astype(np.int64)
        at_or_after = np.cumsum(clicks[:, ::-1], axis=1)[:, ::-1]
        any_click = at_or_after[:, :1] > 0
        examined = (at_or_after > 0) | ~any_click
        clicked = clicks == 1
        _add_items(table, batch, item_idx, clicked, examined & ~clicked)
        rows = np.broadcast_to(batch.ctx_idx[:, None], clicks.shape)
        cols = np.broadcast_to(np.arange(batch.k), clicks.shape)
        np.add.at(table.position_pos, (rows, cols), clicked & (at_or_after == 1))
        np.add.at(table.position_neg, (rows, cols), clicked & (at_or_after > 1))
    return table


def collect_stats_pbm(log, ground_set=None):
    """Position-based statistics with examination-weighted pseudo-counts.

    ``p_hat[c, k]`` is the click rate at position ``k`` in context ``c``; each
    impression of an item at ``k`` contributes weight ``p_hat`` split into
    clicked (positive) and unclicked (negative) mass.
    """
    batch = as_batch(log)
    table, item_idx = _empty_table(ModelKind.PBM, batch, ground_set)
    c = len(table.contexts)
    table.p_hat = np.zeros((c, table.k))
    if len(batch):
        clicks = batch.clicks.astype(np.float64)
        n_ctx = np.bincount(batch.ctx_idx, minlength=c).astype(np.float64)
        click_sums = np.zeros((c, table.k))
        np.add.at(click_sums, batch.ctx_idx, clicks)
        with np.errstate(invalid="ignore", divide="ignore"):
            table.p_hat = np.where(n_ctx[:, None] > 0, click_sums / n_ctx[:, None], 0.0)
        table.position_pos = click_sums
        table.position_neg = n_ctx[:, None] - click_sums
        weight = table.p_hat[batch.ctx_idx]
        pos = weight * clicks
        _add_items(table, batch, item_idx, pos, weight - pos)
        np.maximum(table.item_neg, 0.0, out=table.item_neg)
    return table


_COLLECT = {ModelKind.CM: collect_stats_cm, ModelKind.DCM: collect_stats_dcm, ModelKind.PBM: collect_stats_pbm}


def collect_stats(model_kind, log, ground_set=None):
    return _COLLECT[ModelKind.parse(model_kind)](log, ground_set)


def point_estimate(stats, config):
    """MLE, or the Beta-posterior mode for ``kind == MAP``; clamped to [0, 1].

    The mode is undefined when ``pos + neg + alpha + beta <= 2``; the prior
    mean is returned instead.
    """
    n = stats.pos + stats.neg
    if config.kind is BoundKind.MAP:
        a, b = config.prior.alpha, config.prior.beta
        denom = n + a + b - 2.0
        if denom <= 0:
            return config.prior.mean
        return min(1.0, max(0.0, (stats.pos + a - 1.0) / denom))
    if n <= 0:
        raise EmptyStatsError("MLE needs at least one observation")
    return stats.pos / n


def _map_array(pos, neg, alpha, beta):
    denom = pos + neg + alpha + beta - 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        mode = (pos + alpha - 1.0) / denom
    mean = np.broadcast_to(alpha / (alpha + beta), mode.shape)
    return np.clip(np.where(denom > 0, mode, mean), 0.0, 1.0)


def _bound_array(kind, pos, neg, delta, alpha, beta):
    """Per-parameter estimate or LCB, clamped to [0, 1].

    Zero-observation entries get 0 from Hoeffding/MLE and the prior quantile
    from Bayes.
    """
    if kind is BoundKind.MAP:
        return _map_array(pos, neg, alpha, beta)
    if kind is BoundKind.BAYES:
        return np.clip(bayes_lcb_array(pos, neg, alpha, beta, delta), 0.0, 1.0)
    if kind is BoundKind.MLE:
        delta = 1.0
    lcb = hoeffding_lcb_array(pos, neg, delta)
    return np.clip(np.where(np.isfinite(lcb), lcb, 0.0), 0.0, 1.0)


@dataclass
class FittedParams:
    """Estimated (or pessimistic) parameters for every context.

    ``theta[c, e]`` is meaningful where ``candidates[c, e]``. ``positions``
    holds ``lam`` for DCM and ``p`` for PBM.
    """

    model_kind: ModelKind
    k: int
    contexts: tuple
    items: tuple
    theta: np.ndarray
    candidates: np.ndarray
    positions: np.ndarray
    priors: dict = field(default_factory=dict)

    def params_for(self, context):
        c = self.contexts.index(context)
        theta = {self.items[e]: float(self.theta[c, e]) for e in np.flatnonzero(self.candidates[c])}
        cls = PARAMS_TYPES[self.model_kind]
        if self.model_kind is ModelKind.CM:
            return cls(theta)
        return cls(theta, tuple(float(v) for v in self.positions[c]))

    @property
    def per_context(self):
        return {ctx: self.params_for(ctx) for ctx in self.contexts}

    def to_ground_truth(self):
        for c, ctx in enumerate(self.contexts):
            if self.candidates[c].sum() < self.k:
                raise SizeError(f"context {ctx!r} has fewer than {self.k} estimated items")
        return GroundTruth(self.model_kind, self.per_context, self.k)


def _resolve_priors(stats, config):
    """Return per-context ``(alpha, beta)`` column vectors and the fitted priors."""
    c = len(stats.contexts)
    if config.prior_source == "fixed":
        prior = config.prior
        return np.full((c, 1), prior.alpha), np.full((c, 1), prior.beta), {ctx: prior for ctx in stats.contexts}
    if config.prior_sharing == "pooled":
        mask = stats.shown
        fitted = fit_empirical_bayes(_stats_list(stats.item_pos[mask], stats.item_neg[mask]), config.prior_grid)
        priors = {ctx: fitted for ctx in stats.contexts}
    else:
        priors = {}
        for i, ctx in enumerate(stats.contexts):
            mask = stats.shown[i]
            priors[ctx] = fit_empirical_bayes(
                _stats_list(stats.item_pos[i, mask], stats.item_neg[i, mask]), config.prior_grid
            )
    alpha = np.array([[priors[ctx].alpha] for ctx in stats.contexts])
    beta = np.array([[priors[ctx].beta] for ctx in stats.contexts])
    return alpha, beta, priors


def _stats_list(pos, neg):
    return [BinomialStats(float(p), float(q)) for p, q in zip(pos, neg)]


def lcb_table(stats, config):
    """Turn statistics into the parameter table the optimizer acts on.

    Attraction probabilities get the bound selected by ``config.kind`` at the
    union-corrected ``delta``. DCM continuation and PBM examination parameters
    are point estimates unless ``config.bound_positions`` is set. A DCM
    position with no observed clicks gets ``lam = 0``.
    """
    kind = stats.model_kind
    delta = config.effective_delta(len(stats.items), len(stats.contexts))
    alpha, beta, priors = _resolve_priors(stats, config)
    theta = _bound_array(config.kind, stats.item_pos, stats.item_neg, delta, alpha, beta)

    positions = np.zeros((len(stats.contexts), stats.k))
    if kind is not ModelKind.CM:
        pos, neg = stats.position_pos, stats.position_neg
        if config.bound_positions:
            p_alpha = np.full_like(pos, config.prior.alpha)
            p_beta = np.full_like(pos, config.prior.beta)
            weight = _bound_array(config.kind, pos, neg, delta, p_alpha, p_beta)
        elif kind is ModelKind.PBM:
            weight = stats.p_hat
        elif config.kind is BoundKind.MAP:
            weight = _map_array(pos, neg, config.prior.alpha, config.prior.beta)
        else:
            n = pos + neg
            with np.errstate(divide="ignore", invalid="ignore"):
                weight = np.where(n > 0, pos / n, 1.0)
        positions = 1.0 - weight if kind is ModelKind.DCM else np.clip(weight, 0.0, 1.0)

    return FittedParams(kind, stats.k, stats.contexts, stats.items, theta, stats.shown.copy(), positions, priors)


def _integral_counts(stats):
    pos = np.array([s.pos for s in stats], dtype=np.float64)
    neg = np.array([s.neg for s in stats], dtype=np.float64)
    if not (np.all(pos == np.round(pos)) and np.all(neg == np.round(neg))):
        raise DomainError("empirical Bayes needs integer counts; fractional (PBM-weighted) stats are not supported")
    return pos, neg


def _log_likelihood_grid(pos, neg, alphas, betas):
    """Marginal log-likelihood for every ``(alpha, beta)`` in ``alphas x betas``."""
    keep = (pos + neg) > 0
    pairs, mult = np.unique(np.stack([pos[keep], neg[keep]], axis=1), axis=0, return_counts=True)
    a = np.asarray(alphas, np.float64)[:, None, None]
    b = np.asarray(betas, np.float64)[None, :, None]
    if pairs.size == 0:
        return np.zeros((a.shape[0], b.shape[1]))
    p, q = pairs[:, 0], pairs[:, 1]
    lg = log_gamma_array
    terms = lg(a + b) + lg(a + p) + lg(b + q) - lg(a) - lg(b) - lg(a + b + p + q)
    return np.sum(terms * mult, axis=2)


def beta_binomial_log_likelihood(stats, prior):
    """Log marginal likelihood of per-parameter Bernoulli counts under a Beta prior."""
    pos, neg = _integral_counts(stats)
    return float(_log_likelihood_grid(pos, neg, [prior.alpha], [prior.beta])[0, 0])


def fit_empirical_bayes(stats, grid=DEFAULT_PRIOR_GRID):
    """Grid-search maximum of :func:`beta_binomial_log_likelihood` over ``grid x grid``.

    Ties go to the smaller alpha, then the smaller beta.
    """
    grid = sorted(set(float(g) for g in grid))
    if not grid:
        raise ConfigError("prior grid is empty")
    pos, neg = _integral_counts(stats)
    ll = _log_likelihood_grid(pos, neg, grid, grid)
    # row-major argmax returns the first maximum: smallest alpha, then beta
    i, j = np.unravel_index(int(np.argmax(ll)), ll.shape)
    return BetaPrior(grid[i], grid[j])


def examined_counts(stats):
    """``n_{a,X}`` as a ``(contexts, items)`` array."""
    return stats.item_pos + stats.item_neg

