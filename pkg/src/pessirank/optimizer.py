"""Pessimistic list selection, evaluation error and the certificate width."""
import math
from dataclasses import dataclass, field

import numpy as np

from pessirank.core import ModelKind, optimal_list, value
from pessirank.errors import ContextMismatchError, SizeError
from pessirank.estimators import BoundKind, EstimatorConfig, UnionBound, collect_stats, lcb_table


@dataclass
class OptimizationResult:
    """Chosen list per context and the (pessimistic) value it was chosen by."""

    per_context: dict
    per_context_value: dict = field(default_factory=dict)


def pessimistic_optimize(fitted, k):
    """Per context, the list maximising the value under the fitted table.

    With LCBs substituted for attractions the list value is still a sorted
    structure in each model, so the argmax comes from the optimal-list rule
    rather than enumeration.
    """
    lists, values = {}, {}
    for c, ctx in enumerate(fitted.contexts):
        if fitted.candidates[c].sum() < k:
            raise SizeError(f"context {ctx!r}: fewer than {k} items with estimates")
        params = fitted.params_for(ctx)
        lst = optimal_list(params, k)
        lists[ctx] = lst
        values[ctx] = value(lst, params)
    return OptimizationResult(lists, values)


def evaluation_error(truth, result):
    """Mean over contexts of ``V(A*) - V(A_hat)`` under the true parameters."""
    if set(truth.per_context) != set(result.per_context):
        raise ContextMismatchError("truth and result cover different contexts")
    total = 0.0
    for ctx in truth.contexts:
        lst = result.per_context[ctx]
        if len(lst) != truth.k:
            raise ContextMismatchError(f"context {ctx!r}: list length {len(lst)} != k={truth.k}")
        total += context_error(truth.per_context[ctx], lst, truth.k)
    return total / len(truth.per_context)


def context_error(params, lst, k):
    gap = value(optimal_list(params, k), params) - value(lst, params)
    # only float rounding can push this below zero
    return max(gap, 0.0)


def certificate_width(counts, lst, context, delta, ground_set_size, context_count):
    """``sum_a sqrt(log(|E||X| / delta) / (2 n_a))`` over the items of ``lst``.

    An item with no observations makes the width ``math.inf``.
    """
    log_term = math.log(ground_set_size * context_count / delta)
    width = 0.0
    for a in lst:
        n = counts.get((context, a), 0)
        if n <= 0:
            return math.inf
        width += math.sqrt(log_term / (2.0 * n))
    return width


@dataclass
class BoundRecord:
    context: str
    error: float
    width: float
    concentration_holds: bool
    mle_error: float
    mle_width: float

    @property
    def bound(self):
        return 2.0 * self.width

    @property
    def violated(self):
        return self.error > self.bound

    @property
    def mle_violated(self):
        return self.mle_error > self.mle_width


@dataclass
class BoundReport:
    records: list

    @property
    def concentration_holds(self):
        return all(r.concentration_holds for r in self.records)

    @property
    def violated(self):
        return any(r.violated for r in self.records)

    @property
    def vacuous(self):
        return any(math.isinf(r.width) for r in self.records)


def verify_pessimism_bound(truth, log, delta):
    """Check the error-of-pessimism guarantee on one logged dataset.

    Runs the Hoeffding pipeline with the full union bound, position
    parameters taken as known from ``truth``. For each context records the
    error of the pessimistic list against ``2 c(A*)``, whether every item's
    empirical mean lies within its confidence width, and for comparison the
    error of the MLE list against ``c(A*) + c(A_mle)``.
    """
    kind = truth.model_kind
    ground_set = sorted({a for p in truth.per_context.values() for a in p.theta})
    stats = collect_stats(kind, log, ground_set=ground_set)
    missing = set(truth.contexts) - set(stats.contexts)
    if missing:
        raise ContextMismatchError(f"log has no records for contexts {sorted(missing)}")

    cfg = EstimatorConfig(kind=BoundKind.HOEFFDING, delta=delta, union_bound=UnionBound.FULL)
    fitted = lcb_table(stats, cfg)
    mle = lcb_table(stats, EstimatorConfig(kind=BoundKind.MLE, union_bound=UnionBound.NONE))
    for table in (fitted, mle):
        _use_true_positions(table, truth)
    chosen = pessimistic_optimize(fitted, truth.k).per_context
    mle_chosen = pessimistic_optimize(mle, truth.k).per_context

    n_items, n_ctx = len(stats.items), len(stats.contexts)
    counts = stats.item_counts
    log_term = math.log(n_items * n_ctx / delta)
    records = []
    for c, ctx in enumerate(stats.contexts):
        if ctx not in truth.per_context:
            continue
        params = truth.per_context[ctx]
        a_star = optimal_list(params, truth.k)
        n = stats.item_pos[c] + stats.item_neg[c]
        holds = True
        for e, item in enumerate(stats.items):
            if n[e] > 0 and item in params.theta:
                if abs(stats.item_pos[c, e] / n[e] - params.theta[item]) > math.sqrt(log_term / (2.0 * n[e])):
                    holds = False
                    break
        width = certificate_width(counts, a_star, ctx, delta, n_items, n_ctx)
        mle_width = width + certificate_width(counts, mle_chosen[ctx], ctx, delta, n_items, n_ctx)
        records.append(BoundRecord(
            ctx,
            context_error(params, chosen[ctx], truth.k),
            width,
            holds,
            context_error(params, mle_chosen[ctx], truth.k),
            mle_width,
        ))
    return BoundReport(records)


def _use_true_positions(fitted, truth):
    if truth.model_kind is ModelKind.CM:
        return
    for c, ctx in enumerate(fitted.contexts):
        params = truth.per_context[ctx]
        values = params.lam if truth.model_kind is ModelKind.DCM else params.p
        fitted.positions[c] = np.asarray(values[: truth.k])
