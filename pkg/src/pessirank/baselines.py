"""Model-free comparison optimizers: clipped IPS, item-position IPS and the
pseudoinverse (PI) regression estimator.
"""
import math
from dataclasses import dataclass

import numpy as np

from pessirank.dataset import as_batch
from pessirank.errors import ConfigError, SizeError
from pessirank.numerics import DEFAULT_PINV_TOLERANCE, pseudoinverse
from pessirank.optimizer import OptimizationResult

DEFAULT_DELTA_GRID = tuple(round(0.05 * i, 10) for i in range(1, 21))
DEFAULT_CLIP_GRID = (1.0, 5.0, 10.0, 50.0) + tuple(float(m) for m in range(100, 1501, 100)) + (math.inf,)


@dataclass(frozen=True)
class ClipConfig:
    """Importance-weight cap ``m``; ``math.inf`` disables clipping."""

    m: float = math.inf

    def __post_init__(self):
        if not self.m > 0:
            raise ConfigError(f"clipping parameter must be positive, got {self.m!r}")


def _context_groups(batch):
    for c, ctx in enumerate(batch.contexts):
        rows = batch.context_rows(c)
        if rows.size:
            yield ctx, rows


def _ips_groups(batch):
    """Per context: distinct logged lists in first-occurrence order, their
    counts and summed clicks, and the number of rounds.
    """
    groups = {}
    for ctx, rows in _context_groups(batch):
        lists = batch.item_idx[rows]
        _, first, inverse, counts = np.unique(lists, axis=0, return_index=True,
                                              return_inverse=True, return_counts=True)
        rewards = np.bincount(inverse.ravel(), weights=batch.clicks[rows].sum(axis=1), minlength=counts.size)
        order = np.argsort(first, kind="stable")
        groups[ctx] = (lists[first[order]], counts[order], rewards[order], rows.size)
    return groups


def ips_optimize_grid(log, clips, k):
    """:func:`ips_optimize` for several clipping values, sharing the grouping."""
    batch = as_batch(log)
    if len(batch) and batch.k != k:
        raise ConfigError(f"list-level IPS needs k equal to the logged list length {batch.k}")
    groups = _ips_groups(batch)
    results = []
    for clip in clips:
        lists, values = {}, {}
        for ctx, (keys, counts, rewards, n) in groups.items():
            v = np.minimum(clip.m, n / counts) * rewards
            best = int(np.argmax(v))
            lists[ctx] = tuple(batch.items[i] for i in keys[best])
            values[ctx] = float(v[best])
        results.append(OptimizationResult(lists, values))
    return results


def ips_optimize(log, clip, k):
    """Best logged list under the clipped list-level IPS estimate.

    Propensities are empirical list frequencies within the context; the reward
    of a round is its total number of clicks. Unlogged lists estimate to zero,
    so only logged lists are considered; ties (including all-zero contexts) go
    to the list logged first.
    """
    return ips_optimize_grid(log, [clip], k)[0]


def _greedy_pairs(scores, items, k):
    """Fill positions from ``(k, |E|)`` scores by descending score.

    Ties go to the lower position, then the smaller item id.
    """
    order = sorted(
        ((-scores[j, e], j, items[e], e) for j in range(k) for e in range(len(items))),
    )
    lst = [None] * k
    used = set()
    total = 0.0
    for neg_score, j, _, e in order:
        if lst[j] is None and e not in used:
            lst[j] = items[e]
            used.add(e)
            total -= neg_score
    return tuple(lst), total


def _context_items(batch, rows):
    local = np.unique(batch.item_idx[rows])
    return local, tuple(batch.items[i] for i in local)


def item_position_ips_optimize_grid(log, clips, k):
    """:func:`item_position_ips_optimize` for several clipping values."""
    batch = as_batch(log)
    if k > batch.k and len(batch):
        raise ConfigError(f"k={k} exceeds the logged list length {batch.k}")
    tables = {}
    for ctx, rows in _context_groups(batch):
        local, items = _context_items(batch, rows)
        if len(items) < k:
            raise SizeError(f"context {ctx!r}: {len(items)} items cannot fill {k} positions")
        col = np.searchsorted(local, batch.item_idx[rows, :k])
        counts = np.zeros((k, len(items)))
        clicks = np.zeros((k, len(items)))
        pos = np.broadcast_to(np.arange(k), col.shape)
        np.add.at(counts, (pos, col), 1.0)
        np.add.at(clicks, (pos, col), batch.clicks[rows, :k])
        tables[ctx] = (items, counts, clicks, rows.size)
    results = []
    for clip in clips:
        lists, values = {}, {}
        for ctx, (items, counts, clicks, n) in tables.items():
            seen = counts > 0
            scores = np.zeros_like(clicks)
            scores[seen] = np.minimum(clip.m, n / counts[seen]) * clicks[seen]
            lists[ctx], values[ctx] = _greedy_pairs(scores, items, k)
        results.append(OptimizationResult(lists, values))
    return results


def item_position_ips_optimize(log, clip, k):
    """Greedy list over clipped item-position IPS scores.

    Each (item, position) pair is scored by its clicks at that position,
    reweighted by the inverse frequency of the pair. The list is then filled
    greedily by descending score so no item repeats.
    """
    return item_position_ips_optimize_grid(log, [clip], k)[0]


@dataclass
class PiWeights:
    """Per context: the item vocabulary and a ``(k, |E|)`` weight matrix.

    ``vector(ctx)`` gives the flat form indexed by ``position * |E| + item``.
    """

    k: int
    per_context: dict

    def vector(self, ctx):
        return self.per_context[ctx][1].ravel()


def pi_fit(log, k, tolerance=DEFAULT_PINV_TOLERANCE):
    """Least-squares weights of list clicks on position-item indicators.

    Solves with the pseudoinverse of the empirical second-moment matrix, so
    directions never explored by the logging policy get zero weight.
    """
    batch = as_batch(log)
    if k > batch.k and len(batch):
        raise ConfigError(f"k={k} exceeds the logged list length {batch.k}")
    per_context = {}
    for ctx, rows in _context_groups(batch):
        local, items = _context_items(batch, rows)
        n_items = len(items)
        col = np.searchsorted(local, batch.item_idx[rows, :k])
        design = np.zeros((rows.size, k * n_items))
        flat = np.arange(k) * n_items + col
        design[np.arange(rows.size)[:, None], flat] = 1.0
        reward = batch.clicks[rows].sum(axis=1).astype(np.float64)
        moment = design.T @ design / rows.size
        target = design.T @ reward / rows.size
        phi = pseudoinverse(moment, tolerance) @ target
        per_context[ctx] = (items, phi.reshape(k, n_items))
    return PiWeights(k, per_context)


def pi_optimize(weights, k):
    """Top-down greedy: each position takes the best unused item; ties by id."""
    lists, values = {}, {}
    for ctx in sorted(weights.per_context):
        items, phi = weights.per_context[ctx]
        if len(items) < k:
            raise SizeError(f"context {ctx!r}: {len(items)} items cannot fill {k} positions")
        available = np.ones(len(items), dtype=bool)
        lst, total = [], 0.0
        for j in range(k):
            row = np.where(available, phi[j], -np.inf)
            e = int(np.argmax(row))
            available[e] = False
            lst.append(items[e])
            total += float(phi[j, e])
        lists[ctx] = tuple(lst)
        values[ctx] = total
    return OptimizationResult(lists, values)


def clip_grid_to_delta(clips=DEFAULT_CLIP_GRID, deltas=DEFAULT_DELTA_GRID):
    """Pair clipping values with deltas position by position, for plotting IPS
    curves on the same axis as the LCB sweeps.
    """
    clips, deltas = tuple(clips), tuple(deltas)
    if len(clips) != len(deltas):
        raise ConfigError(f"clip grid has {len(clips)} values but delta grid has {len(deltas)}")
    return dict(zip(clips, deltas))
