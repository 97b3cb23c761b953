"""Logged datasets: records, file formats, and synthetic generators.

Log files are JSON Lines, one interaction per line::

    {"context": "q1", "items": ["d3", "d7"], "clicks": [0, 1]}

Ground-truth files are a single JSON document::

    {"model": "dcm", "k": 2, "contexts": {"q1": {"theta": {...}, "lambda": [...]}}}
"""
import csv
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from pessirank.core import (
    CmParams,
    DcmParams,
    GroundTruth,
    ModelKind,
    PbmParams,
    as_ranked_list,
    simulate_click_matrix,
)
from pessirank.errors import ConfigError, DomainError, LogFormatError
from pessirank.numerics import BetaPrior


@dataclass(frozen=True)
class LoggedInteraction:
    """One logged round: the context, the displayed list and its clicks."""

    context: str
    items: tuple
    clicks: tuple

    def __post_init__(self):
        if not isinstance(self.context, str) or not self.context:
            raise LogFormatError(f"context must be a non-empty string, got {self.context!r}")
        try:
            items = as_ranked_list(self.items)
        except DomainError as exc:
            raise LogFormatError(str(exc)) from None
        clicks = tuple(self.clicks)
        if len(clicks) != len(items):
            raise LogFormatError(f"{len(clicks)} click indicators for {len(items)} items")
        for c in clicks:
            if isinstance(c, bool) or c not in (0, 1):
                raise LogFormatError(f"click indicators must be 0 or 1, got {c!r}")
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "clicks", tuple(int(c) for c in clicks))


class LogBatch(Sequence):
    """Columnar view of a log with a single list length ``k``.

    ``ctx_idx[t]`` and ``item_idx[t, j]`` index into the sorted ``contexts`` and
    ``items`` vocabularies. Behaves as a sequence of :class:`LoggedInteraction`
    in original record order.
    """

    def __init__(self, contexts, items, ctx_idx, item_idx, clicks):
        self.contexts = tuple(contexts)
        self.items = tuple(items)
        self.ctx_idx = np.asarray(ctx_idx, dtype=np.int64)
        item_idx = np.asarray(item_idx, dtype=np.int64)
        if item_idx.ndim != 2:
            item_idx = item_idx.reshape(len(self.ctx_idx), -1)
        self.item_idx = item_idx
        self.clicks = np.asarray(clicks, dtype=np.uint8).reshape(self.item_idx.shape)

    @property
    def k(self):
        return self.item_idx.shape[1]

    def __len__(self):
        return len(self.ctx_idx)

    def __getitem__(self, t):
        if isinstance(t, slice):
            return [self[i] for i in range(*t.indices(len(self)))]
        return LoggedInteraction(
            self.contexts[self.ctx_idx[t]],
            tuple(self.items[i] for i in self.item_idx[t]),
            tuple(int(c) for c in self.clicks[t]),
        )

    def context_rows(self, c):
        return np.flatnonzero(self.ctx_idx == c)

    @classmethod
    def from_records(cls, records):
        records = list(records)
        if not records:
            return cls((), (), np.zeros(0, np.int64), np.zeros((0, 0), np.int64), np.zeros((0, 0)))
        k = len(records[0].items)
        for t, r in enumerate(records):
            if len(r.items) != k:
                raise LogFormatError(f"record {t} has list length {len(r.items)}, expected {k}")
        contexts = sorted({r.context for r in records})
        items = sorted({a for r in records for a in r.items})
        cpos = {c: i for i, c in enumerate(contexts)}
        ipos = {a: i for i, a in enumerate(items)}
        return cls(
            contexts,
            items,
            [cpos[r.context] for r in records],
            [[ipos[a] for a in r.items] for r in records],
            [r.clicks for r in records],
        )


def as_batch(log):
    """Accept a :class:`LogBatch` or any iterable of records."""
    if isinstance(log, LogBatch):
        return log
    return LogBatch.from_records(log)


# ---------------------------------------------------------------- file I/O


def _record_to_json(r):
    return json.dumps({"context": r.context, "items": list(r.items), "clicks": list(r.clicks)},
                      ensure_ascii=False)


def write_log(records, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(_record_to_json(r))
            fh.write("\n")


def read_log(path):
    """Parse a JSON Lines log; errors carry the 1-based line number."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"invalid JSON ({exc.msg})", line=lineno) from None
            if not isinstance(obj, dict):
                raise LogFormatError("expected a JSON object", line=lineno)
            missing = [key for key in ("context", "items", "clicks") if key not in obj]
            if missing:
                raise LogFormatError(f"missing keys {missing}", line=lineno)
            if not isinstance(obj["items"], list) or not isinstance(obj["clicks"], list):
                raise LogFormatError("'items' and 'clicks' must be arrays", line=lineno)
            try:
                records.append(LoggedInteraction(obj["context"], obj["items"], obj["clicks"]))
            except LogFormatError as exc:
                raise LogFormatError(str(exc), line=lineno) from None
    return records


def truth_to_json(truth):
    contexts = {}
    for ctx in truth.contexts:
        params = truth.per_context[ctx]
        entry = {"theta": {a: params.theta[a] for a in sorted(params.theta)}}
        if truth.model_kind is ModelKind.DCM:
            entry["lambda"] = list(params.lam)
        elif truth.model_kind is ModelKind.PBM:
            entry["p"] = list(params.p)
        contexts[ctx] = entry
    return {"model": truth.model_kind.value, "k": truth.k, "contexts": contexts}


def truth_from_json(obj):
    try:
        kind = ModelKind.parse(obj["model"])
        k = obj["k"]
        per_context = {}
        for ctx, entry in obj["contexts"].items():
            theta = entry["theta"]
            if kind is ModelKind.CM:
                per_context[ctx] = CmParams(theta)
            elif kind is ModelKind.DCM:
                per_context[ctx] = DcmParams(theta, entry["lambda"])
            else:
                per_context[ctx] = PbmParams(theta, entry["p"])
    except (KeyError, TypeError, AttributeError) as exc:
        raise LogFormatError(f"malformed ground-truth document: {exc!r}") from None
    return GroundTruth(kind, per_context, k)


def write_truth(truth, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(truth_to_json(truth), fh, indent=2)
        fh.write("\n")


def read_truth(path):
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LogFormatError(f"invalid JSON in {path}: {exc.msg}", line=exc.lineno) from None
    return truth_from_json(obj)


# ---------------------------------------------------------------- generators


def default_positions(kind, k):
    """Default position parameters for synthetic truths.

    DCM: ``lam_k = min(0.9, 0.1 k)`` (satisfaction falls off down the list);
    PBM: ``p_k = 1 / k``.
    """
    if kind is ModelKind.DCM:
        return tuple(min(0.9, 0.1 * (j + 1)) for j in range(k))
    if kind is ModelKind.PBM:
        return tuple(1.0 / (j + 1) for j in range(k))
    return ()


def _ids(prefix, n_or_ids):
    if isinstance(n_or_ids, (int, np.integer)):
        width = len(str(max(int(n_or_ids) - 1, 0)))
        return [f"{prefix}{i:0{width}d}" for i in range(int(n_or_ids))]
    return list(n_or_ids)


@dataclass(frozen=True)
class TruthSpec:
    """Recipe for a synthetic ground truth.

    ``contexts`` and ``items`` are counts or explicit id lists. Position
    parameters come from ``positions`` if given, else are drawn i.i.d. from
    ``position_prior`` if given, else :func:`default_positions`.
    """

    model: ModelKind
    contexts: object = 10
    items: object = 20
    k: int = 4
    theta_prior: BetaPrior = field(default_factory=BetaPrior)
    positions: Optional[tuple] = None
    position_prior: Optional[BetaPrior] = None

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind.parse(self.model))


def generate_ground_truth(spec, rng):
    kind = spec.model
    contexts = _ids("x", spec.contexts)
    items = _ids("i", spec.items)
    if len(items) < spec.k:
        raise ConfigError(f"{len(items)} items cannot fill lists of length {spec.k}")
    per_context = {}
    for ctx in contexts:
        thetas = rng.beta(spec.theta_prior.alpha, spec.theta_prior.beta, size=len(items))
        theta = dict(zip(items, thetas.tolist()))
        if spec.positions is not None:
            positions = tuple(spec.positions)
        elif spec.position_prior is not None and kind is not ModelKind.CM:
            positions = tuple(rng.beta(spec.position_prior.alpha, spec.position_prior.beta, size=spec.k).tolist())
        else:
            positions = default_positions(kind, spec.k)
        if kind is ModelKind.CM:
            per_context[ctx] = CmParams(theta)
        elif kind is ModelKind.DCM:
            per_context[ctx] = DcmParams(theta, positions)
        else:
            per_context[ctx] = PbmParams(theta, positions)
    return GroundTruth(kind, per_context, spec.k)


@dataclass(frozen=True)
class LoggingPolicySpec:
    """Logging policy: uniform random K-permutations, or a softmax over true
    attractions sampled without replacement (near-optimal as temperature -> 0).
    """

    kind: str = "uniform_permutation"
    temperature: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform_permutation", "truth_softmax"):
            raise ConfigError(f"unknown logging policy {self.kind!r}")
        if not (self.temperature > 0 and math.isfinite(self.temperature)):
            raise ConfigError(f"temperature must be positive, got {self.temperature!r}")


def sample_lists(policy, theta, k, n, rng):
    """Draw ``n`` K-permutations of item indices ``0..len(theta)-1``."""
    theta = np.asarray(theta, dtype=np.float64)
    if policy.kind == "uniform_permutation":
        keys = rng.random((n, theta.size))
        return np.argsort(keys, axis=1, kind="stable")[:, :k]
    # Gumbel-top-k equals sequential sampling without replacement
    gumbel = -np.log(-np.log(rng.random((n, theta.size))))
    keys = theta / policy.temperature + gumbel
    return np.argsort(-keys, axis=1, kind="stable")[:, :k]


def generate_log(truth, policy, n_per_context, rng):
    """Log ``n_per_context`` rounds per context, contexts in sorted order."""
    contexts = truth.contexts
    items = sorted({a for c in contexts for a in truth.per_context[c].theta})
    ipos = {a: i for i, a in enumerate(items)}
    k = truth.k
    ctx_parts, item_parts, click_parts = [], [], []
    for ci, ctx in enumerate(contexts):
        params = truth.per_context[ctx]
        local = sorted(params.theta)
        theta = np.array([params.theta[a] for a in local])
        local_idx = sample_lists(policy, theta, k, n_per_context, rng)
        u = rng.random((2, n_per_context, k))
        clicks = simulate_click_matrix(
            truth.model_kind, theta[local_idx], np.asarray(params.position_weights(k)), u[0], u[1]
        )
        to_global = np.array([ipos[a] for a in local], dtype=np.int64)
        ctx_parts.append(np.full(n_per_context, ci, dtype=np.int64))
        item_parts.append(to_global[local_idx])
        click_parts.append(clicks)
    if not contexts:
        return LogBatch((), (), np.zeros(0), np.zeros((0, k)), np.zeros((0, k)))
    return LogBatch(contexts, items, np.concatenate(ctx_parts), np.concatenate(item_parts),
                    np.concatenate(click_parts))


# ---------------------------------------------------------------- relevance grades


def printed_lambda_rule(k):
    """``1 - exp(-k + 0.5) / 0.5`` for 1-based position ``k``.

    Negative at ``k = 1``; :func:`relevance_to_truth` clamps it into [0, 1].
    """
    return 1.0 - math.exp(-k + 0.5) / 0.5


@dataclass(frozen=True)
class RelevanceMapping:
    """How relevance grades 0..4 become click-model parameters."""

    grade_to_attraction: Mapping[int, float] = field(default_factory=lambda: {g: g / 4 for g in range(5)})
    lambda_rule: Callable[[int], float] = printed_lambda_rule
    pbm_examination: Optional[tuple] = None


def relevance_to_truth(grades, mapping, model_kind, k):
    """Build a ground truth from ``{(context, item): grade}``."""
    kind = ModelKind.parse(model_kind)
    thetas = {}
    for (ctx, item), grade in grades.items():
        if grade not in mapping.grade_to_attraction:
            raise ConfigError(f"no attraction probability for grade {grade!r}")
        thetas.setdefault(ctx, {})[item] = mapping.grade_to_attraction[grade]
    lam = tuple(min(1.0, max(0.0, mapping.lambda_rule(j + 1))) for j in range(k))
    if kind is ModelKind.PBM and mapping.pbm_examination is None:
        raise ConfigError("PBM truth needs pbm_examination probabilities")
    per_context = {}
    for ctx, theta in thetas.items():
        if kind is ModelKind.CM:
            per_context[ctx] = CmParams(theta)
        elif kind is ModelKind.DCM:
            per_context[ctx] = DcmParams(theta, lam)
        else:
            per_context[ctx] = PbmParams(theta, tuple(mapping.pbm_examination))
    return GroundTruth(kind, per_context, k)


def read_grades(path):
    """Read ``context,item,grade`` CSV (with header) into a grade mapping."""
    grades = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                grade = int(row["grade"])
                key = (row["context"], row["item"])
            except (KeyError, TypeError, ValueError):
                raise LogFormatError(f"expected context,item,grade columns, got {row}", line=lineno) from None
            if not 0 <= grade <= 4:
                raise LogFormatError(f"grade {grade} outside 0..4", line=lineno)
            grades[key] = grade
    return grades

