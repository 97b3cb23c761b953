"""Replicated experiment protocols and CSV output.

Every replicate ``i`` of a configuration with base seed ``s`` draws its log
from ``SeedSequence(s, spawn_key=(1, i))``; the synthetic ground truth comes
from ``SeedSequence(s, spawn_key=(0,))`` and is shared by all replicates.
Adding replicates therefore never changes earlier ones, and results do not
depend on how replicates are scheduled across workers.
"""
import dataclasses
import functools
import io
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from pessirank.baselines import (
    DEFAULT_CLIP_GRID,
    DEFAULT_DELTA_GRID,
    ClipConfig,
    clip_grid_to_delta,
    ips_optimize_grid,
    item_position_ips_optimize_grid,
    pi_fit,
    pi_optimize,
)
from pessirank.core import ModelKind
from pessirank.dataset import LoggingPolicySpec, TruthSpec, generate_ground_truth, generate_log, read_truth
from pessirank.errors import ConfigError
from pessirank.estimators import (
    DEFAULT_PRIOR_GRID,
    BoundKind,
    EstimatorConfig,
    FittedParams,
    collect_stats,
    fit_empirical_bayes,
    lcb_table,
    prior_grid,
)
from pessirank.numerics import BetaPrior, BinomialStats
from pessirank.optimizer import evaluation_error, pessimistic_optimize

ESTIMATORS = ("mle", "map", "hoeffding", "bayes", "bayes_eb", "oracle")
BASELINES = ("ips", "ip_ips", "pi")
DELTA_FREE = {"mle", "map", "oracle", "pi"}
CSV_FIELDS = ("model", "estimator", "{param}", "mean_error", "std_error", "runs")


def _parse_float(v):
    if v is None or (isinstance(v, str) and v.lower() in ("inf", "infinity")):
        return math.inf
    return float(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: where the truth comes from, what to compare, how often.

    ``sample_size`` is the number of logged rounds per context.
    ``estimator_model`` defaults to the truth's model; setting it differently
    gives a model-mismatch run.
    """

    truth: Optional[TruthSpec] = None
    truth_file: Optional[str] = None
    estimator_model: Optional[ModelKind] = None
    estimators: Optional[tuple] = None
    baselines: tuple = BASELINES
    deltas: tuple = DEFAULT_DELTA_GRID
    clips: tuple = DEFAULT_CLIP_GRID
    sample_size: int = 1000
    runs: int = 100
    seed: int = 0
    union_bound: str = "none"
    prior: BetaPrior = field(default_factory=BetaPrior)
    prior_grid: tuple = DEFAULT_PRIOR_GRID
    logging: LoggingPolicySpec = field(default_factory=LoggingPolicySpec)
    bound_positions: bool = False

    def __post_init__(self):
        if (self.truth is None) == (self.truth_file is None):
            raise ConfigError("exactly one of 'truth' and 'truth_file' must be given")
        if self.estimator_model is not None:
            object.__setattr__(self, "estimator_model", ModelKind.parse(self.estimator_model))
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        object.__setattr__(self, "clips", tuple(_parse_float(m) for m in self.clips))
        object.__setattr__(self, "baselines", tuple(self.baselines))
        if self.estimators is not None:
            object.__setattr__(self, "estimators", tuple(self.estimators))
        if not self.deltas or any(not 0 < d <= 1 for d in self.deltas):
            raise ConfigError("deltas must be a non-empty list of values in (0, 1]")
        if self.runs < 1:
            raise ConfigError(f"runs must be at least 1, got {self.runs}")
        if self.sample_size < 1:
            raise ConfigError(f"sample_size must be at least 1, got {self.sample_size}")
        unknown = set(self.estimators or ()) - set(ESTIMATORS)
        unknown |= set(self.baselines) - set(BASELINES)
        if unknown:
            raise ConfigError(f"unknown estimators/baselines: {sorted(unknown)}")
        if {"ips", "ip_ips"} & set(self.baselines):
            clip_grid_to_delta(self.clips, self.deltas)

    @classmethod
    def from_dict(cls, obj):
        obj = dict(obj)
        kwargs = {}
        if "truth" in obj:
            t = dict(obj.pop("truth"))
            for key in ("theta_prior", "position_prior"):
                if t.get(key) is not None:
                    t[key] = BetaPrior(*t[key])
            if t.get("positions") is not None:
                t["positions"] = tuple(t["positions"])
            for key in ("contexts", "items"):
                if isinstance(t.get(key), list):
                    t[key] = tuple(t[key])
            kwargs["truth"] = TruthSpec(**t)
        if "prior" in obj:
            kwargs["prior"] = BetaPrior(*obj.pop("prior"))
        if "logging" in obj:
            kwargs["logging"] = LoggingPolicySpec(**obj.pop("logging"))
        for key in ("estimators", "baselines", "deltas", "clips", "prior_grid"):
            if key in obj:
                kwargs[key] = tuple(obj.pop(key))
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(obj) - names
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kwargs.update(obj)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def truth_model(self):
        if self.truth is not None:
            return self.truth.model
        return materialize_truth(self).model_kind

    @property
    def fit_model(self):
        return self.estimator_model or self.truth_model

    @property
    def estimator_names(self):
        if self.estimators is not None:
            names = self.estimators
        else:
            names = ("mle", "hoeffding", "bayes", "bayes_eb")
            if self.fit_model is ModelKind.PBM:
                names = ("mle", "hoeffding", "bayes")
        if "bayes_eb" in names and self.fit_model is ModelKind.PBM:
            raise ConfigError("empirical Bayes needs integer counts; not available for PBM estimators")
        return names


@functools.lru_cache(maxsize=32)
def _truth_from_spec(spec, seed):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))
    return generate_ground_truth(spec, rng)


@functools.lru_cache(maxsize=32)
def _truth_from_file(path):
    return read_truth(path)


def materialize_truth(config):
    if config.truth_file is not None:
        return _truth_from_file(config.truth_file)
    return _truth_from_spec(config.truth, config.seed)


def replicate_rng(seed, replicate):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1, replicate))))


def _oracle_fitted(truth):
    """Fitted table holding the true parameters (for pipeline checks)."""
    items = tuple(sorted({a for p in truth.per_context.values() for a in p.theta}))
    contexts = truth.contexts
    theta = np.zeros((len(contexts), len(items)))
    candidates = np.zeros_like(theta, dtype=bool)
    positions = np.zeros((len(contexts), truth.k))
    for c, ctx in enumerate(contexts):
        params = truth.per_context[ctx]
        for e, a in enumerate(items):
            if a in params.theta:
                theta[c, e] = params.theta[a]
                candidates[c, e] = True
        if truth.model_kind is ModelKind.DCM:
            positions[c] = params.lam[: truth.k]
        elif truth.model_kind is ModelKind.PBM:
            positions[c] = params.p[: truth.k]
    return FittedParams(truth.model_kind, truth.k, contexts, items, theta, candidates, positions)


def _estimator_config(config, name, delta, prior):
    kind = {"mle": BoundKind.MLE, "map": BoundKind.MAP, "hoeffding": BoundKind.HOEFFDING,
            "bayes": BoundKind.BAYES, "bayes_eb": BoundKind.BAYES}[name]
    return EstimatorConfig(kind=kind, delta=delta, prior=prior, union_bound=config.union_bound,
                           bound_positions=config.bound_positions)


def run_replicate(config, replicate):
    """Errors of every estimator and baseline on one freshly logged dataset.

    Returns ``{(name, delta): error}``. Delta-free methods are evaluated once
    and reported at every delta; clipped baselines are reported at the delta
    their clipping value is paired with.
    """
    truth = materialize_truth(config)
    rng = replicate_rng(config.seed, replicate)
    log = generate_log(truth, config.logging, config.sample_size, rng)
    k = truth.k
    out = {}

    def record(name, delta, result):
        out[(name, delta)] = evaluation_error(truth, result)

    names = config.estimator_names
    if names:
        ground_set = sorted({a for p in truth.per_context.values() for a in p.theta})
        stats = collect_stats(config.fit_model, log, ground_set=ground_set)
    for name in names:
        if name == "oracle":
            result = pessimistic_optimize(_oracle_fitted(truth), k)
            for d in config.deltas:
                record(name, d, result)
            continue
        prior = config.prior
        if name == "bayes_eb":
            mask = stats.shown
            prior = fit_empirical_bayes(
                [BinomialStats(p, q) for p, q in zip(stats.item_pos[mask], stats.item_neg[mask])],
                config.prior_grid,
            )
        if name in DELTA_FREE:
            result = pessimistic_optimize(lcb_table(stats, _estimator_config(config, name, 1.0, prior)), k)
            for d in config.deltas:
                record(name, d, result)
            continue
        for d in config.deltas:
            result = pessimistic_optimize(lcb_table(stats, _estimator_config(config, name, d, prior)), k)
            record(name, d, result)

    clips = [ClipConfig(m) for m in config.clips]
    if "ips" in config.baselines:
        for d, result in zip(config.deltas, ips_optimize_grid(log, clips, k)):
            record("ips", d, result)
    if "ip_ips" in config.baselines:
        for d, result in zip(config.deltas, item_position_ips_optimize_grid(log, clips, k)):
            record("ip_ips", d, result)
    if "pi" in config.baselines:
        result = pi_optimize(pi_fit(log, k), k)
        for d in config.deltas:
            record("pi", d, result)
    return out


@dataclass(frozen=True)
class SweepRow:
    model: str
    estimator: str
    param: float
    mean_error: float
    std_error: float
    runs: int


@dataclass
class SweepResult:
    """Aggregated rows, sorted by (estimator, param).

    ``param_name`` labels the swept column in CSV output (``delta`` for the
    delta and mismatch sweeps).
    """

    rows: list
    param_name: str = "delta"

    def row(self, estimator, param):
        for r in self.rows:
            if r.estimator == estimator and r.param == param:
                return r
        raise KeyError((estimator, param))

    def curve(self, estimator):
        return [r for r in self.rows if r.estimator == estimator]

    def to_csv(self):
        buf = io.StringIO()
        header = ",".join(CSV_FIELDS).format(param=self.param_name)
        buf.write(header + "\n")
        for r in self.rows:
            buf.write(f"{r.model},{r.estimator},{r.param:.10g},{r.mean_error:.10g},{r.std_error:.10g},{r.runs}\n")
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())


def mean_and_std_error(values):
    """Sample mean and ``stdev / sqrt(n)`` (0 for a single value)."""
    values = list(values)
    mean = statistics.fmean(values)
    if len(values) < 2:
        return mean, 0.0
    return mean, statistics.stdev(values) / math.sqrt(len(values))


def _model_label(config):
    truth, fit = config.truth_model, config.fit_model
    return truth.value if truth is fit else f"{truth.value}/{fit.value}"


def _run_all(config, threads):
    indices = range(config.runs)
    if threads is None or threads <= 1 or config.runs == 1:
        return [run_replicate(config, i) for i in indices]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run_replicate, [config] * config.runs, indices,
                             chunksize=max(1, config.runs // (4 * threads))))


def aggregate(config, records, param_name="delta", param_of=None):
    model = _model_label(config)
    keys = sorted(records[0])
    rows = []
    for name, d in keys:
        mean, se = mean_and_std_error(rec[(name, d)] for rec in records)
        rows.append(SweepRow(model, name, param_of(d) if param_of else d, mean, se, len(records)))
    rows.sort(key=lambda r: (r.estimator, r.param))
    return SweepResult(rows, param_name)


def sweep_delta(config, threads=1):
    """Mean and standard error of every method's error across the delta grid."""
    return aggregate(config, _run_all(config, threads))


def mismatch_experiment(config, threads=1):
    """Delta sweep where the estimators assume ``config.estimator_model``
    while the data follow the truth's model.
    """
    if config.estimator_model is None:
        raise ConfigError("a mismatch experiment needs 'estimator_model'")
    return sweep_delta(config, threads)


def sweep_sample_size(config, sizes, delta=0.2, threads=1):
    """Error at a fixed delta as the per-context sample size varies.

    Rows carry the sample size in place of delta; baselines are skipped.
    """
    rows = []
    for n in sizes:
        sub = dataclasses.replace(config, sample_size=int(n), deltas=(delta,), baselines=())
        result = sweep_delta(sub, threads)
        rows.extend(dataclasses.replace(r, param=int(n)) for r in result.rows)
    rows.sort(key=lambda r: (r.estimator, r.param))
    return SweepResult(rows, "sample_size")


def prior_grid_study(config, grid_sizes=(1, 2, 5, 10, 20), delta=1.0, threads=1):
    """Empirical-Bayes error when the prior grid is ``{2^(i-1)}_{i<=m}``."""
    rows = []
    for m in grid_sizes:
        sub = dataclasses.replace(config, estimators=("bayes_eb",), baselines=(), deltas=(delta,),
                                  prior_grid=prior_grid(int(m)))
        result = sweep_delta(sub, threads)
        rows.extend(dataclasses.replace(r, param=int(m)) for r in result.rows)
    rows.sort(key=lambda r: (r.estimator, r.param))
    return SweepResult(rows, "grid_size")


DESK_THETA_PRIOR = BetaPrior(1, 8)
DESK_LAMBDA_PRIOR = BetaPrior(1, 64)
DESK_LOGGING = LoggingPolicySpec("truth_softmax", 0.1)


def desk_config(model, estimator_model=None, **overrides):
    """Small synthetic setting where pessimism has room to matter.

    Attractions follow Beta(1, 8); DCM continuation probabilities follow
    Beta(1, 64); lists are logged by a near-optimal softmax policy, so a few
    lists dominate and rarely shown items carry most of the uncertainty.
    10 contexts, 20 items, K=4, 1000 rounds per context, 100 replicates.
    """
    model = ModelKind.parse(model)
    truth = TruthSpec(
        model=model,
        theta_prior=DESK_THETA_PRIOR,
        position_prior=DESK_LAMBDA_PRIOR if model is ModelKind.DCM else None,
    )
    kwargs = dict(truth=truth, estimator_model=estimator_model, logging=DESK_LOGGING)
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)
