"""Command-line entry point.

Exit codes: 0 on success, 1 on usage errors, 2 on data or validation errors.
"""
import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from pessirank import __version__
from pessirank.baselines import (
    ClipConfig,
    ips_optimize,
    item_position_ips_optimize,
    pi_fit,
    pi_optimize,
)
from pessirank.core import ModelKind
from pessirank.dataset import (
    LoggingPolicySpec,
    TruthSpec,
    as_batch,
    generate_ground_truth,
    generate_log,
    read_log,
    read_truth,
    write_log,
    write_truth,
)
from pessirank.errors import ConfigError, PessirankError
from pessirank.estimators import BoundKind, EstimatorConfig, collect_stats, lcb_table
from pessirank.harness import (
    ExperimentConfig,
    mismatch_experiment,
    prior_grid_study,
    sweep_delta,
    sweep_sample_size,
)
from pessirank.numerics import BetaPrior
from pessirank.optimizer import evaluation_error, pessimistic_optimize

BOUNDS = ("mle", "map", "hoeffding", "bayes", "bayes_eb")
METHODS = ("lcb", "ips", "ip_ips", "pi")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _clip(text):
    return float("inf") if text.lower() in ("inf", "infinity") else float(text)


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def _read_log(path):
    try:
        return read_log(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def _read_truth(path):
    try:
        return read_truth(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("PESSIRANK_THREADS")
    if env:
        try:
            return _positive_int(env)
        except (ValueError, argparse.ArgumentTypeError):
            raise ConfigError(f"PESSIRANK_THREADS must be a positive integer, got {env!r}") from None
    return os.cpu_count() or 1


def _rng(seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _estimator_config(args):
    bound = args.bound
    kwargs = dict(
        kind=BoundKind.BAYES if bound == "bayes_eb" else BoundKind.parse(bound),
        delta=args.delta,
        union_bound=args.union_bound,
    )
    if args.prior is not None:
        kwargs["prior"] = BetaPrior(*args.prior)
    if bound == "bayes_eb":
        kwargs["prior_source"] = "empirical_bayes"
    return EstimatorConfig(**kwargs)


def _fitted_to_json(fitted):
    contexts = {}
    for c, ctx in enumerate(fitted.contexts):
        theta = {fitted.items[e]: float(fitted.theta[c, e]) for e in np.flatnonzero(fitted.candidates[c])}
        entry = {"theta": theta}
        if fitted.model_kind is ModelKind.DCM:
            entry["lambda"] = [float(v) for v in fitted.positions[c]]
        elif fitted.model_kind is ModelKind.PBM:
            entry["p"] = [float(v) for v in fitted.positions[c]]
        contexts[ctx] = entry
    return {"model": fitted.model_kind.value, "k": fitted.k, "contexts": contexts}


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------- subcommands


def cmd_generate_truth(args):
    if args.config:
        obj = _load_json(args.config)
        obj = obj.get("truth", obj)
        spec = ExperimentConfig.from_dict({"truth": obj}).truth
        if args.model:
            spec = dataclasses.replace(spec, model=ModelKind.parse(args.model))
    elif args.model:
        spec = TruthSpec(model=args.model)
    else:
        raise ConfigError("generate-truth needs --config or --model")
    write_truth(generate_ground_truth(spec, _rng(args.seed)), args.out)


def cmd_generate_log(args):
    truth = _read_truth(args.truth)
    policy = LoggingPolicySpec(args.policy, args.temperature)
    batch = generate_log(truth, policy, args.sample_size, _rng(args.seed))
    write_log(batch, args.out)


def _fit(args):
    batch = as_batch(_read_log(args.log))
    kind = ModelKind.parse(args.model)
    return batch, lcb_table(collect_stats(kind, batch), _estimator_config(args))


def cmd_fit(args):
    _, fitted = _fit(args)
    _write_json(_fitted_to_json(fitted), args.out)


def cmd_optimize(args):
    if args.method == "lcb":
        batch, fitted = _fit(args)
        k = args.k or batch.k
        result = pessimistic_optimize(fitted, k)
    else:
        batch = as_batch(_read_log(args.log))
        k = args.k or batch.k
        clip = ClipConfig(args.clip)
        if args.method == "ips":
            result = ips_optimize(batch, clip, k)
        elif args.method == "ip_ips":
            result = item_position_ips_optimize(batch, clip, k)
        else:
            result = pi_optimize(pi_fit(batch, k), k)
    out = {
        "lists": {ctx: list(lst) for ctx, lst in sorted(result.per_context.items())},
        "values": {ctx: float(v) for ctx, v in sorted(result.per_context_value.items())},
    }
    if args.truth:
        out["error"] = evaluation_error(_read_truth(args.truth), result)
    _write_json(out, args.out)


def _experiment(args):
    obj = _load_json(args.config)
    for flag, key in (("runs", "runs"), ("sample_size", "sample_size"), ("seed", "seed"),
                      ("union_bound", "union_bound")):
        value = getattr(args, flag, None)
        if value is not None:
            obj[key] = value
    if getattr(args, "model", None):
        obj["estimator_model"] = args.model
    if getattr(args, "bound", None):
        obj["estimators"] = [args.bound]
    if getattr(args, "prior", None) is not None:
        obj["prior"] = list(args.prior)
    if getattr(args, "delta", None) is not None:
        obj["deltas"] = [args.delta]
        obj["clips"] = [args.clip if args.clip is not None else float("inf")]
    elif getattr(args, "clip", None) is not None:
        raise ConfigError("--clip needs --delta to pair with")
    if obj.get("clips") is not None:
        obj["clips"] = ["inf" if c == float("inf") else c for c in obj["clips"]]
    return ExperimentConfig.from_dict(obj)


def cmd_sweep(args):
    sweep_delta(_experiment(args), _threads(args)).write_csv(args.out)


def cmd_mismatch(args):
    mismatch_experiment(_experiment(args), _threads(args)).write_csv(args.out)


def cmd_prior_study(args):
    config = _experiment(args)
    delta = args.study_delta
    prior_grid_study(config, args.grid_sizes, delta=delta, threads=_threads(args)).write_csv(args.out)


def cmd_sample_size(args):
    config = _experiment(args)
    sweep_sample_size(config, args.sizes, delta=args.study_delta, threads=_threads(args)).write_csv(args.out)


# ---------------------------------------------------------------- parser


def _add_estimator_flags(p, required_model=True):
    p.add_argument("--model", choices=[m.value for m in ModelKind], required=required_model)
    p.add_argument("--bound", choices=BOUNDS, default="hoeffding")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--prior", type=float, nargs=2, metavar=("A", "B"))
    p.add_argument("--union-bound", choices=["none", "items", "full"], default="full")


def _add_experiment_flags(p, bound=True):
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--runs", type=_positive_int)
    p.add_argument("--sample-size", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--model", choices=[m.value for m in ModelKind], help="estimator model")
    if bound:
        p.add_argument("--bound", choices=BOUNDS + ("oracle",))
    p.add_argument("--prior", type=float, nargs=2, metavar=("A", "B"))
    p.add_argument("--union-bound", choices=["none", "items", "full"])
    p.add_argument("--threads", type=_positive_int)


def build_parser():
    parser = _Parser(prog="pessirank", description="Pessimistic off-policy optimization for ranking.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate-truth", help="draw synthetic click-model parameters")
    p.add_argument("--config")
    p.add_argument("--model", choices=[m.value for m in ModelKind])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate_truth)

    p = sub.add_parser("generate-log", help="simulate a logged dataset from a ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--sample-size", type=_positive_int, default=1000, help="rounds per context")
    p.add_argument("--policy", choices=["uniform_permutation", "truth_softmax"], default="uniform_permutation")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate_log)

    p = sub.add_parser("fit", help="estimate (pessimistic) click-model parameters from a log")
    p.add_argument("--log", required=True)
    _add_estimator_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("optimize", help="choose a list per context from a log")
    p.add_argument("--log", required=True)
    p.add_argument("--method", choices=METHODS, default="lcb")
    _add_estimator_flags(p, required_model=False)
    p.add_argument("--clip", type=_clip, default=float("inf"))
    p.add_argument("--k", type=_positive_int)
    p.add_argument("--truth", help="ground truth to report the evaluation error against")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="replicated delta sweep, written as CSV")
    _add_experiment_flags(p)
    p.add_argument("--delta", type=float, help="evaluate a single delta instead of the grid")
    p.add_argument("--clip", type=_clip, help="clipping value paired with --delta")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mismatch", help="delta sweep with a different estimator model")
    _add_experiment_flags(p)
    p.add_argument("--delta", type=float)
    p.add_argument("--clip", type=_clip)
    p.set_defaults(func=cmd_mismatch)

    p = sub.add_parser("prior-study", help="empirical-Bayes error against prior grid size")
    _add_experiment_flags(p, bound=False)
    p.add_argument("--grid-sizes", type=_positive_int, nargs="+", default=[1, 2, 5, 10, 20])
    p.add_argument("--delta", dest="study_delta", type=float, default=1.0)
    p.set_defaults(func=cmd_prior_study)

    p = sub.add_parser("sample-size", help="error at a fixed delta against sample size")
    _add_experiment_flags(p)
    p.add_argument("--sizes", type=_positive_int, nargs="+", required=True)
    p.add_argument("--delta", dest="study_delta", type=float, default=0.2)
    p.set_defaults(func=cmd_sample_size)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "optimize" and args.method == "lcb" and not args.model:
            parser.error("optimize --method lcb requires --model")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        args.func(args)
    except PessirankError as exc:
        print(f"pessirank: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"pessirank: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
