"""Acceptance suite: one test per headline criterion, each printing a
``PASS``/``FAIL`` line. Run directly with ``python3 tests/test_acceptance.py``
or through pytest.
"""
import itertools
import math
import os
import time

import numpy as np
import pytest

from pessirank.cli import main as cli_main
from pessirank.core import (
    CmParams,
    DcmParams,
    ModelKind,
    PbmParams,
    optimal_list_cm,
    optimal_list_dcm,
    optimal_list_pbm,
    value,
)
from pessirank.dataset import LoggedInteraction, LoggingPolicySpec, TruthSpec, generate_ground_truth, generate_log
from pessirank.estimators import (
    EstimatorConfig,
    beta_binomial_log_likelihood,
    collect_stats,
    fit_empirical_bayes,
    lcb_table,
    prior_grid,
)
from pessirank.harness import desk_config, mismatch_experiment, sweep_delta
from pessirank.numerics import (
    BetaPrior,
    BinomialStats,
    bayes_lcb,
    bayes_lcb_array,
    beta_quantile,
    hoeffding_lcb,
    hoeffding_lcb_array,
    log_gamma,
    pseudoinverse,
    regularized_incomplete_beta,
)
from pessirank.optimizer import pessimistic_optimize, verify_pessimism_bound

THREADS = os.cpu_count() or 1
LCB_NAMES = ("hoeffding", "bayes", "bayes_eb")


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})")
        assert ok, detail
    return emit


def three_sigma(p, n):
    return 3.0 * math.sqrt(p * (1.0 - p) / n)


def curve_min(result, names):
    return min(r.mean_error for r in result.rows if r.estimator in names)


def test_oracle_argmax(report):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        n_items = int(rng.integers(1, 7))
        k = int(rng.integers(1, min(3, n_items) + 1))
        items = [f"e{j}" for j in range(n_items)]
        theta = dict(zip(items, rng.random(n_items).tolist()))
        cases = [
            (optimal_list_cm, CmParams(theta)),
            (optimal_list_dcm, DcmParams(theta, rng.random(k).tolist())),
            (optimal_list_pbm, PbmParams(theta, rng.random(k).tolist())),
        ]
        for rule, params in cases:
            best = max(value(p, params) for p in itertools.permutations(items, k))
            mismatches += value(rule(params, k), params) != pytest.approx(best, abs=1e-12)

        kind = list(ModelKind)[int(rng.integers(3))]
        log = []
        for _ in range(int(rng.integers(5, 40))):
            lst = tuple(rng.permutation(items)[:k])
            log.append(LoggedInteraction("x", lst, tuple(int(c) for c in rng.random(k) < 0.4)))
        stats = collect_stats(kind, log, ground_set=items)
        bound = ("hoeffding", "bayes")[int(rng.integers(2))]
        fitted = lcb_table(stats, EstimatorConfig(kind=bound, delta=float(rng.uniform(0.01, 1.0))))
        if fitted.candidates[0].sum() < k:
            continue
        params = fitted.params_for("x")
        chosen = pessimistic_optimize(fitted, k).per_context["x"]
        best = max(value(p, params) for p in itertools.permutations(sorted(params.theta), k))
        mismatches += value(chosen, params) != pytest.approx(best, abs=1e-12)
    elapsed = time.perf_counter() - start
    report(1, "optimal lists match enumeration", mismatches == 0 and elapsed < 30,
           f"{mismatches} mismatches, {elapsed:.1f}s")


def test_lcb_coverage(report):
    rng = np.random.default_rng(2)
    trials = 10_000
    start = time.perf_counter()
    failures = []
    for delta, theta, n in itertools.product((0.05, 0.1, 0.5), (0.1, 0.5, 0.9), (10, 100)):
        pos = rng.binomial(n, theta, size=trials).astype(float)
        rate = float(np.mean(hoeffding_lcb_array(pos, n - pos, delta) > theta))
        if rate > delta + three_sigma(delta, trials):
            failures.append(("hoeffding", delta, theta, n, rate))
    for delta, prior, n in itertools.product((0.05, 0.1, 0.5), (BetaPrior(1, 1), BetaPrior(1, 8), BetaPrior(4, 2)),
                                             (10, 100)):
        theta = rng.beta(prior.alpha, prior.beta, size=trials)
        pos = rng.binomial(n, theta).astype(float)
        rate = float(np.mean(bayes_lcb_array(pos, n - pos, prior.alpha, prior.beta, delta) > theta))
        if abs(rate - delta / 2) > three_sigma(delta / 2, trials):
            failures.append(("bayes", delta, prior, n, rate))
    elapsed = time.perf_counter() - start
    report(2, "LCB violation rates", not failures and elapsed < 60,
           f"{len(failures)} cells out of range {failures[:3]}, {elapsed:.1f}s")


def test_pessimism_bound(report):
    spec = TruthSpec("cm", contexts=1, items=10, k=3)
    delta, reps, n = 0.1, 10_000, 100
    seeds = np.random.SeedSequence(3).spawn(reps)
    start = time.perf_counter()
    exceed = exceed_concentrated = concentrated = 0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        truth = generate_ground_truth(spec, rng)
        log = generate_log(truth, LoggingPolicySpec(), n, rng)
        bound_report = verify_pessimism_bound(truth, log, delta)
        exceed += bound_report.violated
        if bound_report.concentration_holds:
            concentrated += 1
            exceed_concentrated += bound_report.violated
    elapsed = time.perf_counter() - start
    rate = exceed / reps
    ok = rate <= delta + three_sigma(delta, reps) and exceed_concentrated == 0 and elapsed < 120
    report(3, "error of acting pessimistically", ok,
           f"exceed rate {rate:.4f}, {exceed_concentrated} exceedances among {concentrated} concentrated, "
           f"{elapsed:.1f}s")


@pytest.mark.parametrize("model", ["cm", "dcm"])
def test_pessimism_beats_plugin(report, model):
    start = time.perf_counter()
    result = sweep_delta(desk_config(model, runs=100), threads=THREADS)
    elapsed = time.perf_counter() - start
    margins = []
    for row in result.curve("bayes"):
        if row.param < 1.0:
            mle = result.row("mle", row.param)
            margins.append((mle.mean_error - row.mean_error - (mle.std_error + row.std_error), row.param))
    best_margin, best_delta = max(margins)
    ips_min = curve_min(result, ("ips",))
    lcb_min = curve_min(result, LCB_NAMES)
    ok = best_margin > 0 and ips_min > lcb_min and elapsed < 300
    report(4, f"{model}: Bayes LCB beats MLE and LCBs beat list IPS", ok,
           f"best margin {best_margin:.5f} at delta={best_delta}, IPS min {ips_min:.4f} vs LCB min {lcb_min:.4f}, "
           f"{elapsed:.1f}s")


def test_model_mismatch(report):
    pbm_truth = mismatch_experiment(desk_config("pbm", "dcm", runs=100), threads=THREADS)
    ips_a, dcm_lcb = curve_min(pbm_truth, ("ips",)), curve_min(pbm_truth, LCB_NAMES)
    dcm_truth = mismatch_experiment(desk_config("dcm", "pbm", runs=100), threads=THREADS)
    ips_b, pbm_lcb = curve_min(dcm_truth, ("ips",)), curve_min(dcm_truth, LCB_NAMES)
    report(5, "model mismatch direction", ips_a < dcm_lcb and pbm_lcb < ips_b,
           f"PBM truth: IPS {ips_a:.4f} vs DCM LCB {dcm_lcb:.4f}; DCM truth: PBM LCB {pbm_lcb:.4f} vs IPS {ips_b:.4f}")


def test_empirical_bayes_recovery(report):
    rng = np.random.default_rng(6)
    start = time.perf_counter()
    theta = rng.beta(1, 8, size=200)
    pos = rng.binomial(50, theta)
    stats = [BinomialStats(int(p), int(50 - p)) for p in pos]
    chosen = fit_empirical_bayes(stats, prior_grid(10))
    gap = beta_binomial_log_likelihood(stats, chosen) - beta_binomial_log_likelihood(stats, BetaPrior(1, 8))
    picks = {m: fit_empirical_bayes(stats, prior_grid(m)) for m in range(5, 11)}
    stable = len(set(picks.values())) == 1
    elapsed = time.perf_counter() - start
    report(6, "empirical Bayes recovers the prior", abs(gap) <= 0.5 and stable and elapsed < 30,
           f"chose ({chosen.alpha:g}, {chosen.beta:g}), gap {gap:.3f} nats, stable for m>=5: {stable}")


def test_special_function_goldens(report):
    checks = [
        (log_gamma(1.0), 0.0),
        (log_gamma(5.0), math.log(24.0)),
        (log_gamma(0.5), 0.5 * math.log(math.pi)),
        (regularized_incomplete_beta(1, 1, 0.37), 0.37),
        (regularized_incomplete_beta(1, 2, 0.5), 0.75),
        (regularized_incomplete_beta(2, 2, 0.5), 0.5),
        (beta_quantile(1, 1, 0.5), 0.5),
        (beta_quantile(1, 2, 0.25), 1.0 - math.sqrt(0.75)),
        (hoeffding_lcb(BinomialStats(7, 3), 0.05), 0.7 - math.sqrt(math.log(20.0) / 20.0)),
        (hoeffding_lcb(BinomialStats(0, 10), 0.5), -math.sqrt(math.log(2.0) / 20.0)),
        (bayes_lcb(BinomialStats(1, 0), BetaPrior(1, 1), 1.0), math.sqrt(0.5)),
        (bayes_lcb(BinomialStats(0, 1), BetaPrior(1, 1), 0.5), 1.0 - math.sqrt(0.75)),
    ]
    bad_goldens = sum(abs(got - want) > 1e-8 for got, want in checks)

    rng = np.random.default_rng(7)
    bad_penrose = 0
    for _ in range(500):
        rows, cols = rng.integers(1, 21, size=2)
        rank = int(rng.integers(0, min(rows, cols) + 1))
        m = rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, cols))
        p = pseudoinverse(m)
        residuals = (m @ p @ m - m, p @ m @ p - p, (m @ p).T - m @ p, (p @ m).T - p @ m)
        bad_penrose += max(float(np.abs(r).max(initial=0.0)) for r in residuals) > 1e-8
    report(7, "special-function goldens and pseudoinverse", bad_goldens == 0 and bad_penrose == 0,
           f"{bad_goldens} golden mismatches, {bad_penrose} Penrose failures out of 500")


def test_product_difference(report):
    rng = np.random.default_rng(8)
    pairs = 100_000
    k = rng.integers(1, 11, size=pairs)
    a = rng.random((pairs, 10))
    b = rng.random((pairs, 10))
    mask = np.arange(10)[None, :] < k[:, None]
    a, b = np.where(mask, a, 1.0), np.where(mask, b, 1.0)
    lhs = np.abs(a.prod(axis=1) - b.prod(axis=1))
    rhs = np.abs(a - b).sum(axis=1)
    violations = int(np.sum(lhs > rhs + 1e-12))
    report(8, "difference of two products", violations == 0, f"{violations} violations in {pairs} pairs")


def test_determinism(report, tmp_path):
    import json

    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "truth": {"model": "dcm", "contexts": 4, "items": 8, "k": 3, "theta_prior": [1, 8],
                  "position_prior": [1, 64]},
        "logging": {"kind": "truth_softmax", "temperature": 0.1},
        "sample_size": 200,
        "runs": 6,
        "seed": 11,
    }))
    outputs = {}
    for command, extra in (("sweep", []), ("mismatch", ["--model", "pbm"])):
        for threads in ("1", "2", "3", "1"):
            out = tmp_path / f"{command}-{threads}-{len(outputs)}.csv"
            code = cli_main([command, "--config", str(config), "--out", str(out), "--threads", threads, *extra])
            outputs.setdefault(command, []).append((code, out.read_bytes() if code == 0 else b""))
    ok = all(code == 0 for runs in outputs.values() for code, _ in runs)
    ok = ok and all(len({data for _, data in runs}) == 1 for runs in outputs.values())
    report(9, "byte-identical CSV across repeats and thread counts", ok,
           f"{sum(len(r) for r in outputs.values())} invocations")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
