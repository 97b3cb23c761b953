import itertools
import math

import numpy as np
import pytest

from pessirank.core import CmParams, DcmParams, GroundTruth, ModelKind, PbmParams, optimal_list, value
from pessirank.dataset import LoggedInteraction, LoggingPolicySpec, TruthSpec, generate_ground_truth, generate_log
from pessirank.errors import ContextMismatchError, SizeError
from pessirank.estimators import EstimatorConfig, collect_stats, lcb_table
from pessirank.optimizer import (
    OptimizationResult,
    certificate_width,
    evaluation_error,
    pessimistic_optimize,
    verify_pessimism_bound,
)

L = LoggedInteraction


def counts_log(spec):
    log = []
    for item, (pos, neg) in spec.items():
        log += [L("x", (item,), (1,))] * pos + [L("x", (item,), (0,))] * neg
    return log


def choose(spec, delta, kind="hoeffding"):
    stats = collect_stats("cm", counts_log(spec))
    fitted = lcb_table(stats, EstimatorConfig(kind=kind, delta=delta, union_bound="none"))
    return pessimistic_optimize(fitted, 1)


class TestRarelyShownItem:
    popular = (480, 520)

    def test_few_reviews_still_win_when_perfect(self):
        res = choose({"new": (5, 0), "old": self.popular}, 0.05)
        assert res.per_context["x"] == ("new",)
        assert res.per_context_value["x"] == pytest.approx(1 - math.sqrt(math.log(20) / 10), abs=1e-12)
        assert choose({"new": (5, 0), "old": self.popular}, 0.5).per_context["x"] == ("new",)

    def test_single_review_loses(self):
        res = choose({"new": (1, 0), "old": self.popular}, 0.05)
        assert res.per_context["x"] == ("old",)
        assert res.per_context_value["x"] == pytest.approx(0.48 - math.sqrt(math.log(20) / 2000), abs=1e-12)
        assert choose({"new": (1, 0), "old": self.popular}, 1.0, kind="mle").per_context["x"] == ("new",)


def random_fitted_setup(rng, kind, n_items, k, n=60):
    items = [f"i{j}" for j in range(n_items)]
    log = []
    for _ in range(n):
        lst = tuple(rng.permutation(items)[:k])
        log.append(L("x", lst, tuple(int(c) for c in rng.random(k) < 0.4)))
    return collect_stats(kind, log)


@pytest.mark.parametrize("kind", list(ModelKind))
def test_matches_enumeration_of_lcb_value(kind, rng):
    for trial in range(60):
        n_items = int(rng.integers(1, 7))
        k = int(rng.integers(1, min(3, n_items) + 1))
        stats = random_fitted_setup(rng, kind, n_items, k)
        bound = ("hoeffding", "bayes")[trial % 2]
        fitted = lcb_table(stats, EstimatorConfig(kind=bound, delta=0.2, union_bound="none"))
        res = pessimistic_optimize(fitted, k)
        params = fitted.params_for("x")
        best = max(value(p, params) for p in itertools.permutations(sorted(params.theta), k))
        assert res.per_context_value["x"] == pytest.approx(best, abs=1e-12)


@pytest.mark.parametrize("kind", list(ModelKind))
def test_delta_one_equals_mle(kind, rng):
    stats = random_fitted_setup(rng, kind, 6, 3, n=300)
    a = pessimistic_optimize(lcb_table(stats, EstimatorConfig(kind="hoeffding", delta=1.0)), 3)
    b = pessimistic_optimize(lcb_table(stats, EstimatorConfig(kind="mle")), 3)
    assert a.per_context == b.per_context


def test_scale_free_pbm(rng):
    stats = random_fitted_setup(rng, ModelKind.PBM, 6, 3, n=300)
    fitted = lcb_table(stats, EstimatorConfig(kind="hoeffding", delta=0.3))
    base = pessimistic_optimize(fitted, 3).per_context
    fitted.theta = fitted.theta * 0.37
    assert pessimistic_optimize(fitted, 3).per_context == base


def test_monotone_transform_keeps_cm_set(rng):
    stats = random_fitted_setup(rng, ModelKind.CM, 6, 3, n=300)
    fitted = lcb_table(stats, EstimatorConfig(kind="bayes", delta=0.3))
    base = set(pessimistic_optimize(fitted, 3).per_context["x"])
    fitted.theta = fitted.theta ** 3
    assert set(pessimistic_optimize(fitted, 3).per_context["x"]) == base


def test_too_few_candidates():
    fitted = lcb_table(collect_stats("cm", [L("x", ("a",), (1,))]), EstimatorConfig())
    with pytest.raises(SizeError):
        pessimistic_optimize(fitted, 2)


class TestEvaluationError:
    truth = GroundTruth("cm", {"x": CmParams({"a": 0.9, "b": 0.5, "c": 0.1})}, 1)

    def test_examples(self):
        assert evaluation_error(self.truth, OptimizationResult({"x": ("a",)})) == 0.0
        assert evaluation_error(self.truth, OptimizationResult({"x": ("b",)})) == pytest.approx(0.4)

    def test_mismatch(self):
        with pytest.raises(ContextMismatchError):
            evaluation_error(self.truth, OptimizationResult({"y": ("a",)}))
        with pytest.raises(ContextMismatchError):
            evaluation_error(self.truth, OptimizationResult({"x": ("a", "b")}))

    @pytest.mark.parametrize("kind", ["cm", "dcm", "pbm"])
    def test_non_negative(self, kind, rng):
        truth = generate_ground_truth(TruthSpec(kind, contexts=3, items=6, k=3), rng)
        for _ in range(100):
            lists = {ctx: tuple(rng.permutation(sorted(truth.per_context[ctx].theta))[:3]) for ctx in truth.contexts}
            err = evaluation_error(truth, OptimizationResult(lists))
            assert 0.0 <= err <= (3.0 if kind == "pbm" else 1.0)


class TestCertificateWidth:
    def test_example(self):
        counts = {("x", "a"): 50, ("x", "b"): 200}
        width = certificate_width(counts, ("a", "b"), "x", 0.05, 10, 1)
        assert width == pytest.approx(math.sqrt(math.log(200) / 100) + math.sqrt(math.log(200) / 400))
        assert width == pytest.approx(0.345265, abs=1e-5)

    def test_decreasing_in_counts(self):
        widths = [certificate_width({("x", "a"): n}, ("a",), "x", 0.1, 5, 2) for n in (1, 2, 4, 8, 1024)]
        assert all(b < a for a, b in zip(widths, widths[1:]))

    def test_zero_log_term(self):
        assert certificate_width({("x", "a"): 3}, ("a",), "x", 1.0, 1, 1) == 0.0

    def test_unobserved_is_infinite(self):
        assert certificate_width({}, ("a",), "x", 0.1, 1, 1) == math.inf


class TestPessimismBound:
    def test_degenerate(self, rng):
        truth = GroundTruth("cm", {"x": CmParams({"a": 0.3})}, 1)
        log = generate_log(truth, LoggingPolicySpec(), 20, rng)
        report = verify_pessimism_bound(truth, log, 0.1)
        assert [r.error for r in report.records] == [0.0]
        assert not report.violated

    @pytest.mark.parametrize("kind", ["cm", "dcm", "pbm"])
    def test_holds_under_concentration(self, kind, rng):
        spec = TruthSpec(kind, contexts=2, items=6, k=3)
        for _ in range(30):
            truth = generate_ground_truth(spec, rng)
            log = generate_log(truth, LoggingPolicySpec(), 40, rng)
            report = verify_pessimism_bound(truth, log, 0.2)
            for r in report.records:
                if r.concentration_holds and kind == "cm":
                    assert not r.violated
                    assert not r.mle_violated

    def test_missing_context(self, rng):
        truth = GroundTruth("cm", {"x": CmParams({"a": 0.3}), "y": CmParams({"a": 0.3})}, 1)
        with pytest.raises(ContextMismatchError):
            verify_pessimism_bound(truth, [L("x", ("a",), (1,))], 0.1)
