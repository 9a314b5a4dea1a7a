"""
Tests for the self-verification suites.
"""
import pytest

from src.tensor import Precision
from src.training import SUITES, run_verification
from src.training.reports import SuiteReport
from src.training.verification import (
    _timed,
    finite_difference_suite,
    gradient_equivalence_suite,
    invertibility_suite,
    memory_suite,
    shuffle_suite,
)


def _assert_all_pass(results):
    failures = [(r.name, r.detail) for r in results if not r.passed]
    assert not failures, failures


class TestSuites:
    @pytest.mark.parametrize("precision", [Precision.F64, Precision.F32])
    def test_invertibility(self, precision):
        results = invertibility_suite(precision, trials=10)
        assert [r.name for r in results] == ["invertibility/coupling", "invertibility/resampling"]
        _assert_all_pass(results)

    def test_shuffle(self):
        _assert_all_pass(shuffle_suite(trials=20))

    def test_gradient_equivalence(self):
        results = gradient_equivalence_suite()
        assert len(results) == 2
        _assert_all_pass(results)

    def test_finite_differences(self):
        results = finite_difference_suite(seeds=(0,))
        names = {r.name for r in results}
        assert {"fd/conv3d", "fd/coupling", "fd/invertible_up", "fd/loss_kl_logvar"} <= names
        _assert_all_pass(results)

    def test_memory_chains(self):
        results = memory_suite(lengths=(1, 2, 4, 16), ordering=False)
        assert [r.name for r in results] == [
            "memory/invertible_constant",
            "memory/store_affine",
            "memory/checkpoint_sqrt",
        ]
        _assert_all_pass(results)

    @pytest.mark.slow
    def test_memory_model_ordering(self):
        results = memory_suite(lengths=(1, 4, 16), ordering=True)
        _assert_all_pass(results)


class TestRunner:
    def test_subset(self):
        report = run_verification(Precision.F64, ["shuffle"], show_progress=False)
        assert isinstance(report, SuiteReport)
        assert report.passed
        assert "checks passed" in report.to_text()

    def test_unknown_suite(self):
        with pytest.raises(ValueError, match="Unknown"):
            run_verification(suites=["nonsense"], show_progress=False)

    def test_suite_names(self):
        assert SUITES == ("invertibility", "shuffle", "gradients", "finite_differences", "memory")

    def test_exceptions_become_failures(self):
        def broken():
            raise RuntimeError("boom")

        result = _timed("broken", broken)
        assert not result.passed
        assert "RuntimeError: boom" in result.detail

    def test_failure_listed_in_report(self):
        report = SuiteReport(precision=Precision.F64, checks=[_timed("bad", lambda: (False, "nope"))])
        assert not report.passed
        assert report.failures[0].name == "bad"
        assert "[FAIL]" in report.to_text()
