"""Metric examples, axioms and the brute-force pair oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peergrade.data import TruthSet
from peergrade.errors import MetricError
from peergrade.metrics import kendall_tau_error, l2_error, pearson_r, per_exercise_errors
from tests.conftest import kendall_oracle

score_vectors = st.dictionaries(
    st.sampled_from(list("abcdefgh")),
    st.floats(-2, 2, allow_nan=False),
    min_size=2,
    max_size=8,
)


class TestL2:
    def test_identical_is_zero(self):
        v = {"a": 0.3, "b": 0.9}
        assert l2_error(v, v) == 0.0

    def test_unit_offsets(self):
        assert l2_error({"a": 1.0, "b": 0.0}, {"a": 0.0, "b": 1.0}) == 1.0

    def test_hand_computed_rmse(self):
        got = l2_error({"a": 0.5, "b": 0.7}, {"a": 0.6, "b": 0.9})
        assert got == pytest.approx(math.sqrt((0.01 + 0.04) / 2))
        assert got == pytest.approx(0.1581, abs=1e-4)

    def test_key_mismatch(self):
        with pytest.raises(MetricError):
            l2_error({"a": 1.0}, {"b": 1.0})

    def test_empty(self):
        with pytest.raises(MetricError):
            l2_error({}, {})

    @given(score_vectors, st.data())
    @settings(max_examples=100, deadline=None)
    def test_triangle_bound(self, x, data):
        keys = sorted(x)
        y = {k: data.draw(st.floats(-2, 2, allow_nan=False)) for k in keys}
        z = {k: data.draw(st.floats(-2, 2, allow_nan=False)) for k in keys}
        assert l2_error(x, z) <= l2_error(x, y) + l2_error(y, z) + 1e-12


class TestKendall:
    def test_identical_rankings(self):
        v = {"a": 0.1, "b": 0.5, "c": 0.9}
        assert kendall_tau_error(v, v) == 0.0

    def test_fully_reversed(self):
        est = {"a": 3.0, "b": 2.0, "c": 1.0}
        truth = {"a": 1.0, "b": 2.0, "c": 3.0}
        assert kendall_tau_error(est, truth) == 1.0

    def test_one_sided_tie(self):
        est = {"a": 0.5, "b": 0.5, "c": 1.0}
        truth = {"a": 0.3, "b": 0.5, "c": 1.0}
        assert kendall_tau_error(est, truth) == pytest.approx(0.5 / 3)

    def test_both_tied_counts_as_agreement(self):
        est = {"a": 0.5, "b": 0.5}
        truth = {"a": 0.2, "b": 0.2}
        assert kendall_tau_error(est, truth) == 0.0

    def test_too_few_entries(self):
        with pytest.raises(MetricError):
            kendall_tau_error({"a": 1.0}, {"a": 2.0})

    @given(score_vectors, score_vectors)
    @settings(max_examples=150, deadline=None)
    def test_symmetry_and_range(self, x, y):
        keys = sorted(set(x) & set(y))
        if len(keys) < 2:
            return
        a = {k: x[k] for k in keys}
        b = {k: y[k] for k in keys}
        err = kendall_tau_error(a, b)
        assert err == kendall_tau_error(b, a)
        assert 0.0 <= err <= 1.0

    @given(
        st.dictionaries(
            st.sampled_from(list("abcdefgh")),
            # grid-spaced values: exp stays injective on them
            st.integers(-16, 16).map(lambda i: i / 8.0),
            min_size=2,
            max_size=8,
        )
    )
    @settings(max_examples=100, deadline=None)
    def test_monotone_transform_invariance(self, x):
        y = {k: i * 0.13 for i, k in enumerate(sorted(x))}
        transformed = {k: math.exp(3.0 * v) - 1.0 for k, v in x.items()}
        assert kendall_tau_error(x, y) == kendall_tau_error(transformed, y)

    def test_matches_bruteforce_oracle_with_ties(self):
        rng = np.random.default_rng(123)
        for _ in range(300):
            n = rng.integers(2, 7)
            keys = [f"k{i}" for i in range(n)]
            # coarse grid so ties actually occur
            x = {k: float(rng.integers(0, 4)) / 3 for k in keys}
            y = {k: float(rng.integers(0, 4)) / 3 for k in keys}
            assert kendall_tau_error(x, y) == kendall_oracle(x, y)


class TestPearson:
    def test_perfect_correlation(self):
        assert pearson_r([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)

    def test_perfect_anticorrelation(self):
        assert pearson_r([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_hand_computed(self):
        assert pearson_r([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)

    def test_zero_variance_rejected(self):
        with pytest.raises(MetricError):
            pearson_r([1, 1, 1], [1, 2, 3])

    def test_length_mismatch(self):
        with pytest.raises(MetricError):
            pearson_r([1, 2], [1, 2, 3])


class TestPerExercise:
    def test_perfect_fit_zero(self):
        scores = {("e0", "s0"): 0.5, ("e0", "s1"): 0.7}
        truth = TruthSet({("e0", "s0"): 0.5, ("e0", "s1"): 0.7})
        assert per_exercise_errors(scores, truth, "l2") == {"e0": 0.0}

    def test_two_exercises_hand_computed(self):
        scores = {("e0", "s0"): 0.5, ("e1", "s1"): 0.9}
        truth = TruthSet({("e0", "s0"): 0.6, ("e1", "s1"): 0.6})
        out = per_exercise_errors(scores, truth, "l2")
        assert out["e0"] == pytest.approx(0.1)
        assert out["e1"] == pytest.approx(0.3)

    def test_kendall_skips_singleton_exercise_with_warning(self):
        scores = {("e0", "s0"): 0.5, ("e1", "a"): 0.1, ("e1", "b"): 0.9}
        truth = TruthSet(
            {("e0", "s0"): 0.5, ("e1", "a"): 0.2, ("e1", "b"): 0.8}
        )
        with pytest.warns(UserWarning, match="skipped"):
            out = per_exercise_errors(scores, truth, "kendall")
        assert out == {"e1": 0.0}

    def test_missing_truth_is_an_error(self):
        scores = {("e0", "s0"): 0.5}
        with pytest.raises(MetricError, match="no truth"):
            per_exercise_errors(scores, TruthSet({}), "l2")
