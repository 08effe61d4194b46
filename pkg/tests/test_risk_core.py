import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskbound.errors import InvalidInput
from riskbound.risk_core import (
    ConfidenceSpec,
    EssentialBound,
    SampleSet,
    dump_samples_csv,
    empirical_cvar,
    empirical_evar,
    empirical_var,
    expectation_bound,
    load_samples,
    min_samples,
    scenario_confidence_general,
    scenario_max,
    var_bound_confidence,
)

from oracles import binomial_tail, brute_cvar, brute_evar, brute_var

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
sample_lists = st.lists(finite, min_size=1, max_size=60)
unit_open = st.floats(1e-3, 1.0, exclude_max=True)


class TestTypes:
    def test_empty_sample_set_rejected(self):
        with pytest.raises(InvalidInput):
            SampleSet([])

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(InvalidInput, match="sample 1"):
            SampleSet([0.0, bad])

    def test_sample_set_is_read_only(self):
        s = SampleSet([1.0, 2.0])
        with pytest.raises(ValueError):
            s.values[0] = 3.0

    @pytest.mark.parametrize("eps,gamma", [(0.0, 0.5), (1.0, 0.5), (0.1, 1.0), (0.1, -0.1)])
    def test_confidence_spec_bounds(self, eps, gamma):
        with pytest.raises(InvalidInput):
            ConfidenceSpec(eps, gamma)

    def test_essential_bound_reports_first_violation(self):
        with pytest.raises(InvalidInput, match="essential bound violated by sample 2"):
            EssentialBound(1.0).check([0.5, 1.0, 1.5, 2.0])


class TestScenarioMax:
    def test_examples(self):
        assert scenario_max([1, 5, 3]) == 5
        assert scenario_max([-2]) == -2

    def test_uniform_draws_match_sorted_last(self):
        x = np.random.default_rng(0).uniform(0, 1, 149)
        z = scenario_max(x)
        assert z == sorted(x.tolist())[-1] and z <= 1

    @given(sample_lists)
    def test_member_and_maximum(self, xs):
        z = scenario_max(xs)
        assert z in xs
        assert all(z >= v for v in xs)

    def test_large_multiset(self):
        x = np.random.default_rng(1).integers(-50, 50, 10_000).astype(float)
        assert scenario_max(x) == max(x.tolist())


class TestConfidence:
    def test_examples(self):
        assert var_bound_confidence(20, 0.1) == pytest.approx(1 - 0.9**20, rel=1e-14)
        assert var_bound_confidence(20, 0.1) == pytest.approx(0.87842, abs=1e-5)
        assert var_bound_confidence(1, 1.0) == 1.0
        assert var_bound_confidence(149, 0.02) >= 0.95

    @pytest.mark.parametrize("eps", [-0.1, 1.1])
    def test_epsilon_range(self, eps):
        with pytest.raises(InvalidInput):
            var_bound_confidence(10, eps)

    def test_bad_count(self):
        with pytest.raises(InvalidInput):
            var_bound_confidence(0, 0.1)


class TestMinSamples:
    @pytest.mark.parametrize(
        "gamma,eps,n",
        [(0.95, 0.02, 149), (0.95, 0.01, 299), (0.99, 0.01, 459), (1 - 1e-6, 0.05, 270), (0.0, 0.5, 1)],
    )
    def test_reference_values(self, gamma, eps, n):
        assert min_samples(ConfidenceSpec(eps, gamma)) == n

    @settings(max_examples=1000)
    @given(st.floats(0.0, 0.999999), st.floats(1e-4, 0.9))
    def test_least_sufficient_count(self, gamma, eps):
        n = min_samples(ConfidenceSpec(eps, gamma))
        assert var_bound_confidence(n, eps) >= gamma
        if n > 1:
            assert var_bound_confidence(n - 1, eps) < gamma


class TestGeneralConfidence:
    def test_single_dimension(self):
        assert scenario_confidence_general(20, 1, 0.1) == pytest.approx(0.9**20, rel=1e-12)
        assert scenario_confidence_general(20, 1, 0.1) == pytest.approx(0.12158, abs=1e-5)

    def test_full_dimension_at_zero(self):
        assert scenario_confidence_general(7, 7, 0.0) == 1.0

    def test_rational_oracle(self):
        assert scenario_confidence_general(10, 2, 0.3) == pytest.approx(binomial_tail(10, 2, 0.3), rel=1e-12)

    def test_dimension_too_large(self):
        with pytest.raises(InvalidInput):
            scenario_confidence_general(3, 4, 0.1)

    @given(st.integers(1, 60), st.integers(1, 60), st.floats(0, 1))
    def test_matches_exact_sum(self, n, d, eps):
        if d > n:
            return
        assert scenario_confidence_general(n, d, eps) == pytest.approx(binomial_tail(n, d, eps), abs=1e-12)


class TestExpectationBound:
    def test_examples(self):
        assert expectation_bound(2, 5, 0.1) == pytest.approx(2.3)
        assert expectation_bound(5, 5, 0.37) == 5
        # -0.1 * 0.98 + 0.1 * 0.02
        assert expectation_bound(-0.1, 0.1, 0.02) == pytest.approx(-0.096)

    def test_zeta_above_ell(self):
        with pytest.raises(InvalidInput):
            expectation_bound(6, 5, 0.1)

    @given(finite, st.floats(0, 100), st.floats(0, 1), st.floats(0, 1))
    def test_monotone_in_epsilon(self, zeta, gap, e1, e2):
        ell = zeta + gap
        lo, hi = sorted((e1, e2))
        assert expectation_bound(zeta, ell, lo) <= expectation_bound(zeta, ell, hi) + 1e-9


class TestEmpiricalMeasures:
    def test_var_examples(self):
        x = list(range(1, 11))
        assert empirical_var(x, 0.3) == 7
        assert empirical_var(x, 0.0) == 10
        assert empirical_var([4.2], 0.6) == 4.2

    def test_cvar_examples(self):
        assert empirical_cvar(range(1, 11), 0.2) == pytest.approx(9.5)
        assert empirical_cvar([3.3], 0.1) == pytest.approx(3.3)
        assert empirical_cvar([0, 10], 0.5) == pytest.approx(10)

    def test_cvar_zero_alpha(self):
        with pytest.raises(InvalidInput):
            empirical_cvar([1, 2], 0.0)

    def test_evar_examples(self):
        assert empirical_evar([2.5], 0.3) == pytest.approx(2.5, abs=1e-9)
        assert empirical_evar(range(1, 11), 1.0) == pytest.approx(5.5, abs=1e-9)
        # regression value from the dense-grid oracle
        assert empirical_evar([0, 10], 0.2) == pytest.approx(brute_evar([0, 10], 0.2), rel=1e-6)

    @given(sample_lists, unit_open)
    def test_against_brute_force(self, xs, a):
        assert empirical_var(xs, a) == brute_var(xs, a)
        assert empirical_cvar(xs, a) == pytest.approx(brute_cvar(xs, a), rel=1e-9, abs=1e-9)

    @settings(deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=40), unit_open)
    def test_ordering(self, xs, a):
        v, c, e = empirical_var(xs, a), empirical_cvar(xs, a), empirical_evar(xs, a)
        assert v <= c + 1e-9
        assert c <= e + 1e-9

    @given(sample_lists)
    def test_cvar_at_one_is_mean(self, xs):
        assert empirical_cvar(xs, 1.0) == pytest.approx(float(np.mean(xs)), abs=1e-9 * (1 + max(map(abs, xs))))


class TestScenarioMaxFrequency:
    def test_scenario_max_dominates_var(self):
        # discretized multimodal mixture with an exactly computable quantile
        support = np.arange(0, 100)
        weights = np.exp(-0.5 * ((support - 20) / 6) ** 2) + 0.5 * np.exp(-0.5 * ((support - 70) / 4) ** 2)
        p = weights / weights.sum()
        eps, n, trials = 0.05, 30, 2000
        cdf = np.cumsum(p)
        true_var = support[np.argmax(cdf >= 1 - eps - 1e-12)]
        rng = np.random.default_rng(2024)
        hits = sum(scenario_max(rng.choice(support, n, p=p)) >= true_var for _ in range(trials))
        conf = var_bound_confidence(n, eps)
        assert hits / trials >= conf - 3 * math.sqrt(conf * (1 - conf) / trials)


class TestIO:
    def test_csv_with_header_round_trip(self, tmp_path):
        x = [0.1, -2.5, 1e-17, 3.141592653589793]
        path = tmp_path / "s.csv"
        dump_samples_csv(x, path)
        assert load_samples(path).values.tolist() == x

    def test_csv_without_header(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("1\n2\n\n3\n")
        assert load_samples(path).values.tolist() == [1, 2, 3]

    def test_json(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps([1, 2.5]))
        assert load_samples(path).values.tolist() == [1, 2.5]

    def test_bad_line(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("value\n1\nabc\n")
        with pytest.raises(InvalidInput, match="line 3"):
            load_samples(path)
