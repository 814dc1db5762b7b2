import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

import compound_tails as ct
from compound_tails.errors import DomainError, NumericError

import oracles


class TestDiscretizedWeibull:
    def test_pmf_at_zero(self, weibull):
        assert weibull[0.5].pmf(0) == pytest.approx(1 - math.exp(-1), abs=1e-12)
        assert weibull[0.5].pmf(0) == pytest.approx(0.63212, abs=1e-5)

    def test_tail_at_eight(self, weibull):
        assert weibull[0.5].tail(8) == pytest.approx(math.exp(-3), rel=1e-14)

    def test_pmf_sums_to_one_over_a_million_points(self, weibull):
        total = weibull[0.25].pmf_array(10**6).sum()
        # the missing mass is the tail beyond 10^6
        assert 1.0 - total == pytest.approx(oracles.weibull_tail(0.25, 10**6), abs=1e-12)
        assert abs(1.0 - total) < 1e-12 + oracles.weibull_tail(0.25, 10**6)

    def test_tail_is_exact_on_integers(self, weibull):
        n = np.arange(0, 5000, 7)
        ratio = weibull[0.4].tail(n) / np.exp(-((n + 1.0) ** 0.4))
        np.testing.assert_allclose(ratio, 1.0, rtol=1e-13)

    def test_pmf_positive_far_out(self, weibull):
        assert np.all(weibull[0.3].pmf(np.array([1e3, 1e6, 1e9])) > 0)

    def test_aux_closed_form(self, weibull):
        assert weibull[0.5].aux(100.0) == pytest.approx(20.0)
        assert weibull[0.5].has_aux

    @pytest.mark.parametrize("beta", [0.0, 1.0, -0.2, 1.5])
    def test_rejects_beta_outside_unit_interval(self, beta):
        with pytest.raises(DomainError):
            ct.make_discretized_weibull(beta)

    def test_mean_matches_summation(self, weibull):
        n = np.arange(0, 200000)
        assert weibull[0.5].mean == pytest.approx(float(np.sum(weibull[0.5].tail(n))), rel=1e-10)

    def test_sampling_matches_law(self, weibull, rng):
        s = weibull[0.5].sample(rng, 200000)
        _, _, ok = ct.montecarlo.ks_discrete(s, weibull[0.5])
        assert ok


class TestParetoCount:
    def test_unit_case(self):
        assert ct.make_pareto_count(1, 1).tail(0) == pytest.approx(0.5)

    def test_pmf_at_zero(self):
        assert ct.make_pareto_count(2, 3).pmf(0) == pytest.approx(7 / 16, rel=1e-14)

    def test_tail_floor_convention(self, pareto15):
        for x in (0.0, 0.5, 3.7, 1234.99):
            assert pareto15.tail(x) == pytest.approx(oracles.pareto_count_tail(1.5, 1.0, x), rel=1e-13)

    def test_mean_is_hurwitz_zeta(self, pareto15):
        # E[N] = sum_{k>=0} (1/(2+k))^1.5 = zeta(1.5) - 1
        assert pareto15.mean == pytest.approx(2.612375348685488 - 1.0, rel=1e-12)

    def test_infinite_mean(self):
        assert math.isinf(ct.make_pareto_count(0.8, 1.0).mean)

    @pytest.mark.parametrize("args", [(0, 1), (1, 0), (-1, 2)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            ct.make_pareto_count(*args)


class TestMixedPoisson:
    def test_pmf_matches_independent_quadrature(self, quake):
        for n in (0, 1, 3, 17, 250):
            assert quake.pmf(n) == pytest.approx(oracles.mixed_poisson_pmf(n, 1.2, 1.0), rel=1e-8)

    def test_tail_matches_independent_quadrature(self, quake):
        for n in (0, 5, 60, 900):
            assert quake.tail(n) == pytest.approx(oracles.mixed_poisson_tail(n, 1.2, 1.0), rel=1e-8)

    def test_closed_form_and_package_quadrature_agree(self, quake):
        for n in (2, 40, 3000):
            assert quake.logtail_quad(n) == pytest.approx(float(quake.logtail(n)), abs=1e-9)
            assert quake.logpmf_quad(n) == pytest.approx(float(quake.logpmf(n)), abs=1e-9)

    def test_tail_follows_pareto_energy(self, quake):
        x = 2.0 ** np.arange(4, 13)
        ratio = quake.tail(x) / x**-1.2
        assert np.all(np.abs(ratio - 1) < 0.1)
        assert abs(ratio[-1] - 1) < abs(ratio[0] - 1)

    def test_pmf_sums_to_one(self, quake):
        assert quake.pmf_array(5000).sum() + quake.tail(5000) == pytest.approx(1.0, abs=1e-9)

    def test_vanishing_rate_limit(self):
        assert ct.make_mixed_poisson_earthquake(1.2, 1.0, 1e-9, 1.0).pmf(0) == pytest.approx(1.0, abs=1e-8)

    def test_mean(self, quake):
        # E[M] = alpha b / (alpha - 1)
        assert quake.mean == pytest.approx(6.0, rel=1e-12)


class TestLightCounts:
    def test_geometric_tail(self, geometric_half):
        n = np.arange(0, 60)
        np.testing.assert_allclose(geometric_half.tail(n), 2.0 ** -(n + 1.0), rtol=1e-14)

    def test_poisson_pmf_zero(self):
        assert ct.make_poisson_count(1.0).pmf(0) == pytest.approx(math.exp(-1), rel=1e-14)

    def test_poisson_tail_by_summation(self):
        k = np.arange(0, 11)
        direct = 1.0 - np.sum(np.exp(-4.0) * 4.0**k / np.array([math.factorial(i) for i in k]))
        assert ct.make_poisson_count(4.0).tail(10) == pytest.approx(direct, abs=1e-12)

    def test_degenerate(self):
        c = ct.make_degenerate_count(5)
        assert c.tail(4.9) == 1.0 and c.tail(5) == 0.0


class TestSeverities:
    def test_exponential_log_mgf(self, exp1):
        for t in (-3.0, 0.0, 0.3, 0.9):
            assert exp1.log_mgf(t) == pytest.approx(-math.log(1 - t), abs=1e-14)
        assert exp1.mgf_radius == 1.0

    def test_degenerate_atom(self):
        s = ct.make_severity_bounded([(1, 1)])
        assert (s.mu, s.sigma2, s.mgf_radius) == (1.0, 0.0, math.inf)

    def test_pareto_mean(self, pareto_sev):
        assert pareto_sev.mu == pytest.approx(5 / 3)
        assert pareto_sev.mgf_radius == 0.0
        assert math.isinf(pareto_sev.moment(2.5))

    def test_pareto_requires_finite_mean(self):
        with pytest.raises(DomainError):
            ct.make_severity_pareto(1.0)

    def test_atoms_must_sum_to_one(self):
        with pytest.raises(DomainError):
            ct.make_severity_bounded([(1, 0.5), (2, 0.4)])

    @given(st.floats(0.1, 10.0), st.floats(-5.0, 0.0))
    def test_log_mgf_zero_and_convex(self, mu, t):
        s = ct.make_severity_exponential(mu)
        assert s.log_mgf(0.0) == 0.0
        d = 1e-3
        mid = s.log_mgf(t)
        assert s.log_mgf(t - d) + s.log_mgf(t + d) >= 2 * mid - 1e-12

    def test_moment_one_is_mean(self, exp1, two_atoms, pareto_sev):
        for s in (exp1, two_atoms, pareto_sev):
            assert s.moment(1) == pytest.approx(s.mu, rel=1e-10)


class TestDiscretize:
    def test_degenerate_on_half_grid(self):
        lat = ct.discretize_severity(ct.make_severity_degenerate(1.0), 0.5)
        assert lat.offset == 2 and len(lat.log_mass) == 1 and lat.log_mass[0] == 0.0

    def test_round_mean_within_h(self, exp1):
        assert abs(ct.discretize_severity(exp1, 1 / 64, "round").mean() - 1.0) < 1 / 64

    def test_floor_exact_upper_sandwich(self, exp1):
        # 5 is a lattice point, where the upper rounding is exact up to roundoff
        lo = float(np.exp(ct.discretize_severity(exp1, 1 / 64, "floor").logtail(5.0)))
        hi = float(np.exp(ct.discretize_severity(exp1, 1 / 64, "upper").logtail(5.0)))
        assert lo < math.exp(-5) * (1 - 1e-3)
        assert hi == pytest.approx(math.exp(-5), rel=1e-12)
        x = 5.007
        lo = float(np.exp(ct.discretize_severity(exp1, 1 / 64, "floor").logtail(x)))
        hi = float(np.exp(ct.discretize_severity(exp1, 1 / 64, "upper").logtail(x)))
        assert lo < math.exp(-x) < hi

    def test_mass_is_normalised(self, exp1, pareto_sev):
        for s in (exp1, pareto_sev):
            lat = ct.discretize_severity(s, 1 / 16, "round", eps=1e-10)
            assert lat.total + lat.tail_mass == pytest.approx(1.0, abs=1e-12)
            assert np.all(lat.log_mass <= 0)

    def test_too_long_lattice_is_a_numeric_error(self, pareto_sev):
        with pytest.raises(NumericError):
            ct.discretize_severity(pareto_sev, 1e-3, eps=1e-16, max_points=10**5)

    @given(st.sampled_from(["floor", "round", "upper"]), st.floats(0.01, 0.5))
    def test_stochastic_order(self, mode, h):
        s = ct.make_severity_exponential(1.0)
        lat = ct.discretize_severity(s, h, mode)
        x = np.linspace(0, 8, 33)
        lt = np.exp(lat.logtail(x))
        exact = np.exp(-x)
        if mode == "floor":
            assert np.all(lt <= exact + 1e-15)
        elif mode == "upper":
            assert np.all(lt >= exact - 1e-15)


class TestMeanExcess:
    @pytest.mark.parametrize("x", [0, 3, 10, 40])
    def test_geometric_constant(self, geometric_half, x):
        assert ct.count_mean_excess(geometric_half, x) == pytest.approx(2.0, rel=1e-12)

    def test_weibull_against_summation(self, weibull):
        n = np.arange(101, 400000, dtype=float)
        direct = float(np.sum((n - 100) * weibull[0.5].pmf(n)) / weibull[0.5].tail(100))
        value = ct.count_mean_excess(weibull[0.5], 100)
        assert value == pytest.approx(direct, rel=1e-9)
        assert 0.8 <= value / 20.0 <= 1.25

    def test_degenerate(self):
        assert ct.count_mean_excess(ct.make_degenerate_count(5), 3) == pytest.approx(2.0)

    def test_empty_tail_is_domain_error(self):
        with pytest.raises(DomainError):
            ct.count_mean_excess(ct.make_degenerate_count(5), 5)


class TestCountInvariants:
    models = [
        ct.make_discretized_weibull(0.35),
        ct.make_pareto_count(1.5, 2.0),
        ct.make_geometric_count(0.3),
        ct.make_poisson_count(6.0),
        ct.make_mixed_poisson_earthquake(1.5, 2.0, 0.5, 1.0),
    ]

    @pytest.mark.parametrize("model", models, ids=lambda m: m.family)
    @given(x=st.floats(0, 500))
    def test_tail_is_a_step_function(self, model, x):
        assert model.tail(x) == model.tail(math.floor(x))
        assert 0.0 <= model.tail(x) <= 1.0

    @pytest.mark.parametrize("model", models, ids=lambda m: m.family)
    def test_tail_equals_pmf_sum(self, model):
        pmf = model.pmf_array(400)
        tails = 1.0 - np.cumsum(pmf)
        np.testing.assert_allclose(tails[:100], model.tail(np.arange(100)), atol=1e-12)
        assert np.all(np.diff(model.tail(np.arange(400))) <= 0)

    @pytest.mark.parametrize("model", models, ids=lambda m: m.family)
    def test_specs_roundtrip(self, model):
        spec = {"family": model.family, **model.params}
        again = ct.count_from_spec(spec)
        assert again.tail(37) == model.tail(37)


def test_json_spec_example():
    c = ct.count_from_spec({"family": "discretized_weibull", "beta": 0.3})
    s = ct.severity_from_spec({"family": "exponential", "mu": 1.0})
    assert c.tail(0) == pytest.approx(math.exp(-1)) and s.mu == 1.0


def test_scipy_poisson_cross_check():
    c = ct.make_poisson_count(4.0)
    np.testing.assert_allclose(c.tail(np.arange(30)), stats.poisson.sf(np.arange(30), 4.0), rtol=1e-10)
