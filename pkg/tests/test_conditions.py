import json

import pytest

import compound_tails as ct
from compound_tails.conditions import (
    THEOREMS,
    check_asmussen_delta,
    check_heavy_x,
    check_thm_cv,
    check_thm_cv2,
    check_thm_gumbel,
    check_thm_gumbel2,
    classify,
)

YES, NO = "yes", "no"


def _bounded_unit():
    return ct.make_severity_bounded([(0.5, 0.5), (1.5, 0.5)])


BATTERY = {
    "weibull_0.3_exp": (lambda: ct.make_discretized_weibull(0.3), lambda: ct.make_severity_exponential(1.0), "heavy_n"),
    "weibull_0.55_exp": (lambda: ct.make_discretized_weibull(0.55), lambda: ct.make_severity_exponential(1.0), "foss_window"),
    "geometric_pareto": (lambda: ct.make_geometric_count(0.5), lambda: ct.make_severity_pareto(2.5, 1.0), "heavy_x"),
    "pareto_bounded": (lambda: ct.make_pareto_count(1.5, 1.0), _bounded_unit, "heavy_n"),
    "pareto_pareto": (lambda: ct.make_pareto_count(1.5, 1.0), lambda: ct.make_severity_pareto(2.5, 1.0), "heavy_n"),
    "pareto_infinite_mean": (lambda: ct.make_pareto_count(0.8, 1.0), lambda: ct.make_severity_exponential(1.0), "heavy_n"),
    "weibull_0.25_exp": (lambda: ct.make_discretized_weibull(0.25), lambda: ct.make_severity_exponential(1.0), "heavy_n"),
    "weibull_0.45_exp": (lambda: ct.make_discretized_weibull(0.45), lambda: ct.make_severity_exponential(1.0), "heavy_n"),
}


@pytest.fixture(scope="module")
def reports():
    return {name: classify(c(), s()) for name, (c, s, _) in BATTERY.items()}


class TestThmCv:
    def test_pareto_bounded_yes(self, pareto15):
        assert check_thm_cv(pareto15, _bounded_unit()).holds == YES

    def test_weibull_fails_consistent_variation(self, weibull, exp1):
        assert check_thm_cv(weibull[0.5], exp1).holds == NO

    def test_severity_too_heavy(self, pareto15):
        assert check_thm_cv(pareto15, ct.make_severity_pareto(1.2, 1.0)).holds == NO


class TestThmCv2:
    def test_finite_mean_branch(self, pareto15, pareto_sev):
        assert check_thm_cv2(pareto15, pareto_sev).holds == YES

    def test_karamata_shortcut(self, exp1):
        v = check_thm_cv2(ct.make_pareto_count(0.8, 1.0), exp1)
        assert v.holds == YES
        assert any("Karamata" in n for n in v.notes)

    def test_weibull_no(self, weibull, exp1):
        assert check_thm_cv2(weibull[0.5], exp1).holds == NO

    def test_q_must_be_below_r(self, pareto15, exp1):
        with pytest.raises(ct.DomainError):
            check_thm_cv2(pareto15, exp1, r=2.0, q=2.0)


class TestGumbel:
    @pytest.mark.parametrize("beta,expected", [(0.25, YES), (0.4, NO)])
    def test_aux_exponent_against_two_thirds(self, weibull, exp1, beta, expected):
        assert check_thm_gumbel(weibull[beta], exp1).holds == expected

    def test_pareto_not_gumbel(self, pareto15, exp1):
        assert check_thm_gumbel(pareto15, exp1).holds == NO

    @pytest.mark.parametrize("beta,expected", [(0.3, YES), (0.55, NO)])
    def test_second_theorem_order(self, weibull, exp1, beta, expected):
        v = check_thm_gumbel2(weibull[beta], exp1)
        assert v.holds == expected
        assert "independence_required: true" in v.notes

    def test_second_theorem_needs_mgf(self, weibull, pareto_sev):
        assert check_thm_gumbel2(weibull[0.3], pareto_sev).holds == NO


class TestAsmussen:
    def test_viable(self, weibull):
        v = check_asmussen_delta(weibull[0.25])
        assert v.holds == YES
        assert dict(v.diagnostics)["aux_lower_order"].value == pytest.approx(0.75, abs=1e-6)

    def test_excluded_while_theorem_applies(self, weibull, exp1):
        assert check_asmussen_delta(weibull[0.45]).holds == NO
        assert check_thm_gumbel2(weibull[0.45], exp1).holds == YES

    def test_not_applicable_outside_gumbel(self, pareto15):
        v = check_asmussen_delta(pareto15)
        assert v.holds == NO
        assert any("not applicable" in n for n in v.notes)


class TestHeavyX:
    def test_light_count_heavy_claims(self, geometric_half, pareto_sev):
        assert check_heavy_x(geometric_half, pareto_sev).holds == YES

    def test_light_claims(self, geometric_half, exp1):
        assert check_heavy_x(geometric_half, exp1).holds == NO


class TestClassify:
    @pytest.mark.parametrize("name", list(BATTERY))
    def test_battery(self, reports, name):
        assert reports[name].predicted == BATTERY[name][2]

    @pytest.mark.parametrize("name", list(BATTERY))
    def test_heavy_n_requires_a_theorem(self, reports, name):
        r = reports[name]
        if r.predicted == "heavy_n":
            assert any(r.verdicts[t].holds == YES for t in THEOREMS)
        else:
            assert all(r.verdicts[t].holds != YES for t in THEOREMS)

    @pytest.mark.parametrize("name", list(BATTERY))
    def test_gumbel_implies_gumbel2_order(self, reports, name):
        # a(x)/x^(2/3) diverging forces a lower order of at least 2/3 > 1/2
        r = reports[name]
        if r.verdicts["thm_gumbel"].holds == YES:
            order = dict(r.verdicts["thm_gumbel2"].diagnostics)["aux_lower_order"]
            assert order.value > 0.5

    def test_foss_window_only_for_weibull_exponential(self, reports):
        for name, r in reports.items():
            if r.predicted == "foss_window":
                assert name.startswith("weibull") and name.endswith("exp")

    def test_json_is_stable(self, reports):
        text = reports["weibull_0.3_exp"].to_json()
        again = classify(ct.make_discretized_weibull(0.3), ct.make_severity_exponential(1.0)).to_json()
        assert text == again
        data = json.loads(text)
        assert set(data) == {"verdicts", "predicted", "notes"}
        assert set(data["verdicts"]) == {"thm_cv", "thm_cv2", "thm_gumbel", "thm_gumbel2", "asmussen_delta", "heavy_x"}

    def test_diagnostic_rows(self, reports):
        rows = list(reports["pareto_bounded"].diagnostics_rows())
        assert rows and all(len(row) == 5 for row in rows)

    @pytest.mark.parametrize("factor", [0.5, 2.0])
    def test_verdicts_invariant_under_severity_scale(self, reports, factor):
        for name, (c, s, _) in BATTERY.items():
            sev = s()
            scaled = sev.scaled(factor)
            again = classify(c(), scaled)
            assert {k: v.holds for k, v in again.verdicts.items()} == \
                   {k: v.holds for k, v in reports[name].verdicts.items()}, name
