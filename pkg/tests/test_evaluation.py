from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest

from schoolchoice.evaluation import (
    ExactEvaluator,
    MonteCarloEvaluator,
    assignment_probabilities,
    exact_distribution,
    expected_utilities_exact,
    expected_utilities_mc,
    utility_gap,
)
from schoolchoice.fixtures import example1, five_vs_six, prop1, sincerity_bad, thm2_gadget
from schoolchoice.model import MTB, STB, BudgetExceeded, InputError, Market, School, StrategyProfile, Student

from conftest import random_market

U1, U2 = Fraction(3), Fraction(5, 2)


@pytest.mark.parametrize("method", ["lottery", "permutation", "grouped"])
def test_example1_truthful_bm(method):
    m = example1().market
    report = expected_utilities_exact(m, StrategyProfile.truthful(m), "BM", MTB, method=method)
    assert report.utilities == {i: Fraction(5, 3) for i in m.student_ids}
    assert report.exact and all(report.se(i) == 0 for i in m.student_ids)


def test_example1_distribution_marginals():
    m = example1().market
    dist = exact_distribution(m, StrategyProfile.truthful(m))
    assert dist.total() == 1
    marg = dist.marginals()
    assert all(marg[i]["s1"] == Fraction(1, 3) for i in m.student_ids)


def test_prop1_values():
    fx = prop1()
    m = fx.market
    bm = expected_utilities_exact(m, fx.profiles["bm_equilibrium"])
    da = expected_utilities_exact(m, fx.profiles["truthful"], "DA")
    assert [bm[i] for i in m.student_ids] == [2, 2, Fraction(3, 2), Fraction(3, 2)]
    assert [da[i] for i in m.student_ids] == [1, 1, Fraction(5, 2), Fraction(5, 2)]


def test_example1_mixed_with_sincere_i1():
    fx = example1(i1_sincere=True)
    report = expected_utilities_exact(fx.market, fx.profiles["symmetric"])
    assert (report["i1"], report["i2"], report["i3"]) == (Fraction(9, 5), Fraction(8, 5), Fraction(8, 5))


def test_thm2_gadget_truthful_da():
    m = thm2_gadget(U1, U2).market
    da = expected_utilities_exact(m, StrategyProfile.truthful(m), "DA")
    assert da["z"] == U1 / 2 + U2 / 4
    assert da["x"] == U1 / 2 + (U1 / 2 + U2 / 2) / 2


def test_empty_market():
    m = Market((School("s1"),), (), 1)
    assert len(expected_utilities_exact(m, StrategyProfile({}))) == 0
    assert len(expected_utilities_mc(m, StrategyProfile({}), samples=10)) == 0


def test_utility_gaps():
    m = thm2_gadget(U1, U2).market
    gaps = utility_gap(m, StrategyProfile.truthful(m))
    assert gaps["z"] == -U2 / 4 and gaps["x"] == (U1 - U2) / 4
    fx = prop1()
    gaps = utility_gap(fx.market, fx.profiles["bm_equilibrium"])
    assert [gaps[i] for i in fx.market.student_ids] == [1, 1, -1, -1]
    single = Market((School("s1"),), (Student("i1", (("s1", 1),)),), 1)
    assert utility_gap(single, StrategyProfile.truthful(single)) == {"i1": 0}


def test_conservation_in_example1():
    m = example1().market
    a, b = ("s1", "s2"), ("s2", "s1")
    for lists in itertools.product((a, b), repeat=3):
        prof = StrategyProfile.pure(dict(zip(m.student_ids, lists)))
        for mech in ("BM", "DA", "ABM"):
            assert sum(expected_utilities_exact(m, prof, mech).utilities.values()) == 5
    mixed = example1().profiles["symmetric"]
    assert sum(expected_utilities_exact(m, mixed).utilities.values()) == 5


def test_stb_equals_mtb_with_one_contested_school():
    m = five_vs_six().market
    reports = {"i1": ("s1",), "i2": ("s1",), "i3": ("s1",), "i4": ("s2",), "i5": ("s3",)}
    prof = StrategyProfile.pure(reports)
    assert exact_distribution(m, prof, "BM", MTB).support == exact_distribution(m, prof, "BM", STB).support


def test_routes_agree_on_random_markets():
    rng = np.random.default_rng(3)
    for _ in range(40):
        m = random_market(rng, int(rng.integers(1, 5)), int(rng.integers(1, 4)), 2)
        prof = StrategyProfile.truthful(m)
        for mech in ("BM", "ABM"):
            values = {
                method: expected_utilities_exact(m, prof, mech, MTB, method=method).utilities
                for method in ("lottery", "permutation", "grouped")
            }
            assert values["lottery"] == values["permutation"] == values["grouped"]
        assert exact_distribution(m, prof, "DA", STB).total() == 1


def test_grouped_probabilities_match_distribution():
    fx = example1()
    probs = assignment_probabilities(fx.market, fx.profiles["symmetric"])
    marg = exact_distribution(fx.market, fx.profiles["symmetric"]).marginals()
    for i in fx.market.student_ids:
        for s in fx.market.school_ids:
            assert probs[i].get(s, 0) == marg[i].get(s, 0)


def test_float_probabilities_give_float_results():
    m = example1().market
    prof = StrategyProfile({i: [(("s1", "s2"), 0.8), (("s2", "s1"), 0.2)] for i in m.student_ids})
    report = expected_utilities_exact(m, prof)
    assert isinstance(report["i1"], float)
    assert report["i1"] == pytest.approx(5 / 3)


def test_budget_error_names_leaf_count():
    m = sincerity_bad(12).market
    prof = StrategyProfile.truthful(m)
    with pytest.raises(BudgetExceeded, match="too large for exact evaluation: estimated"):
        expected_utilities_exact(m, prof, "DA", MTB, budget=100)


def test_large_supports_rejected():
    import itertools as it

    schools = tuple(School(f"s{j}") for j in range(6))
    m = Market(schools, (Student("i1", tuple((s.id, 10 - j) for j, s in enumerate(schools))),), 6)
    rols = list(it.permutations(m.school_ids))[:65]
    prof = StrategyProfile({"i1": [(r, Fraction(1, 65)) for r in rols]})
    with pytest.raises(InputError, match="64"):
        expected_utilities_exact(m, prof)


def test_mc_example1_close_to_exact():
    m = example1().market
    # per-student sampling; pooled sampling would average the cohort away
    report = expected_utilities_mc(m, StrategyProfile.truthful(m), samples=10**6, seed=1, method="individual")
    for i in m.student_ids:
        assert abs(report[i] - 5 / 3) <= 3 * report.se(i)


@pytest.mark.parametrize("method", ["grouped", "individual"])
def test_mc_independent_of_workers(method):
    fx = example1()
    one = expected_utilities_mc(fx.market, fx.profiles["symmetric"], samples=150_000, seed=5, workers=1, method=method)
    four = expected_utilities_mc(fx.market, fx.profiles["symmetric"], samples=150_000, seed=5, workers=4, method=method)
    assert one.utilities == four.utilities and one.std_err == four.std_err


def test_mc_groups_average_members():
    fx = prop1()
    report = expected_utilities_mc(
        fx.market, fx.profiles["truthful"], "DA", MTB, 20_000, 2, groups={"soph": ["i3", "i4"]}
    )
    mean, se = report.groups["soph"]
    assert mean == pytest.approx((report["i3"] + report["i4"]) / 2)
    assert abs(mean - 2.5) <= 3 * se


def test_mc_rejects_bad_input():
    m = example1().market
    with pytest.raises(InputError):
        expected_utilities_mc(m, StrategyProfile.truthful(m), samples=0)
    with pytest.raises(InputError):
        expected_utilities_mc(m, StrategyProfile.truthful(m), "DA", method="grouped")


def test_report_csv():
    m = example1().market
    text = ExactEvaluator()(m, StrategyProfile.truthful(m)).to_csv()
    assert text.splitlines()[0] == "student,expected_utility,std_err,samples"
    assert text.splitlines()[1] == "i1,5/3,0,0"
    mc = MonteCarloEvaluator(samples=100)(m, StrategyProfile.truthful(m)).to_csv()
    assert mc.splitlines()[1].endswith(",100")
