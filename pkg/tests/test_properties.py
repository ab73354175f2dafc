"""Randomized property checks on small markets."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest
from conftest import random_market

from schoolchoice.equilibrium import DeviationSpace, best_response
from schoolchoice.evaluation import (
    ExactEvaluator,
    exact_distribution,
    expected_utilities_exact,
    expected_utilities_mc,
)
from schoolchoice.mechanisms import check_stability, get_mechanism
from schoolchoice.model import MTB, STB, StrategyProfile, TieBreak, truthful_rol, validate_matching


def _random_reports(rng, market):
    """Random lists (possibly with unacceptable schools) of length <= k."""
    ids = market.school_ids
    out = {}
    for i in market.student_ids:
        length = int(rng.integers(0, min(market.k, len(ids)) + 1))
        out[i] = tuple(ids[j] for j in rng.choice(len(ids), size=length, replace=False))
    return out


def _random_mixed_profile(rng, market, max_support=2):
    profile = StrategyProfile.truthful(market)
    for student in market.students:
        acc = student.acceptable
        if student.sincere or len(acc) < 2:
            continue
        rols = list(itertools.permutations(acc))
        picks = rng.choice(len(rols), size=min(max_support, len(rols)), replace=False)
        weights = [Fraction(int(w), 1) for w in rng.integers(1, 5, size=len(picks))]
        total = sum(weights)
        profile = profile.replace(student.id, [(rols[j], w / total) for j, w in zip(picks, weights)])
    return profile


def test_feasibility_and_stability_fuzz():
    rng = np.random.default_rng(2024)
    for trial in range(10**4):
        market = random_market(
            rng, int(rng.integers(1, 8)), int(rng.integers(1, 5)), int(rng.integers(1, 4)), capacity_max=3
        )
        reports = _random_reports(rng, market)
        mode = (MTB, STB)[trial % 2]
        tiebreak = TieBreak.draw(market, mode, rng)
        for name in ("BM", "DA", "ABM"):
            matching, _ = get_mechanism(name)(market, reports, tiebreak)
            assert validate_matching(market, reports, matching) == [], (name, market, reports)
            if name == "DA":
                assert check_stability(market, reports, tiebreak, matching) == []


def _max_first_choices(market, reports):
    """Brute force: most students given their first listed school by any
    feasible matching."""
    caps = market.capacities
    students = [i for i in market.student_ids if reports[i]]
    best = 0
    options = [(None,) + tuple(reports[i]) for i in students]
    for choice in itertools.product(*options):
        load = {}
        for s in choice:
            if s is not None:
                load[s] = load.get(s, 0) + 1
        if all(load[s] <= caps[s] for s in load):
            best = max(best, sum(1 for i, s in zip(students, choice) if s == reports[i][0]))
    return best


def test_boston_is_first_choice_maximal():
    rng = np.random.default_rng(7)
    for _ in range(400):
        market = random_market(rng, int(rng.integers(1, 6)), int(rng.integers(1, 5)), 3)
        reports = _random_reports(rng, market)
        tiebreak = TieBreak.draw(market, MTB, rng)
        target = _max_first_choices(market, reports)
        for name in ("BM", "ABM"):
            matching, _ = get_mechanism(name)(market, reports, tiebreak)
            firsts = sum(1 for i, s in matching.pairs if reports[i] and s == reports[i][0])
            assert firsts == target


def test_tiebreak_representations_agree_exactly():
    rng = np.random.default_rng(11)
    for _ in range(60):
        market = random_market(rng, int(rng.integers(1, 6)), int(rng.integers(1, 5)), 2)
        profile = _random_mixed_profile(rng, market)
        for name in ("BM", "ABM"):
            lottery = dict(exact_distribution(market, profile, name, MTB, method="lottery").support)
            perms = dict(exact_distribution(market, profile, name, MTB, method="permutation").support)
            assert lottery == perms
            assert sum(lottery.values()) == 1
            grouped = expected_utilities_exact(market, profile, name, MTB, method="grouped")
            direct = expected_utilities_exact(market, profile, name, MTB, method="permutation")
            assert grouped.utilities == direct.utilities


@pytest.mark.parametrize("mode", [MTB, STB])
def test_deferred_acceptance_is_strategy_proof(mode):
    rng = np.random.default_rng(5 if mode == MTB else 6)
    ev = ExactEvaluator("DA", mode)
    space = DeviationSpace(truncations=True, all_schools=True)
    for _ in range(40):
        market = random_market(rng, int(rng.integers(1, 5)), int(rng.integers(1, 4)), 2)
        truthful = StrategyProfile.truthful(market)
        base = _random_mixed_profile(rng, market)
        for i in market.student_ids:
            # others play arbitrary (mixed) lists; i deviates from truthful
            profile = base.with_pure(i, truthful_rol(market.student(i), market.k))
            br = best_response(market, profile, i, space, ev)
            assert br.gain <= 0
        assert best_response(market, truthful, market.student_ids[0], space, ev).gain <= 0


@pytest.mark.parametrize("name,mode", [("BM", MTB), ("BM", STB), ("DA", MTB), ("ABM", MTB)])
def test_monte_carlo_agrees_with_exact(name, mode):
    rng = np.random.default_rng(17)
    for _ in range(6):
        market = random_market(rng, int(rng.integers(2, 6)), int(rng.integers(1, 4)), 2)
        profile = _random_mixed_profile(rng, market)
        exact = expected_utilities_exact(market, profile, name, mode)
        for method in ("individual", "auto"):
            mc = expected_utilities_mc(market, profile, name, mode, samples=20000, seed=3, method=method)
            for i in market.student_ids:
                se = mc.se(i)
                if se < 1e-9:
                    assert float(exact[i]) == pytest.approx(mc[i], abs=1e-9)
                else:
                    assert abs(float(exact[i]) - mc[i]) <= 3 * se + 1e-9


@pytest.mark.parametrize("name,mode", [("BM", MTB), ("DA", STB)])
def test_monte_carlo_is_independent_of_worker_count(name, mode):
    rng = np.random.default_rng(23)
    market = random_market(rng, 6, 3, 2)
    profile = _random_mixed_profile(rng, market)
    runs = [expected_utilities_mc(market, profile, name, mode, samples=5000, seed=9, workers=w) for w in (1, 2, 4)]
    for other in runs[1:]:
        assert other.utilities == runs[0].utilities
        assert other.std_err == runs[0].std_err
