from __future__ import annotations

import itertools
import math

import numpy as np

from schoolchoice import census as cz
from schoolchoice.fixtures import embed, five_vs_six, lemma1_gadget, lemma2_gadget, thm2_gadget
from schoolchoice.generators import UniformModelSpec, generate_uniform, uniform_preferences
from schoolchoice.model import Market, School, Student


def _counts(first, second, n):
    fc = np.bincount(first, minlength=n)
    sc = np.bincount(second, minlength=n)
    return fc, sc


def brute_thm2(first, second, n):
    """All (z, y, x) with z:[a,b], y:[a,c], x:[b,d] and a,b,c,d untouched by others."""
    fc, sc = _counts(first, second, n)
    out = []
    m = len(first)
    for z, y, x in itertools.permutations(range(m), 3):
        a, b = first[z], second[z]
        if first[y] != a or first[x] != b:
            continue
        c, d = second[y], second[x]
        if len({a, b, c, d}) != 4:
            continue
        ok = fc[a] == 2 and sc[a] == 0 and fc[b] == 1 and sc[b] == 1
        ok &= fc[c] == 0 and sc[c] == 1 and fc[d] == 0 and sc[d] == 1
        if ok:
            out.append((z, y, x))
    return sorted(out)


def brute_lemma(first, second, n, pattern):
    fc, sc = _counts(first, second, n)
    m = len(first)
    out = []
    for z, y, x in itertools.permutations(range(m), 3):
        a = first[z]
        if first[y] != a or first[x] != a or fc[a] != 3 or sc[a] != 0:
            continue
        b, c, d = second[z], second[y], second[x]
        hub = lambda s: fc[s] == 1 and sc[s] == 1  # noqa: E731
        leaf = lambda s: fc[s] == 0 and sc[s] == 1  # noqa: E731
        if pattern == "lemma2":
            if not (hub(b) and leaf(c) and leaf(d) and y < x):
                continue
            w = int(np.nonzero(first == b)[0][0])
            if leaf(second[w]):
                out.append((z, y, x, w))
        else:
            if not (hub(b) and hub(c) and leaf(d) and z < y):
                continue
            w = int(np.nonzero(first == b)[0][0])
            v = int(np.nonzero(first == c)[0][0])
            if leaf(second[w]) and leaf(second[v]):
                out.append((z, y, x, w, v))
    return sorted(out)


def test_scanners_match_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(300):
        n = int(rng.integers(6, 40))
        prefs = uniform_preferences(n, 2, rng)
        first, second = prefs[:, 0], prefs[:, 1]
        got = sorted(tuple(r[:3]) for r in cz.scan_thm2(first, second, n).tolist())
        assert got == brute_thm2(first, second, n)
        got2 = sorted(tuple(r[:4]) for r in cz.scan_lemma(first, second, n, "lemma2").tolist())
        assert got2 == brute_lemma(first, second, n, "lemma2")
        got1 = sorted(tuple(r[:5]) for r in cz.scan_lemma(first, second, n, "lemma1").tolist())
        assert got1 == brute_lemma(first, second, n, "lemma1")


def test_scanners_match_brute_force_on_clustered_markets():
    # few schools make patterns (and near misses) frequent
    rng = np.random.default_rng(1)
    found = 0
    for trial in range(400):
        n_students, n_schools = int(rng.integers(3, 9)), int(rng.integers(4, 9))
        prefs = np.array([rng.choice(n_schools, 2, replace=False) for _ in range(n_students)])
        first, second = prefs[:, 0], prefs[:, 1]
        want = brute_thm2(first, second, n_schools)
        found += len(want)
        assert sorted(tuple(r[:3]) for r in cz.scan_thm2(first, second, n_schools).tolist()) == want
        for pattern, width in (("lemma2", 4), ("lemma1", 5)):
            got = sorted(tuple(r[:width]) for r in cz.scan_lemma(first, second, n_schools, pattern).tolist())
            assert got == brute_lemma(first, second, n_schools, pattern)
    assert found > 0


def test_planted_gadgets():
    background = generate_uniform(UniformModelSpec(30, seed=2))
    joint = embed(thm2_gadget().market, background)
    matches = cz.census_thm2(joint)
    planted = [mt for mt in matches if mt.roles["z"] == "g0_z"]
    assert len(planted) == 1
    assert planted[0].roles == {"z": "g0_z", "y": "g0_y", "x": "g0_x"}
    assert planted[0].schools == {"a": "g0_a", "b": "g0_b", "c": "g0_c", "d": "g0_d"}


def test_five_vs_six_is_a_lemma1_pattern():
    (match,) = cz.census_lemma_gadgets(five_vs_six().market, "lemma1")
    assert [match.roles[r] for r in "zyxwv"] == ["i1", "i2", "i3", "i4", "i5"]
    assert cz.census_lemma_gadgets(lemma1_gadget().market, "lemma1")
    assert len(cz.census_lemma_gadgets(lemma2_gadget().market, "lemma2")) == 1
    assert cz.census(lemma2_gadget().market, "thm2") == []


def test_shared_lists_give_no_match():
    schools = tuple(School(f"s{j}") for j in range(1, 6))
    students = tuple(Student(f"i{j}", (("s1", 2), ("s2", 1))) for j in range(5))
    m = Market(schools, students, 2)
    for pattern in cz.PATTERNS:
        assert cz.census(m, pattern) == []


def test_csv_output():
    text = cz.matches_to_csv(cz.census_thm2(thm2_gadget().market))
    lines = text.splitlines()
    assert lines[0] == "pattern,z,y,x,w,v,a,b,c,d,e,f"
    assert lines[1] == "thm2,z,y,x,,,a,b,c,d,,"


def test_probability_formulas():
    from fractions import Fraction

    f6 = cz.finite_n_gadget_probability(6, exact=True)
    q = Fraction(5, 6)
    assert f6 == (1 - q**5) * Fraction(4, 5) * (1 - q**4) * Fraction(3, 5) * Fraction(1, 15) ** 3
    assert math.isclose(cz.finite_n_gadget_probability(6), float(f6), rel_tol=1e-12)
    limit = cz.gadget_probability_limit()
    assert math.isclose(limit, (1 - math.exp(-1)) ** 2 * math.exp(-8))
    assert abs(limit - 1.3403e-4) < 1e-4 * limit
    assert abs(cz.finite_n_gadget_probability(10**5) - limit) < abs(cz.finite_n_gadget_probability(10**3) - limit)
    assert math.isclose(cz.thm2_pattern_probability(50), float(cz.thm2_pattern_probability(50, exact=True)), rel_tol=1e-12)
    assert math.isclose(cz.thm2_pattern_probability(10**6), math.exp(-8), rel_tol=1e-4)


def test_exact_pattern_probability_by_enumeration():
    # n = 6, z lists (0, 1): pick the y and x lists, then every other student
    # must avoid the four pattern schools
    from fractions import Fraction

    n = 6
    lists = [(a, b) for a in range(n) for b in range(n) if a != b]
    hits = 0
    for y_list in lists:
        for x_list in lists:
            if y_list[0] != 0 or x_list[0] != 1:
                continue
            used = {0, 1, y_list[1], x_list[1]}
            if len(used) != 4:
                continue
            rest = [ls for ls in lists if not set(ls) & used]
            hits += len(rest) ** (n - 3)
    ways = (n - 1) * (n - 2)  # which students play y and x
    assert Fraction(ways * hits, len(lists) ** (n - 1)) == cz.thm2_pattern_probability(n, exact=True)


def test_small_n_frequency_matches_exact_formula():
    n, markets = 6, 20000
    rng = np.random.default_rng(11)
    counts = []
    for _ in range(markets):
        prefs = uniform_preferences(n, 2, rng)
        counts.append(len(cz.scan_thm2(prefs[:, 0], prefs[:, 1], n)) / n)
    mean = float(np.mean(counts))
    se = float(np.std(counts, ddof=1) / math.sqrt(markets))
    assert abs(mean - cz.thm2_pattern_probability(n)) <= 3 * se
