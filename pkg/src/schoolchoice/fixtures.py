"""Named small markets with their reference strategy profiles.

``fixture(name, **params)`` returns a :class:`Fixture`; the same markets are
available as plain functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .model import InputError, Market, School, StrategyProfile, Student


@dataclass(frozen=True)
class Fixture:
    name: str
    market: Market
    profiles: dict = field(default_factory=dict)


def _schools(*ids, capacity=1):
    return tuple(School(s, capacity) for s in ids)


def _exactify(x):
    return Fraction(x) if isinstance(x, str) else x


def _gadget_utilities(u1, u2):
    u1, u2 = _exactify(u1), _exactify(u2)
    if not u1 > u2 > 0:
        raise InputError("need u1 > u2 > 0")
    return u1, u2


def example1(i1_sincere: bool = False) -> Fixture:
    """Two unit-capacity schools, three students valuing them 3 and 2."""
    a, b = ("s1", "s2"), ("s2", "s1")
    students = tuple(
        Student(f"i{j}", (("s1", 3), ("s2", 2)), sincere=(j == 1 and i1_sincere))
        for j in (1, 2, 3)
    )
    market = Market(_schools("s1", "s2"), students, 2)
    if i1_sincere:
        mix = [(a, Fraction(3, 5)), (b, Fraction(2, 5))]
        reference = {"i1": [(a, 1)], "i2": mix, "i3": mix}
    else:
        mix = [(a, Fraction(4, 5)), (b, Fraction(1, 5))]
        reference = {i: mix for i in ("i1", "i2", "i3")}
    return Fixture("example1", market, {"symmetric": StrategyProfile(reference)})


def five_vs_six(sophisticated=("i1", "i2"), u1=4, u2=3) -> Fixture:
    """Five students and six schools; i1 and i2 compete for s1 and each
    has an uncontested fallback only if the other does not take it."""
    u1, u2 = _gadget_utilities(u1, u2)
    prefs = [
        ("i1", "s1", "s2"),
        ("i2", "s1", "s3"),
        ("i3", "s1", "s4"),
        ("i4", "s2", "s5"),
        ("i5", "s3", "s6"),
    ]
    students = tuple(
        Student(i, ((f, u1), (s, u2)), sincere=i not in sophisticated) for i, f, s in prefs
    )
    market = Market(_schools(*(f"s{j}" for j in range(1, 7))), students, 2)
    truthful = StrategyProfile.truthful(market)
    q = Fraction(3, 4)
    profiles = {
        "truthful": truthful,
        "eq1": truthful.with_pure("i2", ("s3", "s1")),
        "eq2": truthful.with_pure("i1", ("s2", "s1")),
        "mixed": truthful.replace("i1", [(("s1", "s2"), q), (("s2", "s1"), 1 - q)]).replace(
            "i2", [(("s1", "s3"), q), (("s3", "s1"), 1 - q)]
        ),
    }
    return Fixture("five_vs_six", market, profiles)


def prop1() -> Fixture:
    """Two sincere students who only accept s1 and two sophisticated ones
    who also value s2."""
    students = (
        Student("i1", (("s1", 4),), sincere=True),
        Student("i2", (("s1", 4),), sincere=True),
        Student("i3", (("s1", 4), ("s2", 3))),
        Student("i4", (("s1", 4), ("s2", 3))),
    )
    market = Market(_schools("s1", "s2"), students, 2)
    truthful = StrategyProfile.truthful(market)
    bm = truthful.with_pure("i3", ("s2",)).with_pure("i4", ("s2",))
    return Fixture("prop1", market, {"truthful": truthful, "bm_equilibrium": bm})


def sincerity_bad(n: int) -> Fixture:
    """Schools of capacity 1, 1 and n-3; all students value them 9, 1 and
    1/(2(n-3)). Student i1 is sincere, everyone else sophisticated."""
    if n < 4:
        raise InputError("sincerity_bad needs n >= 4")
    small = Fraction(1, 2 * (n - 3))
    schools = (School("s1"), School("s2"), School("s3", n - 3))
    utils = (("s1", 9), ("s2", 1), ("s3", small))
    students = tuple(Student(f"i{j}", utils, sincere=(j == 1)) for j in range(1, n + 1))
    return Fixture("sincerity_bad", Market(schools, students, 3))


SINCERITY_BAD_LISTS = (("s1", "s3", "s2"), ("s2", "s3", "s1"))


def no_reduced_competition(n: int, eps=0.01, soph_fraction=Fraction(1, 12), seed: int = 0) -> Fixture:
    """Two unit-capacity schools; a quarter of the students prefer s1, the
    rest s2, with utilities 1 and 1 - eps. A ``soph_fraction`` share of
    students, placed uniformly at random, is sophisticated."""
    if n <= 0 or n % 12:
        raise InputError(f"n={n} must be a positive multiple of 12")
    eps = _exactify(eps)
    if not 0 < eps < 1:
        raise InputError("eps must lie in (0, 1) so that utilities are strictly decreasing")
    soph_fraction = _exactify(soph_fraction)
    count = soph_fraction * n
    if not 0 <= soph_fraction <= 1 or count != int(count):
        raise InputError(f"sophisticated fraction {soph_fraction} must give a whole number of students")
    rng = np.random.default_rng(seed)
    soph = set(rng.choice(n, size=int(count), replace=False).tolist())
    second = 1 - eps
    students = []
    for j in range(n):
        order = ("s1", "s2") if j < n // 4 else ("s2", "s1")
        students.append(
            Student(f"i{j + 1}", ((order[0], 1), (order[1], second)), sincere=j not in soph)
        )
    market = Market(_schools("s1", "s2"), tuple(students), 2)
    return Fixture("no_reduced_competition", market, {"truthful": StrategyProfile.truthful(market)})


def thm2_gadget(u1=3, u2=Fraction(5, 2), sincere=()) -> Fixture:
    """z:[a,b], y:[a,c], x:[b,d] on four otherwise untouched schools."""
    u1, u2 = _gadget_utilities(u1, u2)
    prefs = [("z", "a", "b"), ("y", "a", "c"), ("x", "b", "d")]
    students = tuple(Student(i, ((f, u1), (s, u2)), sincere=i in sincere) for i, f, s in prefs)
    market = Market(_schools("a", "b", "c", "d"), students, 2)
    return Fixture("thm2_gadget", market, {"truthful": StrategyProfile.truthful(market)})


def lemma2_gadget(u1=3, u2=Fraction(5, 2), sophisticated=()) -> Fixture:
    """z:[a,b], y:[a,c], x:[a,d], w:[b,e]; all sincere unless listed."""
    u1, u2 = _gadget_utilities(u1, u2)
    prefs = [("z", "a", "b"), ("y", "a", "c"), ("x", "a", "d"), ("w", "b", "e")]
    students = tuple(
        Student(i, ((f, u1), (s, u2)), sincere=i not in sophisticated) for i, f, s in prefs
    )
    market = Market(_schools("a", "b", "c", "d", "e"), students, 2)
    truthful = StrategyProfile.truthful(market)
    return Fixture("lemma2_gadget", market, {"truthful": truthful, "z_deviates": truthful.with_pure("z", ("b", "a"))})


def lemma1_gadget(u1=3, u2=Fraction(5, 2), sophisticated=("z", "y")) -> Fixture:
    """z:[a,b], y:[a,c], x:[a,d], w:[b,e], v:[c,f] (the five-vs-six shape)."""
    u1, u2 = _gadget_utilities(u1, u2)
    prefs = [("z", "a", "b"), ("y", "a", "c"), ("x", "a", "d"), ("w", "b", "e"), ("v", "c", "f")]
    students = tuple(
        Student(i, ((f, u1), (s, u2)), sincere=i not in sophisticated) for i, f, s in prefs
    )
    market = Market(_schools("a", "b", "c", "d", "e", "f"), students, 2)
    return Fixture("lemma1_gadget", market, {"truthful": StrategyProfile.truthful(market)})


FIXTURES = {
    "example1": example1,
    "five_vs_six": five_vs_six,
    "prop1": prop1,
    "sincerity_bad": sincerity_bad,
    "no_reduced_competition": no_reduced_competition,
    "thm2_gadget": thm2_gadget,
    "lemma2_gadget": lemma2_gadget,
    "lemma1_gadget": lemma1_gadget,
}


def fixture(name: str, **params) -> Fixture:
    try:
        build = FIXTURES[name]
    except KeyError:
        raise InputError(f"unknown fixture {name!r}; known: {', '.join(FIXTURES)}") from None
    return build(**params)


def embed(*markets: Market, prefix: str = "g") -> Market:
    """Disjoint union of markets, ids prefixed by ``{prefix}{index}_``."""
    schools, students = [], []
    for g, m in enumerate(markets):
        tag = f"{prefix}{g}_"
        schools += [School(tag + s.id, s.capacity) for s in m.schools]
        students += [
            Student(tag + i.id, tuple((tag + s, u) for s, u in i.utilities), i.sincere, i.population)
            for i in m.students
        ]
    return Market(tuple(schools), tuple(students), max((m.k for m in markets), default=0))
