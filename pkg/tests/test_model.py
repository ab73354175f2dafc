from __future__ import annotations

from fractions import Fraction

import pytest

from schoolchoice.fixtures import example1, prop1, sincerity_bad
from schoolchoice.generators import UniformModelSpec, generate_uniform
from schoolchoice.model import (
    MTB,
    STB,
    InputError,
    Market,
    Matching,
    Population,
    PopulationModel,
    School,
    StrategyProfile,
    Student,
    TieBreak,
    dumps_market,
    format_number,
    loads_market,
    natural_key,
    parse_number,
    truthful_rol,
    validate_market,
    validate_matching,
)


def _one(utils, k=2, schools=("s1", "s2")):
    return Market(tuple(School(s) for s in schools), (Student("i1", utils),), k)


def test_minimal_market_is_valid():
    assert validate_market(_one((("s1", 1.0),), k=1, schools=("s1",))) == []


def test_duplicate_school_in_list():
    problems = validate_market(_one((("s1", 2), ("s1", 1))))
    assert len(problems) == 1 and "duplicate school in utility list" in problems[0]


def test_utilities_must_decrease():
    problems = validate_market(_one((("s1", 2), ("s2", 3))))
    assert len(problems) == 1 and "utilities not strictly decreasing" in problems[0]
    assert "i1" in problems[0]


def test_other_violations_name_ids():
    m = Market(
        (School("s1", 0), School("s1")),
        (Student("i1", (("s9", 1),)), Student("i1", (("s1", -1),))),
        1,
    )
    text = "\n".join(validate_market(m))
    assert "school s1: capacity 0" in text
    assert "school s1: duplicate id" in text
    assert "student i1: duplicate id" in text
    assert "unknown schools ['s9']" in text
    assert "utilities must be positive" in text


def test_list_longer_than_k():
    problems = validate_market(_one((("s1", 2), ("s2", 1)), k=1))
    assert any("longer than k=1" in p for p in problems)


def test_truthful_rol():
    assert truthful_rol(Student("i", (("a", 4), ("b", 3)))) == ("a", "b")
    assert truthful_rol(Student("i", ())) == ()
    m = sincerity_bad(12).market
    assert truthful_rol(m.student("i1"), 3) == ("s1", "s2", "s3")
    assert truthful_rol(Student("i", (("a", 4), ("b", 3))), 1) == ("a",)


def test_truthful_rol_ignores_scale():
    student = Student("i", (("a", 9), ("b", 1), ("c", Fraction(1, 18))))
    scaled = Student("i", tuple((s, u * 7) for s, u in student.utilities))
    assert truthful_rol(student) == truthful_rol(scaled)


def test_numbers_round_trip():
    assert parse_number("5/3") == Fraction(5, 3)
    assert parse_number(2.5) == 2.5
    assert format_number(Fraction(5, 3)) == "5/3"
    assert format_number(Fraction(4, 1)) == 4
    with pytest.raises(ValueError):
        parse_number(True)


def test_natural_key_orders_numbers():
    assert sorted(["s10", "s2", "s1"], key=natural_key) == ["s1", "s2", "s10"]


def test_market_file_round_trip():
    for market in (example1().market, prop1().market, sincerity_bad(12).market):
        text = dumps_market(market)
        assert dumps_market(loads_market(text)) == text
    text = dumps_market(sincerity_bad(12).market)
    assert '"1/18"' in text


def test_canonical_form_sorts_ids():
    m = Market(
        (School("s10"), School("s2")),
        (Student("i2", (("s2", 1),)), Student("i10", (("s10", 1),))),
        1,
    )
    text = dumps_market(m)
    assert text.index('"s2"') < text.index('"s10"')
    assert text.index('"i2"') < text.index('"i10"')


def test_generated_markets_validate():
    for seed in range(5):
        m = generate_uniform(UniformModelSpec(50, seed=seed, p=0.3))
        assert validate_market(m) == []


def test_profile_violations():
    m = prop1().market
    bad = StrategyProfile.truthful(m).with_pure("i1", ("s2",))
    assert any("sincere student must report" in v for v in bad.violations(m))
    mixed = StrategyProfile.truthful(m).replace("i3", [(("s1", "s2"), Fraction(1, 2)), (("s2",), Fraction(1, 3))])
    assert any("sum" in v for v in mixed.violations(m))
    assert StrategyProfile.truthful(m).violations(m) == []


def test_profile_dict_round_trip():
    m = example1().market
    prof = example1().profiles["symmetric"]
    again = StrategyProfile.from_dict(prof.to_dict())
    assert again == prof and again.is_exact()
    assert prof.violations(m) == []


def test_tiebreak_draw_and_rank():
    import numpy as np

    m = example1().market
    tb = TieBreak.draw(m, MTB, np.random.default_rng(0))
    assert tb.violations(m) == []
    shared = TieBreak.draw(m, STB, np.random.default_rng(0))
    assert shared.order("s1") == shared.order("s2")
    order = tb.order("s1")
    assert [tb.rank("s1")[i] for i in order] == [0, 1, 2]
    assert TieBreak.mtb({"s1": ("i1",)}).violations(m)


def test_validate_matching():
    m = example1().market
    reports = {"i1": ("s1",), "i2": ("s1", "s2"), "i3": ("s2",)}
    assert validate_matching(m, reports, Matching.from_dict({"i1": "s1", "i3": "s2"})) == []
    problems = validate_matching(m, reports, Matching.from_dict({"i1": "s1", "i2": "s1", "i3": "s1"}))
    assert any("over capacity" in p for p in problems)
    assert any("not on their list" in p for p in problems)


def test_population_threshold_and_violations():
    assert PopulationModel.threshold(4, 3) == Fraction(3, 4)
    assert PopulationModel.threshold(3, Fraction(5, 2)) == Fraction(1, 2)
    assert PopulationModel.threshold(3.0, 2.5) == pytest.approx(0.5)
    model = PopulationModel((Population("a", Fraction(1, 2), 0), Population("b", Fraction(1, 3), 1)))
    assert model.violations()
    with pytest.raises(InputError):
        generate_uniform(UniformModelSpec(10, sincerity="population", population=model))
