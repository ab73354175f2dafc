"""Domain types shared by the mechanisms, evaluators and solvers.

Everything here is immutable after construction. Validation is a pure
function returning a list of human readable violations; constructors never
raise on semantically invalid markets so that broken inputs can still be
loaded, inspected and reported on.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, Union

Number = Union[int, float, Fraction]
RankOrderList = tuple  # ordered tuple of distinct school ids

MTB = "MTB"
STB = "STB"
TIEBREAK_MODES = (MTB, STB)


class InputError(ValueError):
    """Malformed input: unknown ids, invalid parameters, unreadable files."""


class BudgetExceeded(RuntimeError):
    """An exact computation would visit more leaves than its configured budget."""

    def __init__(self, estimate, budget=None, what="exact evaluation"):
        self.estimate = estimate
        self.budget = budget
        limit = f" (budget {budget})" if budget is not None else ""
        super().__init__(f"too large for {what}: estimated {estimate} leaves{limit}")


def natural_key(ident: str):
    """Sort key that orders ``s2`` before ``s10``."""
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", ident)]


def parse_number(value: Any) -> Number:
    """Parse a utility or probability: JSON numbers as-is, ``"p/q"`` strings exactly."""
    if isinstance(value, bool):
        raise ValueError(f"not a number: {value!r}")
    if isinstance(value, (int, float, Fraction)):
        return value
    if isinstance(value, str):
        return Fraction(value.strip())
    raise ValueError(f"not a number: {value!r}")


def format_number(value: Number) -> Any:
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return value.numerator
        return f"{value.numerator}/{value.denominator}"
    return value


def is_exact(value: Any) -> bool:
    return isinstance(value, (int, Fraction)) and not isinstance(value, bool)


@dataclass(frozen=True)
class School:
    id: str
    capacity: int = 1


@dataclass(frozen=True)
class Student:
    """A student with a sparse, strictly decreasing list of positive utilities.

    Schools not listed are unacceptable (utility 0, same as being unmatched).
    """

    id: str
    utilities: tuple = ()
    sincere: bool = False
    population: str | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "utilities", tuple((str(s), u) for s, u in self.utilities)
        )

    @cached_property
    def utility_map(self) -> dict:
        return dict(self.utilities)

    def utility(self, school: str | None) -> Number:
        if school is None:
            return 0
        return self.utility_map.get(school, 0)

    @property
    def acceptable(self) -> tuple:
        return tuple(s for s, _ in self.utilities)


@dataclass(frozen=True)
class Market:
    schools: tuple
    students: tuple
    k: int
    private_sincerity: bool = False

    def __post_init__(self):
        object.__setattr__(self, "schools", tuple(self.schools))
        object.__setattr__(self, "students", tuple(self.students))

    @cached_property
    def school_index(self) -> dict:
        return {s.id: j for j, s in enumerate(self.schools)}

    @cached_property
    def student_index(self) -> dict:
        return {i.id: j for j, i in enumerate(self.students)}

    @cached_property
    def capacities(self) -> dict:
        return {s.id: s.capacity for s in self.schools}

    @property
    def school_ids(self) -> tuple:
        return tuple(s.id for s in self.schools)

    @property
    def student_ids(self) -> tuple:
        return tuple(i.id for i in self.students)

    def student(self, ident: str) -> Student:
        return self.students[self.student_index[ident]]

    def school(self, ident: str) -> School:
        return self.schools[self.school_index[ident]]

    def sophisticated(self) -> tuple:
        return tuple(i.id for i in self.students if not i.sincere)

    def with_students(self, students: Iterable[Student]) -> "Market":
        return Market(self.schools, tuple(students), self.k, self.private_sincerity)

    def with_flags(self, sincere: Mapping[str, bool]) -> "Market":
        """Copy of the market with some students' sincerity flags replaced."""
        return self.with_students(
            Student(i.id, i.utilities, sincere.get(i.id, i.sincere), i.population)
            for i in self.students
        )

    def scaled(self, factor: Number) -> "Market":
        return self.with_students(
            Student(i.id, tuple((s, u * factor) for s, u in i.utilities), i.sincere, i.population)
            for i in self.students
        )

    def submarket(self, students: Iterable[str], schools: Iterable[str] | None = None) -> "Market":
        """Restrict to the given students and the schools they (or ``schools``) list."""
        keep = [self.student(i) for i in students]
        if schools is None:
            wanted = {s for i in keep for s, _ in i.utilities}
        else:
            wanted = set(schools)
        return Market(
            tuple(s for s in self.schools if s.id in wanted),
            tuple(keep),
            self.k,
            self.private_sincerity,
        )


@dataclass(frozen=True)
class Matching:
    """Partial assignment of students to schools, stored as sorted pairs."""

    pairs: tuple = ()

    @classmethod
    def from_dict(cls, assignment: Mapping[str, str]) -> "Matching":
        return cls(tuple(sorted(assignment.items(), key=lambda p: natural_key(p[0]))))

    @cached_property
    def assignment(self) -> dict:
        return dict(self.pairs)

    def get(self, student: str) -> str | None:
        return self.assignment.get(student)

    def __getitem__(self, student: str) -> str | None:
        return self.assignment.get(student)

    def __len__(self) -> int:
        return len(self.pairs)

    def assigned_to(self, school: str) -> tuple:
        return tuple(i for i, s in self.pairs if s == school)


@dataclass(frozen=True)
class TieBreak:
    """Realized strict orderings resolving the single priority class.

    For MTB ``orders`` maps every school id to a permutation of the student
    ids; for STB it holds one shared permutation under the key ``"*"``.
    """

    mode: str
    orders: Mapping[str, tuple] = field(default_factory=dict)

    @classmethod
    def mtb(cls, orders: Mapping[str, Sequence[str]]) -> "TieBreak":
        return cls(MTB, {s: tuple(o) for s, o in orders.items()})

    @classmethod
    def stb(cls, order: Sequence[str]) -> "TieBreak":
        return cls(STB, {"*": tuple(order)})

    @classmethod
    def draw(cls, market: Market, mode: str, rng) -> "TieBreak":
        ids = market.student_ids
        if mode == STB:
            return cls.stb([ids[j] for j in rng.permutation(len(ids))])
        if mode != MTB:
            raise ValueError(f"unknown tie-breaking mode {mode!r}")
        return cls.mtb(
            {s.id: [ids[j] for j in rng.permutation(len(ids))] for s in market.schools}
        )

    def order(self, school: str) -> tuple:
        if self.mode == STB:
            return self.orders["*"]
        return self.orders[school]

    def rank(self, school: str) -> dict:
        """Position of every student in the school's order (0 = highest)."""
        key = "*" if self.mode == STB else school
        cache = self.__dict__.setdefault("_ranks", {})
        if key not in cache:
            cache[key] = {i: r for r, i in enumerate(self.order(school))}
        return cache[key]

    def violations(self, market: Market) -> list:
        ids = set(market.student_ids)
        keys = ["*"] if self.mode == STB else [s.id for s in market.schools]
        out = []
        for key in keys:
            order = self.orders.get(key)
            if order is None:
                out.append(f"tie-break has no order for {key}")
            elif len(order) != len(ids) or set(order) != ids:
                out.append(f"tie-break order for {key} is not a permutation of the students")
        return out


class StrategyProfile:
    """Per-student probability distributions over rank-order lists."""

    __slots__ = ("strategies",)

    def __init__(self, strategies: Mapping[str, Iterable[tuple]]):
        merged = {}
        for student, dist in strategies.items():
            acc: dict = {}
            for rol, prob in dist:
                rol = tuple(rol)
                acc[rol] = acc.get(rol, 0) + prob
            merged[student] = tuple((rol, p) for rol, p in acc.items() if p != 0)
        self.strategies = merged

    @classmethod
    def pure(cls, reports: Mapping[str, Sequence[str]]) -> "StrategyProfile":
        return cls({i: [(tuple(rol), 1)] for i, rol in reports.items()})

    @classmethod
    def truthful(cls, market: Market) -> "StrategyProfile":
        return cls.pure({i.id: truthful_rol(i, market.k) for i in market.students})

    def __getitem__(self, student: str) -> tuple:
        return self.strategies[student]

    def __contains__(self, student: str) -> bool:
        return student in self.strategies

    def __eq__(self, other) -> bool:
        if not isinstance(other, StrategyProfile):
            return NotImplemented
        return {i: dict(d) for i, d in self.strategies.items()} == {
            i: dict(d) for i, d in other.strategies.items()
        }

    def __repr__(self) -> str:
        return f"StrategyProfile({self.strategies!r})"

    def replace(self, student: str, dist: Iterable[tuple]) -> "StrategyProfile":
        new = dict(self.strategies)
        new[student] = tuple(dist)
        return StrategyProfile(new)

    def with_pure(self, student: str, rol: Sequence[str]) -> "StrategyProfile":
        return self.replace(student, [(tuple(rol), 1)])

    def is_pure(self) -> bool:
        return all(len(d) == 1 for d in self.strategies.values())

    def pure_reports(self) -> dict:
        if not self.is_pure():
            raise ValueError("profile is mixed")
        return {i: d[0][0] for i, d in self.strategies.items()}

    def is_exact(self) -> bool:
        return all(is_exact(p) for d in self.strategies.values() for _, p in d)

    def violations(self, market: Market) -> list:
        out = []
        for student in market.students:
            dist = self.strategies.get(student.id)
            if dist is None:
                out.append(f"{student.id}: no strategy")
                continue
            if any(p < 0 for _, p in dist):
                out.append(f"{student.id}: negative probability")
            total = sum(p for _, p in dist)
            if abs(total - 1) > 1e-12:
                out.append(f"{student.id}: probabilities sum to {total}")
            for rol, _ in dist:
                out.extend(f"{student.id}: {v}" for v in rol_violations(market, rol))
            if student.sincere:
                truth = truthful_rol(student, market.k)
                if [r for r, _ in dist] != [truth]:
                    out.append(f"{student.id}: sincere student must report {list(truth)}")
        for ident in self.strategies:
            if ident not in market.student_index:
                out.append(f"{ident}: unknown student")
        return out

    def to_dict(self) -> dict:
        return {
            i: [[list(rol), format_number(p)] for rol, p in d]
            for i, d in self.strategies.items()
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "StrategyProfile":
        return cls({i: [(tuple(r), parse_number(p)) for r, p in d] for i, d in data.items()})


@dataclass(frozen=True)
class Population:
    label: str
    weight: float
    p_sincere: float


@dataclass(frozen=True)
class PopulationModel:
    populations: tuple

    def __post_init__(self):
        object.__setattr__(self, "populations", tuple(self.populations))

    @staticmethod
    def threshold(u1: Number, u2: Number) -> Number:
        """Opponent truthful probability that leaves a gadget player indifferent."""
        if is_exact(u1) and is_exact(u2):
            return Fraction(3 * (u1 - u2)) / u1
        return 3.0 * (u1 - u2) / u1

    def violations(self) -> list:
        out = []
        total = sum(p.weight for p in self.populations)
        if abs(total - 1) > 1e-12:
            out.append(f"population weights sum to {total}")
        for p in self.populations:
            if not 0 < p.weight < 1 and len(self.populations) > 1:
                out.append(f"{p.label}: weight {p.weight} outside (0, 1)")
            if not 0 <= p.p_sincere <= 1:
                out.append(f"{p.label}: sincerity probability {p.p_sincere} outside [0, 1]")
        if len({p.label for p in self.populations}) != len(self.populations):
            out.append("duplicate population labels")
        return out


def truthful_rol(student: Student, k: int | None = None) -> tuple:
    """The student's utility order, truncated to ``k`` entries."""
    rol = tuple(s for s, _ in student.utilities)
    return rol if k is None else rol[:k]


def rol_violations(market: Market, rol: Sequence[str]) -> list:
    out = []
    if len(set(rol)) != len(rol):
        out.append("duplicate school in rank-order list")
    unknown = [s for s in rol if s not in market.school_index]
    if unknown:
        out.append(f"unknown schools {unknown} in rank-order list")
    if len(rol) > market.k:
        out.append(f"rank-order list longer than k={market.k}")
    return out


def validate_market(market: Market) -> list:
    """Every violated invariant, one entry each, naming the offending id."""
    out = []
    if not isinstance(market.k, int) or market.k < 0:
        out.append(f"market: k={market.k!r} is not a nonnegative integer")
    seen = set()
    for s in market.schools:
        if s.id in seen:
            out.append(f"school {s.id}: duplicate id")
        seen.add(s.id)
        if not isinstance(s.capacity, int) or s.capacity < 1:
            out.append(f"school {s.id}: capacity {s.capacity!r} is not a positive integer")
    seen = set()
    for i in market.students:
        if i.id in seen:
            out.append(f"student {i.id}: duplicate id")
        seen.add(i.id)
        schools = [s for s, _ in i.utilities]
        utils = [u for _, u in i.utilities]
        if len(set(schools)) != len(schools):
            out.append(f"student {i.id}: duplicate school in utility list")
        missing = [s for s in schools if s not in market.school_index]
        if missing:
            out.append(f"student {i.id}: unknown schools {missing}")
        if any(not isinstance(u, (int, float, Fraction)) or u <= 0 for u in utils):
            out.append(f"student {i.id}: utilities must be positive")
        if any(a <= b for a, b in zip(utils, utils[1:])):
            out.append(f"student {i.id}: utilities not strictly decreasing")
        if isinstance(market.k, int) and len(schools) > market.k:
            out.append(f"student {i.id}: utility list longer than k={market.k}")
    return out


def validate_matching(market: Market, reports: Mapping[str, Sequence[str]], matching: Matching) -> list:
    out = []
    load: dict = {}
    for student, school in matching.pairs:
        load[school] = load.get(school, 0) + 1
        if school not in tuple(reports.get(student, ())):
            out.append(f"{student} assigned to {school} which is not on their list")
    for school, count in load.items():
        if count > market.capacities.get(school, 0):
            out.append(f"{school} over capacity ({count})")
    if len({i for i, _ in matching.pairs}) != len(matching.pairs):
        out.append("student assigned twice")
    return out


# -- serialization ---------------------------------------------------------


def market_to_dict(market: Market) -> dict:
    students = []
    for i in sorted(market.students, key=lambda s: natural_key(s.id)):
        entry = {
            "id": i.id,
            "utils": [[s, format_number(u)] for s, u in i.utilities],
            "sincere": bool(i.sincere),
        }
        if i.population is not None:
            entry["population"] = i.population
        students.append(entry)
    data = {
        "k": market.k,
        "schools": [
            {"id": s.id, "capacity": s.capacity}
            for s in sorted(market.schools, key=lambda s: natural_key(s.id))
        ],
        "students": students,
    }
    if market.private_sincerity:
        data["private_sincerity"] = True
    return data


def market_from_dict(data: Mapping[str, Any]) -> Market:
    schools = tuple(School(str(s["id"]), s.get("capacity", 1)) for s in data["schools"])
    students = tuple(
        Student(
            str(i["id"]),
            tuple((str(s), parse_number(u)) for s, u in i.get("utils", ())),
            bool(i.get("sincere", False)),
            i.get("population"),
        )
        for i in data["students"]
    )
    k = data.get("k")
    if k is None:
        k = max((len(i.utilities) for i in students), default=0)
    return Market(schools, students, k, bool(data.get("private_sincerity", False)))


def dumps_market(market: Market) -> str:
    """Canonical JSON text: schools and students sorted by id, fixed layout."""
    data = market_to_dict(market)
    lines = ["{", f'  "k": {json.dumps(data["k"])},', '  "schools": [']
    lines += [
        "    " + json.dumps(s) + ("," if j < len(data["schools"]) - 1 else "")
        for j, s in enumerate(data["schools"])
    ]
    lines += ["  ],", '  "students": [']
    lines += [
        "    " + json.dumps(s) + ("," if j < len(data["students"]) - 1 else "")
        for j, s in enumerate(data["students"])
    ]
    tail = "  ]"
    if data.get("private_sincerity"):
        tail += ',\n  "private_sincerity": true'
    lines += [tail, "}"]
    return "\n".join(lines) + "\n"


def loads_market(text: str) -> Market:
    return market_from_dict(json.loads(text))


def load_market(path: str | Path) -> Market:
    return loads_market(Path(path).read_text())


def save_market(market: Market, path: str | Path) -> None:
    Path(path).write_text(dumps_market(market))
