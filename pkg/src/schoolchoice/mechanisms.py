"""Single-run Boston, Adaptive Boston and Deferred Acceptance.

All mechanisms take submitted rank-order lists (a mapping student id ->
tuple of school ids) plus the realized tie-break, and return the matching
together with a round-by-round trace. Rounds are 1-indexed.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .model import BudgetExceeded, InputError, Market, Matching, TieBreak

Reports = Mapping[str, Sequence[str]]
Admit = Callable[[str, int, list, int], Sequence[str]]


@dataclass(frozen=True)
class RoundRecord:
    round: int
    school: str
    applicants: tuple
    admitted: tuple
    remaining: int


@dataclass(frozen=True)
class RoundTrace:
    rounds: tuple = ()

    def __len__(self) -> int:
        return len(self.rounds)

    def __getitem__(self, r: int) -> tuple:
        return self.rounds[r]

    def records(self) -> Iterator[RoundRecord]:
        for rnd in self.rounds:
            yield from rnd

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(
                {
                    "round": rec.round,
                    "school": rec.school,
                    "applicants": list(rec.applicants),
                    "admitted": list(rec.admitted),
                    "remaining": rec.remaining,
                }
            )
            + "\n"
            for rec in self.records()
        )


def check_reports(market: Market, reports: Reports) -> None:
    for student, rol in reports.items():
        if student not in market.student_index:
            raise InputError(f"report for unknown student {student!r}")
        for school in rol:
            if school not in market.school_index:
                raise InputError(f"{student} lists unknown school {school!r}")
        if len(set(rol)) != len(rol):
            raise InputError(f"{student} lists a school twice")


def _boston(market: Market, reports: Reports, admit: Admit, adaptive: bool):
    caps = dict(market.capacities)
    pending = [i for i in market.student_ids if reports.get(i)]
    assignment: dict = {}
    rounds = []
    r = 0
    while pending:
        r += 1
        applications: dict = {}
        for i in pending:
            rol = reports[i]
            if adaptive:
                target = next((s for s in rol if caps[s] > 0), None)
            else:
                target = rol[r - 1] if r <= len(rol) else None
            if target is not None:
                applications.setdefault(target, []).append(i)
        if not applications:
            break
        records = []
        for school in sorted(applications, key=market.school_index.__getitem__):
            applicants = applications[school]
            seats = caps[school]
            if len(applicants) <= seats:
                admitted = list(applicants)
            elif seats <= 0:
                admitted = []
            else:
                admitted = list(admit(school, r, applicants, seats))
            caps[school] = seats - len(admitted)
            for i in admitted:
                assignment[i] = school
            records.append(RoundRecord(r, school, tuple(applicants), tuple(admitted), caps[school]))
        rounds.append(tuple(records))
        applied = {i for apps in applications.values() for i in apps}
        pending = [i for i in pending if i in applied and i not in assignment]
    return Matching.from_dict(assignment), RoundTrace(tuple(rounds))


def _priority_admit(tiebreak: TieBreak) -> Admit:
    def admit(school, _round, applicants, seats):
        rank = tiebreak.rank(school)
        return sorted(applicants, key=rank.__getitem__)[:seats]

    return admit


def run_bm(market: Market, reports: Reports, tiebreak: TieBreak):
    """Boston mechanism: round r sends every unadmitted student to their r-th
    listed school, which permanently admits the highest-priority applicants
    up to its remaining capacity."""
    check_reports(market, reports)
    return _boston(market, reports, _priority_admit(tiebreak), adaptive=False)


def run_adaptive_bm(market: Market, reports: Reports, tiebreak: TieBreak):
    """Boston mechanism that skips schools already full at the start of a round."""
    check_reports(market, reports)
    return _boston(market, reports, _priority_admit(tiebreak), adaptive=True)


def run_bm_lottery(market: Market, reports: Reports, rng, adaptive: bool = False):
    """Boston mechanism where each over-demanded school draws a uniformly random
    subset of its applicants every round instead of consulting a priority order."""
    check_reports(market, reports)
    rng = np.random.default_rng(rng)

    def admit(_school, _round, applicants, seats):
        picks = np.sort(rng.choice(len(applicants), size=seats, replace=False))
        return [applicants[j] for j in picks]

    return _boston(market, reports, admit, adaptive)


def enumerate_bm_lottery(
    market: Market, reports: Reports, adaptive: bool = False, budget: int | None = None
) -> Iterator[tuple]:
    """Every outcome of :func:`run_bm_lottery` with its exact probability.

    Walks the tree of per-round subset draws depth first by replaying the
    mechanism with a scripted chooser; yields ``(Matching, trace, weight)``
    where ``weight`` is a tuple of branching factors whose reciprocal product
    is the leaf probability.
    """
    check_reports(market, reports)
    prefix: list = []
    leaves = 0
    while True:
        cursor = 0
        branching: list = []

        def admit(_school, _round, applicants, seats):
            nonlocal cursor
            options = list(itertools.combinations(applicants, seats))
            if cursor < len(prefix):
                choice = prefix[cursor]
            else:
                choice = 0
                prefix.append(0)
            branching.append(len(options))
            cursor += 1
            return options[choice]

        matching, trace = _boston(market, reports, admit, adaptive)
        leaves += 1
        if budget is not None and leaves > budget:
            raise BudgetExceeded(leaves, budget)
        yield matching, trace, tuple(branching)
        # odometer step
        del prefix[len(branching):]
        while prefix and prefix[-1] + 1 >= branching[len(prefix) - 1]:
            prefix.pop()
        if not prefix:
            return
        prefix[-1] += 1


def run_da(market: Market, reports: Reports, tiebreak: TieBreak):
    """Student-proposing deferred acceptance with tentative admissions.

    Each round every student not yet exhausted applies to their favourite school
    that has not rejected her; held students re-apply. Stops after the first
    round without rejections.
    """
    check_reports(market, reports)
    caps = market.capacities
    pointer = {i: 0 for i in market.student_ids if reports.get(i)}
    rounds = []
    r = 0
    while True:
        r += 1
        applications: dict = {}
        for i, j in pointer.items():
            rol = reports[i]
            if j < len(rol):
                applications.setdefault(rol[j], []).append(i)
        records = []
        rejected = False
        held = {}
        for school in sorted(applications, key=market.school_index.__getitem__):
            applicants = applications[school]
            seats = max(caps[school], 0)
            if len(applicants) <= seats:
                keep = list(applicants)
            else:
                rank = tiebreak.rank(school)
                keep = sorted(applicants, key=rank.__getitem__)[:seats]
                kept = set(keep)
                for i in applicants:
                    if i not in kept:
                        pointer[i] += 1
                        rejected = True
            held[school] = keep
            records.append(RoundRecord(r, school, tuple(applicants), tuple(keep), seats - len(keep)))
        rounds.append(tuple(records))
        if not rejected:
            break
    assignment = {i: s for s, keep in held.items() for i in keep}
    return Matching.from_dict(assignment), RoundTrace(tuple(rounds))


def check_stability(
    market: Market, reports: Reports, tiebreak: TieBreak, matching: Matching
) -> list:
    """Blocking pairs ``(student, school)`` of ``matching`` under the reported
    preferences and the realized priorities."""
    caps = market.capacities
    holders: dict = {}
    for i, s in matching.pairs:
        holders.setdefault(s, []).append(i)
    blocking = []
    for student in market.student_ids:
        rol = tuple(reports.get(student, ()))
        current = matching.get(student)
        better = rol[: rol.index(current)] if current in rol else rol
        for school in better:
            taken = holders.get(school, [])
            if caps[school] <= 0:
                continue
            if len(taken) < caps[school]:
                blocking.append((student, school))
                continue
            rank = tiebreak.rank(school)
            if any(rank[student] < rank[j] for j in taken):
                blocking.append((student, school))
    return blocking


MECHANISMS = {
    "BM": run_bm,
    "DA": run_da,
    "ABM": run_adaptive_bm,
}


def get_mechanism(name: str):
    key = name.upper().replace("ADAPTIVEBM", "ABM").replace("ADAPTIVE", "ABM")
    try:
        return MECHANISMS[key]
    except KeyError:
        raise InputError(f"unknown mechanism {name!r}; expected one of {sorted(MECHANISMS)}") from None


def mechanism_name(name: str) -> str:
    fn = get_mechanism(name)
    return next(k for k, v in MECHANISMS.items() if v is fn)
