"""Equilibria of the Boston preference-reporting game.

Sincere students are pinned to their truthful lists; sophisticated students
choose a distribution over rank-order lists. All routines take an evaluator
(:class:`~schoolchoice.evaluation.ExactEvaluator` or
:class:`~schoolchoice.evaluation.MonteCarloEvaluator`) mapping a market and a
profile to a :class:`~schoolchoice.evaluation.UtilityReport`.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from . import census as cz
from .evaluation import ExactEvaluator, UtilityReport
from .model import (
    BudgetExceeded,
    InputError,
    Market,
    PopulationModel,
    StrategyProfile,
    format_number,
    is_exact,
    natural_key,
    truthful_rol,
)


class ContractError(ValueError):
    """A solver was asked something outside its contract (e.g. a sincere player)."""


class NoSymmetricEquilibrium(RuntimeError):
    pass


class NoMixedEquilibrium(RuntimeError):
    pass


class HypothesisViolation(InputError):
    pass


# -- deviation spaces ------------------------------------------------------


@dataclass(frozen=True)
class DeviationSpace:
    """Candidate lists per student.

    By default a student ranks all of their acceptable schools (up to ``k`` of
    them) in any order. ``truncations`` adds every shorter non-empty list,
    ``all_schools`` draws from every school in the market, and ``overrides``
    pins explicit candidate lists for named students.
    """

    truncations: bool = False
    all_schools: bool = False
    overrides: Mapping[str, tuple] = field(default_factory=dict)

    def candidates(self, market: Market, student: str) -> tuple:
        if student in self.overrides:
            return tuple(sorted({tuple(r) for r in self.overrides[student]}, key=rol_key))
        stud = market.student(student)
        pool = market.school_ids if self.all_schools else stud.acceptable
        longest = min(market.k, len(pool))
        lengths = range(1, longest + 1) if self.truncations else [longest]
        out = {tuple(p) for n in lengths for p in itertools.permutations(pool, n)}
        out.add(truthful_rol(stud, market.k))
        return tuple(sorted(out, key=rol_key))

    @classmethod
    def pair(cls, students: Sequence[str], rol_a: Sequence[str], rol_b: Sequence[str]) -> "DeviationSpace":
        return cls(overrides={i: (tuple(rol_a), tuple(rol_b)) for i in students})


def rol_key(rol: Sequence[str]):
    return [natural_key(s) for s in rol]


# -- best responses and certificates ----------------------------------------


@dataclass(frozen=True)
class BestResponse:
    rol: tuple
    gain: object
    utility: object = None
    current: object = None
    std_err: float = 0.0

    def __iter__(self):
        yield self.rol
        yield self.gain


@dataclass
class EquilibriumCertificate:
    profile: StrategyProfile
    epsilon: object
    gains: dict
    best: dict
    std_err: dict
    method: str
    utilities: dict = field(default_factory=dict)

    @property
    def max_gain(self):
        return max(self.gains.values(), default=0)

    @property
    def certified(self) -> bool:
        if self.method == "exact":
            return all(g <= self.epsilon for g in self.gains.values())
        return all(g <= self.epsilon + 3 * self.std_err[i] for i, g in self.gains.items())

    def witness(self):
        """The student with the largest gain and their best deviation."""
        if not self.gains:
            return None
        top = self.max_gain
        i = next(j for j, g in self.gains.items() if g == top)
        return i, self.best[i]

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "epsilon": _jsonable(self.epsilon),
            "method": self.method,
            "profile": self.profile.to_dict(),
            "gains": {i: _jsonable(g) for i, g in self.gains.items()},
            "best_response": {i: list(r) for i, r in self.best.items()},
            "std_err": {i: float(s) for i, s in self.std_err.items()},
            "utilities": {i: _jsonable(u) for i, u in self.utilities.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _jsonable(x):
    if isinstance(x, Fraction):
        return format_number(x) if x.denominator != 1 else x.numerator
    if isinstance(x, int):
        return x
    return float(x)


def _require_sophisticated(market: Market, student: str) -> None:
    if student not in market.student_index:
        raise InputError(f"unknown student {student!r}")
    if market.student(student).sincere:
        raise ContractError(f"{student} is sincere and has no strategic choice")


def _deviation_utilities(market, profile, student, rols, evaluator) -> dict:
    out = {}
    for rol in rols:
        report = evaluator(market, profile.with_pure(student, rol))
        out[rol] = (report[student], report.std_err.get(student, 0))
    return out


def best_response(market: Market, profile: StrategyProfile, student: str, space=None, evaluator=None) -> BestResponse:
    """Best list for ``student`` with everyone else held fixed.

    Ties are broken toward the lexicographically smallest list. The gain is
    measured against the student's current (possibly mixed) strategy.
    """
    _require_sophisticated(market, student)
    space = space or DeviationSpace()
    evaluator = evaluator or ExactEvaluator()
    cands = space.candidates(market, student)
    values = _deviation_utilities(market, profile, student, cands, evaluator)
    current = evaluator(market, profile)
    best = max(cands, key=lambda r: values[r][0])
    top = values[best][0]
    best = min((r for r in cands if values[r][0] == top), key=rol_key)
    se = math.hypot(values[best][1], current.std_err.get(student, 0))
    return BestResponse(best, top - current[student], top, current[student], se)


def verify_equilibrium(
    market: Market,
    profile: StrategyProfile,
    epsilon=None,
    evaluator=None,
    space=None,
    players: Sequence[str] | None = None,
) -> EquilibriumCertificate:
    """Check that no sophisticated student gains more than ``epsilon`` by
    deviating, and that every list in a mixed student's support is within
    ``epsilon`` of their best response."""
    space = space or DeviationSpace()
    evaluator = evaluator or ExactEvaluator()
    exact = getattr(evaluator, "exact", True)
    if epsilon is None:
        epsilon = 0 if exact else 1e-6
    players = players if players is not None else market.sophisticated()
    gains, best, ses = {}, {}, {}
    for i in players:
        _require_sophisticated(market, i)
        support = [rol for rol, _ in profile[i]]
        cands = list(space.candidates(market, i))
        cands += [r for r in support if r not in cands]
        values = _deviation_utilities(market, profile, i, cands, evaluator)
        top = max(values[r][0] for r in cands)
        best[i] = min((r for r in cands if values[r][0] == top), key=rol_key)
        worst = min(support, key=lambda r: values[r][0])
        gains[i] = top - values[worst][0]
        ses[i] = math.hypot(values[best[i]][1], values[worst][1])
    utilities = evaluator(market, profile).utilities
    return EquilibriumCertificate(
        profile, epsilon, gains, best, ses, "exact" if exact else "mc", utilities
    )


def enumerate_pure_equilibria(
    market: Market,
    space=None,
    evaluator=None,
    budget: int = 10**6,
    workers: int = 1,
) -> list:
    """Every pure profile of the sophisticated students that is an exact
    equilibrium, in lexicographic order of the players' lists."""
    space = space or DeviationSpace()
    evaluator = evaluator or ExactEvaluator()
    players = market.sophisticated()
    fixed = {i.id: truthful_rol(i, market.k) for i in market.students if i.sincere}
    cands = [space.candidates(market, i) for i in players]
    size = math.prod(len(c) for c in cands)
    if size > budget:
        raise BudgetExceeded(size, budget, "pure equilibrium enumeration")

    def profile_of(combo):
        return StrategyProfile.pure({**fixed, **dict(zip(players, combo))})

    combos = list(itertools.product(*cands))
    evaluate = lambda combo: evaluator(market, profile_of(combo)).utilities  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            utils = dict(zip(combos, pool.map(evaluate, combos)))
    else:
        utils = {combo: evaluate(combo) for combo in combos}
    found = []
    for combo in combos:
        stable = True
        for pos, i in enumerate(players):
            here = utils[combo][i]
            for alt in cands[pos]:
                other = combo[:pos] + (alt,) + combo[pos + 1 :]
                if utils[other][i] > here:
                    stable = False
                    break
            if not stable:
                break
        if stable:
            found.append(profile_of(combo))
    return found


def best_response_dynamics(
    market: Market,
    profile: StrategyProfile,
    space=None,
    evaluator=None,
    epsilon=0,
    max_sweeps: int = 100,
) -> tuple:
    """Round-robin best responses over sophisticated students until a full
    sweep makes no improving switch. Returns ``(profile, sweeps)``; raises
    ``RuntimeError`` if ``max_sweeps`` is exhausted."""
    space = space or DeviationSpace()
    evaluator = evaluator or ExactEvaluator()
    for sweep in range(1, max_sweeps + 1):
        changed = False
        for i in market.sophisticated():
            br = best_response(market, profile, i, space, evaluator)
            if br.gain > epsilon:
                profile = profile.with_pure(i, br.rol)
                changed = True
        if not changed:
            return profile, sweep
    raise RuntimeError(f"best-response dynamics did not settle in {max_sweeps} sweeps")


# -- symmetric two-strategy mixing -----------------------------------------


@dataclass
class SymmetricEquilibrium:
    t: object
    profile: StrategyProfile
    report: UtilityReport
    residual: object
    kind: str
    certificate: EquilibriumCertificate | None = None


def _cohort_profile(fixed: StrategyProfile, cohort, rol_a, rol_b, t, focal=None, focal_rol=None):
    strategies = dict(fixed.strategies)
    for i in cohort:
        if i == focal:
            strategies[i] = ((focal_rol, 1),)
        elif t == 1:
            strategies[i] = ((rol_a, 1),)
        elif t == 0:
            strategies[i] = ((rol_b, 1),)
        else:
            strategies[i] = ((rol_a, t), (rol_b, 1 - t))
    return StrategyProfile(strategies)


def solve_symmetric_two_strategy(
    market: Market,
    cohort: Sequence[str],
    rol_a: Sequence[str],
    rol_b: Sequence[str],
    fixed: StrategyProfile | None = None,
    evaluator=None,
    tol: float | None = None,
    max_denominator: int = 10**4,
) -> SymmetricEquilibrium:
    """Probability ``t`` on ``rol_a`` at which a cohort member is indifferent
    between the two lists while every other cohort member mixes ``(t, 1-t)``.

    Bisection on the indifference ``U_A(t) - U_B(t)``; ``tol`` bounds the
    bracket width on ``t``. With an exact evaluator the result is snapped to
    the nearest small-denominator rational when that rational makes the
    indifference vanish exactly. Without a sign change an endpoint is
    returned if it certifies as a pure equilibrium over the two lists.
    """
    evaluator = evaluator or ExactEvaluator()
    exact = getattr(evaluator, "exact", True)
    tol = tol if tol is not None else (1e-10 if exact else 5e-3)
    rol_a, rol_b = tuple(rol_a), tuple(rol_b)
    cohort = [i for i in market.student_ids if i in set(cohort)]
    if not cohort:
        raise InputError("empty cohort")
    for i in cohort:
        _require_sophisticated(market, i)
    if fixed is None:
        fixed = StrategyProfile.truthful(market)
    focal = cohort[0]

    def delta(t):
        ua = evaluator(market, _cohort_profile(fixed, cohort, rol_a, rol_b, t, focal, rol_a))
        ub = evaluator(market, _cohort_profile(fixed, cohort, rol_a, rol_b, t, focal, rol_b))
        return ua[focal] - ub[focal]

    def finish(t, kind, residual, certificate=None):
        profile = _cohort_profile(fixed, cohort, rol_a, rol_b, t)
        if certificate is None:
            # cohort members are interchangeable, so the focal one stands for all
            eps = abs(residual) if exact and residual != 0 else None
            space = DeviationSpace.pair(cohort, rol_a, rol_b)
            certificate = verify_equilibrium(market, profile, eps, evaluator, space, [focal])
        return SymmetricEquilibrium(t, profile, evaluator(market, profile), residual, kind, certificate)

    lo, hi = 0.0, 1.0
    d_lo, d_hi = delta(lo), delta(hi)
    if d_lo == 0 or d_hi == 0 or (d_lo > 0) == (d_hi > 0):
        space = DeviationSpace.pair(cohort, rol_a, rol_b)
        for t, d in ((1, d_hi), (0, d_lo)):
            profile = _cohort_profile(fixed, cohort, rol_a, rol_b, t)
            cert = verify_equilibrium(market, profile, None, evaluator, space, cohort)
            if cert.certified:
                return finish(t, "endpoint", d, cert)
        raise NoSymmetricEquilibrium(
            f"no symmetric equilibrium in the strategy pair {list(rol_a)} / {list(rol_b)}"
        )
    while hi - lo > tol:
        mid = (lo + hi) / 2
        d_mid = delta(mid)
        if d_mid == 0:
            lo = hi = mid
            break
        if (d_mid > 0) == (d_lo > 0):
            lo, d_lo = mid, d_mid
        else:
            hi, d_hi = mid, d_mid
    t = (lo + hi) / 2
    if exact and fixed.is_exact():
        q = Fraction(t).limit_denominator(max_denominator)
        if 0 < q < 1 and delta(q) == 0:
            return finish(q, "interior", 0)
    return finish(t, "interior", delta(t))


# -- the two-player gadget --------------------------------------------------


def _swap(rol: tuple) -> tuple:
    if len(rol) != 2:
        raise ContractError(f"gadget players must rank exactly two schools, got {list(rol)}")
    return (rol[1], rol[0])


@dataclass
class GadgetGame:
    """Payoffs ``payoff[player][(own, other)]`` with ``"T"`` truthful and
    ``"S"`` swapped, everyone else held at the base profile."""

    players: tuple
    payoff: dict


def default_gadget_players(market: Market) -> tuple:
    """``(z, y)`` of the first lemma-1 shaped pattern in the market, else
    the first two students."""
    try:
        matches = cz.census_lemma_gadgets(market, "lemma1")
    except InputError:
        matches = []
    if matches:
        return matches[0].roles["z"], matches[0].roles["y"]
    return tuple(market.student_ids[:2])


def gadget_game(market: Market, players=None, evaluator=None, base: StrategyProfile | None = None) -> GadgetGame:
    evaluator = evaluator or ExactEvaluator()
    players = tuple(players or default_gadget_players(market))
    base = base or StrategyProfile.truthful(market)
    rols = {i: {"T": truthful_rol(market.student(i), market.k)} for i in players}
    for i in players:
        rols[i]["S"] = _swap(rols[i]["T"])
    z, y = players
    payoff = {z: {}, y: {}}
    for a, b in itertools.product("TS", repeat=2):
        prof = base.with_pure(z, rols[z][a]).with_pure(y, rols[y][b])
        report = evaluator(market, prof)
        payoff[z][(a, b)] = report[z]
        payoff[y][(b, a)] = report[y]
    return GadgetGame(players, payoff)


def indifference_probability(payoff: Mapping) -> object:
    """Opponent truthful probability that makes a player indifferent."""
    num = payoff[("S", "S")] - payoff[("T", "S")]
    den = (payoff[("T", "T")] - payoff[("T", "S")]) - (payoff[("S", "T")] - payoff[("S", "S")])
    if den == 0:
        return None
    return num / den


@dataclass
class GadgetMixed:
    players: tuple
    q: tuple  # truthful probability of each player
    utilities: tuple
    game: GadgetGame

    @property
    def t(self):
        return self.q[0]

    def profile(self, market: Market, base: StrategyProfile | None = None) -> StrategyProfile:
        base = base or StrategyProfile.truthful(market)
        for i, q in zip(self.players, self.q):
            rol = truthful_rol(market.student(i), market.k)
            base = base.replace(i, [(rol, q), (_swap(rol), 1 - q)])
        return base


def solve_gadget_mixed(market: Market, players=None, evaluator=None) -> GadgetMixed:
    """Interior mixed equilibrium of the induced 2x2 truthful/swap game."""
    game = gadget_game(market, players, evaluator)
    z, y = game.players
    q_y = indifference_probability(game.payoff[z])  # makes z indifferent
    q_z = indifference_probability(game.payoff[y])
    for q in (q_y, q_z):
        if q is None or not 0 < q < 1:
            raise NoMixedEquilibrium("the truthful/swap game has no interior mixed equilibrium")
    u_z = q_y * game.payoff[z][("T", "T")] + (1 - q_y) * game.payoff[z][("T", "S")]
    u_y = q_z * game.payoff[y][("T", "T")] + (1 - q_z) * game.payoff[y][("T", "S")]
    return GadgetMixed((z, y), (q_z, q_y), (u_z, u_y), game)


@dataclass
class BayesianGadgetSolution:
    players: tuple
    t_star: object
    q: tuple  # truthful probability of each sophisticated type
    facing: tuple  # total truthful probability each player presents
    residual: tuple  # truthful-minus-swap payoff of each sophisticated type
    become_sincere: tuple  # payoff of each player if pinned truthful
    half_u2: object

    def certified(self, tol: float = 1e-9) -> bool:
        return all(abs(r) <= tol for r in self.residual)


def solve_bayesian_gadget(
    market: Market,
    p_z,
    p_y,
    u1=None,
    u2=None,
    players=None,
    evaluator=None,
) -> BayesianGadgetSolution:
    """Mixed equilibrium of the gadget when each player is sincere with a
    privately known probability.

    A sophisticated player of type ``nu`` reports truthfully with
    probability ``(t* - p_nu) / (1 - p_nu)`` so that their total truthful
    probability is exactly ``t*``; indifference of each sophisticated type is
    then checked by evaluating the mixed profile.
    """
    evaluator = evaluator or ExactEvaluator()
    players = tuple(players or default_gadget_players(market))
    z, y = players
    utils = [u for _, u in market.student(z).utilities]
    u1 = utils[0] if u1 is None else u1
    u2 = utils[1] if u2 is None else u2
    two_thirds = Fraction(2, 3) * u1 if is_exact(u1) else 2 * u1 / 3
    if not u2 > two_thirds:
        raise HypothesisViolation("need u2 > 2/3 u1 for a mixed gadget equilibrium")
    t_star = PopulationModel.threshold(u1, u2)
    for name, p in (("p_z", p_z), ("p_y", p_y)):
        if not 0 <= p < 1:
            raise HypothesisViolation(f"{name}={p} must lie in [0, 1)")
        if p >= t_star:
            raise HypothesisViolation(f"{name}={p} is not below t*={t_star}")
    q = tuple((t_star - p) / (1 - p) for p in (p_z, p_y))
    facing = tuple(p + (1 - p) * qq for p, qq in zip((p_z, p_y), q))

    base = StrategyProfile.truthful(market)
    rol = {i: truthful_rol(market.student(i), market.k) for i in players}

    def mixed(i, t):
        return [(rol[i], t), (_swap(rol[i]), 1 - t)]

    residual = []
    for me, other, t_other in ((z, y, facing[1]), (y, z, facing[0])):
        prof = base.replace(other, mixed(other, t_other))
        truthful = evaluator(market, prof.with_pure(me, rol[me]))[me]
        swapped = evaluator(market, prof.with_pure(me, _swap(rol[me])))[me]
        residual.append(truthful - swapped)
    sincere = []
    for me, other, p_other in ((z, y, p_y), (y, z, p_z)):
        # facing a committed truthful player the opponent's sophisticated type swaps
        prof = base.with_pure(me, rol[me]).replace(other, mixed(other, p_other))
        sincere.append(evaluator(market, prof)[me])
    return BayesianGadgetSolution(players, t_star, q, facing, tuple(residual), tuple(sincere), Fraction(u2) / 2 if is_exact(u2) else u2 / 2)
