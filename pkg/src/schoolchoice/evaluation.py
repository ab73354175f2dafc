"""Exact and Monte Carlo expected utilities under mixed reporting profiles.

Exact results are rational whenever the utilities and mixing probabilities
are; a float anywhere in the input turns the affected sums into floats.

Two exact routes exist. The individual route enumerates every pure report
realization and every relevant tie-break (or, for the Boston mechanism under
multiple tie-breaking, every per-round uniform admission subset) and returns
a full :class:`OutcomeDistribution`. The grouped route, used for expected
utilities under the Boston mechanisms with multiple tie-breaking, treats
students who submit the same list as exchangeable: the state is the number
of unresolved students per list plus the remaining capacities, and an
over-demanded school's admissions split across lists hypergeometrically.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .mechanisms import enumerate_bm_lottery, get_mechanism, mechanism_name
from .model import (
    MTB,
    STB,
    BudgetExceeded,
    InputError,
    Market,
    Matching,
    StrategyProfile,
    TieBreak,
    format_number,
    is_exact,
)

DEFAULT_BUDGET = 10**7
MAX_SUPPORT = 64
MC_BLOCK = 1024
GROUPED_BLOCK = 65536


# -- result containers -----------------------------------------------------


@dataclass(frozen=True)
class OutcomeDistribution:
    """Probability mass over matchings (duplicates merged, zeros dropped)."""

    support: tuple = ()

    def total(self):
        return sum((p for _, p in self.support), 0)

    def probability(self, matching: Matching):
        return next((p for m, p in self.support if m == matching), 0)

    def marginals(self) -> dict:
        """``{student: {school: probability}}`` over assigned students."""
        out: dict = defaultdict(lambda: defaultdict(int))
        for matching, p in self.support:
            for i, s in matching.pairs:
                out[i][s] += p
        return {i: dict(d) for i, d in out.items()}

    def expected_utilities(self, market: Market) -> dict:
        utils = {i: 0 for i in market.student_ids}
        for matching, p in self.support:
            for i, s in matching.pairs:
                utils[i] += p * market.student(i).utility(s)
        return utils


@dataclass
class UtilityReport:
    """Per-student expected utilities with standard errors.

    ``groups`` maps a caller-chosen label to ``(mean, std_err)`` of the
    average utility over a set of students, estimated per sample so that its
    standard error accounts for correlation between members.
    """

    utilities: dict
    std_err: dict
    samples: int = 0
    method: str = "exact"
    groups: dict = field(default_factory=dict)

    @property
    def exact(self) -> bool:
        return self.method == "exact"

    def __getitem__(self, student: str):
        return self.utilities[student]

    def __len__(self) -> int:
        return len(self.utilities)

    def se(self, student: str) -> float:
        return self.std_err[student]

    def to_csv(self) -> str:
        lines = ["student,expected_utility,std_err,samples"]
        for i, u in self.utilities.items():
            value = format_number(u) if isinstance(u, Fraction) else repr(u)
            lines.append(f"{i},{value},{self.std_err[i]!r},{self.samples}")
        return "\n".join(lines) + "\n"


# -- helpers ---------------------------------------------------------------


def _strategies(market: Market, profile: StrategyProfile) -> list:
    out = []
    for i in market.student_ids:
        if i not in profile:
            raise InputError(f"profile has no strategy for {i}")
        dist = profile[i]
        total = sum(p for _, p in dist)
        if any(p < 0 for _, p in dist) or abs(total - 1) > 1e-12:
            raise InputError(f"{i}: strategy is not a probability distribution")
        out.append(dist)
    return out


def _tiebreak_count(market: Market, reports: Mapping, mode: str) -> int:
    if mode == STB:
        return math.factorial(sum(1 for i in market.student_ids if reports.get(i)))
    count = 1
    for s in market.school_ids:
        count *= math.factorial(sum(1 for i in market.student_ids if s in reports.get(i, ())))
    return count


def _enumerate_tiebreaks(market: Market, reports: Mapping, mode: str):
    """All tie-breaks that can matter, each standing for an equal share of the
    uniform draw: only the relative order of students who list a school
    (any school, for STB) is ever consulted."""
    ids = market.student_ids
    if mode == STB:
        listers = [i for i in ids if reports.get(i)]
        rest = tuple(i for i in ids if not reports.get(i))
        for perm in itertools.permutations(listers):
            yield TieBreak.stb(perm + rest)
        return
    if mode != MTB:
        raise InputError(f"unknown tie-breaking mode {mode!r}")
    per_school = []
    for s in market.school_ids:
        listers = [i for i in ids if s in reports.get(i, ())]
        rest = tuple(i for i in ids if i not in listers)
        per_school.append([perm + rest for perm in itertools.permutations(listers)])
    for combo in itertools.product(*per_school):
        yield TieBreak.mtb(dict(zip(market.school_ids, combo)))


def _check_supports(market: Market, dists: list) -> None:
    for i, dist in zip(market.student_ids, dists):
        if len(dist) > MAX_SUPPORT:
            raise InputError(f"{i}: support of {len(dist)} lists exceeds {MAX_SUPPORT} in exact mode")


def _weight(value, exact: bool):
    return value if exact else float(value)


# -- exact: individual route -----------------------------------------------


def exact_distribution(
    market: Market,
    profile: StrategyProfile,
    mechanism: str = "BM",
    mode: str = MTB,
    budget: int = DEFAULT_BUDGET,
    method: str = "auto",
) -> OutcomeDistribution:
    """Exact outcome distribution over mixed reports and the tie-break lottery.

    ``method`` selects the tie-break representation for the Boston mechanisms
    under MTB: ``"lottery"`` (per-round uniform subsets, the ``"auto"``
    choice) or ``"permutation"``. Other mechanisms and STB always enumerate
    permutations of the students who list each school.
    """
    name = mechanism_name(mechanism)
    run = get_mechanism(name)
    dists = _strategies(market, profile)
    _check_supports(market, dists)
    realizations = math.prod(len(d) for d in dists)
    if realizations > budget:
        raise BudgetExceeded(realizations, budget)
    use_lottery = name in ("BM", "ABM") and mode == MTB and method in ("auto", "lottery")
    if method not in ("auto", "lottery", "permutation"):
        raise InputError(f"unknown exact method {method!r}")
    exact = all(is_exact(p) for d in dists for _, p in d)
    mass: dict = defaultdict(int)
    leaves = 0
    for combo in itertools.product(*dists):
        reports = {i: rol for i, (rol, _) in zip(market.student_ids, combo)}
        w = math.prod((p for _, p in combo), start=Fraction(1)) if exact else math.prod(float(p) for _, p in combo)
        if use_lottery:
            remaining = budget - leaves
            for matching, _trace, branching in enumerate_bm_lottery(
                market, reports, adaptive=(name == "ABM"), budget=remaining
            ):
                leaves += 1
                mass[matching] += w * _weight(Fraction(1, math.prod(branching)), exact)
        else:
            count = _tiebreak_count(market, reports, mode)
            if leaves + count > budget:
                raise BudgetExceeded(leaves + count * realizations, budget)
            share = w * _weight(Fraction(1, count), exact)
            for tb in _enumerate_tiebreaks(market, reports, mode):
                leaves += 1
                matching, _ = run(market, reports, tb)
                mass[matching] += share
    support = tuple(sorted(((m, p) for m, p in mass.items() if p != 0), key=lambda mp: mp[0].pairs))
    return OutcomeDistribution(support)


# -- exact: grouped route --------------------------------------------------


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _bounded_vectors(limits: Sequence[int], total: int):
    """Vectors ``k`` with ``0 <= k[c] <= limits[c]`` summing to ``total``."""
    if not limits:
        if total == 0:
            yield ()
        return
    head, tail = limits[0], limits[1:]
    room = sum(tail)
    for k in range(max(0, total - room), min(head, total) + 1):
        for rest in _bounded_vectors(tail, total - k):
            yield (k,) + rest


def _splits(counts: Sequence[int], seats: int) -> list:
    """Admitted-count vectors for a uniform subset of ``seats`` applicants drawn
    from classes of the given sizes, with multivariate hypergeometric weights."""
    total = sum(counts)
    denom = math.comb(total, seats)
    out = []
    if seats <= total - seats:
        for adm in _bounded_vectors(counts, seats):
            out.append((Fraction(math.prod(math.comb(a, k) for a, k in zip(counts, adm)), denom), adm))
    else:
        for rej in _bounded_vectors(counts, total - seats):
            adm = tuple(a - j for a, j in zip(counts, rej))
            out.append((Fraction(math.prod(math.comb(a, j) for a, j in zip(counts, rej)), denom), adm))
    return out


class _GroupedTree:
    """Expected admissions per (list class, school) from a count state."""

    def __init__(self, market: Market, rols: Sequence[tuple], adaptive: bool, budget: int):
        self.rols = [tuple(market.school_index[s] for s in rol) for rol in rols]
        self.adaptive = adaptive
        self.budget = budget
        self.nodes = 0
        self.memo: dict = {}

    def expand(self, r: int, counts: tuple, caps: tuple) -> dict:
        key = (0 if self.adaptive else r, counts, caps)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        nxt = list(counts)
        apps: dict = {}
        for c, a in enumerate(counts):
            if a == 0:
                continue
            rol = self.rols[c]
            if self.adaptive:
                target = next((s for s in rol if caps[s] > 0), None)
            else:
                target = rol[r - 1] if r <= len(rol) else None
            if target is None:
                nxt[c] = 0
            else:
                apps.setdefault(target, []).append(c)
        result: dict = defaultdict(int)
        if apps:
            per_school = []
            for s in sorted(apps):
                cls = apps[s]
                a = tuple(counts[c] for c in cls)
                seats = caps[s]
                if sum(a) <= seats:
                    branches = [(1, a)]
                elif seats <= 0:
                    branches = [(1, (0,) * len(a))]
                else:
                    branches = _splits(a, seats)
                per_school.append((s, cls, branches))
            for combo in itertools.product(*(b for _, _, b in per_school)):
                self.nodes += 1
                if self.nodes > self.budget:
                    raise BudgetExceeded(self.nodes, self.budget)
                prob = math.prod((p for p, _ in combo), start=Fraction(1))
                new_counts = list(nxt)
                new_caps = list(caps)
                for (s, cls, _), (_, adm) in zip(per_school, combo):
                    for c, k in zip(cls, adm):
                        if k:
                            new_counts[c] -= k
                            result[(c, s)] += prob * k
                    new_caps[s] -= sum(adm)
                if any(new_counts):
                    for key2, v in self.expand(r + 1, tuple(new_counts), tuple(new_caps)).items():
                        result[key2] += prob * v
        result = dict(result)
        self.memo[key] = result
        return result


def _multinomial_weight(counts: Sequence[int], probs: Sequence, exact: bool):
    m = sum(counts)
    if exact:
        coef = math.factorial(m)
        for c in counts:
            coef //= math.factorial(c)
        return coef * math.prod((Fraction(p) ** c for p, c in zip(probs, counts)), start=Fraction(1))
    log = math.lgamma(m + 1)
    for p, c in zip(probs, counts):
        log -= math.lgamma(c + 1)
        if c:
            log += c * math.log(float(p))
    return math.exp(log)


def assignment_probabilities(
    market: Market,
    profile: StrategyProfile,
    mechanism: str = "BM",
    budget: int = DEFAULT_BUDGET,
) -> dict:
    """``{student: {school: probability}}`` for the Boston mechanisms under
    MTB via the grouped recursion (students with equal strategies pooled)."""
    name = mechanism_name(mechanism)
    if name not in ("BM", "ABM"):
        raise InputError("grouped recursion applies to the Boston mechanisms only")
    dists = _strategies(market, profile)
    _check_supports(market, dists)
    groups: dict = {}
    for i, dist in zip(market.student_ids, dists):
        key = tuple(sorted(dist, key=lambda rp: rp[0]))
        groups.setdefault(key, []).append(i)
    group_list = list(groups.items())
    rols = sorted({rol for dist, _ in group_list for rol, _ in dist})
    class_of = {rol: c for c, rol in enumerate(rols)}
    exact = all(is_exact(p) for dist, _ in group_list for _, p in dist)

    estimate = 1
    for dist, members in group_list:
        estimate *= math.comb(len(members) + len(dist) - 1, len(dist) - 1)
    if estimate > budget:
        raise BudgetExceeded(estimate, budget)

    tree = _GroupedTree(market, rols, name == "ABM", budget)
    caps = tuple(max(s.capacity, 0) for s in market.schools)
    per_group = [
        [list(_compositions(len(members), len(dist))), dist, members] for dist, members in group_list
    ]
    probs: list = [defaultdict(int) for _ in group_list]
    for combo in itertools.product(*(comps for comps, _, _ in per_group)):
        weight = 1
        counts = [0] * len(rols)
        for comp, (_, dist, _) in zip(combo, per_group):
            weight = weight * _multinomial_weight(comp, [p for _, p in dist], exact)
            for (rol, _), c in zip(dist, comp):
                counts[class_of[rol]] += c
        if weight == 0:
            continue
        admitted = tree.expand(1, tuple(counts), caps)
        for g, (comp, (_, dist, members)) in enumerate(zip(combo, per_group)):
            m = len(members)
            for (rol, _), c in zip(dist, comp):
                if not c:
                    continue
                cls = class_of[rol]
                for s in set(rol):
                    sidx = market.school_index[s]
                    got = admitted.get((cls, sidx), 0)
                    if got:
                        share = Fraction(c, m * counts[cls]) if exact else c / (m * counts[cls])
                        probs[g][s] += weight * share * got
    out = {}
    for g, (_, members) in enumerate(group_list):
        row = {s: (p if exact else float(p)) for s, p in probs[g].items() if p != 0}
        for i in members:
            out[i] = dict(row)
    return {i: out[i] for i in market.student_ids}


def expected_utilities_exact(
    market: Market,
    profile: StrategyProfile,
    mechanism: str = "BM",
    mode: str = MTB,
    budget: int = DEFAULT_BUDGET,
    method: str = "auto",
) -> UtilityReport:
    """Exact per-student expected utilities.

    ``method="auto"`` uses the grouped recursion for the Boston mechanisms
    under MTB and the individual route otherwise; ``"grouped"``,
    ``"lottery"`` and ``"permutation"`` force a route.
    """
    name = mechanism_name(mechanism)
    if not market.students:
        return UtilityReport({}, {})
    grouped = method == "grouped" or (method == "auto" and name in ("BM", "ABM") and mode == MTB)
    if grouped:
        if mode != MTB:
            raise InputError("grouped recursion requires multiple tie-breaking")
        probs = assignment_probabilities(market, profile, name, budget)
        utils = {}
        for i in market.student_ids:
            student = market.student(i)
            utils[i] = sum((p * student.utility(s) for s, p in probs[i].items()), 0)
    else:
        dist = exact_distribution(market, profile, name, mode, budget, method)
        utils = dist.expected_utilities(market)
    return UtilityReport(utils, {i: 0 for i in utils}, 0, "exact")


# -- Monte Carlo -----------------------------------------------------------


class _KeyedRank:
    __slots__ = ("row", "index")

    def __init__(self, row, index):
        self.row = row
        self.index = index

    def __getitem__(self, student):
        return self.row[self.index[student]]


class _KeyedTieBreak:
    """Tie-break given by i.i.d. uniform priority keys (lower key wins)."""

    def __init__(self, market: Market, keys: np.ndarray, mode: str):
        self.market = market
        self.keys = keys
        self.mode = mode

    def rank(self, school: str):
        row = 0 if self.mode == STB else self.market.school_index[school]
        return _KeyedRank(self.keys[row].tolist(), self.market.student_index)


@dataclass
class _Moments:
    """Running count, mean and centred sum of squares, merged block by block."""

    count: int = 0
    mean: np.ndarray | None = None
    m2: np.ndarray | None = None

    def add(self, values: np.ndarray) -> None:
        n = values.shape[0]
        if n == 0:
            return
        mean = np.mean(values, axis=0)
        m2 = np.sum((values - mean) ** 2, axis=0)
        if self.count == 0:
            self.count, self.mean, self.m2 = n, mean, m2
            return
        total = self.count + n
        delta = mean - self.mean
        self.mean = self.mean + delta * (n / total)
        self.m2 = self.m2 + m2 + delta**2 * (self.count * n / total)
        self.count = total

    def std_err(self) -> np.ndarray:
        if self.count < 2:
            return np.full_like(self.mean, np.inf)
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _run_blocks(block_fn, samples: int, block_size: int, workers: int, width: int):
    sizes = [min(block_size, samples - b * block_size) for b in range(-(-samples // block_size))]
    moments = _Moments()
    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for values in pool.map(block_fn, range(len(sizes)), sizes):
                moments.add(values)
    else:
        for b, size in enumerate(sizes):
            moments.add(block_fn(b, size))
    if moments.count == 0:
        return np.zeros(width), np.full(width, np.inf)
    return moments.mean, moments.std_err()


def _group_matrix(market: Market, groups: Mapping[str, Sequence[str]] | None):
    if not groups:
        return [], None
    labels = list(groups)
    mat = np.zeros((len(market.students), len(labels)))
    for col, label in enumerate(labels):
        members = list(groups[label])
        for i in members:
            mat[market.student_index[i], col] = 1.0 / len(members)
    return labels, mat


def _generic_mc(market, dists, name, mode, seed, group_mat):
    run = get_mechanism(name)
    ids = market.student_ids
    n = len(ids)
    cum = []
    for dist in dists:
        acc, row = 0.0, []
        for rol, p in dist:
            acc += float(p)
            row.append((acc, rol))
        cum.append(row)
    utility = [{s: float(u) for s, u in market.student(i).utilities} for i in ids]
    n_key_rows = 1 if mode == STB else len(market.schools)

    def block(b, size):
        rng = _block_rng(seed, b)
        out = np.zeros((size, n))
        for t in range(size):
            draws = rng.random(n)
            reports = {}
            for j, row in enumerate(cum):
                if len(row) == 1:
                    reports[ids[j]] = row[0][1]
                else:
                    reports[ids[j]] = next((rol for c, rol in row if draws[j] < c), row[-1][1])
            keys = rng.random((n_key_rows, n))
            matching, _ = run(market, reports, _KeyedTieBreak(market, keys, mode))
            for i, s in matching.pairs:
                out[t, market.student_index[i]] = utility[market.student_index[i]].get(s, 0.0)
        if group_mat is not None:
            out = np.hstack([out, out @ group_mat])
        return out

    return block, np.arange(n)


def _grouped_mc(market, dists, seed, group_mat):
    """Vectorized Boston/MTB sampler over pooled students.

    Students with the same strategy and the same utilities form a group;
    per sample the group's list counts are multinomial (inverse-CDF on
    shared uniforms, so nearby mixing probabilities reuse randomness) and
    each over-demanded school splits its seats across lists
    hypergeometrically. A member's per-sample value is the group average.
    """
    ids = market.student_ids
    groups: dict = {}
    for i, dist in zip(ids, dists):
        key = (tuple(sorted(dist, key=lambda rp: rp[0])), market.student(i).utilities)
        groups.setdefault(key, []).append(i)
    group_list = list(groups.items())
    classes = []  # (group, rol as school indices)
    samplers = []
    for g, ((dist, utils), members) in enumerate(group_list):
        first = len(classes)
        for rol, _ in dist:
            classes.append((g, tuple(market.school_index[s] for s in rol)))
        probs = [float(p) for _, p in dist]
        samplers.append((first, len(members), probs))
    n_classes = len(classes)
    n_schools = len(market.schools)
    n_mixed_cols = sum(len(p) - 1 for _, _, p in samplers)
    max_len = max((len(rol) for _, rol in classes), default=0)
    caps0 = np.array([max(s.capacity, 0) for s in market.schools], dtype=np.int64)
    value = np.zeros((n_classes, n_schools))
    for c, (g, _rol) in enumerate(classes):
        (dist, utils), members = group_list[g]
        for s, u in utils:
            value[c, market.school_index[s]] = float(u) / len(members)
    applicants_by_round = []
    for r in range(max_len):
        by_school: dict = {}
        for c, (_, rol) in enumerate(classes):
            if r < len(rol):
                by_school.setdefault(rol[r], []).append(c)
        applicants_by_round.append(sorted(by_school.items()))
    cdf_tables = {}
    for first, m, probs in samplers:
        if len(probs) == 2:
            cdf_tables[first] = stats.binom.cdf(np.arange(m + 1), m, probs[0])
    column = np.zeros(len(ids), dtype=np.int64)
    for g, (_, members) in enumerate(group_list):
        for i in members:
            column[market.student_index[i]] = g
    if group_mat is not None:
        member_group = np.zeros((len(ids), len(group_list)))
        member_group[np.arange(len(ids)), column] = 1.0
        group_mat = member_group.T @ group_mat

    def block(b, size):
        rng = _block_rng(seed, b)
        uniforms = rng.random((size, n_mixed_cols))
        counts = np.zeros((size, n_classes), dtype=np.int64)
        col = 0
        for first, m, probs in samplers:
            if len(probs) == 1:
                counts[:, first] = m
                continue
            if len(probs) == 2:
                k = np.searchsorted(cdf_tables[first], uniforms[:, col], side="right")
                k = np.minimum(k, m)
                counts[:, first] = k
                counts[:, first + 1] = m - k
                col += 1
                continue
            remaining = np.full(size, m, dtype=np.int64)
            left = 1.0
            for j, p in enumerate(probs[:-1]):
                q = min(max(p / left, 0.0), 1.0) if left > 0 else 0.0
                k = stats.binom.ppf(uniforms[:, col], remaining, q).astype(np.int64)
                k = np.clip(k, 0, remaining)
                counts[:, first + j] = k
                remaining -= k
                left -= p
                col += 1
            counts[:, first + len(probs) - 1] = remaining
        unassigned = counts.copy()
        caps = np.broadcast_to(caps0, (size, n_schools)).copy()
        assigned = np.zeros((size, n_classes, n_schools), dtype=np.int64)
        for by_school in applicants_by_round:
            for s, cls in by_school:
                a = unassigned[:, cls]
                total = a.sum(axis=1)
                admit = np.minimum(total, caps[:, s])
                rem_total = total.copy()
                rem_admit = admit.copy()
                for pos, c in enumerate(cls):
                    if pos == len(cls) - 1:
                        k = rem_admit
                    else:
                        k = rng.hypergeometric(a[:, pos], rem_total - a[:, pos], rem_admit)
                    assigned[:, c, s] += k
                    unassigned[:, c] -= k
                    rem_total = rem_total - a[:, pos]
                    rem_admit = rem_admit - k
                caps[:, s] -= admit
        per_class = np.einsum("tcs,cs->tc", assigned, value)
        per_group = np.zeros((size, len(group_list)))
        for c, (g, _) in enumerate(classes):
            per_group[:, g] += per_class[:, c]
        if group_mat is not None:
            return np.hstack([per_group, per_group @ group_mat])
        return per_group

    return block, column


def expected_utilities_mc(
    market: Market,
    profile: StrategyProfile,
    mechanism: str = "BM",
    mode: str = MTB,
    samples: int = 10**4,
    seed: int = 0,
    workers: int = 1,
    groups: Mapping[str, Sequence[str]] | None = None,
    method: str = "auto",
) -> UtilityReport:
    """Monte Carlo expected utilities with standard errors.

    Samples are processed in fixed-size blocks; block ``b`` draws from
    ``SeedSequence(seed, spawn_key=(b,))`` and blocks are merged in index
    order, so the report does not depend on ``workers``.

    ``method="grouped"`` (the ``"auto"`` choice for BM under MTB) pools
    exchangeable students; ``"individual"`` simulates every student.
    """
    if samples < 1:
        raise InputError("samples must be at least 1")
    name = mechanism_name(mechanism)
    if mode not in (MTB, STB):
        raise InputError(f"unknown tie-breaking mode {mode!r}")
    if not market.students:
        return UtilityReport({}, {}, samples, "mc")
    dists = _strategies(market, profile)
    labels, group_mat = _group_matrix(market, groups)
    grouped = method == "grouped" or (method == "auto" and name == "BM" and mode == MTB)
    if grouped:
        if name != "BM" or mode != MTB:
            raise InputError("grouped sampling supports BM under MTB only")
        block, column = _grouped_mc(market, dists, seed, group_mat)
        size = GROUPED_BLOCK
    elif method in ("auto", "individual"):
        block, column = _generic_mc(market, dists, name, mode, seed, group_mat)
        size = MC_BLOCK
    else:
        raise InputError(f"unknown Monte Carlo method {method!r}")
    base = int(column.max()) + 1
    mean, se = _run_blocks(block, samples, size, workers, base + len(labels))
    ids = market.student_ids
    return UtilityReport(
        {i: float(mean[column[j]]) for j, i in enumerate(ids)},
        {i: float(se[column[j]]) for j, i in enumerate(ids)},
        samples,
        "mc",
        {label: (float(mean[base + j]), float(se[base + j])) for j, label in enumerate(labels)},
    )


# -- evaluator objects -----------------------------------------------------


@dataclass(frozen=True)
class ExactEvaluator:
    mechanism: str = "BM"
    mode: str = MTB
    budget: int = DEFAULT_BUDGET
    method: str = "auto"
    exact = True

    def __call__(self, market: Market, profile: StrategyProfile) -> UtilityReport:
        return expected_utilities_exact(market, profile, self.mechanism, self.mode, self.budget, self.method)


@dataclass(frozen=True)
class MonteCarloEvaluator:
    mechanism: str = "BM"
    mode: str = MTB
    samples: int = 10**4
    seed: int = 0
    workers: int = 1
    method: str = "auto"
    exact = False

    def __call__(self, market: Market, profile: StrategyProfile, groups=None) -> UtilityReport:
        return expected_utilities_mc(
            market, profile, self.mechanism, self.mode, self.samples, self.seed, self.workers, groups, self.method
        )


def utility_gap(
    market: Market,
    profile_bm: StrategyProfile,
    mode: str = MTB,
    evaluator=None,
) -> dict:
    """BM expected utility minus truthful-DA expected utility, per student.

    ``evaluator`` is an :class:`ExactEvaluator` or
    :class:`MonteCarloEvaluator` template; its mechanism field is ignored.
    """
    evaluator = evaluator or ExactEvaluator(mode=mode)
    bm = type(evaluator)(**{**evaluator.__dict__, "mechanism": "BM", "mode": mode})
    da = type(evaluator)(**{**evaluator.__dict__, "mechanism": "DA", "mode": mode})
    bm_utils = bm(market, profile_bm).utilities
    da_utils = da(market, StrategyProfile.truthful(market)).utilities
    return {i: bm_utils[i] - da_utils[i] for i in market.student_ids}
