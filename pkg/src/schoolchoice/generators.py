"""Random markets: the uniform model and population-based sincerity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import InputError, Market, PopulationModel, School, Student

SINCERITY_RULES = ("iid", "fixed", "population")


@dataclass(frozen=True)
class UniformModelSpec:
    """Parameters of the uniform model.

    Every student draws ``k = len(utilities)`` distinct schools uniformly at
    random and gets ``utilities[j]`` from their ``j``-th draw. Sincerity is
    either i.i.d. with probability ``p``, a fixed set of ids, or drawn from
    a :class:`PopulationModel`.
    """

    n: int
    utilities: tuple = (3, 2.5)
    sincerity: str = "iid"
    p: float = 0.0
    sincere_ids: tuple = ()
    population: PopulationModel | None = None
    seed: int = 0
    require_gadget_range: bool = False

    @property
    def k(self) -> int:
        return len(self.utilities)

    def violations(self) -> list:
        out = []
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            out.append(f"n={self.n!r} must be a positive integer")
        u = list(self.utilities)
        if any(x <= 0 for x in u):
            out.append("utilities must be positive")
        if any(a <= b for a, b in zip(u, u[1:])):
            out.append("utilities must be strictly decreasing")
        if isinstance(self.n, (int, np.integer)) and self.k > self.n:
            out.append(f"k={self.k} exceeds n={self.n}")
        if self.sincerity not in SINCERITY_RULES:
            out.append(f"unknown sincerity rule {self.sincerity!r}")
        if self.sincerity == "iid" and not 0 <= self.p <= 1:
            out.append(f"p={self.p} outside [0, 1]")
        if self.sincerity == "population":
            if self.population is None:
                out.append("population rule needs a population model")
            else:
                out.extend(self.population.violations())
        if self.require_gadget_range and len(u) >= 2 and not u[1] > 2 * u[0] / 3:
            out.append("need u2 > 2/3 u1")
        return out


def uniform_preferences(n: int, k: int, rng) -> np.ndarray:
    """``(n, k)`` array of distinct school indices per row, uniform without
    replacement, drawn row by row from one block of uniforms."""
    if k > n:
        raise InputError(f"k={k} exceeds the number of schools n={n}")
    rng = np.random.default_rng(rng)
    u = rng.random((n, k))
    picks = np.empty((n, k), dtype=np.int64)
    for j in range(k):
        x = np.floor(u[:, j] * (n - j)).astype(np.int64)
        if j:
            # map x to the x-th school not yet taken in this row
            for prev in np.sort(picks[:, :j], axis=1).T:
                x += x >= prev
        picks[:, j] = x
    return picks


def market_from_preferences(
    prefs: np.ndarray, utilities, sincere=None, n_schools: int | None = None
) -> Market:
    """Market with schools ``s1..sN`` (capacity 1) and students ``i1..in``
    whose ``j``-th listed school is ``prefs[i, j]`` with ``utilities[j]``."""
    n_students, k = prefs.shape
    if n_schools is None:
        n_schools = max(int(prefs.max()) + 1 if prefs.size else 0, n_students)
    schools = tuple(School(f"s{j + 1}") for j in range(n_schools))
    sincere = np.zeros(n_students, dtype=bool) if sincere is None else np.asarray(sincere)
    names = [f"s{j + 1}" for j in range(n_schools)]
    students = tuple(
        Student(
            f"i{i + 1}",
            tuple((names[s], u) for s, u in zip(row, utilities)),
            bool(flag),
        )
        for i, (row, flag) in enumerate(zip(prefs.tolist(), sincere.tolist()))
    )
    return Market(schools, students, k)


def generate_uniform(spec: UniformModelSpec) -> Market:
    """Draw a market from the uniform model; deterministic in ``spec.seed``."""
    problems = spec.violations()
    if problems:
        raise InputError("; ".join(problems))
    rng = np.random.default_rng(spec.seed)
    prefs = uniform_preferences(spec.n, spec.k, rng)
    if spec.sincerity == "iid":
        sincere = rng.random(spec.n) < spec.p
    elif spec.sincerity == "fixed":
        wanted = set(spec.sincere_ids)
        sincere = np.array([f"i{i + 1}" in wanted for i in range(spec.n)])
    else:
        sincere = None
    market = market_from_preferences(prefs, spec.utilities, sincere, spec.n)
    if spec.sincerity == "population":
        market = assign_populations(market, spec.population, rng)
    return market


def assign_populations(market: Market, model: PopulationModel, seed) -> Market:
    """Give each student an independent population label (probability
    ``w``) and a private sincerity flag (probability ``p`` of their label)."""
    problems = model.violations()
    if problems:
        raise InputError("; ".join(problems))
    rng = np.random.default_rng(seed)
    weights = np.array([float(p.weight) for p in model.populations])
    labels = rng.choice(len(weights), size=len(market.students), p=weights / weights.sum())
    p_sincere = np.array([float(p.p_sincere) for p in model.populations])
    flags = rng.random(len(market.students)) < p_sincere[labels]
    students = tuple(
        Student(i.id, i.utilities, bool(flag), model.populations[label].label)
        for i, label, flag in zip(market.students, labels.tolist(), flags.tolist())
    )
    return Market(market.schools, students, market.k, private_sincerity=True)
