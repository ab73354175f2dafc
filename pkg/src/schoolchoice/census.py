"""Scanners for the small isolated sub-markets behind the large-market results.

All scanners read true preferences (utility lists) of a length-2 market and
work on first/second-choice counts per school, so a school is "untouched by
others" exactly when its counts equal those produced by the pattern itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import InputError, Market

PATTERNS = ("thm2", "lemma1", "lemma2")
CSV_HEADER = "pattern,z,y,x,w,v,a,b,c,d,e,f"
_STUDENT_ROLES = ("z", "y", "x", "w", "v")
_SCHOOL_ROLES = ("a", "b", "c", "d", "e", "f")


@dataclass(frozen=True)
class GadgetMatch:
    pattern: str
    roles: dict  # role -> student id
    schools: dict  # role -> school id

    def csv_row(self) -> str:
        cells = [self.pattern]
        cells += [self.roles.get(r, "") for r in _STUDENT_ROLES]
        cells += [self.schools.get(r, "") for r in _SCHOOL_ROLES]
        return ",".join(cells)


def matches_to_csv(matches) -> str:
    return "\n".join([CSV_HEADER] + [m.csv_row() for m in matches]) + "\n"


def preference_arrays(market: Market) -> tuple:
    """``(first, second)`` school indices per student, ``-1`` when missing."""
    if market.k > 2 and any(len(i.utilities) > 2 for i in market.students):
        raise InputError("pattern scans need lists of length at most 2")
    idx = market.school_index
    first = np.full(len(market.students), -1, dtype=np.int64)
    second = np.full(len(market.students), -1, dtype=np.int64)
    for j, student in enumerate(market.students):
        acc = student.acceptable
        if acc:
            first[j] = idx[acc[0]]
        if len(acc) > 1:
            second[j] = idx[acc[1]]
    return first, second


class _Index:
    """First/second-choice counts plus the students ranking each school first."""

    def __init__(self, first: np.ndarray, second: np.ndarray, n_schools: int):
        self.first = first
        self.second = second
        self.fc = np.bincount(first[first >= 0], minlength=n_schools)
        self.sc = np.bincount(second[second >= 0], minlength=n_schools)
        key = np.where(first >= 0, first, n_schools)
        self.by_first = np.argsort(key, kind="stable")
        self.start = np.searchsorted(key[self.by_first], np.arange(n_schools))

    def fc_of(self, school):
        return np.where(school >= 0, self.fc[np.maximum(school, 0)], -1)

    def sc_of(self, school):
        return np.where(school >= 0, self.sc[np.maximum(school, 0)], -1)

    def ranked_first(self, school, offset=0):
        return self.by_first[self.start[school] + offset]

    def leaf(self, school):
        """School ranked second once (by the pattern) and first by nobody."""
        return (self.fc_of(school) == 0) & (self.sc_of(school) == 1)

    def hub(self, school):
        """School ranked first by one pattern student and second by another."""
        return (self.fc_of(school) == 1) & (self.sc_of(school) == 1)


def scan_thm2(first: np.ndarray, second: np.ndarray, n_schools: int) -> np.ndarray:
    """Rows ``(z, y, x, a, b, c, d)`` of student/school indices."""
    ix = _Index(first, second, n_schools)
    a = first
    ok = (a >= 0) & (second >= 0)
    ok &= (ix.fc_of(a) == 2) & (ix.sc_of(a) == 0) & ix.hub(second)
    z = np.nonzero(ok)[0]
    a, b = first[z], second[z]
    p0, p1 = ix.ranked_first(a, 0), ix.ranked_first(a, 1)
    y = np.where(p0 == z, p1, p0)
    c = second[y]
    x = ix.ranked_first(b)
    d = second[x]
    keep = (c >= 0) & (d >= 0)
    keep &= ix.leaf(c) & ix.leaf(d)
    rows = np.stack([z, y, x, a, b, c, d], axis=1)[keep]
    return rows


def scan_lemma(first: np.ndarray, second: np.ndarray, n_schools: int, pattern: str) -> np.ndarray:
    """``lemma2`` rows ``(z, y, x, w, a, b, c, d, e)``; ``lemma1`` rows
    ``(z, y, x, w, v, a, b, c, d, e, f)``."""
    ix = _Index(first, second, n_schools)
    has = (first >= 0) & (second >= 0)
    a_mask = np.zeros(n_schools, dtype=bool)
    a_mask[(ix.fc == 3) & (ix.sc == 0)] = True
    hubs = np.nonzero(a_mask)[0]
    trio = np.stack([ix.ranked_first(hubs, j) for j in range(3)], axis=1) if len(hubs) else np.zeros((0, 3), dtype=np.int64)
    sec = second[trio]
    if len(trio):
        valid = has[trio].all(axis=1)
    else:
        valid = np.zeros(0, dtype=bool)
    is_hub = ix.hub(sec)
    is_leaf = ix.leaf(sec)
    rows = []
    if pattern == "lemma2":
        good = valid & (is_hub.sum(axis=1) == 1) & (is_leaf.sum(axis=1) == 2)
        for t, s_row, h_row in zip(trio[good], sec[good], is_hub[good]):
            zpos = int(np.argmax(h_row))
            others = sorted(int(t[j]) for j in range(3) if j != zpos)
            z = int(t[zpos])
            b = int(s_row[zpos])
            w = int(ix.ranked_first(np.array([b]))[0])
            e = int(second[w])
            if e < 0 or not ix.leaf(np.array([e]))[0]:
                continue
            y, x = others
            rows.append((z, y, x, w, int(first[z]), b, int(second[y]), int(second[x]), e))
        return np.array(rows, dtype=np.int64).reshape(-1, 9)
    if pattern == "lemma1":
        good = valid & (is_hub.sum(axis=1) == 2) & (is_leaf.sum(axis=1) == 1)
        for t, s_row, l_row in zip(trio[good], sec[good], is_leaf[good]):
            xpos = int(np.argmax(l_row))
            z, y = sorted(int(t[j]) for j in range(3) if j != xpos)
            x = int(t[xpos])
            b, c = int(second[z]), int(second[y])
            w = int(ix.ranked_first(np.array([b]))[0])
            v = int(ix.ranked_first(np.array([c]))[0])
            e, f = int(second[w]), int(second[v])
            if e < 0 or f < 0 or not (ix.leaf(np.array([e]))[0] and ix.leaf(np.array([f]))[0]):
                continue
            rows.append((z, y, x, w, v, int(first[z]), b, c, int(second[x]), e, f))
        return np.array(rows, dtype=np.int64).reshape(-1, 11)
    raise InputError(f"unknown pattern {pattern!r}")


def _to_matches(market: Market, pattern: str, rows: np.ndarray) -> list:
    if pattern == "thm2":
        s_roles, c_roles = ("z", "y", "x"), ("a", "b", "c", "d")
    elif pattern == "lemma2":
        s_roles, c_roles = ("z", "y", "x", "w"), ("a", "b", "c", "d", "e")
    else:
        s_roles, c_roles = _STUDENT_ROLES, _SCHOOL_ROLES
    sid, cid = market.student_ids, market.school_ids
    out = []
    for row in rows.tolist():
        roles = {r: sid[j] for r, j in zip(s_roles, row)}
        schools = {r: cid[j] for r, j in zip(c_roles, row[len(s_roles):])}
        out.append(GadgetMatch(pattern, roles, schools))
    return sorted(out, key=lambda m: market.student_index[m.roles["z"]])


def census_thm2(market: Market) -> list:
    first, second = preference_arrays(market)
    return _to_matches(market, "thm2", scan_thm2(first, second, len(market.schools)))


def census_lemma_gadgets(market: Market, pattern: str) -> list:
    if pattern not in ("lemma1", "lemma2"):
        raise InputError(f"unknown pattern {pattern!r}; expected lemma1 or lemma2")
    first, second = preference_arrays(market)
    return _to_matches(market, pattern, scan_lemma(first, second, len(market.schools), pattern))


def census(market: Market, pattern: str) -> list:
    if pattern == "thm2":
        return census_thm2(market)
    return census_lemma_gadgets(market, pattern)


def scan(first, second, n_schools: int, pattern: str) -> np.ndarray:
    if pattern == "thm2":
        return scan_thm2(first, second, n_schools)
    return scan_lemma(first, second, n_schools, pattern)


# -- probabilities -----------------------------------------------------------


def finite_n_gadget_probability(n: int, exact: bool = False):
    """The displayed product bounding the chance that a given student is the
    ``z`` of a ``thm2`` pattern in the uniform model with ``k = 2``.

    Each factor ``1 - ((n-1)/n)^m`` is the chance that *at least one* of
    ``m`` students ranks a school first, so the product is a lower-bound
    style estimate rather than the pattern's exact probability; see
    :func:`thm2_pattern_probability`.
    """
    if n < 6:
        raise InputError("need n >= 6")
    if exact:
        q = Fraction(n - 1, n)
        return (
            (1 - q ** (n - 1))
            * Fraction(n - 2, n - 1)
            * (1 - q ** (n - 2))
            * Fraction(n - 3, n - 1)
            * (Fraction(n - 4, n) * Fraction(n - 5, n - 1)) ** (n - 3)
        )
    log_q = math.log1p(-1 / n)
    tail = (n - 3) * (math.log1p(-4 / n) + math.log1p(-4 / (n - 1)))
    return (
        -math.expm1((n - 1) * log_q)
        * (n - 2) / (n - 1)
        * -math.expm1((n - 2) * log_q)
        * (n - 3) / (n - 1)
        * math.exp(tail)
    )


def gadget_probability_limit() -> float:
    """``(1 - 1/e)^2 / e^8``, the large-n value of the product above."""
    return (1 - math.exp(-1)) ** 2 * math.exp(-8)


def thm2_pattern_probability(n: int, exact: bool = False):
    """Exact probability that a given student is the ``z`` of a ``thm2``
    pattern: exactly one other student shares its first choice (with a
    second choice other than z's own second), exactly one student ranks z's
    second choice first (with a second choice outside the pattern), and the
    remaining ``n - 3`` students avoid all four schools."""
    if n < 6:
        raise InputError("need n >= 6")
    if exact:
        head = Fraction((n - 2) ** 2 * (n - 3), n * n * (n - 1))
        return head * Fraction((n - 4) * (n - 5), n * (n - 1)) ** (n - 3)
    head = (n - 2) ** 2 * (n - 3) / (n * n * (n - 1))
    return head * math.exp((n - 3) * (math.log1p(-4 / n) + math.log1p(-4 / (n - 1))))
