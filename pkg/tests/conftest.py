from __future__ import annotations

import itertools

import numpy as np
import pytest

from schoolchoice.model import Market, School, Student


def random_market(rng, n_students: int, n_schools: int, k: int, capacity_max: int = 2, sincere_p=0.0) -> Market:
    """Small random market with integer utilities and random list lengths."""
    schools = tuple(School(f"s{j + 1}", int(rng.integers(1, capacity_max + 1))) for j in range(n_schools))
    students = []
    for i in range(n_students):
        length = int(rng.integers(0, min(k, n_schools) + 1))
        listed = rng.choice(n_schools, size=length, replace=False)
        utils = sorted(rng.choice(np.arange(1, 20), size=length, replace=False).tolist(), reverse=True)
        students.append(
            Student(
                f"i{i + 1}",
                tuple((f"s{int(s) + 1}", int(u)) for s, u in zip(listed, utils)),
                bool(rng.random() < sincere_p),
            )
        )
    return Market(schools, tuple(students), k)


def all_permutations(ids):
    return list(itertools.permutations(ids))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda x: int(x.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
