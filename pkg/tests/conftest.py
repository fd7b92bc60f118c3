"""Shared fixtures: reference parameter sets and small closed-form models."""

from __future__ import annotations

import numpy as np
import pytest

from affine_gmm.model import table1_truth, table2_truth
from affine_gmm.polyproc import DiffusionSpec
from affine_gmm.riccati import QSpec

MATURITIES = np.array([1 / 12, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 20.0])


def vasicek_spec(b: float = 0.6, beta: float = -0.5, sigma: float = 0.3) -> DiffusionSpec:
    return DiffusionSpec([b], [[beta]], [sigma], [1.0], [[0.0]])


def cir_spec(b: float = 0.8, beta: float = -0.6, sigma: float = 0.5) -> DiffusionSpec:
    return DiffusionSpec([b], [[beta]], [sigma], [0.0], [[1.0]])


def vasicek_q(b: float = 0.6, beta: float = -0.5, sigma: float = 0.3, gamma0: float = 0.01) -> QSpec:
    return QSpec([b], [[beta]], [sigma], [1.0], [[0.0]], gamma0, 0)


def cir_q(b: float = 0.8, beta: float = -0.6, sigma: float = 0.5, gamma0: float = 0.02) -> QSpec:
    return QSpec([b], [[beta]], [sigma], [0.0], [[1.0]], gamma0, 1)


@pytest.fixture(scope="session")
def truth1():
    return table1_truth()


@pytest.fixture(scope="session")
def truth2():
    return table2_truth()


@pytest.fixture
def maturities():
    return MATURITIES.copy()


# ---------------------------------------------------------------------------
# Acceptance summary: one line per criterion at the end of the run
# ---------------------------------------------------------------------------

CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion(capsys):
    """``criterion(k, passed, detail)`` records and prints a pass/fail line, then asserts."""

    def record(k: int, passed: bool, detail: str) -> None:
        passed = bool(passed)
        CRITERIA[k] = (passed, detail)
        with capsys.disabled():
            print(f"\ncriterion {k:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
        assert passed, f"criterion {k}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        passed, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
