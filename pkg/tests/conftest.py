import numpy as np
import pytest

from hgconj.field_model import get_example, polynomial_field


@pytest.fixture(scope="session")
def example1():
    return get_example("example1")


@pytest.fixture(scope="session")
def example2():
    return get_example("example2")


@pytest.fixture(scope="session")
def sin1d():
    return get_example("sin1d")


@pytest.fixture(scope="session")
def cubic1d():
    return get_example("cubic1d")


def linear_field(A, name="linear"):
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    terms = []
    for i in range(n):
        for j in range(n):
            if A[i, j] != 0.0:
                exps = [0] * n
                exps[j] = 1
                terms.append({"component": i, "coeff": float(A[i, j]), "exponents": exps})
    return polynomial_field(n, terms, name=name)


# criterion number -> list of (part, passed, detail), filled by test_acceptance
ACCEPTANCE: dict = {}


def record_criterion(number: int, part: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(number, []).append((part, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{part} {'ok' if ok else 'FAILED'} ({d})" for part, ok, d in parts)
        terminalreporter.write_line(f"criterion {number}: {verdict} - {detail}")
