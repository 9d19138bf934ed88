import os
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import HealthCheck, settings

from expanding_gf.graph import AttachmentVector, ExpandingGraph

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]


def movielens_path() -> Path:
    return Path(os.environ.get("MOVIELENS_PATH", ROOT / "data" / "ml-100k" / "u.data"))


@pytest.fixture(scope="session")
def ml_path():
    p = movielens_path()
    if not p.exists():
        pytest.skip(f"MovieLens ratings not found at {p} (run scripts/fetch_movielens.py)")
    return p


def random_graph(rng, n, density=0.3, symmetric=False):
    A = (rng.random((n, n)) < density) * rng.uniform(0.1, 1.0, (n, n))
    np.fill_diagonal(A, 0.0)
    if symmetric:
        A = np.triu(A, 1)
        A = A + A.T
    return ExpandingGraph(sp.coo_matrix(A))


def random_attachment(rng, n, max_nnz=4):
    k = int(rng.integers(1, min(max_nnz, n) + 1))
    idx = rng.choice(n, size=k, replace=False)
    return AttachmentVector(n, idx, rng.uniform(0.1, 1.0, k))


# -- acceptance report -------------------------------------------------------------

ACCEPTANCE_LINES: dict = {}


@pytest.fixture(scope="session")
def report():
    def _report(number: int, passed: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
