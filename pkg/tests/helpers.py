"""Shared generators for the test suite."""
import numpy as np

from keydistill.states import ClassicalDistribution


def random_unique_k(seed, max_dim=3):
    """Random distribution on A, B, E where (i, j) fixes Eve's value."""
    r = np.random.default_rng(seed)
    da, db, de = (int(x) for x in r.integers(1, max_dim + 1, size=3))
    da, db = max(da, 2), max(db, 2)
    pij = r.dirichlet(np.full(da * db, 0.7)).reshape(da, db)
    pij[r.random((da, db)) < 0.25] = 0.0
    if pij.sum() == 0:
        pij[0, 0] = 1.0
    pij /= pij.sum()
    k = r.integers(0, de, size=(da, db))
    p = np.zeros((da, db, de))
    for i in range(da):
        for j in range(db):
            p[i, j, k[i, j]] = pij[i, j]
    return ClassicalDistribution(["A", "B", "E"], p)


def random_small_distribution(rng, labels=("A", "B", "E"), max_dim=3):
    dims = tuple(int(x) for x in rng.integers(1, max_dim + 1, size=len(labels)))
    probs = rng.dirichlet(np.full(int(np.prod(dims)), 0.5)).reshape(dims)
    return ClassicalDistribution(list(labels), probs)


# acceptance results, printed again at the end of the session by conftest
ACCEPTANCE = []


def report(n: int, ok: bool, text: str, seconds: float, limit: float | None = None) -> str:
    timing = f"{seconds:.1f} s" + (f" (limit {limit:g} s)" if limit is not None else "")
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {text} [{timing}]"
    ACCEPTANCE.append(line)
    print(line)
    return line
