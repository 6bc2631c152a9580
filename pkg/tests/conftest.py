import numpy as np
import pytest

from kgsim.store import Dictionary, TripleStore

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_store(triples, n_entities=None, n_relations=None):
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    n_e = n_entities or int(triples[:, [0, 2]].max()) + 1
    n_r = n_relations or int(triples[:, 1].max()) + 1
    return TripleStore(triples, Dictionary(f"e{i}" for i in range(n_e)),
                       Dictionary(f"r{i}" for i in range(n_r)))


def random_store(n_entities, n_relations, n_triples, seed):
    rng = np.random.default_rng(seed)
    seen = set()
    while len(seen) < n_triples:
        h, t = rng.integers(n_entities, size=2)
        seen.add((int(h), int(rng.integers(n_relations)), int(t)))
    return make_store(sorted(seen), n_entities, n_relations)


def central_diff(f, x, eps=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (f(xp) - f(xm)) / (2 * eps)
    return g


@pytest.fixture
def toy_store():
    return random_store(12, 3, 40, seed=0)
