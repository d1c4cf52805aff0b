import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from graphdeconv.graphs import Graph, erdos_renyi, is_connected, normalized_adjacency  # noqa: E402
from graphdeconv.spectral import eig_sym  # noqa: E402


def connected_er(n, p, seed):
    rng = np.random.default_rng(seed)
    while True:
        g = erdos_renyi(n, p, rng)
        if is_connected(g):
            return g


@pytest.fixture
def er20():
    g = connected_er(20, 0.3, 11)
    return g, eig_sym(normalized_adjacency(g))


@pytest.fixture
def triangle():
    return Graph(3, ((0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)))


def make_instance(n=20, p=0.3, L=5, alpha=0.1, s=2, P=10, seed=0, mode="per_column"):
    """Connected ER graph, sparse inputs and a random filter, fully seeded."""
    from graphdeconv.signals import make_filter, sparse_inputs, synthesize
    from graphdeconv.spectral import khatri_rao_z

    g = connected_er(n, p, seed)
    dec = eig_sym(normalized_adjacency(g))
    X0 = sparse_inputs(n, P, s, seed, mode)
    truth = synthesize(X0, make_filter(L, alpha, seed, dec), dec)
    return dec, truth, khatri_rao_z(truth.Y, dec)


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" in props and rep.when == "call":
                rows.append((props["criterion"], outcome, props.get("detail", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for n, outcome, detail in sorted(rows):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {n}: {detail}")
