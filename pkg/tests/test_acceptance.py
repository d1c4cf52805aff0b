"""Acceptance criteria. Each test records a one-line summary that is printed
in the ``acceptance criteria`` section at the end of the pytest run."""
import time

import numpy as np
import pytest

from conftest import connected_er
from graphdeconv.experiments import (
    ExperimentConfig,
    binomial_halfwidth,
    compare_alpha,
    draw_instance,
    persist,
    run_grid,
)
from graphdeconv.graphs import adjacency_shift, normalized_adjacency, path_graph, star_graph
from graphdeconv.identifiability import (
    certify,
    construct_alternative,
    detect_ambiguities,
    seven_node_fixture,
    triangle_with_pendant,
)
from graphdeconv.signals import make_filter, sparse_inputs, synthesize
from graphdeconv.solver import L1Problem, relative_error, reweighted_l1, solve_weighted_l1
from graphdeconv.spectral import (
    apply_filter,
    eig_sym,
    freq_response,
    inverse_response,
    khatri_rao_z,
    spectral_operator,
)
from oracles import vec_columns, vertex_enumeration_l1


@pytest.fixture
def report(record_property):
    def _report(n, detail):
        record_property("criterion", n)
        record_property("detail", detail)
    return _report


def test_c1_inverse_filter_identity(report):
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(50):
        dec = eig_sym(normalized_adjacency(connected_er(20, 0.3, 1000 + k)))
        f = make_filter(5, (0.1, 0.5)[k % 2], k, dec)
        ht = freq_response(f.coeffs, dec)
        H = spectral_operator(ht, dec)
        G = spectral_operator(inverse_response(ht), dec)
        worst = max(worst, np.linalg.norm(H @ G - np.eye(20), np.inf))
    elapsed = time.perf_counter() - t0
    report(1, f"max ||HG - I||_inf = {worst:.2e} (< 1e-8) over 50 draws in {elapsed:.2f} s (< 5 s)")
    assert worst < 1e-8
    assert elapsed < 5


def test_c2_khatri_rao_vectorization(report):
    rng = np.random.default_rng(2)
    worst = 0.0
    for k in range(20):
        n, P = int(rng.integers(5, 30)), int(rng.integers(1, 12))
        dec = eig_sym(normalized_adjacency(connected_er(n, 0.4, 2000 + k)))
        Y, g = rng.standard_normal((n, P)), rng.standard_normal(n)
        V = dec.eigenvectors
        ref = vec_columns(V @ np.diag(g) @ V.T @ Y)
        worst = max(worst, np.abs(khatri_rao_z(Y, dec) @ g - ref).max())
    report(2, f"max |Z g - vec(V diag(g) V^T Y)| = {worst:.2e} (< 1e-10) over 20 draws")
    assert worst < 1e-10


def test_c3_oracle_equivalence(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for k in range(50):
        n, P = int(rng.integers(3, 7)), int(rng.integers(1, 3))
        dec = eig_sym(normalized_adjacency(connected_er(n, 0.6, 3000 + k)))
        X0 = sparse_inputs(n, P, int(rng.integers(1, n + 1)), rng)
        truth = synthesize(X0, make_filter(min(3, n), 0.3, rng, dec), dec)
        Z = khatri_rao_z(truth.Y, dec)
        w = rng.uniform(0.1, 10.0, Z.shape[0]) if k % 2 else None
        best, _ = vertex_enumeration_l1(Z, w)
        sol = solve_weighted_l1(L1Problem(Z, w))
        worst = max(worst, abs(sol.objective - best))
    elapsed = time.perf_counter() - t0
    report(3, f"max |LP - vertex enumeration| = {worst:.2e} (< 1e-6) on 50 instances in {elapsed:.1f} s (< 60 s)")
    assert worst < 1e-6
    assert elapsed < 60


@pytest.mark.slow
def test_c4_dense_cell_recovery(report):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(axes=(("S", (25,)), ("P", (10,))), n=50, edge_prob=0.3, L=5, alpha=0.1,
                           trials=20, base_seed=0)
    cell = run_grid(cfg).cell(S=25, P=10)
    elapsed = time.perf_counter() - t0
    report(4, f"N=50 S=25 P=10 alpha=0.1: success rate {cell.success_rate:.2f} (>= 0.70) "
              f"over {cell.trials} trials in {elapsed:.0f} s")
    assert cell.success_rate >= 0.70


ALPHA_SUBGRID = (("S", (20, 24, 28, 32, 36)), ("P", (10, 13, 16, 19, 22)))


@pytest.mark.slow
def test_c5_alpha_monotonicity(report):
    t0 = time.perf_counter()
    base = dict(axes=ALPHA_SUBGRID, n=50, edge_prob=0.3, L=5, trials=20, base_seed=1)
    low, high = compare_alpha([ExperimentConfig(alpha=0.1, **base), ExperimentConfig(alpha=0.3, **base)])
    diff = low.mean_success_rate - high.mean_success_rate
    hw = binomial_halfwidth(low.successes, low.trials, high.successes, high.trials)
    elapsed = time.perf_counter() - t0
    report(5, f"mean success alpha=0.1: {low.mean_success_rate:.3f}, alpha=0.3: {high.mean_success_rate:.3f}; "
              f"difference {diff:.3f} vs pooled 95% half-width {hw:.3f} ({elapsed:.0f} s)")
    assert diff > hw


def test_c6_certificate_sufficiency(report):
    rng = np.random.default_rng(6)
    certified = violations = 0
    worst = 0.0
    for k in range(200):
        n = (10, 20)[k % 2]
        P = int(rng.choice((2, 4, 8, 12)))
        s = int(rng.integers(1, n // 3 + 1))
        dec = eig_sym(normalized_adjacency(connected_er(n, 0.45 if n == 10 else 0.3, 6000 + k)))
        X0 = sparse_inputs(n, P, s, rng)
        truth = synthesize(X0, make_filter(4, float(rng.choice((0.1, 0.3))), rng, dec), dec)
        Z = khatri_rao_z(truth.Y, dec)
        g0 = truth.g_tilde0_normalized
        if not certify(Z, X0.vec_support(), g0).certified:
            continue
        certified += 1
        g = solve_weighted_l1(L1Problem(Z)).g_tilde
        err = np.linalg.norm(g - g0) / np.linalg.norm(g0)
        worst = max(worst, err)
        violations += err >= 1e-5
    report(6, f"{certified}/200 instances certified; {violations} violations; "
              f"worst certified g error {worst:.1e} (< 1e-5)")
    assert violations == 0
    assert certified > 0


def _pairs(S):
    return [(i, j) for i, j, _ in detect_ambiguities(S).pairs]


def test_c7_ambiguity_fixtures(report):
    p3 = _pairs(adjacency_shift(path_graph(3)))
    tri = _pairs(adjacency_shift(triangle_with_pendant()))
    star = _pairs(normalized_adjacency(star_graph([1.0, 1.7, 2.3])))
    S7 = adjacency_shift(seven_node_fixture())
    dec = eig_sym(S7)
    (i, j, _), = detect_ambiguities(S7).pairs
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        X0 = sparse_inputs(7, 4, 2, rng).values
        ht0 = freq_response(make_filter(3, 0.3, rng, dec).coeffs, dec)
        X1, ht1 = construct_alternative(X0, ht0, dec, (i, j, 3))
        worst = max(worst, np.abs(apply_filter(ht1, dec, X1) - apply_filter(ht0, dec, X0)).max())
    report(7, f"P3 {p3}, triangle+pendant {tri}, weighted star {star}; "
              f"7-node alternative reproduces Y to {worst:.1e} (< 1e-9)")
    assert p3 == [(0, 2)]
    assert tri == [(1, 2)]
    assert star == []
    assert worst < 1e-9


@pytest.mark.slow
def test_c8_reweighting_improves_borderline(report):
    cfg = ExperimentConfig(n=50, edge_prob=0.3, L=5, alpha=0.1, base_seed=8)
    single, refined = [], []
    k = 0
    while len(single) < 50 and k < 400:
        params = {"S": (25, 30, 35)[k % 3], "P": 10, "L": 5}
        inst = draw_instance(cfg, params, np.random.SeedSequence(8, spawn_key=(k,)))
        k += 1
        Z = khatri_rao_z(inst.truth.Y, inst.dec)
        X0 = inst.truth.X0.values
        e1 = relative_error(reweighted_l1(Z, max_iters=1).X_hat, X0)
        if not 0.01 <= e1 <= 0.5:
            continue
        single.append(e1)
        refined.append(relative_error(reweighted_l1(Z, max_iters=10).X_hat, X0))
    m1, m2 = float(np.mean(single)), float(np.mean(refined))
    report(8, f"{len(single)} borderline instances (from {k} draws): single-pass mean e_X {m1:.4f}, "
              f"reweighted mean e_X {m2:.4f}")
    assert len(single) == 50
    assert m2 < m1


def test_c9_determinism_across_workers(report, tmp_path):
    base = dict(axes=(("S", (3, 8)), ("P", (2, 5))), n=30, edge_prob=0.3, trials=4, base_seed=9)
    serial, _ = persist(run_grid(ExperimentConfig(workers=1, **base)), tmp_path / "w1.csv")
    parallel, _ = persist(run_grid(ExperimentConfig(workers=8, **base)), tmp_path / "w8.csv")
    again, _ = persist(run_grid(ExperimentConfig(workers=1, **base)), tmp_path / "again.csv")
    same = serial.read_bytes() == parallel.read_bytes() == again.read_bytes()
    report(9, f"CSV identical at 1 and 8 workers and on rerun: {same} "
              f"({len(serial.read_text().splitlines()) - 1} cells)")
    assert same
