import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import connected_er, make_instance
from graphdeconv.exceptions import ContractError
from graphdeconv.graphs import Graph, adjacency_shift, erdos_renyi, normalized_adjacency, path_graph, star_graph
from graphdeconv.identifiability import (
    align_pair,
    certify,
    check_c1,
    check_c2,
    construct_alternative,
    detect_ambiguities,
    pair_vector,
    seven_node_fixture,
    triangle_with_pendant,
)
from graphdeconv.signals import column_sparse_inputs, make_filter
from graphdeconv.solver import L1Problem, relative_error, reweighted_l1, solve_weighted_l1
from graphdeconv.spectral import apply_filter, eig_sym, freq_response


def test_path_twin_leaves():
    rep = detect_ambiguities(adjacency_shift(path_graph(3)))
    assert [(i, j) for i, j, _ in rep.pairs] == [(0, 2)]
    assert rep.pairs[0][2] == pytest.approx(0.0)
    assert rep.ambiguous


def test_triangle_with_pendant():
    S = adjacency_shift(triangle_with_pendant())
    rep = detect_ambiguities(S)
    assert [(i, j) for i, j, _ in rep.pairs] == [(1, 2)]
    assert rep.pairs[0][2] == pytest.approx(-1.0)
    # (0, 3) is not an eigenvector direction
    u = pair_vector(4, 0, 3)
    Su = S.matrix @ u
    assert np.abs(Su - (u @ Su) * u).max() > 0.1


def test_weighted_star_has_no_ambiguity():
    rep = detect_ambiguities(normalized_adjacency(star_graph([1.0, 1.7, 2.3])))
    assert not rep.ambiguous and rep.pairs == ()
    assert rep.to_dict() == {"ambiguous": False, "pairs": []}


def test_reported_pairs_are_eigenvectors():
    g = Graph(6, ((0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (3, 4, 1.0), (3, 5, 1.0)))
    S = normalized_adjacency(g).matrix
    rep = detect_ambiguities(S)
    assert {(i, j) for i, j, _ in rep.pairs} == {(1, 2), (4, 5)}
    for i, j, lam in rep.pairs:
        u = pair_vector(6, i, j)
        assert np.abs(S @ u - lam * u).max() < 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_detection_commutes_with_relabeling(seed):
    rng = np.random.default_rng(seed)
    g = erdos_renyi(8, 0.35, rng)
    S = adjacency_shift(g).matrix
    perm = rng.permutation(8)
    Sp = S[np.ix_(perm, perm)]
    # new label a holds old node perm[a]
    pairs = {frozenset((i, j)) for i, j, _ in detect_ambiguities(S).pairs}
    mapped = {frozenset((int(perm[a]), int(perm[b]))) for a, b, _ in detect_ambiguities(Sp).pairs}
    assert pairs == mapped


def test_detect_rejects_asymmetric():
    with pytest.raises(ContractError):
        detect_ambiguities(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_seven_node_fixture_matches_construction():
    dec = eig_sym(adjacency_shift(seven_node_fixture()))
    rep = detect_ambiguities(adjacency_shift(seven_node_fixture()))
    assert [(i, j) for i, j, _ in rep.pairs] == [(1, 3)]
    v = dec.eigenvectors[:, 3]
    assert min(np.abs(v - pair_vector(7, 1, 3)).max(), np.abs(v + pair_vector(7, 1, 3)).max()) < 1e-12


def test_alternative_solution_reproduces_observations():
    dec = eig_sym(adjacency_shift(seven_node_fixture()))
    X0 = column_sparse_inputs(7, 3, 2, 0).values
    ht0 = freq_response(make_filter(3, 0.3, 1, dec).coeffs, dec)
    X1, ht1 = construct_alternative(X0, ht0, dec, (1, 3, 3))
    np.testing.assert_array_equal(np.sign(ht1 * ht0), [1, 1, 1, -1, 1, 1, 1])
    Y0 = apply_filter(ht0, dec, X0)
    assert np.abs(apply_filter(ht1, dec, X1) - Y0).max() < 1e-9
    assert np.count_nonzero(X1) == np.count_nonzero(X0)
    np.testing.assert_array_equal(X1[[3, 1]], X0[[1, 3]])
    np.testing.assert_array_equal(X1[[0, 2, 4, 5, 6]], X0[[0, 2, 4, 5, 6]])


def test_alternative_rejects_wrong_eigenvector():
    dec = eig_sym(adjacency_shift(seven_node_fixture()))
    with pytest.raises(ContractError):
        construct_alternative(np.eye(7), np.ones(7), dec, (1, 3, 2))


def test_align_pair_in_degenerate_eigenspace():
    # star K_{1,3}: leaves share eigenvalue 0 with multiplicity 2
    S = adjacency_shift(star_graph([1, 1, 1]))
    dec = eig_sym(S)
    new, k = align_pair(dec, 1, 2)
    np.testing.assert_allclose(np.abs(new.eigenvectors[:, k]), np.abs(pair_vector(4, 1, 2)), atol=1e-12)
    np.testing.assert_allclose(new.shift(), S.matrix, atol=1e-12)
    np.testing.assert_allclose(new.eigenvectors.T @ new.eigenvectors, np.eye(4), atol=1e-12)
    X0 = np.array([[1.0], [2.0], [0.0], [0.0]])
    X1, ht1 = construct_alternative(X0, np.array([2.0, 0.5, 0.7, 1.5]), new, (1, 2, k))
    assert np.abs(apply_filter(ht1, new, X1) - apply_filter([2.0, 0.5, 0.7, 1.5], new, X0)).max() < 1e-9


def test_trivial_flip_is_identity():
    dec = eig_sym(adjacency_shift(seven_node_fixture()))
    X0 = np.random.default_rng(1).standard_normal((7, 2))
    u = pair_vector(7, 1, 3)
    P = np.eye(7) - 2 * np.outer(u, u)
    x = np.arange(7.0)
    np.testing.assert_allclose(P @ x, [0, 3, 2, 1, 4, 5, 6])
    np.testing.assert_allclose(apply_filter(np.ones(7), dec, X0), X0, atol=1e-12)


def test_c1_empty_complement():
    assert check_c1(np.eye(4), range(4)) == (0, False)


def test_c1_duplicated_rows_in_complement():
    rng = np.random.default_rng(2)
    base = rng.standard_normal((3, 4))
    Z = np.vstack([rng.standard_normal((2, 4)), base, base])
    rank, holds = check_c1(Z, [0, 1])
    assert rank == 3 and holds


def test_c1_rejects_out_of_range_support():
    with pytest.raises(ContractError):
        check_c1(np.eye(4), [7])


def test_certificate_on_tight_instance():
    dec, truth, Z = make_instance(s=2, P=10, seed=3)
    sup = truth.X0.vec_support()
    rep = certify(Z, sup, truth.g_tilde0_normalized)
    assert rep.c1_holds and rep.c1_rank == 19
    assert rep.c2_holds and rep.c2_margin < 1 and abs(rep.c2_gamma) > 1e-8
    assert rep.certified
    g = solve_weighted_l1(L1Problem(Z)).g_tilde
    g0 = truth.g_tilde0_normalized
    assert np.linalg.norm(g - g0) / np.linalg.norm(g0) < 1e-6
    assert rep.to_dict()["certified"] is True


def test_certificate_fails_when_solver_fails():
    found = 0
    for seed in range(40):
        dec, truth, Z = make_instance(n=20, s=10, P=2, alpha=0.3, seed=seed)
        res = reweighted_l1(Z, max_iters=1)
        if relative_error(res.X_hat, truth.X0.values) > 0.1:
            found += 1
            assert not certify(Z, truth.X0.vec_support(), truth.g_tilde0_normalized).certified
    assert found >= 3


def test_c2_full_support_has_no_free_variables():
    rng = np.random.default_rng(4)
    Z = rng.standard_normal((4, 4))
    g0 = np.full(4, 0.25)
    margin, gamma, holds = check_c2(Z, range(4), g0)
    # Z^T f = gamma 1 with fixed f holds only by coincidence
    assert not holds and margin == np.inf
    # construct Z so that Z^T sign(Z g0) = 2 * 1
    Z = np.array([[1.0, 1.0], [1.0, 1.0]])
    margin, gamma, holds = check_c2(Z, [0, 1], np.array([0.5, 0.5]))
    assert holds and margin == 0.0 and gamma == pytest.approx(2.0)


def test_c2_preconditions():
    Z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, -1.0]])
    with pytest.raises(ContractError, match="consistent"):
        check_c2(Z, [0], np.array([0.5, 0.5]))
    Z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ContractError, match="zero entries"):
        check_c2(Z, [0, 1], np.array([0.0, 1.0]))


def test_c2_infeasible_lp():
    # Z^T f = gamma 1 cannot be met: complement rows span nothing useful
    Z = np.array([[1.0, 0.0], [0.0, 0.0]])
    margin, gamma, holds = check_c2(Z, [0], np.array([1.0, 0.0]))
    assert margin == np.inf and np.isnan(gamma) and not holds


def test_detect_on_random_connected_graphs_is_fast():
    g = connected_er(50, 0.3, 0)
    assert detect_ambiguities(normalized_adjacency(g)).pairs == ()


def test_certify_reports_c2_precondition_violation():
    dec, truth, Z = make_instance(s=2, P=3, seed=5)
    rep = certify(Z, range(Z.shape[0]), truth.g_tilde0_normalized)
    assert not rep.c1_holds and rep.c1_rank == 0
    assert not rep.c2_holds and "zero entries" in rep.c2_note
    assert not rep.certified
