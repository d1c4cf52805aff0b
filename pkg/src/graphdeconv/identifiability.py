"""Permutation ambiguities and exact-recovery certificates.

A pair of nodes ``(i, j)`` is ambiguous when ``u = (e_i - e_j) / sqrt(2)``
is an eigenvector of the shift: flipping the sign of the matching entry of
the filter response and swapping rows ``i`` and ``j`` of the inputs leaves
the observations unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .exceptions import ContractError
from .graphs import Graph, ShiftOperator
from .spectral import SpectralDecomposition, spectral_operator

AMBIGUITY_TOL = 1e-9
C2_MARGIN_TOL = 1e-6
C2_GAMMA_TOL = 1e-8


@dataclass(frozen=True)
class AmbiguityReport:
    pairs: tuple = ()

    @property
    def ambiguous(self):
        return bool(self.pairs)

    def to_dict(self):
        return {
            "ambiguous": self.ambiguous,
            "pairs": [{"i": i, "j": j, "eigenvalue": lam} for i, j, lam in self.pairs],
        }


def pair_vector(n, i, j):
    u = np.zeros(n)
    u[i] = 1 / np.sqrt(2)
    u[j] = -1 / np.sqrt(2)
    return u


def detect_ambiguities(S, tol=AMBIGUITY_TOL):
    """Find every node pair whose difference vector is an eigenvector of ``S``.

    ``S u`` is parallel to ``u = (e_i - e_j)/sqrt(2)`` exactly when columns
    ``i`` and ``j`` of ``S`` agree outside rows ``i, j`` and ``S_ii = S_jj``;
    the eigenvalue is then ``S_ii - S_ij``. Testing this directly does not
    depend on how a degenerate eigenspace happens to be parametrized.
    """
    S = S.matrix if isinstance(S, ShiftOperator) else np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ContractError(f"expected a square shift, got shape {S.shape}")
    if np.abs(S - S.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(S).max(initial=0.0)):
        raise ContractError("shift is not symmetric")
    n = S.shape[0]
    atol = tol * max(1.0, np.abs(S).max(initial=0.0))
    pairs = []
    rows = np.arange(n)
    for i in range(n - 1):
        diff = np.abs(S[:, i + 1:] - S[:, [i]])
        # ignore rows i and j of each column difference
        diff[i, :] = 0.0
        diff[rows[i + 1:], np.arange(n - i - 1)] = 0.0
        ok = (diff.max(axis=0) <= atol) & (np.abs(np.diag(S)[i + 1:] - S[i, i]) <= atol)
        for j in np.flatnonzero(ok) + i + 1:
            pairs.append((i, int(j), float(S[i, i] - S[i, j])))
    return AmbiguityReport(tuple(pairs))


def align_pair(dec, i, j, tol=1e-8):
    """Rotate ``dec``'s eigenbasis so that ``u^(i,j)`` is one of its columns.

    Needed when the pair's eigenvalue is repeated and the solver returned an
    arbitrary basis of that eigenspace. Returns ``(new_dec, k)`` with column
    ``k`` equal to ``u^(i,j)``.
    """
    V = dec.eigenvectors
    lam = dec.eigenvalues
    u = pair_vector(dec.n, i, j)
    S = dec.shift()
    mu = float(u @ S @ u)
    if np.abs(S @ u - mu * u).max() > tol * max(1.0, np.abs(lam).max()):
        raise ContractError(f"u^({i},{j}) is not an eigenvector of the shift")
    block = np.flatnonzero(np.abs(lam - mu) <= tol * max(1.0, np.abs(lam).max()))
    if block.size == 0:
        raise ContractError(f"no eigenvalue matches {mu}")
    E = V[:, block]
    rest = E - np.outer(u, u @ E)
    Q, s, _ = np.linalg.svd(rest, full_matrices=False)
    newV = V.copy()
    newV[:, block[0]] = u
    newV[:, block[1:]] = Q[:, : block.size - 1]
    return SpectralDecomposition(lam, newV), int(block[0])


def flip_operator(dec, p):
    """``V diag(p) V^T`` for a sign vector ``p``."""
    return spectral_operator(np.asarray(p, dtype=float), dec)


def construct_alternative(X0, h_tilde0, dec, pair, tol=1e-8):
    """Second solution ``(P X0, diag(p) h~0)`` producing the same observations.

    ``pair`` is ``(i, j, k)``: column ``k`` of the eigenbasis must equal
    ``±u^(i,j)``. ``P = I - 2 u u^T`` swaps nodes ``i`` and ``j`` and ``p``
    is all ones except ``p_k = -1``.
    """
    i, j, k = pair
    u = pair_vector(dec.n, i, j)
    v = dec.eigenvectors[:, k]
    if min(np.abs(v - u).max(), np.abs(v + u).max()) > tol:
        raise ContractError(f"eigenvector {k} is not ±u^({i},{j}); see align_pair")
    # I - 2 u u^T is exactly the swap of rows i and j; swapping keeps zeros exact
    X1 = np.array(X0, dtype=float)
    X1[[i, j]] = X1[[j, i]]
    p = np.ones(dec.n)
    p[k] = -1.0
    h1 = p * np.asarray(h_tilde0, dtype=float)
    return X1, h1


def seven_node_fixture():
    """7-node toy graph on which nodes 1 and 3 are indistinguishable.

    Both are joined to nodes 0 and 2 only. With the adjacency shift, the
    eigenvalue 0 is simple, ascending index 3, and its eigenvector is
    ``u^(1,3)``.
    """
    edges = ((0, 1), (1, 2), (0, 3), (2, 3), (0, 2), (0, 4), (0, 5), (2, 4), (4, 6))
    return Graph(7, tuple((a, b, 1.0) for a, b in edges))


def triangle_with_pendant():
    return Graph(4, ((0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0), (0, 3, 1.0)))


# -- exact recovery certificate ----------------------------------------------

def _split_support(Z, support):
    M = Z.shape[0]
    idx = np.asarray(sorted(set(int(s) for s in np.asarray(support).ravel())), dtype=int)
    if idx.size and (idx[0] < 0 or idx[-1] >= M):
        raise ContractError(f"support indices must lie in [0, {M})")
    mask = np.zeros(M, dtype=bool)
    mask[idx] = True
    return mask


def check_c1(Z, support):
    """Numerical rank of the off-support rows of ``Z``; holds iff it is ``N - 1``."""
    Z = np.asarray(Z, dtype=float)
    mask = _split_support(Z, support)
    Zc = Z[~mask]
    if Zc.shape[0] == 0:
        return 0, False
    sv = np.linalg.svd(Zc, compute_uv=False)
    thresh = sv.max(initial=0.0) * max(Z.shape) * np.finfo(float).eps * 64
    rank = int(np.count_nonzero(sv > thresh))
    return rank, rank == Z.shape[1] - 1


def check_c2(Z, support, g0):
    """Search for the dual certificate of exact recovery.

    With ``f_I = sign(Z_I g0)`` fixed, minimizes ``||f_{I^c}||_inf`` subject
    to ``Z^T f = gamma 1`` over ``(f_{I^c}, gamma)``. Returns
    ``(margin, gamma, holds)``; the certificate holds when the margin is
    below ``1 - 1e-6`` with ``|gamma| > 1e-8``. An infeasible system gives
    ``margin = inf``.
    """
    Z = np.asarray(Z, dtype=float)
    g0 = np.asarray(g0, dtype=float)
    mask = _split_support(Z, support)
    ZI, Zc = Z[mask], Z[~mask]
    n = Z.shape[1]
    zg = Z @ g0
    scale = max(1.0, np.abs(zg).max(initial=0.0))
    if Zc.shape[0] and np.abs(Zc @ g0).max() > 1e-8 * scale:
        raise ContractError("g0 is not consistent with the support: Z_{I^c} g0 != 0")
    zI = ZI @ g0
    if np.any(np.abs(zI) <= 1e-12 * scale):
        raise ContractError("Z_I g0 has zero entries; the sign pattern on the support is ambiguous")
    rhs = -ZI.T @ np.sign(zI)
    m = Zc.shape[0]

    if m == 0:
        # no free variables: Z_I^T f_I must already be a multiple of 1
        target = -rhs
        gamma = float(target.mean())
        feasible = np.abs(target - gamma).max() <= 1e-9 * max(1.0, np.abs(target).max())
        if not feasible:
            return float("inf"), float("nan"), False
        return 0.0, gamma, abs(gamma) > C2_GAMMA_TOL

    # variables (f_c [m], gamma, t)
    c = np.zeros(m + 2)
    c[-1] = 1.0
    A_eq = np.hstack([Zc.T, -np.ones((n, 1)), np.zeros((n, 1))])
    A_ub = np.vstack([
        np.hstack([np.eye(m), np.zeros((m, 1)), -np.ones((m, 1))]),
        np.hstack([-np.eye(m), np.zeros((m, 1)), -np.ones((m, 1))]),
    ])
    bounds = [(None, None)] * (m + 1) + [(0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(2 * m), A_eq=A_eq, b_eq=rhs, bounds=bounds,
                  method="highs")
    if res.status != 0:
        return float("inf"), float("nan"), False
    t_star, gamma = float(res.x[-1]), float(res.x[m])
    if t_star < 1 - C2_MARGIN_TOL and abs(gamma) <= C2_GAMMA_TOL:
        # margin is fine but gamma vanished: look for a certificate with |gamma| as large as
        # possible inside a slightly looser box
        cap = 0.5 * (1.0 + t_star)
        bounds2 = [(-cap, cap)] * m + [(None, None)]
        best = gamma
        for sgn in (1.0, -1.0):
            c2 = np.zeros(m + 1)
            c2[m] = -sgn
            r2 = linprog(c2, A_eq=A_eq[:, : m + 1], b_eq=rhs, bounds=bounds2, method="highs")
            if r2.status == 0 and abs(r2.x[m]) > abs(best):
                best = float(r2.x[m])
                t_star = float(np.abs(r2.x[:m]).max(initial=0.0))
        gamma = best
    holds = t_star < 1 - C2_MARGIN_TOL and abs(gamma) > C2_GAMMA_TOL
    return t_star, gamma, holds


@dataclass(frozen=True)
class CertificateReport:
    c1_rank: int
    c1_holds: bool
    c2_margin: float
    c2_gamma: float
    c2_holds: bool
    n: int = field(default=0)
    c2_note: str = ""

    @property
    def certified(self):
        return self.c1_holds and self.c2_holds

    def to_dict(self):
        return {
            "c1_rank": self.c1_rank,
            "c1_holds": self.c1_holds,
            "c2_margin": self.c2_margin,
            "c2_gamma": self.c2_gamma,
            "c2_holds": self.c2_holds,
            "certified": self.certified,
            "n": self.n,
            "c2_note": self.c2_note,
        }


def certify(Z, support, g0):
    """Run both exact-recovery checks on one instance.

    A violated precondition of the dual check (``g0`` inconsistent with the
    support, or zeros in ``Z_I g0``) is recorded in ``c2_note`` with
    ``c2_holds=False`` instead of being raised.
    """
    rank, c1 = check_c1(Z, support)
    try:
        margin, gamma, c2 = check_c2(Z, support, g0)
        note = ""
    except ContractError as exc:
        margin, gamma, c2, note = float("nan"), float("nan"), False, str(exc)
    return CertificateReport(rank, c1, margin, gamma, c2, np.asarray(Z).shape[1], note)
