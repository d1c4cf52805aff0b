"""Weighted ℓ1-synthesis LP, iterative reweighting and recovery metrics.

The inner problem is

    minimize   sum_k w_k |(Z g)_k|   subject to   1^T g = 1,

i.e. the epigraph LP ``min w^T t  s.t. -t <= Z g <= t, 1^T g = 1``. By
default it is handed to HiGHS through its LP dual

    maximize   gamma   subject to   Z^T f = gamma 1,  |f_k| <= w_k,

which has ``N`` equality rows instead of ``2NP + 1`` inequality rows; the
primal ``g`` is read back from the equality multipliers. Both routes solve
the same LP and report the same duality gap.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .exceptions import ContractError, ParameterError, SingularFilterError
from .serialization import matrix_to_json
from .spectral import coeffs_from_response, khatri_rao_z, unvec

log = logging.getLogger(__name__)

FORMULATIONS = ("dual", "epigraph")

# gap above which a reported optimum is not trusted
GAP_FAILURE_RTOL = 1e-6


@dataclass(frozen=True)
class L1Problem:
    """``minimize ||w ∘ (Z g)||_1  s.t.  1^T g = 1``."""

    Z: np.ndarray = field(repr=False)
    weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim != 2 or Z.shape[1] == 0:
            raise ContractError(f"Z must be a nonempty 2-D matrix, got shape {Z.shape}")
        if Z.shape[0] % Z.shape[1]:
            raise ContractError(f"Z has {Z.shape[0]} rows, not a multiple of N={Z.shape[1]}")
        w = np.ones(Z.shape[0]) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (Z.shape[0],):
            raise ContractError(f"weights have shape {w.shape}, expected ({Z.shape[0]},)")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ContractError("weights must be strictly positive and finite")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.Z.shape[1]

    @property
    def p(self):
        return self.Z.shape[0] // self.Z.shape[1]

    def objective(self, g):
        return float(np.abs(self.weights * (self.Z @ g)).sum())


@dataclass(frozen=True)
class WeightedL1Solution:
    g_tilde: np.ndarray
    objective: float
    dual_objective: float
    duality_gap: float
    dual_residual: float
    status: str
    message: str = ""

    @property
    def ok(self):
        return self.status == "optimal"


def _highs_options(tol):
    ftol = float(np.clip(tol, 1e-10, 1e-7))
    return {"primal_feasibility_tolerance": ftol, "dual_feasibility_tolerance": ftol}


def _solve_dual(Z, w, tol, Aeq=None):
    M, N = Z.shape
    if Aeq is None:
        Aeq = _dual_constraints(Z)
    c = np.zeros(M + 1)
    c[-1] = -1.0
    bounds = np.empty((M + 1, 2))
    bounds[:M, 0] = -w
    bounds[:M, 1] = w
    bounds[M] = (-np.inf, np.inf)
    res = linprog(c, A_eq=Aeq, b_eq=np.zeros(N), bounds=bounds, method="highs-ds",
                  options=_highs_options(tol))
    if res.status != 0 or res.x is None:
        return None, None, None, res.message
    f, gamma = res.x[:M], res.x[M]
    g = np.asarray(res.eqlin.marginals, dtype=float)
    return g, f, gamma, res.message


def _dual_constraints(Z):
    M, N = Z.shape
    return sp.hstack([sp.csr_matrix(Z.T), sp.csr_matrix(-np.ones((N, 1)))], format="csr")


def _solve_epigraph(Z, w, tol):
    M, N = Z.shape
    Zs = sp.csr_matrix(Z)
    eye = sp.identity(M, format="csr")
    A_ub = sp.vstack([sp.hstack([Zs, -eye]), sp.hstack([-Zs, -eye])], format="csr")
    A_eq = np.concatenate([np.ones(N), np.zeros(M)])[None, :]
    c = np.concatenate([np.zeros(N), w])
    bounds = [(None, None)] * N + [(0, None)] * M
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(2 * M), A_eq=A_eq, b_eq=[1.0], bounds=bounds,
                  method="highs-ds", options=_highs_options(tol))
    if res.status != 0 or res.x is None:
        return None, None, None, res.message
    lam = np.asarray(res.ineqlin.marginals, dtype=float)
    f = lam[M:] - lam[:M]
    return res.x[:N], f, float(res.eqlin.marginals[0]), res.message


def solve_weighted_l1(problem, tol=1e-9, formulation="dual", _cache=None):
    """Solve the weighted ℓ1-synthesis LP.

    Returns a :class:`WeightedL1Solution`. ``status`` is ``"optimal"`` when
    HiGHS reports optimality and the duality gap is below
    ``1e-6 * (1 + |objective|)``; otherwise ``"solver_failure"`` with the best
    iterate available (``NaN`` entries if there is none).
    """
    if formulation not in FORMULATIONS:
        raise ParameterError(f"unknown formulation {formulation!r}")
    Z, w = problem.Z, problem.weights
    if formulation == "dual":
        g, f, gamma, msg = _solve_dual(Z, w, tol, _cache)
    else:
        g, f, gamma, msg = _solve_epigraph(Z, w, tol)
    if g is None:
        nan = np.full(problem.n, np.nan)
        return WeightedL1Solution(nan, np.nan, np.nan, np.inf, np.inf, "solver_failure", msg)
    s = g.sum()
    if s < 0:
        g, f, gamma = -g, -f, -gamma
        s = -s
    if abs(s - 1.0) > 1e-6:
        log.warning("LP multipliers sum to %.3e, renormalizing", s)
    g = g / s
    primal = problem.objective(g)
    gap = primal - gamma
    residual = float(np.abs(Z.T @ f - gamma).max())
    status = "optimal"
    if abs(gap) > GAP_FAILURE_RTOL * (1.0 + abs(primal)):
        status = "solver_failure"
        msg = f"duality gap {gap:.3e} too large; {msg}"
    return WeightedL1Solution(g, primal, float(gamma), float(gap), residual, status, msg)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    previous_objective: float | None
    l1_norm: float
    rel_change: float | None
    duality_gap: float

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class DeconvolutionResult:
    """Output of :func:`reweighted_l1`.

    ``previous_objective`` in each trace record is the previous iterate
    scored under the weights used at that iteration, so the inner solve's
    optimality reads as ``objective <= previous_objective``.
    """

    g_tilde: np.ndarray = field(repr=False)
    X_hat: np.ndarray = field(repr=False)
    h_tilde: np.ndarray | None = field(repr=False)
    iterations: tuple
    status: str
    delta: float
    params: dict = field(default_factory=dict)
    h_hat: np.ndarray | None = field(default=None, repr=False)
    coeff_residual: float | None = None

    @property
    def n_iterations(self):
        return len(self.iterations)

    def to_dict(self):
        return {
            "status": self.status,
            "g_tilde": self.g_tilde.tolist(),
            "X_hat": matrix_to_json(self.X_hat),
            "h_tilde": None if self.h_tilde is None else self.h_tilde.tolist(),
            "h_hat": None if self.h_hat is None else self.h_hat.tolist(),
            "coeff_residual": self.coeff_residual,
            "delta": self.delta,
            "params": self.params,
            "iterations": [r.to_dict() for r in self.iterations],
        }


def recover_inputs(Z, g):
    Z = np.asarray(Z, dtype=float)
    g = np.asarray(g, dtype=float)
    if Z.ndim != 2 or g.shape != (Z.shape[1],):
        raise ContractError(f"g has shape {g.shape}, Z has shape {Z.shape}")
    return unvec(Z @ g, Z.shape[1])


def _safe_reciprocal(g, floor=1e-10):
    if not np.all(np.isfinite(g)) or np.any(np.abs(g) <= floor):
        return None
    return 1.0 / g


def reweighted_l1(Z, delta=None, eps=1e-4, max_iters=10, tol=1e-9, formulation="dual"):
    """Iteratively reweighted ℓ1 minimization.

    Starts from unit weights, and after each solve sets
    ``w_k = 1 / (|vec(X)_k| + delta)``. Stops once the relative ℓ1 change of
    ``X`` between consecutive iterates is at most ``eps`` (not checked after
    the first solve) or after ``max_iters`` solves. ``delta=None`` picks
    ``1e-3 * max(1, max|X^(1)|)`` from the first iterate.
    """
    if delta is not None and not delta > 0:
        raise ParameterError(f"need delta > 0, got {delta}")
    if not eps > 0:
        raise ParameterError(f"need eps > 0, got {eps}")
    if max_iters < 1:
        raise ParameterError(f"need max_iters >= 1, got {max_iters}")
    problem = L1Problem(Z)
    Z = problem.Z
    cache = _dual_constraints(Z) if formulation == "dual" else None
    w = problem.weights
    x_prev = None
    g = np.full(problem.n, np.nan)
    records = []
    status = "max_iters"
    for it in range(1, max_iters + 1):
        sol = solve_weighted_l1(L1Problem(Z, w), tol=tol, formulation=formulation, _cache=cache)
        if not sol.ok:
            log.warning("inner solve failed at iteration %d: %s", it, sol.message)
            if x_prev is None and np.all(np.isfinite(sol.g_tilde)):
                g = sol.g_tilde
            status = "solver_failure"
            break
        g = sol.g_tilde
        x = Z @ g
        if delta is None:
            delta = 1e-3 * max(1.0, float(np.abs(x).max()))
        prev_obj = rel = None
        if x_prev is not None:
            prev_obj = float(np.abs(w * x_prev).sum())
            denom = np.abs(x_prev).sum()
            rel = float(np.abs(x - x_prev).sum() / denom) if denom > 0 else np.inf
        records.append(IterationRecord(it, sol.objective, prev_obj, float(np.abs(x).sum()), rel,
                                       sol.duality_gap))
        x_prev = x
        if rel is not None and rel <= eps:
            status = "converged"
            break
        w = 1.0 / (np.abs(x) + delta)
    X_hat = recover_inputs(Z, g)
    params = {"eps": eps, "max_iters": max_iters, "tol": tol, "formulation": formulation}
    return DeconvolutionResult(g, X_hat, _safe_reciprocal(g), tuple(records), status,
                               float(delta) if delta is not None else float("nan"), params)


def deconvolve(Y, dec, L=None, **kwargs):
    """Blind deconvolution of observations ``Y`` on a known spectral basis.

    Builds the design matrix, runs :func:`reweighted_l1` and, when ``L`` is
    given and the recovered inverse response has no near-zero entries, fits
    order-``L`` filter coefficients to ``1 / g~``.
    """
    res = reweighted_l1(khatri_rao_z(Y, dec), **kwargs)
    if L is None or res.h_tilde is None:
        return res
    fit = recover_filter(res.g_tilde, dec, L)
    return DeconvolutionResult(res.g_tilde, res.X_hat, res.h_tilde, res.iterations, res.status,
                               res.delta, res.params, fit.coeffs, fit.residual)


def relative_error(X_hat, X0):
    """Frobenius error after the best scalar alignment of ``X_hat`` to ``X0``."""
    X_hat = np.asarray(X_hat, dtype=float)
    X0 = np.asarray(X0, dtype=float)
    if X_hat.shape != X0.shape:
        raise ContractError(f"shape mismatch {X_hat.shape} vs {X0.shape}")
    ref = np.linalg.norm(X0)
    if ref == 0:
        raise ContractError("relative error is undefined for X0 = 0")
    if not np.all(np.isfinite(X_hat)):
        return float("nan")
    nh = float(np.vdot(X_hat, X_hat))
    c = float(np.vdot(X_hat, X0)) / nh if nh > 0 else 0.0
    return float(np.linalg.norm(c * X_hat - X0) / ref)


class RecoveredFilter(NamedTuple):
    freq_response: np.ndarray
    coeffs: np.ndarray
    residual: float


def recover_filter(g, dec, L):
    """Filter response ``1 / g~`` and its least-squares order-``L`` coefficients."""
    g = np.asarray(g, dtype=float)
    ht = _safe_reciprocal(g)
    if ht is None:
        raise SingularFilterError("recovered inverse response has a (near) zero entry")
    h, residual = coeffs_from_response(ht, dec, L)
    return RecoveredFilter(ht, h, residual)
