"""Frequency-domain algebra on a symmetric graph shift.

Vectorization is column-major everywhere: ``vec(X)`` stacks the columns of
an ``N x P`` matrix, so entry ``(n, p)`` lands at position ``p * N + n``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import ConditioningWarning, ContractError, ParameterError, SingularFilterError
from .graphs import ShiftOperator

REPEATED_EIG_RTOL = 1e-9


@dataclass(frozen=True)
class SpectralDecomposition:
    """``S = V diag(eigenvalues) V^T`` with ascending eigenvalues.

    Each eigenvector is signed so its largest-magnitude entry is positive
    (first such entry on ties).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("eigenvalues", "eigenvectors"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n(self):
        return self.eigenvalues.size

    def vandermonde(self, L):
        return vandermonde(self.eigenvalues, L)

    def shift(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T

    def distinct_eigenvalue_count(self):
        lam = self.eigenvalues
        tol = REPEATED_EIG_RTOL * max(np.abs(lam).max(initial=0.0), 1e-300)
        return 1 + int(np.count_nonzero(np.diff(lam) > tol))


def _as_matrix(S):
    if isinstance(S, ShiftOperator):
        return S.matrix
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {S.shape}")
    return S


def canonical_signs(V):
    """Flip columns so the largest-magnitude entry of each is positive."""
    V = np.array(V, dtype=float)
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def eig_sym(S):
    S = _as_matrix(S)
    scale = max(np.abs(S).max(initial=0.0), 1.0)
    if np.abs(S - S.T).max(initial=0.0) > 1e-12 * scale:
        raise ContractError("eig_sym requires a symmetric matrix")
    lam, V = np.linalg.eigh(0.5 * (S + S.T))
    return SpectralDecomposition(lam, canonical_signs(V))


def vandermonde(lam, L):
    """``N x L`` matrix of powers ``lam_i ** j`` for ``j = 0..L-1``."""
    lam = np.asarray(lam, dtype=float)
    if not (1 <= L <= lam.size):
        raise ParameterError(f"filter order L={L} outside [1, {lam.size}]")
    return np.vander(lam, L, increasing=True)


def freq_response(h, dec):
    h = np.asarray(h, dtype=float)
    return dec.vandermonde(h.size) @ h


@dataclass(frozen=True)
class FilterSpec:
    """Graph filter given by its coefficients, its frequency response, or both."""

    coeffs: np.ndarray | None = None
    freq_response: np.ndarray | None = None

    def __post_init__(self):
        if self.coeffs is None and self.freq_response is None:
            raise ParameterError("FilterSpec needs coeffs or freq_response")
        for name in ("coeffs", "freq_response"):
            v = getattr(self, name)
            if v is not None:
                v = np.array(v, dtype=float).ravel()
                v.setflags(write=False)
                object.__setattr__(self, name, v)

    @property
    def order(self):
        return None if self.coeffs is None else self.coeffs.size

    @classmethod
    def from_coeffs(cls, h, dec):
        h = np.asarray(h, dtype=float)
        return cls(h, freq_response(h, dec))

    def response(self, dec):
        """Frequency response on ``dec``, checking consistency when both forms are held."""
        if self.freq_response is None:
            return freq_response(self.coeffs, dec)
        if self.freq_response.size != dec.n:
            raise ContractError(
                f"response has length {self.freq_response.size}, graph has {dec.n} nodes"
            )
        if self.coeffs is not None:
            ref = freq_response(self.coeffs, dec)
            if np.abs(ref - self.freq_response).max() > 1e-9 * max(1.0, np.abs(ref).max()):
                raise ContractError("coeffs and freq_response disagree on this decomposition")
        return self.freq_response

    def to_dict(self):
        return {
            "coeffs": None if self.coeffs is None else self.coeffs.tolist(),
            "freq_response": None if self.freq_response is None else self.freq_response.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("coeffs"), d.get("freq_response"))


def _response(f, dec):
    if isinstance(f, FilterSpec):
        return f.response(dec)
    return np.asarray(f, dtype=float)


def spectral_operator(response, dec):
    """Dense ``V diag(response) V^T``."""
    V = dec.eigenvectors
    return (V * response) @ V.T


def apply_filter(f, dec, X):
    """``V diag(h~) V^T X`` for a filter spec (or raw response vector) ``f``."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] != dec.n:
        raise ContractError(f"signal has {X.shape[0]} rows, graph has {dec.n} nodes")
    ht = _response(f, dec)
    V = dec.eigenvectors
    if X.ndim == 1:
        return V @ (ht * (V.T @ X))
    return V @ (ht[:, None] * (V.T @ X))


def polynomial_filter(h, S, X):
    """``sum_l h_l S^l X`` by Horner's rule, without any eigendecomposition."""
    S = _as_matrix(S)
    X = np.asarray(X, dtype=float)
    if X.shape[0] != S.shape[0]:
        raise ContractError(f"signal has {X.shape[0]} rows, shift is {S.shape[0]}x{S.shape[0]}")
    h = np.asarray(h, dtype=float)
    out = h[-1] * X
    for coef in h[-2::-1]:
        out = S @ out + coef * X
    return out


def default_invertibility_tol(ht):
    return 1e-8 * np.abs(ht).max(initial=0.0)


def is_invertible(f, dec, tol=None):
    ht = _response(f, dec)
    if tol is None:
        tol = default_invertibility_tol(ht)
    return bool(ht.size) and bool(np.abs(ht).min() > tol)


def inverse_response(f, dec=None, tol=None):
    """Elementwise reciprocal of the frequency response.

    ``f`` may be a :class:`FilterSpec` (``dec`` is then needed unless it
    already stores its response) or a plain response vector.
    """
    if not isinstance(f, FilterSpec):
        ht = np.asarray(f, dtype=float)
    elif dec is not None:
        ht = f.response(dec)
    elif f.freq_response is not None:
        ht = f.freq_response
    else:
        raise ContractError("need a decomposition to evaluate the filter response")
    if tol is None:
        tol = default_invertibility_tol(ht)
    if not (ht.size and np.abs(ht).min() > tol):
        k = int(np.argmin(np.abs(ht)))
        raise SingularFilterError(f"frequency response vanishes at index {k} (|h~|={abs(ht[k]):.3e})")
    return 1.0 / ht


def vec(X):
    return np.asarray(X).reshape(-1, order="F")


def unvec(x, n):
    x = np.asarray(x)
    if x.size % n:
        raise ContractError(f"vector of length {x.size} is not a multiple of N={n}")
    return x.reshape((n, x.size // n), order="F")


def khatri_rao_z(Y, dec):
    """Design matrix ``Z = (Y^T V) ⊙ V`` so that ``Z g~ = vec(V diag(g~) V^T Y)``.

    Row ``p * N + n`` of ``Z`` multiplies into entry ``(n, p)`` of the
    recovered inputs.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != dec.n:
        raise ContractError(f"observations have {Y.shape[0]} rows, graph has {dec.n} nodes")
    V = dec.eigenvectors
    return scipy.linalg.khatri_rao(Y.T @ V, V)


def coeffs_from_response(ht, dec, L):
    """Least-squares filter coefficients of order ``L`` for a response.

    Returns ``(h, residual)`` with ``residual = ||Psi_L h - ht||_2``. When
    ``Psi_L`` is rank deficient (repeated eigenvalues) the minimum-norm
    solution is returned and a :class:`ConditioningWarning` is emitted, as
    it is when the fit leaves a residual on rows with repeated eigenvalues.
    """
    ht = np.asarray(ht, dtype=float)
    Psi = dec.vandermonde(L)
    h, _, rank, sv = np.linalg.lstsq(Psi, ht, rcond=None)
    residual = float(np.linalg.norm(Psi @ h - ht))
    distinct = dec.distinct_eigenvalue_count()
    if rank < L:
        warnings.warn(
            f"Vandermonde matrix has rank {rank} < L={L} ({distinct} distinct eigenvalues); "
            "returning the minimum-norm coefficients",
            ConditioningWarning,
            stacklevel=2,
        )
    elif distinct < dec.n and residual > 1e-8 * max(1.0, np.linalg.norm(ht)):
        warnings.warn(
            f"response is inconsistent across repeated eigenvalues (residual {residual:.3e})",
            ConditioningWarning,
            stacklevel=2,
        )
    return h, residual
