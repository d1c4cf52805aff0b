"""Synthetic ground truth: sparse inputs, random filters and diffused observations."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError, NonInvertibleFilterError, ParameterError
from .serialization import matrix_from_json, matrix_to_json
from .spectral import FilterSpec, apply_filter, freq_response, inverse_response, is_invertible

log = logging.getLogger(__name__)

FILTER_DRAW_BUDGET = 100


@dataclass(frozen=True)
class SparseInputMatrix:
    """``N x P`` input signals. ``sparsity_s`` records the generator's target."""

    values: np.ndarray = field(repr=False)
    sparsity_s: int | float | None = None
    mode: str = "custom"

    def __post_init__(self):
        X = np.array(self.values, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        X.setflags(write=False)
        object.__setattr__(self, "values", X)

    @property
    def shape(self):
        return self.values.shape

    @property
    def support(self):
        rows, cols = np.nonzero(self.values)
        return set(zip(rows.tolist(), cols.tolist()))

    @property
    def nnz(self):
        return int(np.count_nonzero(self.values))

    def vec_support(self):
        """Sorted indices of nonzeros in the column-major vectorization."""
        return np.flatnonzero(self.values.reshape(-1, order="F"))


def bernoulli_gaussian(n, p_cols, theta, seed=None):
    """Entries nonzero independently with probability ``theta``, values N(0, 1)."""
    if not (0 <= theta <= 1):
        raise ParameterError(f"need 0 <= theta <= 1, got {theta}")
    rng = np.random.default_rng(seed)
    mask = rng.random((n, p_cols)) < theta
    values = rng.standard_normal((n, p_cols))
    return SparseInputMatrix(np.where(mask, values, 0.0), theta, "bernoulli_gaussian")


def fixed_sparsity_inputs(n, p_cols, s, seed=None):
    """Exactly ``s`` nonzeros placed uniformly over the whole ``N x P`` grid."""
    if not (0 < s <= n * p_cols):
        raise ParameterError(f"need 0 < s <= {n * p_cols}, got {s}")
    rng = np.random.default_rng(seed)
    flat = np.zeros(n * p_cols)
    idx = rng.choice(n * p_cols, size=s, replace=False)
    flat[idx] = rng.standard_normal(s)
    return SparseInputMatrix(flat.reshape((n, p_cols), order="F"), s, "total")


def column_sparse_inputs(n, p_cols, s, seed=None):
    """Exactly ``s`` nonzeros in every column, rows drawn without replacement."""
    if not (0 < s <= n):
        raise ParameterError(f"need 0 < s <= {n}, got {s}")
    rng = np.random.default_rng(seed)
    X = np.zeros((n, p_cols))
    for j in range(p_cols):
        rows = rng.choice(n, size=s, replace=False)
        X[rows, j] = rng.standard_normal(s)
    return SparseInputMatrix(X, s, "per_column")


SPARSITY_MODES = {"per_column": column_sparse_inputs, "total": fixed_sparsity_inputs}


def sparse_inputs(n, p_cols, s, seed=None, mode="per_column"):
    try:
        gen = SPARSITY_MODES[mode]
    except KeyError:
        raise ParameterError(f"unknown sparsity mode {mode!r}") from None
    return gen(n, p_cols, s, seed)


def draw_filter(L, alpha, seed, dec, budget=FILTER_DRAW_BUDGET):
    """Like :func:`make_filter` but also returns the number of draws used."""
    if L < 1:
        raise ParameterError(f"need L >= 1, got {L}")
    if alpha < 0:
        raise ParameterError(f"need alpha >= 0, got {alpha}")
    rng = np.random.default_rng(seed)
    e1 = np.zeros(L)
    e1[0] = 1.0
    for draw in range(1, budget + 1):
        h = e1 + alpha * rng.standard_normal(L)
        h = h / np.abs(h).sum()
        f = FilterSpec(h, freq_response(h, dec))
        if is_invertible(f, dec):
            if draw > 1:
                log.info("filter redrawn %d time(s) (alpha=%g, L=%d)", draw - 1, alpha, L)
            return f, draw
    raise NonInvertibleFilterError(
        f"no invertible filter in {budget} draws (alpha={alpha}, L={L})"
    )


def make_filter(L, alpha, seed, dec, budget=FILTER_DRAW_BUDGET):
    """Random filter ``(e1 + alpha b) / ||e1 + alpha b||_1`` with Gaussian ``b``.

    Draws that are not invertible on ``dec`` are discarded and redrawn.
    """
    return draw_filter(L, alpha, seed, dec, budget)[0]


@dataclass(frozen=True)
class GroundTruth:
    """Noiseless instance ``Y = H0 X0``.

    ``g_tilde0`` is the exact inverse response ``1 / h~0``; the ℓ1 solver
    instead returns the representative with unit sum, ``g_tilde0 / scale``
    where ``scale = sum(g_tilde0)``.
    """

    X0: SparseInputMatrix
    h0: FilterSpec
    g_tilde0: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)

    @property
    def scale(self):
        return float(self.g_tilde0.sum())

    @property
    def g_tilde0_normalized(self):
        return self.g_tilde0 / self.scale

    def to_dict(self):
        return {
            "X0": matrix_to_json(self.X0.values),
            "sparsity_s": self.X0.sparsity_s,
            "sparsity_mode": self.X0.mode,
            "h0": self.h0.to_dict(),
            "g_tilde0": self.g_tilde0.tolist(),
            "Y": matrix_to_json(self.Y),
        }

    @classmethod
    def from_dict(cls, d):
        X0 = SparseInputMatrix(
            matrix_from_json(d["X0"]), d.get("sparsity_s"), d.get("sparsity_mode", "custom")
        )
        g0 = np.asarray(d["g_tilde0"], dtype=float)
        return cls(X0, FilterSpec.from_dict(d["h0"]), g0, matrix_from_json(d["Y"]))


def synthesize(X0, h0, dec):
    if not isinstance(X0, SparseInputMatrix):
        X0 = SparseInputMatrix(X0)
    if X0.shape[0] != dec.n:
        raise ContractError(f"inputs have {X0.shape[0]} rows, graph has {dec.n} nodes")
    ht = h0.response(dec)
    if h0.freq_response is None:
        h0 = FilterSpec(h0.coeffs, ht)
    g0 = inverse_response(ht)
    Y = apply_filter(ht, dec, X0.values)
    return GroundTruth(X0, h0, g0, Y)

