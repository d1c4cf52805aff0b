"""Undirected weighted graphs and their graph-shift operators.

Node indices are 0-based throughout the package.
"""
from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ContractError, DegenerateDegreeError, IngestionError, ParameterError

SHIFT_KINDS = ("adjacency", "normalized_adjacency", "custom")

_HEADER = re.compile(r"#\s*n\s*=\s*(\d+)\s*$")


@dataclass(frozen=True)
class Graph:
    """Undirected graph without self-loops.

    ``edges`` holds ``(i, j, w)`` triples with ``i < j``, sorted, each
    unordered pair at most once and ``w`` strictly positive.
    """

    n: int
    edges: tuple = ()
    weighted: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"graph needs at least one node, got n={self.n}")
        canon = {}
        for i, j, w in self.edges:
            i, j, w = int(i), int(j), float(w)
            if i == j:
                raise ParameterError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ParameterError(f"edge ({i}, {j}) out of range for n={self.n}")
            if not (math.isfinite(w) and w > 0):
                raise ParameterError(f"edge ({i}, {j}) has invalid weight {w}")
            key = (min(i, j), max(i, j))
            if key in canon:
                raise ParameterError(f"duplicate edge {key}")
            canon[key] = w
        object.__setattr__(self, "edges", tuple((i, j, w) for (i, j), w in sorted(canon.items())))

    @property
    def num_edges(self):
        return len(self.edges)

    def adjacency(self):
        """Dense symmetric adjacency matrix."""
        A = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            A[i, j] = A[j, i] = w
        return A

    def degrees(self):
        return self.adjacency().sum(axis=1)

    def neighbors(self):
        adj = [[] for _ in range(self.n)]
        for i, j, _ in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def to_dict(self):
        return {
            "n": self.n,
            "weighted": self.weighted,
            "edges": [[i, j, w] for i, j, w in self.edges],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["n"]), tuple(tuple(e) for e in d["edges"]), bool(d.get("weighted", False)))


@dataclass(frozen=True)
class ShiftOperator:
    """Real symmetric graph-shift matrix plus a tag describing its origin."""

    matrix: np.ndarray = field(repr=False)
    kind: str = "custom"

    def __post_init__(self):
        S = np.array(self.matrix, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ContractError(f"shift must be square, got shape {S.shape}")
        if self.kind not in SHIFT_KINDS:
            raise ParameterError(f"unknown shift kind {self.kind!r}")
        scale = max(np.abs(S).max(initial=0.0), 1.0)
        if np.abs(S - S.T).max(initial=0.0) > 1e-12 * scale:
            raise ContractError("shift operator is not symmetric")
        S = 0.5 * (S + S.T)
        S.setflags(write=False)
        object.__setattr__(self, "matrix", S)

    @property
    def n(self):
        return self.matrix.shape[0]


def erdos_renyi(n, p, seed=None):
    """Unweighted G(n, p) random graph.

    Every unordered pair is included independently with probability ``p``.
    ``seed`` is anything accepted by :func:`numpy.random.default_rng`.
    """
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    if not (0 < p <= 1):
        raise ParameterError(f"need 0 < p <= 1, got {p}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return Graph(n, tuple((int(i), int(j), 1.0) for i, j in zip(iu[keep], ju[keep])))


def load_edge_list(path):
    """Read a whitespace-separated ``i j [w]`` edge list.

    Blank lines and ``#`` comments are skipped. A ``# n=<int>`` header fixes
    the node count, otherwise it is one plus the largest index seen.
    Repeating an edge with the same weight is tolerated.
    """
    path = Path(path)
    n_header = None
    weights = {}
    weighted = False
    max_index = -1
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = _HEADER.match(line)
                if m:
                    n_header = int(m.group(1))
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise IngestionError(f"expected 'i j [w]', got {line!r}", lineno)
            try:
                i, j = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise IngestionError(f"cannot parse {line!r}", lineno) from None
            if i < 0 or j < 0:
                raise IngestionError(f"negative node index in {line!r}", lineno)
            if i == j:
                raise IngestionError(f"self-loop at node {i}", lineno)
            if not (math.isfinite(w) and w > 0):
                raise IngestionError(f"weight must be positive and finite, got {w}", lineno)
            key = (min(i, j), max(i, j))
            if key in weights and weights[key] != w:
                raise IngestionError(
                    f"edge {key} repeated with conflicting weight {w} (was {weights[key]})", lineno
                )
            weights[key] = w
            weighted = weighted or len(parts) == 3
            max_index = max(max_index, i, j)
    n = n_header if n_header is not None else max_index + 1
    if n < 1:
        raise IngestionError("empty edge list without '# n=' header")
    if max_index >= n:
        raise IngestionError(f"node index {max_index} exceeds header n={n}")
    return Graph(n, tuple((i, j, w) for (i, j), w in weights.items()), weighted)


def write_edge_list(g, path):
    lines = [f"# n={g.n}"]
    lines += [f"{i} {j} {w!r}" for i, j, w in g.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def adjacency_shift(g):
    return ShiftOperator(g.adjacency(), "adjacency")


def normalized_adjacency(g):
    """``D^{-1/2} A D^{-1/2}``; raises on isolated nodes."""
    A = g.adjacency()
    d = A.sum(axis=1)
    isolated = np.flatnonzero(d <= 0)
    if isolated.size:
        raise DegenerateDegreeError(f"isolated nodes {isolated.tolist()} have zero degree")
    s = 1.0 / np.sqrt(d)
    return ShiftOperator(A * s[:, None] * s[None, :], "normalized_adjacency")


def make_shift(g, kind="normalized_adjacency"):
    if kind == "normalized_adjacency":
        return normalized_adjacency(g)
    if kind == "adjacency":
        return adjacency_shift(g)
    raise ParameterError(f"cannot build shift of kind {kind!r} from a graph")


def custom_shift(matrix, g=None):
    """Wrap a user supplied symmetric matrix.

    When ``g`` is given the off-diagonal sparsity pattern must match its
    adjacency exactly.
    """
    S = ShiftOperator(matrix, "custom")
    if g is not None:
        if S.n != g.n:
            raise ContractError(f"shift is {S.n}x{S.n} but graph has {g.n} nodes")
        off = ~np.eye(g.n, dtype=bool)
        if not np.array_equal((S.matrix != 0) & off, (g.adjacency() != 0) & off):
            raise ContractError("shift sparsity pattern differs from the graph adjacency")
    return S


def is_connected(g):
    seen = [False] * g.n
    seen[0] = True
    queue = deque([0])
    adj = g.neighbors()
    count = 1
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                queue.append(v)
    return count == g.n


def path_graph(n):
    return Graph(n, tuple((i, i + 1, 1.0) for i in range(n - 1)))


def star_graph(weights):
    """Hub 0 joined to leaves ``1..len(weights)`` with the given weights."""
    weighted = any(w != 1.0 for w in weights)
    return Graph(len(weights) + 1, tuple((0, k + 1, float(w)) for k, w in enumerate(weights)), weighted)
