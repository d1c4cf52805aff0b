"""Recovery-rate grids over sparsity, number of signals and filter order.

Every trial draws its own graph, inputs and filter from a seed derived from
``(base_seed, cell values, trial index)`` only, so results do not depend on
the number of worker processes or on execution order.
"""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import GraphDeconvError, NonInvertibleFilterError, ParameterError
from .graphs import erdos_renyi, is_connected, load_edge_list, make_shift
from .identifiability import detect_ambiguities
from .serialization import SCHEMA_VERSION, read_json, write_json
from .signals import SPARSITY_MODES, draw_filter, sparse_inputs, synthesize
from .solver import reweighted_l1, relative_error
from .spectral import eig_sym, khatri_rao_z

log = logging.getLogger(__name__)

AXES = ("S", "P", "L")
CSV_FIELDS = ("success_rate", "mean_error", "trials", "solver_failures", "ambiguity_redraws")


class DrawBudgetExceeded(GraphDeconvError):
    """No admissible random graph within the redraw budget."""

    def __init__(self, message, graph_redraws=0, ambiguity_redraws=0):
        super().__init__(message)
        self.graph_redraws = graph_redraws
        self.ambiguity_redraws = ambiguity_redraws


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid definition. ``axes`` is a tuple of ``(name, values)`` pairs, names in S/P/L.

    Parameters not swept by an axis take the fixed values ``S``, ``P``, ``L``.
    ``workers`` only controls parallelism and never changes results.
    """

    axes: tuple = (("S", (25,)), ("P", (10,)))
    n: int = 50
    edge_prob: float = 0.3
    graph_file: str | None = None
    S: int = 25
    P: int = 10
    L: int = 5
    alpha: float = 0.1
    trials: int = 20
    success_threshold: float = 0.01
    base_seed: int = 0
    workers: int = 1
    sparsity_mode: str = "per_column"
    shift: str = "normalized_adjacency"
    delta: float | None = None
    eps: float = 1e-4
    max_iters: int = 10
    tol: float = 1e-9
    redraw_budget: int = 100

    def __post_init__(self):
        axes = tuple((str(name), tuple(int(v) for v in values)) for name, values in self.axes)
        object.__setattr__(self, "axes", axes)

    def validate(self):
        names = [a for a, _ in self.axes]
        if not 1 <= len(names) <= 2:
            raise ParameterError(f"need one or two axes, got {names}")
        if len(set(names)) != len(names) or any(a not in AXES for a in names):
            raise ParameterError(f"axes must be distinct names from {AXES}, got {names}")
        for name, values in self.axes:
            if not values:
                raise ParameterError(f"axis {name} has no values")
            if min(values) < 1:
                raise ParameterError(f"axis {name} values must be >= 1")
        if self.trials < 1:
            raise ParameterError(f"need trials >= 1, got {self.trials}")
        if not self.success_threshold > 0:
            raise ParameterError("success_threshold must be positive")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")
        if self.sparsity_mode not in SPARSITY_MODES:
            raise ParameterError(f"unknown sparsity mode {self.sparsity_mode!r}")
        if self.alpha < 0:
            raise ParameterError("alpha must be >= 0")
        if self.graph_file is None:
            if self.n < 2 or not (0 < self.edge_prob <= 1):
                raise ParameterError("Erdos-Renyi source needs n >= 2 and 0 < p <= 1")
        elif not Path(self.graph_file).exists():
            raise ParameterError(f"graph file {self.graph_file} does not exist")
        return self

    @property
    def axis_names(self):
        return tuple(a for a, _ in self.axes)

    def cells(self):
        return list(itertools.product(*(values for _, values in self.axes)))

    def cell_params(self, cell):
        params = {"S": self.S, "P": self.P, "L": self.L}
        params.update(zip(self.axis_names, cell))
        return params

    def trial_seed(self, cell, trial):
        return np.random.SeedSequence(self.base_seed, spawn_key=tuple(int(v) for v in cell) + (trial,))

    def to_dict(self):
        d = asdict(self)
        d["axes"] = [[name, list(values)] for name, values in self.axes]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["axes"] = tuple((name, tuple(values)) for name, values in d["axes"])
        return cls(**d)


@dataclass(frozen=True)
class Instance:
    graph: object
    shift: object
    dec: object
    truth: object
    graph_redraws: int
    ambiguity_redraws: int
    filter_draws: int


@lru_cache(maxsize=8)
def _load_graph(path):
    return load_edge_list(path)


def draw_graph(cfg, rng):
    """Connected, ambiguity-free graph and its shift; returns redraw counts too."""
    graph_redraws = ambiguity_redraws = 0
    for _ in range(cfg.redraw_budget):
        g = _load_graph(cfg.graph_file) if cfg.graph_file else erdos_renyi(cfg.n, cfg.edge_prob, rng)
        if not is_connected(g):
            graph_redraws += 1
        else:
            S = make_shift(g, cfg.shift)
            if not detect_ambiguities(S).ambiguous:
                return g, S, graph_redraws, ambiguity_redraws
            ambiguity_redraws += 1
        if cfg.graph_file:
            break
    raise DrawBudgetExceeded(
        f"no connected, unambiguous graph after {graph_redraws + ambiguity_redraws} draws",
        graph_redraws, ambiguity_redraws,
    )


def draw_instance(cfg, params, seed_seq):
    """Graph, inputs, filter and observations for one trial."""
    graph_ss, input_ss, filter_ss = seed_seq.spawn(3)
    g, S, graph_redraws, amb_redraws = draw_graph(cfg, np.random.default_rng(graph_ss))
    dec = eig_sym(S)
    X0 = sparse_inputs(g.n, params["P"], params["S"], np.random.default_rng(input_ss), cfg.sparsity_mode)
    h0, draws = draw_filter(params["L"], cfg.alpha, np.random.default_rng(filter_ss), dec)
    return Instance(g, S, dec, synthesize(X0, h0, dec), graph_redraws, amb_redraws, draws)


@dataclass(frozen=True)
class TrialRecord:
    cell: tuple
    trial: int
    error: float
    success: bool
    status: str
    iterations: int
    graph_redraws: int = 0
    ambiguity_redraws: int = 0
    filter_draws: int = 0
    message: str = ""

    def to_dict(self):
        d = asdict(self)
        d["cell"] = list(self.cell)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["cell"] = tuple(d["cell"])
        if d["error"] is None:
            d["error"] = float("nan")
        return cls(**d)


def run_trial(cfg, cell, trial):
    cell = tuple(int(v) for v in cell)
    params = cfg.cell_params(cell)
    try:
        inst = draw_instance(cfg, params, cfg.trial_seed(cell, trial))
    except DrawBudgetExceeded as exc:
        return TrialRecord(cell, trial, float("nan"), False, "draw_failure", 0,
                           exc.graph_redraws, exc.ambiguity_redraws, 0, str(exc))
    except NonInvertibleFilterError as exc:
        return TrialRecord(cell, trial, float("nan"), False, "draw_failure", 0, message=str(exc))
    Z = khatri_rao_z(inst.truth.Y, inst.dec)
    res = reweighted_l1(Z, delta=cfg.delta, eps=cfg.eps, max_iters=cfg.max_iters, tol=cfg.tol)
    err = relative_error(res.X_hat, inst.truth.X0.values)
    success = bool(res.status != "solver_failure" and err < cfg.success_threshold)
    return TrialRecord(cell, trial, err, success, res.status, res.n_iterations,
                       inst.graph_redraws, inst.ambiguity_redraws, inst.filter_draws)


def _run_task(task):
    cfg, cell, trial = task
    return run_trial(cfg, cell, trial)


@dataclass(frozen=True)
class CellResult:
    cell: tuple
    trials: int
    successes: int
    mean_error: float
    solver_failures: int
    draw_failures: int
    ambiguity_redraws: int

    @property
    def success_rate(self):
        return self.successes / self.trials if self.trials else float("nan")

    def to_dict(self):
        d = asdict(self)
        d["cell"] = list(self.cell)
        d["success_rate"] = self.success_rate
        return d


def _aggregate(cell, records):
    errors = [r.error for r in records if math.isfinite(r.error)]
    return CellResult(
        cell,
        len(records),
        sum(r.success for r in records),
        math.fsum(errors) / len(errors) if errors else float("nan"),
        sum(r.status == "solver_failure" for r in records),
        sum(r.status == "draw_failure" for r in records),
        sum(r.ambiguity_redraws for r in records),
    )


@dataclass
class ExperimentGrid:
    config: ExperimentConfig
    cells: list = field(default_factory=list)
    trials: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def cell(self, **values):
        key = tuple(int(values[a]) for a in self.config.axis_names)
        for c in self.cells:
            if c.cell == key:
                return c
        raise KeyError(key)

    def trial(self, cell, trial):
        cell = tuple(int(v) for v in cell)
        for r in self.trials:
            if r.cell == cell and r.trial == trial:
                return r
        raise KeyError((cell, trial))

    def mean_success_rate(self):
        return float(np.mean([c.success_rate for c in self.cells])) if self.cells else float("nan")

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "cells": [c.to_dict() for c in self.cells],
            "trials": [r.to_dict() for r in self.trials],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d):
        cfg = ExperimentConfig.from_dict(d["config"])
        trials = [TrialRecord.from_dict(t) for t in d.get("trials", [])]
        by_cell = {}
        for r in trials:
            by_cell.setdefault(r.cell, []).append(r)
        cells = [_aggregate(c, by_cell[c]) for c in cfg.cells() if c in by_cell]
        return cls(cfg, cells, trials, d.get("metadata", {}))


def run_grid(cfg, progress=None):
    """Run every trial of every cell and aggregate per cell.

    ``progress``, if given, is called with each finished :class:`TrialRecord`.
    """
    cfg.validate()
    start = time.perf_counter()
    cells = cfg.cells()
    tasks = [(cfg, cell, t) for cell in cells for t in range(cfg.trials)]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunk = max(1, len(tasks) // (4 * cfg.workers))
            records = []
            for rec in pool.map(_run_task, tasks, chunksize=chunk):
                records.append(rec)
                if progress:
                    progress(rec)
    else:
        records = []
        for task in tasks:
            rec = _run_task(task)
            records.append(rec)
            if progress:
                progress(rec)
    per_cell = {cell: [] for cell in cells}
    for rec in records:
        per_cell[rec.cell].append(rec)
    results = [_aggregate(cell, per_cell[cell]) for cell in cells]
    metadata = {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "timing": {"elapsed_s": time.perf_counter() - start, "finished": time.time()},
    }
    return ExperimentGrid(cfg, results, records, metadata)


def grid_csv(grid):
    """CSV text for ``grid``: one row per cell, floats written with ``repr``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(grid.config.axis_names) + list(CSV_FIELDS))
    for c in grid.cells:
        w.writerow(list(c.cell) + [repr(float(c.success_rate)), repr(float(c.mean_error)),
                                   c.trials, c.solver_failures, c.ambiguity_redraws])
    return buf.getvalue()


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def persist(grid, path):
    """Write ``path`` (CSV, byte-stable for equal grids) and a JSON sidecar."""
    path = Path(path)
    try:
        path.write_text(grid_csv(grid), newline="")
    except OSError as exc:
        raise OSError(f"cannot write grid CSV {path}: {exc}") from exc
    write_json(sidecar_path(path), grid.to_dict())
    return path, sidecar_path(path)


def load_grid(path):
    path = Path(path)
    if path.suffix != ".json":
        path = sidecar_path(path)
    return ExperimentGrid.from_dict(read_json(path))


def replay_trial(grid_or_cfg, cell, trial):
    """Re-run one trial of a grid from its configuration alone."""
    cfg = grid_or_cfg.config if isinstance(grid_or_cfg, ExperimentGrid) else grid_or_cfg
    return run_trial(cfg, cell, trial)


def binomial_halfwidth(s1, n1, s2, n2, z=1.96):
    """Half-width of the pooled two-proportion 95% interval."""
    pooled = (s1 + s2) / (n1 + n2)
    return z * math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))


@dataclass(frozen=True)
class AlphaSummary:
    alpha: float
    mean_success_rate: float
    successes: int
    trials: int


def _comparable(cfg):
    return replace(cfg, alpha=0.0, workers=1).to_dict()


def compare_alpha(configs, grids=None):
    """Mean success rate per alpha for configurations that differ only in alpha.

    Grids are run unless precomputed ``grids`` (same order) are supplied.
    Returns :class:`AlphaSummary` entries sorted by alpha.
    """
    configs = list(configs)
    if not configs:
        raise ParameterError("need at least one configuration")
    ref = _comparable(configs[0])
    for cfg in configs[1:]:
        if _comparable(cfg) != ref:
            raise ParameterError("configurations differ in more than alpha")
    if grids is None:
        grids = [run_grid(cfg) for cfg in configs]
    out = []
    for cfg, grid in zip(configs, grids):
        succ = sum(c.successes for c in grid.cells)
        total = sum(c.trials for c in grid.cells)
        out.append(AlphaSummary(cfg.alpha, grid.mean_success_rate(), succ, total))
    return sorted(out, key=lambda s: s.alpha)
