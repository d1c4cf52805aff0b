"""Blind identification of graph filters with sparse inputs."""

__version__ = "0.1.0"

from .graphs import Graph, ShiftOperator, erdos_renyi, is_connected, load_edge_list, normalized_adjacency
from .identifiability import certify, construct_alternative, detect_ambiguities
from .signals import GroundTruth, SparseInputMatrix, make_filter, synthesize
from .solver import DeconvolutionResult, deconvolve, relative_error, reweighted_l1, solve_weighted_l1
from .spectral import FilterSpec, SpectralDecomposition, apply_filter, eig_sym, khatri_rao_z

__all__ = [
    "DeconvolutionResult",
    "FilterSpec",
    "Graph",
    "GroundTruth",
    "ShiftOperator",
    "SparseInputMatrix",
    "SpectralDecomposition",
    "apply_filter",
    "certify",
    "construct_alternative",
    "deconvolve",
    "detect_ambiguities",
    "eig_sym",
    "erdos_renyi",
    "is_connected",
    "khatri_rao_z",
    "load_edge_list",
    "make_filter",
    "normalized_adjacency",
    "relative_error",
    "reweighted_l1",
    "solve_weighted_l1",
    "synthesize",
]
