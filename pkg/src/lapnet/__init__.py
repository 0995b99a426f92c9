"""Round-synchronous network simulator plus a distributed Laplacian-solver
pipeline small enough to check every spectral claim against dense algebra."""

from .graphs import (GraphFormatError, Partition, TreeDecomposition,
                     ValidationError, WeightedGraph, hop_diameter, laplacian,
                     load_graph, load_parts, save_graph,
                     validate_partition, validate_tree_decomposition)
from .generators import FAMILIES, generate_graph
from .netsim import (DeadlockError, NodeProgram, ProgramError, RoundLedger,
                     RoundLimitError, Step, run_congest, run_hybrid, run_ncc,
                     run_network, word_bits)
from .minors import (MinorDistribution, MinorReport, compose_minors,
                     contract_edges, identity_minor, minor_matvec,
                     validate_minor)
from .shortcuts import (CopyGraph, ShortcutQuality, build_copy_graph,
                        get_provider, shortcut_quality, wrap_for_host)
from .aggregation import (AggregationOverflow, AggregationService,
                          aggregation_oracle, congested_aggregation_congest)
from .ncc import congested_aggregation_ncc, ncc_aggregate, ncc_multicast
from .oracle import (exact_solve, pseudo_inverse, schur_complement,
                     spectral_approx_check)
from .ultrasparsify import ultrasparsify
from .elimination import eliminate
from .sparsify import spectral_sparsify
from .approxsc import approx_sc
from .solver import build_chain, solve_laplacian
from .experiments import emit_report, run_experiment

__all__ = [
    "AggregationOverflow", "AggregationService", "CopyGraph", "DeadlockError",
    "FAMILIES", "GraphFormatError", "MinorDistribution", "MinorReport",
    "NodeProgram", "Partition", "ProgramError", "RoundLedger",
    "RoundLimitError", "ShortcutQuality", "Step", "TreeDecomposition",
    "ValidationError", "WeightedGraph", "aggregation_oracle", "approx_sc",
    "build_chain", "build_copy_graph", "compose_minors",
    "congested_aggregation_congest", "congested_aggregation_ncc",
    "contract_edges", "eliminate", "emit_report", "exact_solve",
    "generate_graph",
    "get_provider", "hop_diameter", "identity_minor", "laplacian",
    "load_graph", "load_parts", "minor_matvec", "ncc_aggregate",
    "ncc_multicast", "pseudo_inverse", "run_congest", "run_experiment",
    "run_hybrid", "run_ncc",
    "run_network", "save_graph", "schur_complement", "shortcut_quality",
    "solve_laplacian", "spectral_approx_check", "spectral_sparsify",
    "ultrasparsify", "validate_minor", "validate_partition",
    "validate_tree_decomposition", "word_bits", "wrap_for_host",
]

__version__ = "0.1.0"
