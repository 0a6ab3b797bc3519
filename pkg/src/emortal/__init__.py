"""Steady-state electromigration stress and immortality checks for interconnect graphs."""

__version__ = "0.1.0"

from .model import (
    GraphError,
    InterconnectGraph,
    MaterialParams,
    Node,
    Segment,
    compute_beta,
    compute_kappa,
    validate_graph,
)
from .engine import (
    ChordInconsistencyError,
    StressSolution,
    analyze,
    blech_sums,
    node_stresses,
    spanning_forest,
    table1_trace,
    verdict,
)

__all__ = [
    "ChordInconsistencyError",
    "GraphError",
    "InterconnectGraph",
    "MaterialParams",
    "Node",
    "Segment",
    "StressSolution",
    "analyze",
    "blech_sums",
    "compute_beta",
    "compute_kappa",
    "node_stresses",
    "spanning_forest",
    "table1_trace",
    "validate_graph",
    "verdict",
]
