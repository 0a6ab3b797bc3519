"""Classical per-segment Blech filter and its agreement with the exact verdict.

"Positive" means immortal throughout: a false positive is a segment the
classical filter passes although its exact steady-state stress reaches the
threshold; a false negative is one it rejects although the exact analysis
finds it immortal.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .engine import StressSolution
from .model import InterconnectGraph, MaterialParams, Segment, compute_beta

CLASSES = ("TP", "TN", "FP", "FN")


def jl_crit_from_materials(materials: MaterialParams) -> float:
    """Critical j*l product (A/m): a lone segment peaks at beta*j*l/2 at its cathode."""
    beta = compute_beta(materials)
    if beta <= 0:
        raise ValueError("beta must be positive to define a critical jl product")
    return 2.0 * materials.stress_margin / beta


def classic_blech(segment: Segment, jl_crit: float) -> bool:
    """True (immortal) when ``|j| * l <= jl_crit``."""
    if jl_crit < 0:
        raise ValueError("jl_crit must be non-negative")
    return abs(segment.current_density) * segment.length <= jl_crit


@dataclass(frozen=True, eq=False)
class ConfusionReport:
    tp: int
    tn: int
    fp: int
    fn: int
    jl_crit: float
    labels: tuple[str, ...]  # per segment, graph order
    blech_mortal: np.ndarray
    exact_mortal: np.ndarray
    abs_j: np.ndarray
    length: np.ndarray

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def counts(self) -> dict[str, int]:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}

    def scatter_rows(self, graph: InterconnectGraph):
        """(segment_id, |j|, l, class) per segment, for j-vs-l scatter plots."""
        for seg, aj, l, c in zip(graph.segments, self.abs_j, self.length, self.labels):
            yield seg.id, float(aj), float(l), c


def compare(graph: InterconnectGraph, exact: StressSolution, jl_crit: float | None = None) -> ConfusionReport:
    if exact.segment_mortal is None:
        raise ValueError("exact solution has no verdict; apply engine.verdict first")
    if len(exact.segment_mortal) != len(graph.segments):
        raise ValueError("exact solution does not cover every segment of the graph")
    if jl_crit is None:
        jl_crit = jl_crit_from_materials(graph.materials)
    if jl_crit < 0:
        raise ValueError("jl_crit must be non-negative")
    arr = graph.arrays()
    abs_j = np.abs(arr.j)
    blech_mortal = abs_j * arr.length > jl_crit
    exact_mortal = np.asarray(exact.segment_mortal, dtype=bool)
    table = np.array(["TP", "FN", "FP", "TN"])
    # index bit 1: exact mortal, bit 0: classical mortal
    labels = table[exact_mortal.astype(int) * 2 + blech_mortal.astype(int)]
    c = Counter(labels.tolist())
    return ConfusionReport(
        tp=c["TP"], tn=c["TN"], fp=c["FP"], fn=c["FN"], jl_crit=float(jl_crit),
        labels=tuple(labels.tolist()), blech_mortal=blech_mortal, exact_mortal=exact_mortal,
        abs_j=abs_j, length=arr.length.copy(),
    )
