"""Seeded synthetic interconnects with Kirchhoff-consistent currents.

Every instance is built as a resistive network: wires become resistors,
a few nodes are tied to a 1 V supply and random nodes sink current. The DC
solution gives branch currents, so cycle sums of ``j*l`` vanish by
construction. Currents are finally scaled so that the largest ``|j|*l``
equals ``jl_ratio`` times the critical product.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .blech import jl_crit_from_materials
from .dcsolve import branch_currents, solve_dc
from .model import InterconnectGraph, MaterialParams, Node, Segment
from .netlist import CurrentSource, DcNetlist, Resistor, VoltageSource

log = logging.getLogger(__name__)

TOPOLOGIES = ("line", "random-tree", "grid-mesh", "random-mesh")


@dataclass(frozen=True)
class GenConfig:
    topology: str = "grid-mesh"
    size: int = 10  # nodes (line/trees/random-mesh) or grid side
    seed: int = 0
    extra_edges: int | None = None  # random-mesh only; default size // 2
    cols: int | None = None  # grid-mesh only; default = size
    drop_edges: int = 0  # grid-mesh only; trims horizontal edges of the last row
    length_um: tuple[float, float] = (5.0, 100.0)
    width_um: tuple[float, float] = (0.5, 2.0)
    height_um: float = 1.0
    pad_pitch: int = 16  # grid-mesh supply pads every pad_pitch nodes
    load_fraction: float = 0.3
    jl_ratio: float = 2.0
    layer: str = "M1"
    dc_tol: float = 1e-12


def _structure(cfg: GenConfig, rng: np.random.Generator):
    """Edge list (src, dst) plus supply nodes and node names."""
    n = cfg.size
    if cfg.topology == "line":
        if n < 2:
            raise ValueError("line needs at least 2 nodes")
        src = np.arange(n - 1)
        dst = src + 1
        names = [f"n{i}" for i in range(n)]
        pads = np.array([0])
    elif cfg.topology in ("random-tree", "random-mesh"):
        if n < 2:
            raise ValueError("tree needs at least 2 nodes")
        dst = np.arange(1, n)
        src = np.array([rng.integers(0, i) for i in range(1, n)], dtype=np.int64)
        if cfg.topology == "random-mesh":
            extra = n // 2 if cfg.extra_edges is None else cfg.extra_edges
            a = rng.integers(0, n, size=extra)
            b = (a + rng.integers(1, n, size=extra)) % n
            src = np.concatenate([src, a])
            dst = np.concatenate([dst, b])
        names = [f"n{i}" for i in range(n)]
        pads = np.array([0])
    elif cfg.topology == "grid-mesh":
        rows, cols = n, cfg.cols or n
        if rows < 2 or cols < 2:
            raise ValueError("grid needs at least 2x2 nodes")
        idx = np.arange(rows * cols).reshape(rows, cols)
        h_src, h_dst = idx[:, :-1].ravel(), idx[:, 1:].ravel()
        v_src, v_dst = idx[:-1, :].ravel(), idx[1:, :].ravel()
        if not 0 <= cfg.drop_edges < cols:
            raise ValueError("drop_edges must be smaller than the column count")
        keep = len(h_src) - cfg.drop_edges
        src = np.concatenate([h_src[:keep], v_src])
        dst = np.concatenate([h_dst[:keep], v_dst])
        r, c = np.divmod(np.arange(rows * cols), cols)
        names = [f"n{i}_{k}" for i, k in zip(r.tolist(), c.tolist())]
        p = max(1, cfg.pad_pitch)
        pads = idx[p // 2::p, p // 2::p].ravel()
        if len(pads) == 0:
            pads = np.array([0])
    else:
        raise ValueError(f"unknown topology {cfg.topology!r}; choose from {', '.join(TOPOLOGIES)}")
    return src.astype(np.int64), dst.astype(np.int64), names, pads


def generate(cfg: GenConfig, materials: MaterialParams | None = None) -> InterconnectGraph:
    """Build the instance described by ``cfg``; identical configs give identical graphs."""
    mats = materials or MaterialParams()
    rng = np.random.default_rng(cfg.seed)
    src, dst, names, pads = _structure(cfg, rng)
    m, n = len(src), len(names)

    # random reference directions exercise both signs of the path current
    flip = rng.random(m) < 0.5
    src, dst = np.where(flip, dst, src), np.where(flip, src, dst)
    length = rng.uniform(*cfg.length_um, size=m) * 1e-6
    width = rng.uniform(*cfg.width_um, size=m) * 1e-6
    height = np.full(m, cfg.height_um * 1e-6)
    ohms = mats.resistivity * length / (width * height)

    n_loads = max(1, int(round(cfg.load_fraction * n)))
    loads = rng.choice(n, size=min(n_loads, n), replace=False)
    amps = rng.uniform(0.1, 1.0, size=len(loads)) * 1e-3

    seg_ids = [f"s{k}" for k in range(m)]
    netlist = DcNetlist(
        resistors=tuple(
            Resistor(sid, names[a], names[b], float(r), cfg.layer)
            for sid, a, b, r in zip(seg_ids, src.tolist(), dst.tolist(), ohms.tolist())
        ),
        current_sources=tuple(
            CurrentSource(f"I{k}", names[v], "0", float(i))
            for k, (v, i) in enumerate(zip(loads.tolist(), amps.tolist()))
        ),
        voltage_sources=tuple(VoltageSource(f"V{k}", names[p], 1.0) for k, p in enumerate(pads.tolist())),
    )
    sol = solve_dc(netlist, tol=cfg.dc_tol)
    log.info("generated %s: %d nodes, %d segments, dc %s", cfg.topology, n, m, sol.summary())
    cur = branch_currents(netlist, sol.voltages)
    current = np.fromiter((cur[s] for s in seg_ids), dtype=np.float64, count=m)
    j = -current / (width * height)

    jl_max = float(np.abs(j * length).max())
    if jl_max > 0:
        j *= cfg.jl_ratio * jl_crit_from_materials(mats) / jl_max

    nodes = tuple(Node(name, cfg.layer) for name in names)
    segments = tuple(
        Segment(sid, names[a], names[b], l, w, h, jj + 0.0, cfg.layer)
        for sid, a, b, l, w, h, jj in zip(
            seg_ids, src.tolist(), dst.tolist(), length.tolist(), width.tolist(), height.tolist(), j.tolist()
        )
    )
    return InterconnectGraph(nodes, segments, mats)


def grid_shape_for_edges(edges: int) -> tuple[int, int, int]:
    """(rows, cols, drop_edges) giving a connected grid with exactly ``edges`` edges."""
    if edges < 4:
        raise ValueError("a grid mesh needs at least 4 edges")
    side = int(round((1 + (1 + 2 * edges) ** 0.5) / 2))
    for cols in sorted(range(max(2, side - 50), side + 51), key=lambda c: abs(c - side)):
        rows = max(2, -(-(edges + cols) // (2 * cols - 1)))
        extra = rows * (cols - 1) + cols * (rows - 1) - edges
        if 0 <= extra < cols:
            return rows, cols, extra
    raise ValueError(f"no grid shape found for {edges} edges")
