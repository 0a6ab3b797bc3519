"""Transient stress-diffusion oracle for self-checking the closed form.

Each segment is split into ``N`` finite-volume cells. Every graph node is a
zero-volume unknown shared by its incident segments, so stress is continuous
at junctions, and its row states that the cross-section-weighted atomic flux
into the node equals the flux out (zero flux at a terminus). Time stepping is
backward Euler in the scaled time ``tau = kappa * t``.

Per segment with reference direction a -> b and cell centres at
``(k + 1/2) dx``, the face flux is ``F = (d sigma/dx + beta j)`` using half
cells next to the end nodes. The electron-wind terms cancel inside every
cell, so the current only enters through the node rows.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .engine import analyze
from .model import InterconnectGraph, MaterialParams, compute_beta, compute_kappa

MAX_CELLS = 10_000


class OracleCapError(ValueError):
    pass


class OracleConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DiscretizedGraph:
    graph: InterconnectGraph
    cells: np.ndarray  # per segment cell count
    offset: np.ndarray  # per segment index of its first cell (len = segments + 1)
    dx: np.ndarray  # per segment cell width, m
    # per node: (segment, +1 if the node is the segment's 'to' end else -1)
    junctions: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def n_cells(self) -> int:
        return int(self.offset[-1])

    @property
    def n_nodes(self) -> int:
        return len(self.junctions)

    def cell_volumes(self) -> np.ndarray:
        arr = self.graph.arrays()
        return np.repeat(arr.area * self.dx, self.cells)

    def cell_centres(self, segment: int) -> np.ndarray:
        return (np.arange(self.cells[segment]) + 0.5) * self.dx[segment]


@dataclass(frozen=True, eq=False)
class TransientResult:
    node_stress: np.ndarray  # Pa, graph node order
    cell_stress: np.ndarray  # Pa, disc cell order
    converged: bool
    steps: int
    time: float  # simulated seconds
    wall_time: float
    metric_history: list[float] = field(default_factory=list, repr=False)
    mass_history: list[float] = field(default_factory=list, repr=False)

    def node_stress_map(self, graph: InterconnectGraph) -> dict[str, float]:
        return {n.id: float(s) for n, s in zip(graph.nodes, self.node_stress)}


def _check_cap(n_segments: int, cells_per_segment: int, max_cells: int) -> None:
    if cells_per_segment < 4:
        raise ValueError("need at least 4 cells per segment")
    total = n_segments * cells_per_segment
    if total > max_cells:
        raise OracleCapError(
            f"{total} cells exceed the oracle cap of {max_cells}; use fewer cells or a smaller graph"
        )


def discretize(graph: InterconnectGraph, cells_per_segment: int = 32, max_cells: int = MAX_CELLS) -> DiscretizedGraph:
    _check_cap(len(graph.segments), cells_per_segment, max_cells)
    graph.checked()
    arr = graph.arrays()
    m = len(arr.src)
    cells = np.full(m, cells_per_segment, dtype=np.int64)
    offset = np.concatenate([[0], np.cumsum(cells)])
    dx = arr.length / cells
    junctions: list[list[tuple[int, int]]] = [[] for _ in range(arr.n_nodes)]
    for e, (a, b) in enumerate(zip(arr.src.tolist(), arr.dst.tolist())):
        junctions[a].append((e, -1))
        junctions[b].append((e, +1))
    return DiscretizedGraph(graph, cells, offset, dx, tuple(tuple(j) for j in junctions))


def _operators(disc: DiscretizedGraph, beta: float):
    """Diffusion operator K (rows: cells then nodes) and constant node source.

    Cell rows hold ``dx * d(sigma)/d(tau) = (K sigma)_cell``; node rows hold
    the flux balance ``(K sigma)_node + s_node = 0``, scaled by 1/area.
    """
    arr = disc.graph.arrays()
    nc, nn = disc.n_cells, disc.n_nodes
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    def add(r, c, v):
        r = np.atleast_1d(r)
        rows.append(r)
        cols.append(np.atleast_1d(c))
        vals.append(np.broadcast_to(np.asarray(v, dtype=float), r.shape))

    for e in range(len(arr.src)):
        n, o, h = int(disc.cells[e]), int(disc.offset[e]), float(disc.dx[e])
        k = np.arange(o, o + n - 1)
        g = 1.0 / h
        # interior faces between k and k+1: flux (s[k+1]-s[k])/h
        add(k, k, -g)
        add(k, k + 1, g)
        add(k + 1, k + 1, -g)
        add(k + 1, k, g)
        # end faces with half cells
        a, b = nc + int(arr.src[e]), nc + int(arr.dst[e])
        add(o, o, -2 * g)
        add(o, a, 2 * g)
        last = o + n - 1
        add(last, last, -2 * g)
        add(last, b, 2 * g)

    source = np.zeros(nn)
    area = arr.area
    scale = 1.0 / float(area.max())
    for node, inc in enumerate(disc.junctions):
        r = nc + node
        for e, side in inc:
            n, o, h = int(disc.cells[e]), int(disc.offset[e]), float(disc.dx[e])
            w = area[e] * scale
            if side > 0:
                # edge enters the node: + A * ((s_node - s_last)/(h/2) + beta j)
                add(r, r, 2 * w / h)
                add(r, o + n - 1, -2 * w / h)
                source[node] += w * beta * arr.j[e]
            else:
                # edge leaves the node: - A * ((s_first - s_node)/(h/2) + beta j)
                add(r, o, -2 * w / h)
                add(r, r, 2 * w / h)
                source[node] -= w * beta * arr.j[e]
    size = nc + nn
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsc()
    return K, source


def run_to_steady_state(
    disc: DiscretizedGraph,
    materials: MaterialParams | None = None,
    dt: float | None = None,
    tol: float = 1e-6,
    max_steps: int = 20_000,
    growth: float = 1.5,
    dump: str | Path | None = None,
) -> TransientResult:
    """Integrate from zero stress until the scaled stress rate drops below ``tol``.

    The convergence metric is ``max|d sigma| / S`` per unit of scaled time
    ``kappa*dt/L**2``, with ``S = beta*max|j|*L`` and ``L`` the largest total
    wire length of a connected component. The step starts at ``dt`` (default
    ``0.1*min(dx)**2/kappa``), grows by ``growth`` per step and is capped at
    ``10*L**2/kappa``.
    """
    t0 = time.perf_counter()
    graph = disc.graph
    m = materials or graph.materials
    beta, kappa = compute_beta(m), compute_kappa(m)
    if dt is not None and not dt > 0:
        raise ValueError("dt must be positive")
    arr = graph.arrays()
    nc, nn = disc.n_cells, disc.n_nodes

    forest_len = _component_lengths(graph)
    L = float(forest_len.max())
    jmax = float(np.abs(arr.j).max()) if len(arr.j) else 0.0
    S = beta * jmax * L

    K, source = _operators(disc, beta)
    # mass matrix: dx on cell rows, zero on node rows
    mass_diag = np.concatenate([np.repeat(disc.dx, disc.cells), np.zeros(nn)])
    volumes = disc.cell_volumes()

    dtau = (dt * kappa) if dt is not None else 0.1 * float(disc.dx.min()) ** 2
    dtau_max = 10.0 * L * L
    sigma = np.zeros(nc + nn)
    rhs_const = np.concatenate([np.zeros(nc), source])
    metrics: list[float] = []
    masses: list[float] = []
    dump_rows: list[str] = []
    tau = 0.0
    lu = None
    lu_dtau = None
    converged = False
    steps = 0

    while steps < max_steps:
        dtau = min(dtau, dtau_max)
        if lu is None or dtau != lu_dtau:
            A = (sp.diags(mass_diag / dtau) - K).tocsc()
            lu = spla.splu(A)
            lu_dtau = dtau
        rhs = rhs_const.copy()
        rhs[:nc] += mass_diag[:nc] / dtau * sigma[:nc]
        new = lu.solve(rhs)
        steps += 1
        tau += dtau
        if not np.all(np.isfinite(new)):
            raise OracleConvergenceError(f"stress diverged (non-finite) at step {steps}")
        change = float(np.abs(new - sigma).max())
        sigma = new
        total = float(np.dot(volumes, sigma[:nc]))
        metric = 0.0 if S == 0 else (change / S) / (dtau / (L * L))
        metrics.append(metric)
        masses.append(total)
        if dump is not None:
            dump_rows.append(f"{steps},{tau / kappa!r},{dtau / kappa!r},{total!r},{change!r}")
        if metric < tol:
            converged = True
            break
        dtau *= growth

    if dump is not None:
        Path(dump).write_text("step,time_s,dt_s,total_mass,max_dsigma_Pa\n" + "\n".join(dump_rows) + "\n")
    if not converged:
        raise OracleConvergenceError(
            f"no steady state after {steps} steps (last metric {metrics[-1]:.3e} > {tol:.1e}); "
            "check dt and tol"
        )
    return TransientResult(
        node_stress=sigma[nc:].copy(), cell_stress=sigma[:nc].copy(), converged=True,
        steps=steps, time=tau / kappa, wall_time=time.perf_counter() - t0,
        metric_history=metrics, mass_history=masses,
    )


def _component_lengths(graph: InterconnectGraph) -> np.ndarray:
    from scipy.sparse.csgraph import connected_components

    arr = graph.arrays()
    n = arr.n_nodes
    adj = sp.coo_matrix((np.ones(len(arr.src)), (arr.src, arr.dst)), shape=(n, n))
    _, label = connected_components(adj, directed=False)
    return np.bincount(label[arr.src], weights=arr.length)


@dataclass(frozen=True)
class VerificationReport:
    node_ids: tuple[str, ...]
    engine: np.ndarray
    oracle: np.ndarray
    relative_error: np.ndarray
    max_error: float
    cells: int
    steps: int
    wall_time: float

    def rows(self):
        for nid, e, o, r in zip(self.node_ids, self.engine, self.oracle, self.relative_error):
            yield nid, float(e), float(o), float(r)


def verify_against_engine(
    graph: InterconnectGraph,
    cells: int = 32,
    dt: float | None = None,
    tol: float = 1e-6,
    floor: float | None = None,
    max_cells: int = MAX_CELLS,
    dump: str | Path | None = None,
) -> VerificationReport:
    """Compare oracle and closed-form node stresses.

    The relative error at each node is ``|oracle - engine| / max(|engine|,
    floor)``; ``floor`` defaults to 1% of the largest engine stress
    magnitude (or 1 Pa for a stress-free graph) so that nodes near zero
    stress do not dominate.
    """
    _check_cap(len(graph.segments), cells, max_cells)
    exact = analyze(graph)
    disc = discretize(graph, cells, max_cells=max_cells)
    res = run_to_steady_state(disc, graph.materials, dt=dt, tol=tol, dump=dump)
    eng = exact.stress
    if floor is None:
        peak = float(np.abs(eng).max()) if len(eng) else 0.0
        floor = 0.01 * peak if peak > 0 else 1.0
    rel = np.abs(res.node_stress - eng) / np.maximum(np.abs(eng), floor)
    return VerificationReport(
        node_ids=tuple(n.id for n in graph.nodes), engine=eng, oracle=res.node_stress,
        relative_error=rel, max_error=float(rel.max()) if len(rel) else 0.0,
        cells=disc.n_cells, steps=res.steps, wall_time=res.wall_time,
    )


def segment_profiles(disc: DiscretizedGraph, result: TransientResult) -> list[tuple[np.ndarray, np.ndarray]]:
    """(cell centres, cell stresses) per segment, in the segment's local frame."""
    out = []
    for e in range(len(disc.cells)):
        o, n = int(disc.offset[e]), int(disc.cells[e])
        out.append((disc.cell_centres(e), result.cell_stress[o:o + n]))
    return out


def steady_slope(graph: InterconnectGraph) -> np.ndarray:
    """Per-segment steady-state slope -beta*j, Pa/m."""
    return -compute_beta(graph.materials) * graph.arrays().j
