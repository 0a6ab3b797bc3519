"""Linear-time steady-state EM stress on interconnect trees and meshes.

The pipeline is three passes over the edges:

1. a spanning forest rooted at one reference node per connected component,
   which also yields the Blech sum ``B`` (signed ``sum j*l`` along the tree
   path from the reference) at every node;
2. per-component sums ``A = sum(w*h*l)`` and
   ``Q = sum(w*h*(j*l**2/2 + B_from*l))``;
3. ``sigma_i = beta * (Q/A - B_i)``.

Edges left out of the tree (chords) carry a stress-difference equation that
is implied by the tree equations whenever the currents come from node
potentials. Each chord is checked against the solved stresses.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Literal, Mapping, Sequence

import numpy as np

from .model import InterconnectGraph, MaterialParams, compute_beta

Traversal = Literal["bfs", "dfs"]


class ChordInconsistencyError(ValueError):
    """Currents violate the cycle condition, so no steady state satisfies every edge."""

    def __init__(self, segment_ids: Sequence[str], worst_residual: float, tolerance: float):
        self.segment_ids = list(segment_ids)
        self.worst_residual = worst_residual
        self.tolerance = tolerance
        shown = ", ".join(self.segment_ids[:5])
        super().__init__(
            f"{len(self.segment_ids)} chord segment(s) violate the cycle condition "
            f"(worst residual {worst_residual:.3e} Pa > tolerance {tolerance:.3e} Pa): {shown}"
        )


class ShapeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpanningForest:
    """One rooted spanning tree per connected component.

    Node and edge references are integer indices into ``graph.nodes`` and
    ``graph.segments``. ``order`` lists nodes so that every parent precedes
    its children; ``tree_edges[k]`` is the edge that discovered ``order[k]``
    for non-root entries.
    """

    component: np.ndarray  # node -> component id
    roots: np.ndarray  # component id -> reference node
    parent: np.ndarray  # node -> parent node, -1 at roots
    parent_edge: np.ndarray  # node -> edge to parent, -1 at roots
    order: np.ndarray
    tree_edges: np.ndarray
    chords: np.ndarray
    traversal: str = "bfs"

    @property
    def n_components(self) -> int:
        return len(self.roots)


@dataclass(frozen=True, eq=False)
class BlechSums:
    values: np.ndarray  # node -> signed sum of j*l from the reference, A/m


@dataclass(frozen=True, eq=False)
class StressSolution:
    """Steady-state node stresses plus the immortality verdict.

    Per-component arrays are indexed by component id. The verdict fields
    stay ``None`` until :func:`verdict` has been applied.
    """

    graph: InterconnectGraph
    forest: SpanningForest
    blech: BlechSums
    stress: np.ndarray  # node -> Pa
    reference_stress: np.ndarray  # component -> sigma at the reference node
    area_sum: np.ndarray  # component -> sum w*h*l (m^3)
    moment_sum: np.ndarray  # component -> Q (A m^2)
    sigma_max: np.ndarray
    argmax_node: np.ndarray
    sigma_min: np.ndarray
    chord_residuals: np.ndarray  # per entry of forest.chords, Pa
    threshold: float | None = None
    component_immortal: np.ndarray | None = None
    segment_mortal: np.ndarray | None = None

    @property
    def immortal(self) -> bool:
        if self.component_immortal is None:
            raise RuntimeError("verdict() has not been applied")
        return bool(self.component_immortal.all())

    def node_stress(self) -> dict[str, float]:
        return {n.id: float(s) for n, s in zip(self.graph.nodes, self.stress)}

    def segment_max_stress(self) -> np.ndarray:
        arr = self.graph.arrays()
        return np.maximum(self.stress[arr.src], self.stress[arr.dst])

    def is_max_in_component(self) -> np.ndarray:
        flags = np.zeros(len(self.stress), dtype=bool)
        flags[self.argmax_node] = True
        return flags


def _adjacency(n_nodes: int, src: np.ndarray, dst: np.ndarray):
    """CSR adjacency lists (neighbor, edge) in segment input order."""
    m = len(src)
    ends = np.concatenate([src, dst])
    others = np.concatenate([dst, src])
    edge_ids = np.concatenate([np.arange(m), np.arange(m)])
    order = np.lexsort((edge_ids, ends))
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(ends, minlength=n_nodes), out=indptr[1:])
    return indptr, others[order], edge_ids[order]


def _components(n_nodes: int, indptr, nbrs) -> tuple[int, np.ndarray]:
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components

    adj = csr_matrix((np.ones(len(nbrs), dtype=np.int8), nbrs, indptr), shape=(n_nodes, n_nodes))
    return connected_components(adj, directed=False)


def default_references(graph: InterconnectGraph, component: np.ndarray, n_comp: int) -> np.ndarray:
    """Lowest-id terminus of each component, else its lowest-id node."""
    arr = graph.arrays()
    degree = np.bincount(np.concatenate([arr.src, arr.dst]), minlength=arr.n_nodes)
    ids = np.array([n.id for n in graph.nodes], dtype=object)
    id_rank = np.empty(arr.n_nodes, dtype=np.int64)
    id_rank[np.argsort(ids, kind="stable")] = np.arange(arr.n_nodes)
    order = np.lexsort((id_rank, degree != 1, component))
    first = np.ones(len(order), dtype=bool)
    first[1:] = component[order][1:] != component[order][:-1]
    roots = np.empty(n_comp, dtype=np.int64)
    roots[component[order][first]] = order[first]
    return roots


def spanning_forest(
    graph: InterconnectGraph,
    traversal: Traversal = "bfs",
    references: Mapping[int, str] | Sequence[str] | None = None,
) -> SpanningForest:
    """Rooted BFS (or DFS) forest; chords are the edges the traversal skipped.

    ``references`` optionally overrides the reference node per component,
    either as ``{component_id: node_id}`` or as a list of node ids (each
    replaces the default root of its own component).
    """
    arr = graph.arrays()
    n = arr.n_nodes
    indptr, nbrs, eids = _adjacency(n, arr.src, arr.dst)
    n_comp, component = _components(n, indptr, nbrs)
    roots = default_references(graph, component, n_comp)
    if references:
        idx = graph.node_index
        items = references.items() if isinstance(references, Mapping) else (
            (int(component[idx[nid]]), nid) for nid in references
        )
        for comp, nid in items:
            node = idx[nid]
            if component[node] != comp:
                raise ValueError(f"node {nid!r} is not in component {comp}")
            roots[comp] = node

    indptr_l = indptr.tolist()
    nbrs_l = nbrs.tolist()
    eids_l = eids.tolist()
    parent = [-1] * n
    parent_edge = [-1] * n
    seen = bytearray(n)
    order: list[int] = []

    if traversal == "bfs":
        for r in roots.tolist():
            seen[r] = 1
            order.append(r)
            queue = deque((r,))
            pop, push = queue.popleft, queue.append
            while queue:
                u = pop()
                for k in range(indptr_l[u], indptr_l[u + 1]):
                    v = nbrs_l[k]
                    if not seen[v]:
                        seen[v] = 1
                        parent[v] = u
                        parent_edge[v] = eids_l[k]
                        order.append(v)
                        push(v)
    elif traversal == "dfs":
        for r in roots.tolist():
            stack = [(r, -1, -1)]
            while stack:
                u, p, e = stack.pop()
                if seen[u]:
                    continue
                seen[u] = 1
                parent[u] = p
                parent_edge[u] = e
                order.append(u)
                for k in range(indptr_l[u + 1] - 1, indptr_l[u] - 1, -1):
                    v = nbrs_l[k]
                    if not seen[v]:
                        stack.append((v, u, eids_l[k]))
    else:
        raise ValueError(f"unknown traversal {traversal!r}")

    order_a = np.asarray(order, dtype=np.int64)
    parent_edge_a = np.asarray(parent_edge, dtype=np.int64)
    tree_edges = parent_edge_a[order_a]
    tree_edges = tree_edges[tree_edges >= 0]
    in_tree = np.zeros(len(arr.src), dtype=bool)
    in_tree[tree_edges] = True
    return SpanningForest(
        component=component.astype(np.int64),
        roots=roots,
        parent=np.asarray(parent, dtype=np.int64),
        parent_edge=parent_edge_a,
        order=order_a,
        tree_edges=tree_edges,
        chords=np.flatnonzero(~in_tree),
        traversal=traversal,
    )


def blech_sums(forest: SpanningForest, graph: InterconnectGraph) -> BlechSums:
    """Signed j*l sums from each component's reference node, one tree pass."""
    arr = graph.arrays()
    n = arr.n_nodes
    # increment along the tree edge from parent to child: +j*l when the
    # reference direction points away from the parent
    children = forest.order[forest.parent[forest.order] >= 0]
    e = forest.parent_edge[children]
    sign = np.where(arr.src[e] == forest.parent[children], 1.0, -1.0)
    step = np.zeros(n)
    step[children] = sign * arr.j[e] * arr.length[e]

    b = [0.0] * n
    par = forest.parent.tolist()
    step_l = step.tolist()
    for v in children.tolist():
        b[v] = b[par[v]] + step_l[v]
    return BlechSums(np.asarray(b))


def _grouped_fsum(values: np.ndarray, groups: np.ndarray, n_groups: int) -> np.ndarray:
    order = np.argsort(groups, kind="stable")
    counts = np.bincount(groups, minlength=n_groups)
    out = np.zeros(n_groups)
    start = 0
    v = values[order].tolist()
    for g, c in enumerate(counts.tolist()):
        if c:
            out[g] = math.fsum(v[start:start + c])
        start += c
    return out


def node_stresses(
    forest: SpanningForest,
    sums: BlechSums,
    graph: InterconnectGraph,
    chord_rtol: float = 1e-6,
    check_chords: bool = True,
) -> StressSolution:
    """Closed-form node stresses for every component.

    Raises :class:`ChordInconsistencyError` when a chord's edge equation is
    off by more than ``chord_rtol * beta * max|j*l|`` of its component.
    """
    arr = graph.arrays()
    beta = compute_beta(graph.materials)
    b = sums.values
    n_comp = forest.n_components
    edge_comp = forest.component[arr.src]

    area = arr.area
    # integral of sigma/beta over the edge, shifted by Q/A: starts at the
    # from-node; for tree edges this equals the proximal-endpoint form
    a_terms = area * arr.length
    q_terms = area * (arr.j * arr.length * arr.length / 2.0 + b[arr.src] * arr.length)
    a_sum = _grouped_fsum(a_terms, edge_comp, n_comp)
    q_sum = _grouped_fsum(q_terms, edge_comp, n_comp)

    ratio = q_sum / a_sum
    stress = beta * (ratio[forest.component] - b)
    ref_stress = beta * ratio

    chords = forest.chords
    residuals = np.abs(
        stress[arr.dst[chords]] - stress[arr.src[chords]] + beta * arr.j[chords] * arr.length[chords]
    )
    if check_chords and len(chords):
        jl = np.abs(arr.j * arr.length)
        jl_max = np.zeros(n_comp)
        np.maximum.at(jl_max, edge_comp, jl)
        tol = chord_rtol * beta * jl_max[edge_comp[chords]]
        bad = residuals > tol
        if bad.any():
            k = int(np.argmax(np.where(bad, residuals - tol, -np.inf)))
            raise ChordInconsistencyError(
                [graph.segments[c].id for c in chords[bad]],
                float(residuals[k]), float(tol[k]),
            )

    sigma_max = np.full(n_comp, -np.inf)
    np.maximum.at(sigma_max, forest.component, stress)
    sigma_min = np.full(n_comp, np.inf)
    np.minimum.at(sigma_min, forest.component, stress)
    # first node (graph order) attaining the component maximum
    hits = np.flatnonzero(stress == sigma_max[forest.component])
    argmax = np.full(n_comp, -1, dtype=np.int64)
    comp_hits = forest.component[hits]
    first = np.unique(comp_hits, return_index=True)[1]
    argmax[comp_hits[first]] = hits[first]

    return StressSolution(
        graph=graph, forest=forest, blech=sums, stress=stress,
        reference_stress=ref_stress, area_sum=a_sum, moment_sum=q_sum,
        sigma_max=sigma_max, argmax_node=argmax, sigma_min=sigma_min,
        chord_residuals=residuals,
    )


def verdict(solution: StressSolution, materials: MaterialParams | None = None) -> StressSolution:
    """Flag components and segments against ``sigma_crit - sigma_T``.

    A component is immortal iff its largest node stress is strictly below the
    threshold; a segment is mortal iff either endpoint reaches it.
    """
    m = materials or solution.graph.materials
    threshold = m.stress_margin
    return replace(
        solution,
        threshold=threshold,
        component_immortal=solution.sigma_max < threshold,
        segment_mortal=solution.segment_max_stress() >= threshold,
    )


def analyze(
    graph: InterconnectGraph,
    traversal: Traversal = "bfs",
    references: Mapping[int, str] | Sequence[str] | None = None,
    chord_rtol: float = 1e-6,
    check_chords: bool = True,
) -> StressSolution:
    """Validate, solve and judge ``graph`` in one call."""
    graph.checked()
    forest = spanning_forest(graph, traversal, references)
    sums = blech_sums(forest, graph)
    sol = node_stresses(forest, sums, graph, chord_rtol=chord_rtol, check_chords=check_chords)
    return verdict(sol)


@dataclass(frozen=True)
class TraceRow:
    label: str
    area: float  # running sum of w*l, m^2
    blech: float  # Blech sum at the distal node, A/m
    moment: float  # running Q with width weights, A m


def table1_trace(graph: InterconnectGraph, reference: str | None = None) -> list[TraceRow]:
    """Running (A, B, Q) sums for a two-segment line, walked from one end.

    Widths act as the weights (heights are taken as a common factor), so
    ``beta * Q / A`` after the last row is the reference-node stress.
    """
    graph.checked()
    if len(graph.nodes) != 3 or len(graph.segments) != 2:
        raise ShapeError("trace needs a 3-node, 2-segment line")
    heights = {s.height for s in graph.segments}
    if len(heights) != 1:
        raise ShapeError("trace needs a common segment height")
    degree: dict[str, int] = {n.id: 0 for n in graph.nodes}
    for s in graph.segments:
        degree[s.from_node] += 1
        degree[s.to_node] += 1
    ends = sorted(nid for nid, d in degree.items() if d == 1)
    if len(ends) != 2:
        raise ShapeError("trace needs a path, not a cycle or parallel pair")
    start = reference if reference is not None else ends[0]
    if start not in ends:
        raise ShapeError(f"reference {start!r} is not an end of the line")

    rows = [TraceRow("init", 0.0, 0.0, 0.0)]
    a = b = q = 0.0
    here = start
    remaining = list(graph.segments)
    while remaining:
        seg = next(s for s in remaining if here in (s.from_node, s.to_node))
        remaining.remove(seg)
        forward = seg.from_node == here
        nxt = seg.to_node if forward else seg.from_node
        jh = seg.current_density if forward else -seg.current_density
        w, l = seg.width, seg.length
        a = a + w * l
        q = q + w * jh * l**2 / 2 + w * l * b
        b = b + jh * l
        rows.append(TraceRow(f"({here},{nxt})", a, b, q))
        here = nxt
    return rows
