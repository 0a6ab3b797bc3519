"""Independent oracles and fixture structures shared by the tests.

The oracles here deliberately avoid the package's solution paths: stresses
come from a dense least-squares solve over every edge equation plus one
conservation row per component, node voltages from a full MNA matrix with
voltage sources kept as extra unknowns.
"""

from __future__ import annotations

import numpy as np

from emortal import InterconnectGraph, MaterialParams, Node, Segment
from emortal.netlist import DcNetlist

UM = 1e-6


def seg(sid, a, b, l_um, j, w_um=1.0, h_um=1.0, layer="M1"):
    return Segment(sid, a, b, l_um * UM, w_um * UM, h_um * UM, float(j), layer)


def graph(segments, materials=None, nodes=None):
    if nodes is None:
        seen = {}
        for s in segments:
            seen.setdefault(s.from_node)
            seen.setdefault(s.to_node)
        nodes = list(seen)
    return InterconnectGraph(
        tuple(n if isinstance(n, Node) else Node(n, "M1") for n in nodes),
        tuple(segments),
        materials or MaterialParams(),
    )


def two_segment_line(l1=50.0, l2=50.0, j1=2e10, j2=1e10, w1=1.0, w2=1.0):
    return graph([seg("e1", "v1", "v2", l1, j1, w1), seg("e2", "v2", "v3", l2, j2, w2)])


# Three benchmark structures (w = 1 um) with fixed current densities. The
# lengths are stand-ins; the mesh lengths make its cycle condition exact.
def tee_structure():
    return graph([
        seg("e1", "t1", "c", 30, 6e10),
        seg("e2", "c", "t2", 20, -4e10),
        seg("e3", "c", "t3", 40, 3e10),
    ])


def tree_structure():
    return graph([
        seg("e1", "a", "b", 20, -1e10),
        seg("e2", "b", "c", 30, 5e10),
        seg("e3", "b", "d", 25, -4e10),
        seg("e4", "d", "e", 15, 2e10),
        seg("e5", "d", "f", 35, 4e10),
        seg("e6", "c", "g", 10, 2e10),
    ])


def mesh_structure():
    # a->b->d and a->c->d: 1e10*30 + 1.5e10*20 == 2e10*15 + 3e10*10
    return graph([
        seg("e1", "a", "b", 30, 1e10),
        seg("e2", "b", "d", 20, 1.5e10),
        seg("e3", "a", "c", 15, 2e10),
        seg("e4", "c", "d", 10, 3e10),
    ])


STRUCTURES = {"tee": tee_structure, "tree": tree_structure, "mesh": mesh_structure}


def brute_force_stress(g: InterconnectGraph) -> np.ndarray:
    """Dense solve of every edge law plus per-component mass conservation."""
    beta = g.materials.effective_charge * g.materials.electron_charge * g.materials.resistivity / g.materials.atomic_volume
    idx = {n.id: i for i, n in enumerate(g.nodes)}
    n = len(g.nodes)
    # components by plain union-find
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    for s in g.segments:
        ra, rb = find(idx[s.from_node]), find(idx[s.to_node])
        if ra != rb:
            parent[ra] = rb
    roots = sorted({find(i) for i in range(n)})
    rows, rhs = [], []
    for s in g.segments:
        r = np.zeros(n)
        r[idx[s.to_node]] += 1.0
        r[idx[s.from_node]] -= 1.0
        rows.append(r)
        rhs.append(-beta * s.current_density * s.length)
    for root in roots:
        r = np.zeros(n)
        for s in g.segments:
            if find(idx[s.from_node]) == root:
                vol = s.width * s.height * s.length
                r[idx[s.from_node]] += vol / 2
                r[idx[s.to_node]] += vol / 2
        rows.append(r / max(np.abs(r).max(), 1e-300) * beta * 1e-4)
        rhs.append(0.0)
    M = np.array(rows)
    sol, *_ = np.linalg.lstsq(M, np.array(rhs), rcond=None)
    return sol


def dense_mna_voltages(net: DcNetlist) -> dict[str, float]:
    """Classic MNA: node voltages plus one current unknown per voltage source."""
    names = [n for n in net.nodes()]
    idx = {n: i for i, n in enumerate(names)}
    n, m = len(names), len(net.voltage_sources)
    A = np.zeros((n + m, n + m))
    z = np.zeros(n + m)
    for r in net.resistors:
        g = 1.0 / r.ohms
        ia, ib = idx.get(r.a), idx.get(r.b)
        if ia is not None:
            A[ia, ia] += g
        if ib is not None:
            A[ib, ib] += g
        if ia is not None and ib is not None:
            A[ia, ib] -= g
            A[ib, ia] -= g
    for s in net.current_sources:
        if s.a in idx:
            z[idx[s.a]] -= s.amps
        if s.b in idx:
            z[idx[s.b]] += s.amps
    for k, v in enumerate(net.voltage_sources):
        i = idx[v.node]
        A[i, n + k] = 1.0
        A[n + k, i] = 1.0
        z[n + k] = v.volts
    x = np.linalg.solve(A, z)
    return {name: float(x[idx[name]]) for name in names}


def max_rel_diff(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / scale)


def conservation_ratio(g: InterconnectGraph, stress: np.ndarray, component: np.ndarray) -> float:
    """Worst per-component |sum w h l (sa+sb)/2| / sum w h l max|sigma|."""
    arr = g.arrays()
    vol = arr.area * arr.length
    mean = (stress[arr.src] + stress[arr.dst]) / 2
    comp = component[arr.src]
    worst = 0.0
    for c in np.unique(comp):
        sel = comp == c
        nodes = np.unique(np.concatenate([arr.src[sel], arr.dst[sel]]))
        peak = np.abs(stress[nodes]).max()
        denom = vol[sel].sum() * peak
        if denom == 0:
            continue
        worst = max(worst, abs(float(np.sum(vol[sel] * mean[sel]))) / denom)
    return worst


def dc_grid(rows: int, cols: int, seed: int = 0, pads: int = 2):
    """Random-resistance mesh with a few 1 V pads and random current sinks."""
    from emortal.netlist import CurrentSource, Resistor, VoltageSource

    rng = np.random.default_rng(seed)
    name = lambda r, c: f"n1_{r}_{c}"  # noqa: E731
    res = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                res.append(Resistor(f"Rh{r}_{c}", name(r, c), name(r, c + 1), float(rng.uniform(0.05, 2.0)), "M1"))
            if r + 1 < rows:
                res.append(Resistor(f"Rv{r}_{c}", name(r, c), name(r + 1, c), float(rng.uniform(0.05, 2.0)), "M1"))
    cells = rng.choice(rows * cols, size=pads + max(1, rows * cols // 4), replace=False)
    vs = tuple(VoltageSource(f"V{k}", name(*divmod(int(p), cols)), 1.0) for k, p in enumerate(cells[:pads]))
    cs = tuple(
        CurrentSource(f"I{k}", name(*divmod(int(p), cols)), "0", float(rng.uniform(1e-4, 1e-3)))
        for k, p in enumerate(cells[pads:])
    )
    return DcNetlist(tuple(res), cs, vs)
