"""DC nodal analysis of resistive power grids.

Ideal voltage sources (and ground) are eliminated by moving their known
voltages to the right-hand side, which leaves a symmetric positive definite
conductance matrix per connected component. Small components are solved
densely; larger ones with Jacobi-preconditioned conjugate gradients.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .netlist import CurrentSource, DcNetlist

log = logging.getLogger(__name__)

DENSE_LIMIT = 500


class SingularSystemError(ValueError):
    """Some nodes have no resistive path to ground or a voltage source."""

    def __init__(self, floating: list[list[str]]):
        self.floating = floating
        desc = "; ".join(
            "{" + ", ".join(c[:4]) + (f", ... ({len(c)} nodes)" if len(c) > 4 else "") + "}"
            for c in floating[:3]
        )
        super().__init__(f"{len(floating)} floating component(s) without ground or source: {desc}")


class ConvergenceError(RuntimeError):
    def __init__(self, iterations: int, residual: float, tol: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"CG did not converge after {iterations} iterations "
            f"(relative residual {residual:.3e} > {tol:.1e})"
        )


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass(frozen=True, eq=False)
class NodalSystem:
    """Reduced conductance system ``G v = i`` over the non-fixed nodes.

    ``slot`` maps every netlist node to its row (``>= 0``) or to ``-1`` when
    its voltage is fixed; zero-ohm resistors merge nodes onto one row.
    """

    names: list[str]
    slot: np.ndarray  # node -> unknown row, -1 when fixed
    rep: np.ndarray  # node -> representative after merging shorts
    fixed_voltage: np.ndarray  # node -> voltage, nan when unknown
    conductance: sp.csr_matrix
    rhs: np.ndarray
    # per row: conductance to fixed nodes and |injected current|, for KCL checks
    fixed_conductance: np.ndarray | None = None
    injection: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.conductance.shape[0]


@dataclass(frozen=True)
class ComponentStats:
    unknowns: int
    method: str
    iterations: int
    residual: float
    kcl: float = 0.0  # worst |net current| / sum |branch currents| over the block's nodes


@dataclass(frozen=True, eq=False)
class DcSolution:
    voltages: dict[str, float]
    stats: tuple[ComponentStats, ...] = ()
    system: NodalSystem | None = field(default=None, repr=False)

    def summary(self) -> dict:
        return {
            "components": len(self.stats),
            "unknowns": sum(s.unknowns for s in self.stats),
            "cg_components": sum(s.method == "cg" for s in self.stats),
            "max_iterations": max((s.iterations for s in self.stats), default=0),
            "max_relative_residual": max((s.residual for s in self.stats), default=0.0),
            "max_relative_kcl": max((s.kcl for s in self.stats), default=0.0),
        }


def build_nodal_system(netlist: DcNetlist) -> NodalSystem:
    names = list(netlist.ground) + netlist.nodes()
    names = list(dict.fromkeys(names))
    index = {n: i for i, n in enumerate(names)}
    n = len(names)

    uf = _UnionFind(n)
    gnd = [index[g] for g in netlist.ground]
    for g in gnd[1:]:
        uf.union(gnd[0], g)
    for r in netlist.resistors:
        if r.ohms == 0:
            uf.union(index[r.a], index[r.b])
    rep = np.fromiter((uf.find(i) for i in range(n)), dtype=np.int64, count=n)

    fixed = np.full(n, np.nan)
    fixed[rep[gnd]] = 0.0
    for v in netlist.voltage_sources:
        r = rep[index[v.node]]
        if not math.isnan(fixed[r]) and fixed[r] != v.volts:
            raise ValueError(f"voltage source {v.name!r} conflicts with another fixed voltage at {v.node!r}")
        fixed[r] = v.volts
    fixed = fixed[rep]

    unknown_rep = np.flatnonzero((rep == np.arange(n)) & np.isnan(fixed))
    rep_slot = np.full(n, -1, dtype=np.int64)
    rep_slot[unknown_rep] = np.arange(len(unknown_rep))
    slot = rep_slot[rep]
    m = len(unknown_rep)

    res = [r for r in netlist.resistors if r.ohms > 0]
    a = np.fromiter((index[r.a] for r in res), dtype=np.int64, count=len(res))
    b = np.fromiter((index[r.b] for r in res), dtype=np.int64, count=len(res))
    g = 1.0 / np.fromiter((r.ohms for r in res), dtype=np.float64, count=len(res))
    sa, sb = slot[a], slot[b]
    rhs = np.zeros(m)
    gfix = np.zeros(m)
    inj = np.zeros(m)

    both = (sa >= 0) & (sb >= 0) & (sa != sb)
    rows = [sa[both], sb[both], sa[both], sb[both]]
    cols = [sb[both], sa[both], sa[both], sb[both]]
    vals = [-g[both], -g[both], g[both], g[both]]
    for s_unk, other in ((sa, b), (sb, a)):
        edge = (s_unk >= 0) & (slot[other] < 0)
        rows.append(s_unk[edge])
        cols.append(s_unk[edge])
        vals.append(g[edge])
        np.add.at(rhs, s_unk[edge], g[edge] * fixed[other[edge]])
        np.add.at(gfix, s_unk[edge], g[edge])

    for src in netlist.current_sources:
        # SPICE orientation: the source pulls current out of a, pushes it into b
        for node, sign in ((src.a, -1.0), (src.b, 1.0)):
            k = slot[index[node]]
            if k >= 0:
                rhs[k] += sign * src.amps
                inj[k] += abs(src.amps)

    G = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)
    ).tocsr()
    G.sum_duplicates()
    return NodalSystem(names, slot, rep, fixed, G, rhs, gfix, inj)


def _kcl(G: sp.csr_matrix, v: np.ndarray, rhs: np.ndarray, gfix: np.ndarray, inj: np.ndarray) -> float:
    """Worst per-node |G v - rhs| relative to the current flowing through the node.

    Throughput is the sum of |branch currents| into unknown neighbours plus
    a lower bound for the current to fixed nodes plus |injection|.
    """
    coo = G.tocoo()
    off = coo.row != coo.col
    r, c, g = coo.row[off], coo.col[off], -coo.data[off]
    through = np.bincount(r, weights=np.abs(g * (v[r] - v[c])), minlength=len(v)).astype(float)
    # rhs - gfix*v = pad current + net injection, so |pad| + |inj| is at
    # least the larger of the two terms below
    through += np.maximum(np.abs(rhs - gfix * v), inj)
    res = np.abs(G @ v - rhs)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(through > 0, res / through, np.where(res > 0, np.inf, 0.0))
    return float(rel.max()) if len(rel) else 0.0


def _solve_block(
    G: sp.csr_matrix, rhs: np.ndarray, gfix: np.ndarray, inj: np.ndarray,
    tol: float, method: str, maxiter: int | None,
):
    n = G.shape[0]
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros(n), ComponentStats(n, "trivial", 0, 0.0)
    if method == "dense" or (method == "auto" and n < DENSE_LIMIT):
        v = np.linalg.solve(G.toarray(), rhs)
        res = float(np.linalg.norm(G @ v - rhs)) / bnorm
        return v, ComponentStats(n, "dense", 0, res, _kcl(G, v, rhs, gfix, inj))

    diag = G.diagonal()
    precond = spla.LinearOperator((n, n), matvec=lambda x: x / diag, dtype=np.float64)
    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    cap = maxiter or max(1000, 10 * n)
    v, info = spla.cg(G, rhs, rtol=tol, atol=0.0, M=precond, maxiter=cap, callback=count)
    res = float(np.linalg.norm(G @ v - rhs)) / bnorm
    if res > tol:
        # scipy checks the recursive residual; polish against the true one
        v, info = spla.cg(G, rhs, x0=v, rtol=tol * 0.1, atol=0.0, M=precond, maxiter=cap, callback=count)
        res = float(np.linalg.norm(G @ v - rhs)) / bnorm
    if res > tol or not np.all(np.isfinite(v)):
        raise ConvergenceError(iters, res, tol)

    # the norm test is dominated by pad terms; keep going until every node
    # balances to ``tol`` of its own current, or progress stalls at round-off
    kcl = _kcl(G, v, rhs, gfix, inj)
    rtol = tol
    for _ in range(8):
        if kcl <= tol:
            break
        rtol *= 0.1
        w, _info = spla.cg(G, rhs, x0=v, rtol=rtol, atol=0.0, M=precond, maxiter=cap, callback=count)
        new = _kcl(G, w, rhs, gfix, inj)
        if not new < kcl:
            break
        v, kcl = w, new
    if kcl > tol:
        log.debug("block of %d unknowns: per-node KCL %.2e above tol %.1e at round-off", n, kcl, tol)
    res = float(np.linalg.norm(G @ v - rhs)) / bnorm
    return v, ComponentStats(n, "cg", iters, res, kcl)


def solve_system(
    system: NodalSystem,
    tol: float = 1e-10,
    method: str = "auto",
    maxiter: int | None = None,
    threads: int = 1,
) -> tuple[np.ndarray, tuple[ComponentStats, ...]]:
    """Solve every connected block of the reduced system independently."""
    G, m = system.conductance, system.size
    if m == 0:
        return np.zeros(0), ()
    n_comp, label = connected_components(G, directed=False)

    # a block is grounded when some row exceeds the sum of its off-diagonals
    offsum = np.asarray(abs(G).sum(axis=1)).ravel() - G.diagonal()
    excess = G.diagonal() - offsum
    grounded = np.zeros(n_comp, dtype=bool)
    grounded[label[excess > 1e-12 * G.diagonal()]] = True
    if not grounded.all():
        inv = {}
        for node, s in enumerate(system.slot.tolist()):
            if s >= 0 and not grounded[label[s]]:
                inv.setdefault(label[s], []).append(system.names[node])
        raise SingularSystemError([inv[c] for c in sorted(inv)])

    perm = np.argsort(label, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(np.bincount(label, minlength=n_comp))])
    Gp = G[perm][:, perm].tocsr()
    bp = system.rhs[perm]
    gfix = system.fixed_conductance if system.fixed_conductance is not None else np.zeros(m)
    inj = system.injection if system.injection is not None else np.zeros(m)
    gp, ip = gfix[perm], inj[perm]

    def job(c: int):
        s, e = bounds[c], bounds[c + 1]
        return _solve_block(Gp[s:e, s:e], bp[s:e], gp[s:e], ip[s:e], tol, method, maxiter)

    if threads > 1 and n_comp > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, range(n_comp)))
    else:
        results = [job(c) for c in range(n_comp)]

    vp = np.concatenate([r[0] for r in results])
    v = np.empty(m)
    v[perm] = vp
    return v, tuple(r[1] for r in results)


def solve_dc(
    netlist: DcNetlist,
    tol: float = 1e-10,
    method: str = "auto",
    maxiter: int | None = None,
    threads: int = 1,
) -> DcSolution:
    """Node voltages with relative residual ``|Gv - i| / |i| <= tol`` per block.

    ``method`` is ``"auto"`` (dense below 500 unknowns, CG above), ``"cg"`` or
    ``"dense"``.
    """
    system = build_nodal_system(netlist)
    v, stats = solve_system(system, tol, method, maxiter, threads)
    volts = np.where(system.slot >= 0, v[np.maximum(system.slot, 0)] if len(v) else 0.0, system.fixed_voltage)
    voltages = {name: float(x) for name, x in zip(system.names, volts) if name not in netlist.ground}
    for c in stats:
        log.debug("dc block: %s", c)
    return DcSolution(voltages, stats, system)


def branch_currents(netlist: DcNetlist, voltages: dict[str, float]) -> dict[str, float]:
    """Conventional current ``(V_a - V_b) / R`` per resistor, from ``a`` to ``b``.

    Zero-ohm shorts have no voltage-defined current and map to ``nan``.
    """
    def volt(n: str) -> float:
        return 0.0 if n in netlist.ground else voltages[n]

    out = {}
    for r in netlist.resistors:
        out[r.name] = (volt(r.a) - volt(r.b)) / r.ohms if r.ohms > 0 else math.nan
    return out


def kcl_residuals(netlist: DcNetlist, currents: dict[str, float]) -> dict[str, tuple[float, float]]:
    """Per non-fixed node: (net current imbalance, sum of |incident currents|)."""
    fixed = {v.node for v in netlist.voltage_sources} | set(netlist.ground)
    net: dict[str, float] = {}
    mag: dict[str, float] = {}
    for r in netlist.resistors:
        i = currents[r.name]
        for node, s in ((r.a, -1.0), (r.b, 1.0)):
            net[node] = net.get(node, 0.0) + s * i
            mag[node] = mag.get(node, 0.0) + abs(i)
    for src in netlist.current_sources:
        for node, s in ((src.a, -1.0), (src.b, 1.0)):
            net[node] = net.get(node, 0.0) + s * src.amps
            mag[node] = mag.get(node, 0.0) + abs(src.amps)
    return {n: (net[n], mag[n]) for n in net if n not in fixed}


def ir_drop_scale(netlist: DcNetlist, target: float, tol: float = 1e-10, method: str = "auto") -> float:
    """Factor on all current sources that makes the largest IR drop equal ``target``.

    The drop at a node is its voltage response to the current sources alone
    (all voltage sources shorted), so the factor is exact by linearity.
    """
    quiet = replace(netlist, voltage_sources=tuple(replace(v, volts=0.0) for v in netlist.voltage_sources))
    sol = solve_dc(quiet, tol=tol, method=method)
    drop = max((abs(x) for x in sol.voltages.values()), default=0.0)
    if drop == 0.0:
        raise ValueError("current sources produce no IR drop; cannot scale")
    return target / drop


def scale_current_sources(netlist: DcNetlist, factor: float) -> DcNetlist:
    return replace(
        netlist,
        current_sources=tuple(
            CurrentSource(s.name, s.a, s.b, s.amps * factor) for s in netlist.current_sources
        ),
    )
