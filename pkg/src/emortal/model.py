"""Physical constants and the interconnect graph shared by every analysis.

All quantities are SI. Current densities use the electron-current
convention: ``j > 0`` on a segment means electrons travel from
``from_node`` to ``to_node``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Mapping, Sequence

import numpy as np

ELECTRON_CHARGE = 1.602176634e-19  # C (exact, SI 2019)
BOLTZMANN = 1.380649e-23  # J/K (exact, SI 2019)
EV = 1.602176634e-19  # J per eV


class GraphError(ValueError):
    """Raised when an interconnect graph fails validation."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        head = "; ".join(self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"invalid interconnect graph: {head}{more}")


@dataclass(frozen=True)
class MaterialParams:
    """Material and operating-point constants for EM stress analysis.

    Defaults are typical Cu dual-damascene values (rho, B, Omega, D0, Ea,
    Z*, sigma_crit, T) at a 378 K operating point.
    """

    resistivity: float = 2.25e-8  # ohm m
    atomic_volume: float = 1.18e-29  # m^3
    effective_charge: float = 1.0
    electron_charge: float = ELECTRON_CHARGE
    bulk_modulus: float = 28e9  # Pa
    boltzmann: float = BOLTZMANN
    temperature: float = 378.0  # K
    diffusion_prefactor: float = 1.3e-9  # m^2/s
    activation_energy: float = 0.8  # eV
    critical_stress: float = 41e6  # Pa
    thermal_stress: float = 0.0  # Pa

    def __post_init__(self) -> None:
        bad = []
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                bad.append(f"{f.name} must be a finite number (got {v!r})")
            elif f.name in ("thermal_stress", "effective_charge", "activation_energy"):
                continue
            elif v <= 0:
                bad.append(f"{f.name} must be positive (got {v!r})")
        if self.effective_charge < 0:
            bad.append(f"effective_charge must be non-negative (got {self.effective_charge!r})")
        if self.activation_energy < 0:
            bad.append(f"activation_energy must be non-negative (got {self.activation_energy!r})")
        if bad:
            raise ValueError("; ".join(bad))

    @property
    def beta(self) -> float:
        return compute_beta(self)

    @property
    def kappa(self) -> float:
        return compute_kappa(self)

    @property
    def stress_margin(self) -> float:
        """Effective void-nucleation threshold after the thermal offset."""
        return self.critical_stress - self.thermal_stress

    def replace(self, **changes: float) -> "MaterialParams":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        unknown = set(changes) - set(values)
        if unknown:
            raise KeyError(f"unknown material parameter(s): {', '.join(sorted(unknown))}")
        values.update(changes)
        return MaterialParams(**values)

    def as_dict(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


def compute_beta(materials: MaterialParams) -> float:
    """EM driving-force coefficient Z* e rho / Omega, in Pa per (A/m)."""
    m = materials
    return m.effective_charge * m.electron_charge * m.resistivity / m.atomic_volume


def compute_kappa(materials: MaterialParams) -> float:
    """Stress diffusivity D0 exp(-Ea/kT) B Omega / (kT), in m^2/s."""
    m = materials
    kt = m.boltzmann * m.temperature
    diffusivity = m.diffusion_prefactor * math.exp(-m.activation_energy * EV / kt)
    return diffusivity * m.bulk_modulus * m.atomic_volume / kt


@dataclass(frozen=True)
class Node:
    id: str
    layer: str = ""


@dataclass(frozen=True)
class Segment:
    """A wire segment; ``current_density`` is signed along from_node -> to_node."""

    id: str
    from_node: str
    to_node: str
    length: float
    width: float
    height: float
    current_density: float
    layer: str = ""


@dataclass(frozen=True, eq=False)
class InterconnectGraph:
    """Undirected multigraph of wire segments.

    Construction does not validate; call :func:`validate_graph` or
    :meth:`checked` before analysis. Columnar numpy views are built lazily
    and cached, the analysis code works on those.
    """

    nodes: tuple[Node, ...]
    segments: tuple[Segment, ...]
    materials: MaterialParams = field(default_factory=MaterialParams)

    @classmethod
    def build(
        cls,
        nodes: Iterable[Node | str],
        segments: Iterable[Segment],
        materials: MaterialParams | None = None,
    ) -> "InterconnectGraph":
        ns = tuple(n if isinstance(n, Node) else Node(str(n)) for n in nodes)
        return cls(ns, tuple(segments), materials or MaterialParams())

    def checked(self) -> "InterconnectGraph":
        problems = validate_graph(self)
        if problems:
            raise GraphError(problems)
        return self

    @property
    def node_index(self) -> Mapping[str, int]:
        cache = self.__dict__.get("_node_index")
        if cache is None:
            cache = {n.id: i for i, n in enumerate(self.nodes)}
            object.__setattr__(self, "_node_index", cache)
        return cache

    def arrays(self) -> "GraphArrays":
        cache = self.__dict__.get("_arrays")
        if cache is None:
            cache = GraphArrays.from_graph(self)
            object.__setattr__(self, "_arrays", cache)
        return cache

    def __len__(self) -> int:
        return len(self.segments)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InterconnectGraph):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.segments == other.segments
            and self.materials == other.materials
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class GraphArrays:
    """Columnar form of a validated graph: node indices and float64 columns."""

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    length: np.ndarray
    width: np.ndarray
    height: np.ndarray
    j: np.ndarray

    @classmethod
    def from_graph(cls, graph: InterconnectGraph) -> "GraphArrays":
        idx = graph.node_index
        segs = graph.segments
        m = len(segs)
        src = np.fromiter((idx[s.from_node] for s in segs), dtype=np.int64, count=m)
        dst = np.fromiter((idx[s.to_node] for s in segs), dtype=np.int64, count=m)

        def col(name: str) -> np.ndarray:
            return np.fromiter((getattr(s, name) for s in segs), dtype=np.float64, count=m)

        return cls(
            len(graph.nodes), src, dst,
            col("length"), col("width"), col("height"), col("current_density"),
        )

    @property
    def area(self) -> np.ndarray:
        return self.width * self.height


def validate_graph(graph: InterconnectGraph) -> list[str]:
    """Return human-readable violations; an empty list means the graph is usable."""
    problems: list[str] = []
    seen: set[str] = set()
    for n in graph.nodes:
        if n.id in seen:
            problems.append(f"duplicate node id {n.id!r}")
        seen.add(n.id)

    degree = dict.fromkeys(seen, 0)
    seg_ids: set[str] = set()
    for s in graph.segments:
        if s.id in seg_ids:
            problems.append(f"duplicate segment id {s.id!r}")
        seg_ids.add(s.id)
        for end in (s.from_node, s.to_node):
            if end not in degree:
                problems.append(f"dangling endpoint: segment {s.id!r} references unknown node {end!r}")
            else:
                degree[end] += 1
        if s.from_node == s.to_node:
            problems.append(f"self-loop: segment {s.id!r} starts and ends at {s.from_node!r}")
        for name, v in (("length", s.length), ("width", s.width), ("height", s.height)):
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                problems.append(f"non-positive {name}: segment {s.id!r} has {name}={v!r}")
        if not math.isfinite(s.current_density):
            problems.append(f"non-finite current density on segment {s.id!r}")

    for nid, d in degree.items():
        if d == 0:
            problems.append(f"isolated node {nid!r}")
    return problems
