"""Readers and writers for interconnect descriptions.

Two input formats are supported:

* the canonical document, a sectioned ``key=value`` text format that maps
  one-to-one onto :class:`~emortal.model.InterconnectGraph`;
* a SPICE subset (R, I and V cards) as used by IBM-style power-grid
  benchmarks, which parses into a :class:`DcNetlist`.

Canonical document grammar::

    # comments start with '#'
    current_convention = electron | conventional     (optional, before sections)
    MATERIALS
    <key> = <number>                                 (one per line)
    NODES
    <node-id> [layer=<label>]
    SEGMENTS
    <seg-id> from=<node> to=<node> length_um=<x> width_um=<x> height_um=<x>
             j_e_A_per_m2=<x> [layer=<label>]

Length fields accept a ``_um`` or ``_m`` suffix. The writer always emits
SI fields with ``repr`` floats so that a write/read cycle is lossless.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .model import GraphError, InterconnectGraph, MaterialParams, Node, Segment, validate_graph

log = logging.getLogger(__name__)

GROUND_NAMES = frozenset({"0", "gnd", "GND"})


class NetlistSyntaxError(ValueError):
    """A positioned parse error; ``line`` and ``column`` are 1-based."""

    def __init__(self, message: str, line: int, column: int = 1, text: str = ""):
        self.line = line
        self.column = column
        self.text = text
        self.reason = message
        where = f"line {line}, column {column}"
        super().__init__(f"{where}: {message}" + (f"\n  {text}" if text else ""))


class ConfigError(ValueError):
    pass


# canonical key -> (MaterialParams field, multiplier to SI)
_MATERIAL_KEYS: dict[str, tuple[str, float]] = {
    "rho_ohm_m": ("resistivity", 1.0),
    "atomic_volume_m3": ("atomic_volume", 1.0),
    "z_star": ("effective_charge", 1.0),
    "e_C": ("electron_charge", 1.0),
    "bulk_modulus_Pa": ("bulk_modulus", 1.0),
    "bulk_modulus_GPa": ("bulk_modulus", 1e9),
    "k_J_per_K": ("boltzmann", 1.0),
    "T_K": ("temperature", 1.0),
    "D0_m2_per_s": ("diffusion_prefactor", 1.0),
    "Ea_eV": ("activation_energy", 1.0),
    "sigma_crit_Pa": ("critical_stress", 1.0),
    "sigma_crit_MPa": ("critical_stress", 1e6),
    "sigma_T_Pa": ("thermal_stress", 1.0),
    "sigma_T_MPa": ("thermal_stress", 1e6),
}
_MATERIAL_WRITE_ORDER = (
    "rho_ohm_m", "atomic_volume_m3", "z_star", "e_C", "bulk_modulus_Pa", "k_J_per_K",
    "T_K", "D0_m2_per_s", "Ea_eV", "sigma_crit_Pa", "sigma_T_Pa",
)
_SCALE = {"um": 1e-6, "m": 1.0}
_SEGMENT_REQUIRED = ("from", "to", "length", "width", "height", "j_e_A_per_m2")
_CONVENTIONS = ("electron", "conventional")


def _number(tok: str, line: int, col: int, raw: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise NetlistSyntaxError(f"expected a number, got {tok!r}", line, col, raw) from None
    if not math.isfinite(v):
        raise NetlistSyntaxError(f"non-finite number {tok!r}", line, col, raw)
    return v


def _fields(rest: str, offset: int, lineno: int, raw: str) -> dict[str, tuple[str, int]]:
    out: dict[str, tuple[str, int]] = {}
    for m in re.finditer(r"\S+", rest):
        tok, col = m.group(), offset + m.start() + 1
        key, eq, value = tok.partition("=")
        if not eq or not key or not value:
            raise NetlistSyntaxError(f"expected key=value, got {tok!r}", lineno, col, raw)
        if key in out:
            raise NetlistSyntaxError(f"duplicate field {key!r}", lineno, col, raw)
        out[key] = (value, col)
    return out


def parse_canonical(text: str | bytes, materials: MaterialParams | None = None) -> InterconnectGraph:
    """Parse a canonical document into a validated graph (electron convention).

    ``materials`` supplies defaults for keys the MATERIALS section omits.
    Raises :class:`NetlistSyntaxError` for malformed lines and
    :class:`~emortal.model.GraphError` for semantic problems.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise NetlistSyntaxError(f"input is not UTF-8 ({exc.reason})", 1) from None

    section = None
    convention = "electron"
    mat_values: dict[str, float] = {}
    nodes: list[Node] = []
    raw_segments: list[tuple] = []

    for lineno, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0]
        stripped = body.strip()
        if not stripped:
            continue
        indent = len(body) - len(body.lstrip())
        upper = stripped.upper()
        if upper in ("MATERIALS", "NODES", "SEGMENTS"):
            section = upper
            continue

        if section is None or section == "MATERIALS":
            key, eq, value = stripped.partition("=")
            key, value = key.strip(), value.strip()
            if not eq:
                raise NetlistSyntaxError(f"expected 'key = value', got {stripped!r}", lineno, indent + 1, raw)
            after = body[body.index("=") + 1:]
            vcol = body.index("=") + 2 + len(after) - len(after.lstrip())
            if section is None:
                if key != "current_convention":
                    raise NetlistSyntaxError(
                        f"unknown header field {key!r} (expected current_convention or a section name)",
                        lineno, indent + 1, raw,
                    )
                if value not in _CONVENTIONS:
                    raise NetlistSyntaxError(
                        f"current_convention must be one of {_CONVENTIONS}, got {value!r}", lineno, vcol, raw
                    )
                convention = value
                continue
            if key not in _MATERIAL_KEYS:
                raise NetlistSyntaxError(f"unknown material field {key!r}", lineno, indent + 1, raw)
            name, scale = _MATERIAL_KEYS[key]
            if name in mat_values:
                raise NetlistSyntaxError(f"material {name} given twice", lineno, indent + 1, raw)
            mat_values[name] = _number(value, lineno, vcol, raw) * scale
            continue

        first = stripped.split(None, 1)[0]
        rest = stripped[len(first):]
        rest_offset = indent + len(first)
        if section == "NODES":
            f = _fields(rest, rest_offset, lineno, raw)
            unknown = set(f) - {"layer"}
            if unknown:
                key = sorted(unknown)[0]
                raise NetlistSyntaxError(f"unknown node field {key!r}", lineno, f[key][1], raw)
            nodes.append(Node(first, f["layer"][0] if "layer" in f else ""))
            continue

        f = _fields(rest, rest_offset, lineno, raw)
        values: dict[str, float] = {}
        for key, (value, col) in f.items():
            if key in ("from", "to", "layer", "j_e_A_per_m2"):
                continue
            base, _, unit = key.rpartition("_")
            if base not in ("length", "width", "height") or unit not in _SCALE:
                raise NetlistSyntaxError(f"unknown segment field {key!r}", lineno, col, raw)
            if base in values:
                raise NetlistSyntaxError(f"{base} given twice", lineno, col, raw)
            values[base] = _number(value, lineno, col, raw) * _SCALE[unit]
        for req in _SEGMENT_REQUIRED:
            if req not in f and req not in values:
                raise NetlistSyntaxError(
                    f"segment {first!r} is missing {req}" + ("_um" if req in ("length", "width", "height") else ""),
                    lineno, indent + 1, raw,
                )
        jv, jcol = f["j_e_A_per_m2"]
        j = _number(jv, lineno, jcol, raw)
        raw_segments.append((
            first, f["from"][0], f["to"][0], values["length"], values["width"], values["height"], j,
            f["layer"][0] if "layer" in f else None,
        ))

    base = materials or MaterialParams()
    try:
        mats = base.replace(**mat_values)
    except ValueError as exc:
        raise GraphError([f"invalid materials: {exc}"]) from None

    sign = -1.0 if convention == "conventional" else 1.0
    node_layer = {n.id: n.layer for n in nodes}
    segments = [
        Segment(sid, a, b, l, w, h, sign * j if j else j, layer if layer is not None else node_layer.get(a, ""))
        for sid, a, b, l, w, h, j, layer in raw_segments
    ]
    graph = InterconnectGraph(tuple(nodes), tuple(segments), mats)
    problems = validate_graph(graph)
    if not graph.segments:
        problems.append("graph has no segments")
    if problems:
        raise GraphError(problems)
    return graph


def write_canonical(graph: InterconnectGraph) -> str:
    """Serialize ``graph`` losslessly in the canonical format."""
    m = graph.materials
    inverse = {k: name for k, (name, scale) in _MATERIAL_KEYS.items() if scale == 1.0}
    out = ["current_convention = electron", "MATERIALS"]
    for key in _MATERIAL_WRITE_ORDER:
        out.append(f"{key} = {getattr(m, inverse[key])!r}")
    out.append("NODES")
    for n in graph.nodes:
        out.append(f"{n.id} layer={n.layer}" if n.layer else n.id)
    out.append("SEGMENTS")
    for s in graph.segments:
        line = (
            f"{s.id} from={s.from_node} to={s.to_node} length_m={float(s.length)!r} "
            f"width_m={float(s.width)!r} height_m={float(s.height)!r} "
            f"j_e_A_per_m2={float(s.current_density)!r}"
        )
        if s.layer:
            line += f" layer={s.layer}"
        out.append(line)
    return "\n".join(out) + "\n"


def parse_materials(text: str, base: MaterialParams | None = None) -> MaterialParams:
    """Read a MATERIALS-only document (the section header is optional)."""
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0].strip()
        if not body or body.upper() == "MATERIALS":
            continue
        key, eq, value = body.partition("=")
        key = key.strip()
        if not eq or key not in _MATERIAL_KEYS:
            raise NetlistSyntaxError(f"unknown material field {key!r}", lineno, 1, raw)
        name, scale = _MATERIAL_KEYS[key]
        values[name] = _number(value.strip(), lineno, raw.index("=") + 2, raw) * scale
    return (base or MaterialParams()).replace(**values)


# ---------------------------------------------------------------------------
# SPICE subset


@dataclass(frozen=True)
class Resistor:
    name: str
    a: str
    b: str
    ohms: float
    layer: str | None  # None marks a via / package connection


@dataclass(frozen=True)
class CurrentSource:
    """SPICE orientation: ``amps`` flows from ``a`` through the source into ``b``."""

    name: str
    a: str
    b: str
    amps: float


@dataclass(frozen=True)
class VoltageSource:
    name: str
    node: str
    volts: float


@dataclass(frozen=True, eq=False)
class DcNetlist:
    resistors: tuple[Resistor, ...]
    current_sources: tuple[CurrentSource, ...] = ()
    voltage_sources: tuple[VoltageSource, ...] = ()
    ground: frozenset[str] = GROUND_NAMES
    warnings: tuple[str, ...] = ()

    def nodes(self) -> list[str]:
        """Non-ground node names in first-appearance order."""
        seen: dict[str, None] = {}
        for r in self.resistors:
            seen.setdefault(r.a)
            seen.setdefault(r.b)
        for i in self.current_sources:
            seen.setdefault(i.a)
            seen.setdefault(i.b)
        for v in self.voltage_sources:
            seen.setdefault(v.node)
        return [n for n in seen if n not in self.ground]


_SUFFIX = {
    "t": 1e12, "g": 1e9, "meg": 1e6, "k": 1e3, "m": 1e-3, "u": 1e-6, "n": 1e-9, "p": 1e-12, "f": 1e-15,
}
_VALUE_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(meg|[tgkmunpf])?[a-z]*$", re.IGNORECASE)

DEFAULT_LAYER_PATTERNS = (
    re.compile(r"^[A-Za-z]\w*?_m(\d+)_-?\d+_-?\d+$"),  # <net>_m<layer>_<x>_<y>
    re.compile(r"^n(\d+)_-?\d+_-?\d+$"),  # n<layer>_<x>_<y> (ibmpg)
)


def spice_value(tok: str) -> float:
    m = _VALUE_RE.match(tok)
    if not m:
        raise ValueError(f"bad value {tok!r}")
    v = float(m.group(1))
    if m.group(2):
        v *= _SUFFIX[m.group(2).lower()]
    return v


def node_layer(name: str, patterns: Iterable[re.Pattern] = DEFAULT_LAYER_PATTERNS) -> str | None:
    for pat in patterns:
        m = pat.match(name)
        if m:
            return f"M{int(m.group(1))}"
    return None


def parse_spice_subset(
    text: str | bytes,
    ground: Iterable[str] = GROUND_NAMES,
    layer_patterns: Iterable[re.Pattern] = DEFAULT_LAYER_PATTERNS,
) -> DcNetlist:
    """Parse R/I/V cards; other cards are skipped with a warning.

    A resistor's layer is inferred from its node names. Endpoints on two
    different layers (or one layer and an unnamed node) mark a via, stored
    with ``layer=None``. When neither endpoint carries a layer the resistor
    goes to the single layer ``"default"``.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    gnd = frozenset(ground)
    patterns = tuple(layer_patterns)
    layer_cache: dict[str, str | None] = {}

    def layer_of(n: str) -> str | None:
        if n not in layer_cache:
            layer_cache[n] = None if n in gnd else node_layer(n, patterns)
        return layer_cache[n]

    resistors: list[Resistor] = []
    isrc: list[CurrentSource] = []
    vsrc: list[VoltageSource] = []
    warnings: list[str] = []
    names: dict[str, int] = {}

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] == "*":
            continue
        low = line.lower()
        if low.startswith(".end") and (len(low) == 4 or low[4].isspace()):
            break
        if line[0] in ".+":
            warnings.append(f"line {lineno}: skipped unsupported card {line.split()[0]!r}")
            continue
        kind = line[0].upper()
        if kind not in "RIV":
            warnings.append(f"line {lineno}: skipped unsupported element {line.split()[0]!r}")
            continue
        toks = line.split()
        if len(toks) < 4:
            raise NetlistSyntaxError(f"{kind} card needs name, two nodes and a value", lineno, 1, raw)
        name, a, b, vtok = toks[0], toks[1], toks[2], toks[3]
        if kind in "IV" and vtok.lower() == "dc" and len(toks) >= 5:
            vtok = toks[4]
        try:
            value = spice_value(vtok)
        except ValueError:
            col = raw.index(vtok, len(raw) - len(raw.lstrip()) + len(name)) + 1
            raise NetlistSyntaxError(f"bad numeric value {vtok!r}", lineno, col, raw) from None
        if name in names:
            names[name] += 1
            new = f"{name}#{names[name]}"
            warnings.append(f"line {lineno}: duplicate element name {name!r} renamed {new!r}")
            name = new
        else:
            names[name] = 1

        if kind == "R":
            if value < 0:
                raise NetlistSyntaxError(f"negative resistance {value!r}", lineno, 1, raw)
            if a == b:
                warnings.append(f"line {lineno}: skipped resistor {name!r} shorted to itself")
                continue
            la, lb = layer_of(a), layer_of(b)
            if la is None and lb is None and a not in gnd and b not in gnd:
                layer = "default"
            else:
                layer = la if la == lb else None
            resistors.append(Resistor(name, a, b, value, layer))
        elif kind == "I":
            isrc.append(CurrentSource(name, a, b, value))
        else:
            if a in gnd and b in gnd:
                warnings.append(f"line {lineno}: skipped voltage source {name!r} between ground nodes")
                continue
            if b in gnd:
                vsrc.append(VoltageSource(name, a, value))
            elif a in gnd:
                vsrc.append(VoltageSource(name, b, -value))
            else:
                raise NetlistSyntaxError(
                    f"voltage source {name!r} must have one terminal on ground", lineno, 1, raw
                )

    for w in warnings:
        log.warning(w)
    if not resistors:
        raise NetlistSyntaxError("empty netlist: no resistors parsed", max(1, len(text.splitlines())), 1)
    return DcNetlist(tuple(resistors), tuple(isrc), tuple(vsrc), gnd, tuple(warnings))


def write_spice(netlist: DcNetlist) -> str:
    out = ["* emortal netlist"]
    for r in netlist.resistors:
        out.append(f"{r.name} {r.a} {r.b} {r.ohms!r}")
    for i in netlist.current_sources:
        out.append(f"{i.name} {i.a} {i.b} {i.amps!r}")
    for v in netlist.voltage_sources:
        out.append(f"{v.name} {v.node} 0 {v.volts!r}")
    out.append(".end")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# netlist -> EM graph


@dataclass(frozen=True)
class GeometryConfig:
    """Per-layer wire cross-section; ``"*"`` acts as a fallback layer entry."""

    layers: Mapping[str, tuple[float, float]] = field(default_factory=dict)  # layer -> (width, height), m
    resistivity: float | None = None

    def __post_init__(self) -> None:
        for layer, (w, h) in self.layers.items():
            if not (w > 0 and h > 0):
                raise ConfigError(f"layer {layer!r}: width and height must be positive")
        if self.resistivity is not None and not self.resistivity > 0:
            raise ConfigError("resistivity override must be positive")

    def cross_section(self, layer: str) -> tuple[float, float]:
        if layer in self.layers:
            return self.layers[layer]
        if "*" in self.layers:
            return self.layers["*"]
        raise ConfigError(f"geometry config has no entry for layer {layer!r}")

    @classmethod
    def from_json(cls, text: str) -> "GeometryConfig":
        """``{"resistivity_ohm_m": x, "layers": {"M1": {"width_um": w, "height_um": h}}}``"""
        data = json.loads(text)
        layers = {}
        for name, spec in data.get("layers", {}).items():
            try:
                w = spec["width_um"] * 1e-6 if "width_um" in spec else spec["width_m"]
                h = spec["height_um"] * 1e-6 if "height_um" in spec else spec["height_m"]
            except KeyError as exc:
                raise ConfigError(f"layer {name!r} lacks {exc.args[0]}") from None
            layers[name] = (float(w), float(h))
        return cls(layers, data.get("resistivity_ohm_m"))

    @classmethod
    def load(cls, path: str | Path) -> "GeometryConfig":
        return cls.from_json(Path(path).read_text())

    def as_dict(self) -> dict:
        return {
            "resistivity_ohm_m": self.resistivity,
            "layers": {k: {"width_m": w, "height_m": h} for k, (w, h) in sorted(self.layers.items())},
        }


DEFAULT_GEOMETRY = GeometryConfig({"*": (1e-6, 1e-6)})


def netlist_to_graph(
    netlist: DcNetlist,
    branch_currents: Mapping[str, float],
    geometry: GeometryConfig,
    materials: MaterialParams,
) -> InterconnectGraph:
    """One segment per same-layer resistor, with geometry recovered from R.

    ``branch_currents`` holds conventional current per resistor name, flowing
    from the resistor's first node to its second. The segment keeps that
    node order and stores the electron current density ``-I/(w*h)``. Vias
    (``layer=None``) are dropped because the barrier blocks atomic flux
    between layers.
    """
    rho = geometry.resistivity or materials.resistivity
    nodes: dict[str, str] = {}
    segments: list[Segment] = []
    for r in netlist.resistors:
        if r.layer is None:
            continue
        if r.name not in branch_currents:
            raise KeyError(f"no branch current for resistor {r.name!r}")
        w, h = geometry.cross_section(r.layer)
        length = r.ohms * w * h / rho
        if not length > 0:
            raise ConfigError(
                f"resistor {r.name!r} ({r.ohms!r} ohm) gives non-positive length {length!r}; "
                "check the geometry config"
            )
        current = branch_currents[r.name]
        if not math.isfinite(current):
            raise ValueError(f"non-finite current on resistor {r.name!r}")
        j = -current / (w * h)
        segments.append(Segment(r.name, r.a, r.b, length, w, h, j + 0.0, r.layer))
        nodes.setdefault(r.a, r.layer)
        nodes.setdefault(r.b, r.layer)
    graph = InterconnectGraph(tuple(Node(n, l) for n, l in nodes.items()), tuple(segments), materials)
    return graph
