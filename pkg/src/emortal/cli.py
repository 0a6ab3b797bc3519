"""Command-line front end.

Exit status: 0 when every component is immortal (or the oracle agrees),
2 when something is mortal (or the oracle disagrees), 1 on any error.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from . import __version__
from .blech import compare, jl_crit_from_materials
from .dcsolve import ConvergenceError, SingularSystemError, branch_currents, ir_drop_scale, scale_current_sources, solve_dc
from .engine import ChordInconsistencyError, analyze
from .generate import TOPOLOGIES, GenConfig, generate, grid_shape_for_edges
from .model import GraphError, MaterialParams
from .netlist import (
    DEFAULT_GEOMETRY,
    ConfigError,
    GeometryConfig,
    NetlistSyntaxError,
    netlist_to_graph,
    parse_canonical,
    parse_materials,
    parse_spice_subset,
    write_canonical,
)
from .oracle import OracleCapError, OracleConvergenceError, verify_against_engine
from .report import config_hash, write_report, write_scatter

log = logging.getLogger("emortal")

EXIT_OK, EXIT_ERROR, EXIT_MORTAL = 0, 1, 2

_HANDLED = (
    OSError, NetlistSyntaxError, GraphError, ChordInconsistencyError, ConfigError, SingularSystemError,
    ConvergenceError, OracleCapError, OracleConvergenceError, ValueError, KeyError,
)


@dataclass
class RunConfig:
    command: str
    inputs: list[str] = field(default_factory=list)
    input_sha256: list[str] = field(default_factory=list)
    materials_file: str | None = None
    geometry_file: str | None = None
    tolerances: dict[str, float] = field(default_factory=dict)
    options: dict[str, Any] = field(default_factory=dict)
    format: str = "json"
    out: str | None = None
    seed: int = 0

    def header(self, materials: MaterialParams) -> dict[str, Any]:
        cfg = asdict(self)
        cfg["out"] = None  # output location does not change the content
        return {
            "tool": "emortal",
            "version": __version__,
            "config": cfg,
            "config_hash": config_hash({"config": cfg, "materials": materials.as_dict()}),
        }


def _read(path: str, cfg: RunConfig) -> bytes:
    data = Path(path).read_bytes()
    cfg.inputs.append(path)
    cfg.input_sha256.append(hashlib.sha256(data).hexdigest())
    return data


def _materials(args, cfg: RunConfig) -> MaterialParams | None:
    if not args.materials:
        return None
    cfg.materials_file = args.materials
    return parse_materials(_read(args.materials, cfg).decode())


def _emit(data: bytes, out: str | None) -> None:
    if out:
        Path(out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _config(args, command: str) -> RunConfig:
    return RunConfig(command=command, format=args.format, out=args.out, seed=args.seed)


def cmd_analyze(args) -> int:
    cfg = _config(args, args.command)
    base = _materials(args, cfg)
    t0 = time.perf_counter()
    graph = parse_canonical(_read(args.input, cfg), base)
    t_parse = time.perf_counter()
    cfg.tolerances["chord_rtol"] = args.chord_rtol
    sol = analyze(graph, chord_rtol=args.chord_rtol)
    t_solve = time.perf_counter()
    comparison = None
    if args.command == "compare":
        jl_crit = args.jl_crit * 1e6 if args.jl_crit is not None else jl_crit_from_materials(graph.materials)
        cfg.options["jl_crit_A_per_m"] = jl_crit
        comparison = compare(graph, sol, jl_crit)
        if args.scatter:
            Path(args.scatter).write_bytes(write_scatter(graph, comparison))
    header = cfg.header(graph.materials)
    if args.timings:
        header["timings_s"] = {"parse": t_parse - t0, "analyze": t_solve - t_parse}
    _emit(write_report(sol, comparison, args.format, header), args.out)
    log.info("parse %.3fs, analyze %.3fs", t_parse - t0, t_solve - t_parse)
    return EXIT_OK if sol.immortal else EXIT_MORTAL


def cmd_pg(args) -> int:
    cfg = _config(args, "pg")
    base = _materials(args, cfg) or MaterialParams()
    t0 = time.perf_counter()
    netlist = parse_spice_subset(_read(args.input, cfg))
    if args.geometry:
        cfg.geometry_file = args.geometry
        geometry = GeometryConfig.from_json(_read(args.geometry, cfg).decode())
    else:
        geometry = DEFAULT_GEOMETRY
        cfg.options["geometry"] = "default 1um x 1um for every layer"
    cfg.tolerances["dc_tol"] = args.dc_tol
    cfg.tolerances["chord_rtol"] = args.chord_rtol
    t_parse = time.perf_counter()

    if args.scale_to_ir_drop is not None:
        factor = ir_drop_scale(netlist, args.scale_to_ir_drop, tol=args.dc_tol)
        cfg.options["current_scale"] = factor
        netlist = scale_current_sources(netlist, factor)
    dc = solve_dc(netlist, tol=args.dc_tol, threads=args.threads)
    currents = branch_currents(netlist, dc.voltages)
    t_dc = time.perf_counter()

    graph = netlist_to_graph(netlist, currents, geometry, base)
    sol = analyze(graph, chord_rtol=args.chord_rtol)
    jl_crit = args.jl_crit * 1e6 if args.jl_crit is not None else jl_crit_from_materials(base)
    comparison = compare(graph, sol, jl_crit)
    t_em = time.perf_counter()
    if args.scatter:
        Path(args.scatter).write_bytes(write_scatter(graph, comparison))

    header = cfg.header(base)
    header["dc"] = dc.summary()
    header["netlist"] = {
        "resistors": len(netlist.resistors),
        "em_segments": len(graph.segments),
        "vias_excluded": sum(r.layer is None for r in netlist.resistors),
        "warnings": len(netlist.warnings),
    }
    if args.timings:
        header["timings_s"] = {"parse": t_parse - t0, "dc": t_dc - t_parse, "em": t_em - t_dc}
    counts = comparison.counts()
    log.info(
        "|E|=%d tp=%d tn=%d fp=%d fn=%d (dc %.2fs, em %.2fs)",
        len(graph.segments), counts["tp"], counts["tn"], counts["fp"], counts["fn"], t_dc - t_parse, t_em - t_dc,
    )
    _emit(write_report(sol, comparison, args.format, header), args.out)
    return EXIT_OK if sol.immortal else EXIT_MORTAL


def cmd_oracle(args) -> int:
    cfg = _config(args, "oracle")
    base = _materials(args, cfg)
    graph = parse_canonical(_read(args.input, cfg), base)
    rep = verify_against_engine(graph, cells=args.cells, dt=args.dt, tol=args.oracle_tol, dump=args.dump)
    ok = rep.max_error < args.max_err
    lines = ["node_id,engine_Pa,oracle_Pa,relative_error"]
    lines += [f"{nid},{e!r},{o!r},{r!r}" for nid, e, o, r in rep.rows()]
    lines.append(f"# max_relative_error={rep.max_error!r} cells={rep.cells} steps={rep.steps} pass={int(ok)}")
    _emit(("\n".join(lines) + "\n").encode(), args.out)
    return EXIT_OK if ok else EXIT_MORTAL


def cmd_gen(args) -> int:
    size, cols, drop = args.size, args.cols, 0
    if args.edges is not None:
        if args.topology != "grid-mesh":
            raise ValueError("--edges applies to grid-mesh only")
        size, cols, drop = grid_shape_for_edges(args.edges)
    gcfg = GenConfig(
        topology=args.topology, size=size, seed=args.seed, extra_edges=args.extra_edges,
        cols=cols, drop_edges=drop, jl_ratio=args.jl_ratio,
    )
    cfg = _config(args, "gen")
    graph = generate(gcfg, _materials(args, cfg))
    text = write_canonical(graph)
    header = (
        f"# emortal gen topology={gcfg.topology} size={gcfg.size} seed={gcfg.seed} "
        f"segments={len(graph.segments)} jl_ratio={gcfg.jl_ratio!r}\n"
    )
    _emit((header + text).encode(), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--materials", metavar="FILE", help="MATERIALS-section file overriding Cu defaults")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--timings", action="store_true", help="add wall-clock timings to the report")

    p = argparse.ArgumentParser(prog="emortal", description="Steady-state EM immortality analysis.")
    p.add_argument("--version", action="version", version=f"emortal {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    for name, helptext in (
        ("analyze", "stress and verdict for a canonical interconnect file"),
        ("compare", "analyze plus classical Blech filter comparison"),
    ):
        a = sub.add_parser(name, parents=[common], help=helptext)
        a.add_argument("input")
        a.add_argument("--chord-rtol", type=float, default=1e-6)
        if name == "compare":
            a.add_argument("--jl-crit", type=float, metavar="A_PER_UM", help="override (jl)_crit in A/um")
            a.add_argument("--scatter", metavar="PATH", help="write |j|, l, class scatter CSV")
        a.set_defaults(func=cmd_analyze)

    pg = sub.add_parser("pg", parents=[common], help="power-grid netlist: DC solve, analyze, Blech compare")
    pg.add_argument("input")
    pg.add_argument("--geometry", metavar="FILE", help="per-layer width/height JSON")
    pg.add_argument("--dc-tol", type=float, default=1e-10)
    pg.add_argument("--chord-rtol", type=float, default=1e-6)
    pg.add_argument("--scale-to-ir-drop", type=float, metavar="VOLTS")
    pg.add_argument("--jl-crit", type=float, metavar="A_PER_UM")
    pg.add_argument("--scatter", metavar="PATH")
    pg.set_defaults(func=cmd_pg)

    o = sub.add_parser("oracle", parents=[common], help="check the closed form against transient simulation")
    o.add_argument("input")
    o.add_argument("--cells", type=int, default=32)
    o.add_argument("--dt", type=float, help="initial time step, s")
    o.add_argument("--oracle-tol", type=float, default=1e-6)
    o.add_argument("--max-err", type=float, default=0.01)
    o.add_argument("--dump", metavar="PATH", help="per-step CSV of total mass and max stress change")
    o.set_defaults(func=cmd_oracle)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic canonical instance")
    g.add_argument("--topology", choices=TOPOLOGIES, default="grid-mesh")
    g.add_argument("--size", type=int, default=10)
    g.add_argument("--cols", type=int)
    g.add_argument("--edges", type=int, help="grid-mesh: pick the square side closest to this edge count")
    g.add_argument("--extra-edges", type=int)
    g.add_argument("--jl-ratio", type=float, default=2.0, help="largest |j|*l as a multiple of (jl)_crit")
    g.set_defaults(func=cmd_gen)
    return p


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("EMORTAL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ChordInconsistencyError as exc:
        print(f"emortal: chord inconsistency: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except _HANDLED as exc:
        print(f"emortal: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
