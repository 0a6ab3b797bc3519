"""Deterministic JSON and CSV reports.

Floats are written with ``repr`` so identical inputs give byte-identical
output. CSV reports hold two tables separated by one blank line: nodes
(``node_id,layer,component_id,stress_Pa,is_max_in_component``) then
segments (``segment_id,from,to,jl_A_per_m,exact_mortal,blech_mortal,class``).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from typing import Any, Mapping

from .blech import ConfusionReport
from .engine import StressSolution

NODE_COLUMNS = ("node_id", "layer", "component_id", "stress_Pa", "is_max_in_component")
SEGMENT_COLUMNS = ("segment_id", "from", "to", "jl_A_per_m", "exact_mortal", "blech_mortal", "class")
SCATTER_COLUMNS = ("segment_id", "abs_j_A_per_m2", "length_m", "class")


def config_hash(config: Mapping[str, Any]) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _flag(v) -> str:
    return "1" if v else "0"


def _require(solution: StressSolution) -> None:
    if solution.segment_mortal is None:
        raise ValueError("solution has no verdict")
    if not solution.graph.nodes or not solution.graph.segments:
        raise ValueError("cannot report on an empty graph")


def component_rows(solution: StressSolution) -> list[dict]:
    ids = solution.graph.nodes
    out = []
    for c in range(solution.forest.n_components):
        out.append({
            "component_id": c,
            "reference_node": ids[int(solution.forest.roots[c])].id,
            "sigma_max_Pa": float(solution.sigma_max[c]),
            "argmax_node": ids[int(solution.argmax_node[c])].id,
            "sigma_min_Pa": float(solution.sigma_min[c]),
            "immortal": bool(solution.component_immortal[c]),
        })
    return out


def write_report(
    solution: StressSolution,
    comparison: ConfusionReport | None = None,
    format: str = "json",
    header: Mapping[str, Any] | None = None,
) -> bytes:
    _require(solution)
    if format == "csv":
        return _csv(solution, comparison)
    if format != "json":
        raise ValueError(f"unknown report format {format!r}")
    return _json(solution, comparison, header or {})


def _csv(solution: StressSolution, comparison: ConfusionReport | None) -> bytes:
    g = solution.graph
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(NODE_COLUMNS)
    is_max = solution.is_max_in_component()
    comp = solution.forest.component.tolist()
    for node, c, s, mx in zip(g.nodes, comp, solution.stress.tolist(), is_max.tolist()):
        w.writerow((node.id, node.layer, c, repr(s), _flag(mx)))
    buf.write("\n")
    w.writerow(SEGMENT_COLUMNS)
    arr = g.arrays()
    jl = (arr.j * arr.length).tolist()
    mortal = solution.segment_mortal.tolist()
    if comparison is not None:
        blech = [_flag(b) for b in comparison.blech_mortal.tolist()]
        labels = comparison.labels
    else:
        blech = labels = [""] * len(g.segments)
    for seg, x, em, bm, lab in zip(g.segments, jl, mortal, blech, labels):
        w.writerow((seg.id, seg.from_node, seg.to_node, repr(x), _flag(em), bm, lab))
    return buf.getvalue().encode()


def _json(solution: StressSolution, comparison: ConfusionReport | None, header: Mapping[str, Any]) -> bytes:
    g = solution.graph
    arr = g.arrays()
    comp = solution.forest.component.tolist()
    is_max = solution.is_max_in_component().tolist()
    doc: dict[str, Any] = dict(header)
    doc["materials"] = g.materials.as_dict()
    doc["derived"] = {
        "beta_Pa_per_A_per_m": g.materials.beta,
        "kappa_m2_per_s": g.materials.kappa,
        "threshold_Pa": solution.threshold,
    }
    doc["summary"] = {
        "nodes": len(g.nodes),
        "segments": len(g.segments),
        "components": solution.forest.n_components,
        "chords": int(len(solution.forest.chords)),
        "immortal": solution.immortal,
        "mortal_components": int((~solution.component_immortal).sum()),
        "mortal_segments": int(solution.segment_mortal.sum()),
        "sigma_max_Pa": float(solution.sigma_max.max()),
        "sigma_min_Pa": float(solution.sigma_min.min()),
        "max_chord_residual_Pa": float(solution.chord_residuals.max()) if len(solution.chord_residuals) else 0.0,
    }
    if comparison is not None:
        doc["comparison"] = {**comparison.counts(), "jl_crit_A_per_m": comparison.jl_crit, "total": comparison.total}
    doc["components"] = component_rows(solution)
    doc["nodes"] = [
        {"node_id": n.id, "layer": n.layer, "component_id": c, "stress_Pa": s, "is_max_in_component": mx}
        for n, c, s, mx in zip(g.nodes, comp, solution.stress.tolist(), is_max)
    ]
    labels = comparison.labels if comparison is not None else [None] * len(g.segments)
    blech = comparison.blech_mortal.tolist() if comparison is not None else [None] * len(g.segments)
    doc["segments"] = [
        {
            "segment_id": s.id, "from": s.from_node, "to": s.to_node, "jl_A_per_m": x,
            "exact_mortal": em, "blech_mortal": bm, "class": lab,
        }
        for s, x, em, bm, lab in zip(
            g.segments, (arr.j * arr.length).tolist(), solution.segment_mortal.tolist(), blech, labels
        )
    ]
    return (json.dumps(doc, indent=1, allow_nan=False) + "\n").encode()


def write_scatter(solution_graph, comparison: ConfusionReport) -> bytes:
    """Per-segment |j|, l and class, the data behind a j-vs-l scatter plot."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCATTER_COLUMNS)
    for sid, aj, l, c in comparison.scatter_rows(solution_graph):
        w.writerow((sid, repr(aj), repr(l), c))
    return buf.getvalue().encode()


def read_csv_report(data: bytes) -> tuple[list[dict], list[dict]]:
    """Split a CSV report back into node rows and segment rows."""
    text = data.decode()
    nodes_part, _, seg_part = text.partition("\n\n")
    return list(csv.DictReader(io.StringIO(nodes_part))), list(csv.DictReader(io.StringIO(seg_part)))
