import json

import pytest

from emortal.blech import jl_crit_from_materials
from emortal.cli import main
from emortal.generate import GenConfig, generate
from emortal.netlist import parse_canonical, write_canonical, write_spice
from emortal.report import read_csv_report

from helpers import STRUCTURES, dc_grid, graph, seg


def _single(tmp_path, ratio, cu):
    l_um = 25.0
    j = ratio * jl_crit_from_materials(cu) / (l_um * 1e-6)
    p = tmp_path / f"single_{ratio}.txt"
    p.write_text(write_canonical(graph([seg("e", "a", "b", l_um, j)])))
    return str(p)


def test_immortal_single_segment_exit_0(tmp_path, cu, capsys):
    assert main(["analyze", _single(tmp_path, 0.5, cu)]) == 0
    assert json.loads(capsys.readouterr().out)["summary"]["immortal"] is True


def test_mortal_single_segment_exit_2(tmp_path, cu):
    assert main(["analyze", _single(tmp_path, 1.1, cu), "--format", "csv", "--out", str(tmp_path / "r.csv")]) == 2
    nodes, segs = read_csv_report((tmp_path / "r.csv").read_bytes())
    assert len(nodes) == 2 and segs[0]["exact_mortal"] == "1"


def test_missing_file_exit_1(capsys):
    assert main(["analyze", "/nonexistent/file.txt"]) == 1
    assert "error" in capsys.readouterr().err


def test_syntax_error_exit_1(tmp_path, capsys):
    p = tmp_path / "bad.txt"
    p.write_text("SEGMENTS\ne1 from=a\n")
    assert main(["analyze", str(p)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_compare_jl_override_and_scatter(tmp_path, capsys):
    p = tmp_path / "tree.txt"
    p.write_text(write_canonical(STRUCTURES["tree"]()))
    code = main(["compare", str(p), "--jl-crit", "0.27", "--scatter", str(tmp_path / "s.csv")])
    doc = json.loads(capsys.readouterr().out)
    assert code == 2
    assert doc["comparison"]["jl_crit_A_per_m"] == pytest.approx(0.27e6)
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 7


def test_reports_are_reproducible(tmp_path):
    p = tmp_path / "mesh.txt"
    p.write_text(write_canonical(STRUCTURES["mesh"]()))
    main(["compare", str(p), "--out", str(tmp_path / "a.json")])
    main(["compare", str(p), "--out", str(tmp_path / "b.json")])
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_oracle_tee_exit_0(tmp_path, capsys):
    p = tmp_path / "tee.txt"
    p.write_text(write_canonical(STRUCTURES["tee"]()))
    assert main(["oracle", str(p), "--cells", "64"]) == 0
    out = capsys.readouterr().out
    assert "pass=1" in out and out.startswith("node_id,engine_Pa,oracle_Pa,relative_error")


def test_oracle_kirchhoff_violation(tmp_path, capsys):
    g = graph([
        seg("e1", "a", "b", 30, 1e10), seg("e2", "b", "d", 20, 1.5e10),
        seg("e3", "a", "c", 15, 2e10), seg("e4", "c", "d", 10, 9e10),
    ])
    p = tmp_path / "bad.txt"
    p.write_text(write_canonical(g))
    assert main(["oracle", str(p)]) == 1
    assert "chord" in capsys.readouterr().err


@pytest.mark.slow
def test_oracle_cap_on_million_edge_mesh(tmp_path, capsys):
    p = tmp_path / "big.txt"
    assert main(["gen", "--edges", "1000000", "--out", str(p)]) == 0
    assert main(["oracle", str(p)]) == 1
    assert "cap" in capsys.readouterr().err


def test_gen_deterministic(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for out in (a, b):
        assert main(["gen", "--topology", "line", "--size", "10", "--seed", "7", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    g = parse_canonical(a.read_bytes())
    assert len(g.segments) == 9 and g == generate(GenConfig(topology="line", size=10, seed=7))


def test_gen_grid_edge_count(tmp_path):
    out = tmp_path / "g.txt"
    main(["gen", "--edges", "5000", "--out", str(out)])
    assert len(parse_canonical(out.read_bytes()).segments) == 5000
    assert main(["gen", "--edges", "10", "--topology", "line"]) == 1


def test_gen_square_grid_edges(tmp_path):
    out = tmp_path / "g.txt"
    main(["gen", "--size", "30", "--out", str(out)])
    assert len(parse_canonical(out.read_bytes()).segments) == 2 * 30 * 29  # n x n grid: 2n(n-1), ~2e6 at n=1000


def test_pg_counts_cover_every_segment(tmp_path, capsys):
    net = dc_grid(10, 10, 2)
    p = tmp_path / "grid.sp"
    p.write_text(write_spice(net))
    code = main(["pg", str(p), "--scale-to-ir-drop", "0.05"])
    doc = json.loads(capsys.readouterr().out)
    c = doc["comparison"]
    assert code in (0, 2)
    assert c["tp"] + c["tn"] + c["fp"] + c["fn"] == doc["netlist"]["em_segments"] == len(net.resistors)


def test_pg_single_wire_per_layer_agrees(tmp_path, capsys):
    text = (
        "V1 n1_0_0 0 1\n"
        "R1 n1_0_0 n1_100_0 0.02\n"
        "Rvia n1_100_0 n2_100_0 0.001\n"
        "R2 n2_100_0 n2_100_50 0.01\n"
        "I1 n2_100_50 0 0.01\n"
    )
    p = tmp_path / "wires.sp"
    p.write_text(text)
    geo = tmp_path / "geo.json"
    geo.write_text(json.dumps({"resistivity_ohm_m": 2.25e-8,
                               "layers": {"*": {"width_um": 1.0, "height_um": 1.0}}}))
    main(["pg", str(p), "--geometry", str(geo)])
    c = json.loads(capsys.readouterr().out)["comparison"]
    assert c["fp"] == c["fn"] == 0 and c["tp"] + c["tn"] == 2


def test_timings_only_on_request(tmp_path, capsys):
    p = tmp_path / "tee.txt"
    p.write_text(write_canonical(STRUCTURES["tee"]()))
    main(["analyze", str(p)])
    assert "timings_s" not in json.loads(capsys.readouterr().out)
    main(["analyze", str(p), "--timings"])
    assert "timings_s" in json.loads(capsys.readouterr().out)
