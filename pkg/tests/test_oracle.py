import numpy as np
import pytest

from emortal import ChordInconsistencyError
from emortal.oracle import (
    OracleCapError, discretize, run_to_steady_state, segment_profiles, steady_slope, verify_against_engine,
)

from helpers import STRUCTURES, graph, seg, two_segment_line


def test_line_within_one_percent():
    rep = verify_against_engine(two_segment_line(), cells=64)
    assert rep.max_error < 0.01


def test_single_segment_profile_is_linear():
    g = graph([seg("e", "a", "b", 30, 2e10)])
    disc = discretize(g, 16)
    res = run_to_steady_state(disc, tol=1e-9)
    x, s = segment_profiles(disc, res)[0]
    slope = np.polyfit(x, s, 1)[0]
    assert slope == pytest.approx(steady_slope(g)[0], rel=1e-6)


def test_mass_conserved_while_stepping():
    disc = discretize(STRUCTURES["tree"](), 16)
    res = run_to_steady_state(disc)
    scale = np.abs(res.cell_stress).max() * disc.cell_volumes().sum()
    assert max(abs(m) for m in res.mass_history) < 1e-9 * scale


def test_dump_csv(tmp_path):
    out = tmp_path / "dump.csv"
    verify_against_engine(STRUCTURES["mesh"](), cells=8, dump=out)
    lines = out.read_text().splitlines()
    assert lines[0] == "step,time_s,dt_s,total_mass,max_dsigma_Pa" and len(lines) > 2


def test_cap_enforced():
    g = graph([seg(f"e{k}", f"n{k}", f"n{k + 1}", 10, 1e10) for k in range(400)])
    with pytest.raises(OracleCapError):
        discretize(g, 32)


def test_too_few_cells():
    with pytest.raises(ValueError):
        discretize(two_segment_line(), 2)


def test_kirchhoff_violation_surfaces():
    g = graph([
        seg("e1", "a", "b", 30, 1e10), seg("e2", "b", "d", 20, 1.5e10),
        seg("e3", "a", "c", 15, 2e10), seg("e4", "c", "d", 10, 9e10),
    ])
    with pytest.raises(ChordInconsistencyError):
        verify_against_engine(g, cells=8)


def test_bad_dt():
    with pytest.raises(ValueError):
        run_to_steady_state(discretize(two_segment_line(), 8), dt=-1.0)
