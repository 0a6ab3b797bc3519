import math

import numpy as np
import pytest

from emortal.dcsolve import (
    SingularSystemError, branch_currents, ir_drop_scale, kcl_residuals, scale_current_sources, solve_dc,
)
from emortal.netlist import CurrentSource, DcNetlist, Resistor, VoltageSource, parse_spice_subset

from helpers import dc_grid, dense_mna_voltages, max_rel_diff


def _vec(volts, names):
    return np.array([volts[n] for n in names])


def test_divider_with_sink():
    # V=1 -> R1=1 -> m -> R2=1 -> gnd, 0.1 A drawn at m: Vm = (1 - 0.1)/2
    net = parse_spice_subset("V1 a 0 1\nR1 a m 1\nR2 m 0 1\nI1 m 0 0.1\n")
    for method in ("dense", "cg"):
        assert solve_dc(net, method=method, tol=1e-12).voltages["m"] == pytest.approx(0.45, rel=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_cg_matches_mna_oracle(seed):
    net = dc_grid(20, 20, seed)
    names = sorted(n for n in net.nodes() if n not in net.ground)
    want = _vec(dense_mna_voltages(net), names)
    got = _vec(solve_dc(net, tol=1e-13, method="cg").voltages, names)
    assert max_rel_diff(got, want) < 1e-9


def test_dense_and_auto_agree():
    net = dc_grid(8, 9, 4)
    names = sorted(n for n in net.nodes() if n not in net.ground)
    a = _vec(solve_dc(net, method="dense").voltages, names)
    b = _vec(solve_dc(net).voltages, names)
    assert max_rel_diff(a, b) < 1e-12


def test_kcl_holds():
    net = dc_grid(15, 12, 7)
    cur = branch_currents(net, solve_dc(net, tol=1e-13, method="cg").voltages)
    for node, (imbalance, mag) in kcl_residuals(net, cur).items():
        assert abs(imbalance) <= 1e-9 * mag, node


def test_node_order_does_not_matter():
    net = dc_grid(10, 10, 1)
    rev = DcNetlist(net.resistors[::-1], net.current_sources[::-1], net.voltage_sources)
    a, b = solve_dc(net, tol=1e-13).voltages, solve_dc(rev, tol=1e-13).voltages
    assert max(abs(a[k] - b[k]) for k in a) < 1e-12


def test_symmetric_h_grid():
    # pad in the middle, equal loads on both arms -> mirror-symmetric voltages
    text = "V1 c 0 1\nR1 c l1 1\nR2 l1 l2 1\nR3 c r1 1\nR4 r1 r2 1\nI1 l2 0 1m\nI2 r2 0 1m\n"
    v = solve_dc(parse_spice_subset(text), tol=1e-13).voltages
    assert v["l1"] == pytest.approx(v["r1"], abs=1e-15) and v["l2"] == pytest.approx(v["r2"], abs=1e-15)


def test_zero_ohm_short_merges_nodes():
    net = parse_spice_subset("V1 a 0 1\nR0 a b 0\nR1 b c 2\nR2 c 0 2\n")
    sol = solve_dc(net)
    assert sol.voltages["b"] == pytest.approx(1.0) and sol.voltages["c"] == pytest.approx(0.5)
    assert math.isnan(branch_currents(net, sol.voltages)["R0"])


def test_floating_block_detected():
    net = parse_spice_subset("V1 a 0 1\nR1 a 0 1\nR2 x y 1\nI1 x y 1m\n")
    with pytest.raises(SingularSystemError) as err:
        solve_dc(net)
    assert any("x" in group for group in err.value.floating)


def test_ir_drop_scaling_is_exact():
    net = dc_grid(6, 6, 3)
    k = ir_drop_scale(net, 0.05, tol=1e-13)
    scaled = scale_current_sources(net, k)
    quiet = DcNetlist(scaled.resistors, scaled.current_sources,
                      tuple(VoltageSource(v.name, v.node, 0.0) for v in scaled.voltage_sources))
    drop = max(abs(x) for x in solve_dc(quiet, tol=1e-13).voltages.values())
    assert drop == pytest.approx(0.05, rel=1e-9)


def test_threads_give_same_answer():
    a = dc_grid(5, 5, 0)
    b = dc_grid(5, 5, 1)
    rename = lambda n: n if n == "0" else "b_" + n  # noqa: E731
    merged = DcNetlist(
        a.resistors + tuple(Resistor("b" + r.name, rename(r.a), rename(r.b), r.ohms, r.layer) for r in b.resistors),
        a.current_sources + tuple(CurrentSource("b" + s.name, rename(s.a), s.b, s.amps) for s in b.current_sources),
        a.voltage_sources + tuple(VoltageSource("b" + v.name, rename(v.node), v.volts) for v in b.voltage_sources),
    )
    one = solve_dc(merged, threads=1).voltages
    two = solve_dc(merged, threads=2).voltages
    assert one == two
