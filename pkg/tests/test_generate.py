import numpy as np
import pytest

from emortal import analyze
from emortal.blech import jl_crit_from_materials
from emortal.generate import GenConfig, generate, grid_shape_for_edges


@pytest.mark.parametrize("topo", ["line", "random-tree", "grid-mesh", "random-mesh"])
def test_deterministic_and_scaled(topo):
    cfg = GenConfig(topology=topo, size=9, seed=11, jl_ratio=1.5)
    g = generate(cfg)
    assert g == generate(cfg)
    jl = max(abs(s.current_density) * s.length for s in g.segments)
    assert jl == pytest.approx(1.5 * jl_crit_from_materials(g.materials), rel=1e-12)
    analyze(g)  # currents are Kirchhoff-consistent, so no chord error


def test_seed_changes_instance():
    assert generate(GenConfig(seed=1)) != generate(GenConfig(seed=2))


@pytest.mark.parametrize("edges", [4, 55, 10_000, 100_000, 1_000_000, 1_648_621])
def test_exact_grid_edge_counts(edges):
    rows, cols, drop = grid_shape_for_edges(edges)
    assert rows * (cols - 1) + cols * (rows - 1) - drop == edges
    assert 0 <= drop < cols


def test_grid_edge_count_in_instance():
    rows, cols, drop = grid_shape_for_edges(300)
    g = generate(GenConfig(size=rows, cols=cols, drop_edges=drop))
    assert len(g.segments) == 300


def test_unknown_topology():
    with pytest.raises(ValueError):
        generate(GenConfig(topology="torus"))


def test_mesh_has_cycles():
    g = generate(GenConfig(topology="random-mesh", size=10, extra_edges=4, seed=0))
    assert len(analyze(g).forest.chords) >= 1
    assert np.isfinite(analyze(g).stress).all()
