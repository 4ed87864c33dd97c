import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsesrc import fem, forward, scenarios
from sparsesrc.scenarios import NoiseSpec, Shape, SourceSpec


def spec_of(*shapes):
    return SourceSpec.from_list(list(shapes))


# ------------------------------------------------------------------- shapes


def test_points_snap_to_grid_nodes():
    mesh = fem.build_mesh(17)
    cfg = scenarios.load_scenario("ex1")
    x = scenarios.rasterize_source(SourceSpec.from_list(cfg["shapes"]), mesh)
    assert np.count_nonzero(x) == 5
    expected = [mesh.node_index(4, 4), mesh.node_index(12, 4), mesh.node_index(8, 8),
                mesh.node_index(4, 12), mesh.node_index(11, 13)]
    assert sorted(np.flatnonzero(x).tolist()) == sorted(expected)
    np.testing.assert_array_equal(x[expected], 1.0)


def test_full_domain_rectangle_covers_every_node():
    mesh = fem.build_mesh(9)
    x = scenarios.rasterize_source(spec_of({"kind": "rectangle", "x0": 0, "x1": 1, "y0": 0, "y1": 1}), mesh)
    np.testing.assert_array_equal(x, 1.0)


@pytest.mark.parametrize("r", [0.1, 0.2, 0.3])
def test_disk_node_count_tracks_area(r):
    mesh = fem.build_mesh(97)
    x = scenarios.rasterize_source(spec_of({"kind": "disk", "cx": 0.5, "cy": 0.5, "r": r}), mesh)
    assert np.count_nonzero(x) == pytest.approx(np.pi * r**2 / mesh.h**2, rel=0.15)


def test_hollow_rectangle_and_horseshoe_geometry():
    mesh = fem.build_mesh(11)  # h = 0.1
    frame = Shape.from_dict({"kind": "hollow_rectangle", "x0": 0.2, "x1": 0.8, "y0": 0.2, "y1": 0.8, "thickness": 0.1})
    inside = frame.contains(mesh.coords)
    # a 7x7 block of nodes minus its 3x3 core
    assert inside.sum() == 49 - 9
    shoe = Shape.from_dict({"kind": "horseshoe", "x0": 0.2, "x1": 0.8, "y0": 0.2, "y1": 0.8, "thickness": 0.1})
    cover = shoe.contains(mesh.coords)
    assert cover[mesh.node_index(5, 2)] and not cover[mesh.node_index(5, 8)]
    assert cover.sum() == 2 * 2 * 7 + 2 * 3


def test_overlap_keeps_larger_strength():
    mesh = fem.build_mesh(5)
    x = scenarios.rasterize_source(spec_of(
        {"kind": "rectangle", "strength": 1.0, "x0": 0, "x1": 0.5, "y0": 0, "y1": 0.5},
        {"kind": "rectangle", "strength": 3.0, "x0": 0.25, "x1": 1, "y0": 0.25, "y1": 1},
    ), mesh)
    assert x[mesh.node_index(0, 0)] == 1.0
    assert x[mesh.node_index(2, 2)] == 3.0


@pytest.mark.parametrize("bad", [
    {"kind": "triangle"},
    {"kind": "disk", "cx": 0.5, "cy": 0.5, "r": -0.1},
    {"kind": "rectangle", "x0": 0.5, "x1": 1.5, "y0": 0, "y1": 1},
    {"kind": "disk", "strength": 0.0, "cx": 0.5, "cy": 0.5, "r": 0.1},
])
def test_invalid_shapes_rejected(bad):
    with pytest.raises(ValueError):
        Shape.from_dict(bad)


def test_shape_missing_every_node_is_an_error():
    with pytest.raises(ValueError, match="empty support"):
        scenarios.rasterize_source(spec_of({"kind": "disk", "cx": 0.55, "cy": 0.55, "r": 0.01}), fem.build_mesh(3))


def test_spec_round_trip():
    shapes = [{"kind": "disk", "strength": 2.0, "cx": 0.5, "cy": 0.4, "r": 0.1}]
    assert SourceSpec.from_list(shapes).to_list() == shapes


# --------------------------------------------------------------------- data


@pytest.fixture(scope="module")
def ex1_setup():
    cfg = scenarios.load_scenario("ex1")
    state, source = fem.build_mesh(cfg["state_grid"]), fem.build_mesh(cfg["source_grid"])
    return SourceSpec.from_list(cfg["shapes"]), state, source


@pytest.mark.parametrize("eps", [1.0, -1.0])
def test_clean_data_equals_forward_matrix_product(ex1_setup, eps):
    spec, state, source = ex1_setup
    data = scenarios.generate_data(spec, state, source, eps)
    A = forward.assemble_forward_matrix(state, source, eps)
    assert data.tau == 0.0
    np.testing.assert_array_equal(data.b, data.b_clean)
    np.testing.assert_allclose(data.b, A @ data.x_star, rtol=1e-11, atol=1e-14)


def test_noise_level_and_seed(ex1_setup):
    spec, state, source = ex1_setup
    d1 = scenarios.generate_data(spec, state, source, 1.0, NoiseSpec(level=0.01, seed=7))
    d2 = scenarios.generate_data(spec, state, source, 1.0, NoiseSpec(level=0.01, seed=7))
    d3 = scenarios.generate_data(spec, state, source, 1.0, NoiseSpec(level=0.01, seed=8))
    np.testing.assert_array_equal(d1.b, d2.b)
    assert not np.array_equal(d1.b, d3.b)
    assert d1.tau == pytest.approx(0.01 * (d1.b_clean.max() - d1.b_clean.min()))
    assert d1.noise_level == pytest.approx(0.01)
    assert d1.noise_norm_estimate == pytest.approx(d1.tau * np.sqrt(d1.b.size))
    absolute = scenarios.generate_data(spec, state, source, 1.0, NoiseSpec(tau=0.5, seed=1))
    assert absolute.tau == 0.5


def test_noise_statistics_follow_tau():
    b_clean = np.zeros(20000)
    b_clean[0] = 1.0
    rng = np.random.default_rng(3)
    tau = NoiseSpec(level=0.02).resolve_tau(b_clean)
    noise = tau * rng.standard_normal(b_clean.size)
    assert noise.std() == pytest.approx(0.02, rel=0.02)


@pytest.mark.parametrize("kwargs", [{}, {"tau": 1.0, "level": 0.1}, {"tau": -1.0}])
def test_noise_spec_validation(kwargs):
    with pytest.raises(ValueError):
        NoiseSpec(**kwargs)


def test_restriction_approximates_coarse_model():
    spec = spec_of({"kind": "disk", "cx": 0.4, "cy": 0.6, "r": 0.15})
    fine, coarse = fem.build_mesh(65), fem.build_mesh(33)
    data = scenarios.generate_data(spec, fine, fine, 1.0, NoiseSpec(tau=0.1, seed=0))
    small = scenarios.restrict_boundary(data, fine, coarse)
    assert small.b.size == coarse.boundary_nodes.size
    assert small.tau == pytest.approx(np.sqrt(2) * data.tau)
    coarse_data = scenarios.generate_data(spec, coarse, coarse, 1.0)
    rel = np.linalg.norm(small.b_clean - coarse_data.b_clean) / np.linalg.norm(coarse_data.b_clean)
    assert rel < 0.05
    same = scenarios.restrict_boundary(data, fine, fine)
    assert same is data


# ------------------------------------------------------------------ metrics


def test_metrics_conventions():
    x_star = np.array([0.0, 1.0, 1.0, 0.0])
    rep = scenarios.compute_metrics(np.array([0.05, 1.0, 0.5, 0.0]), x_star)
    assert rep.support_precision == 1.0  # 0.05 sits below 10% of the max
    assert rep.support_recall == 1.0
    assert rep.linf_error == pytest.approx(0.5)
    rep = scenarios.compute_metrics(np.array([0.5, 1.0, 0.0, 0.0]), x_star, weights=np.full(4, 2.0))
    assert rep.support_precision == 0.5 and rep.support_recall == 0.5
    assert rep.weighted_l1 == pytest.approx(3.0)
    empty = scenarios.compute_metrics(np.zeros(4), x_star)
    assert empty.support_precision == 1.0 and empty.support_recall == 0.0
    with pytest.raises(ValueError):
        scenarios.compute_metrics(np.zeros(3), x_star)
    with pytest.raises(ValueError):
        scenarios.compute_metrics(np.zeros(4), x_star, threshold_frac=1.0)


# ------------------------------------------------------------------- export


def test_zero_heatmap_is_black(tmp_path):
    mesh = fem.build_mesh(6)
    _, pgm = scenarios.export_heatmap(np.zeros(mesh.num_nodes), mesh, tmp_path / "z")
    img = scenarios.read_pgm(pgm)
    assert img.shape == (6, 6)
    np.testing.assert_array_equal(img, 0)


def test_single_spike_is_one_white_pixel_at_the_right_place(tmp_path):
    mesh = fem.build_mesh(6)
    x = np.zeros(mesh.num_nodes)
    x[mesh.node_index(1, 4)] = 2.5  # column 1, row 4 from the bottom
    img = scenarios.read_pgm(scenarios.write_pgm(x, mesh, tmp_path / "s.pgm"))
    assert np.count_nonzero(img) == 1
    assert img[6 - 1 - 4, 1] == 255


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_solution_csv_round_trip_is_bitwise(tmp_path_factory, seed):
    mesh = fem.build_mesh(5)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(mesh.num_nodes) * 10.0 ** rng.integers(-300, 300, mesh.num_nodes)
    path = scenarios.write_solution_csv(x, mesh, tmp_path_factory.mktemp("csv") / "x.csv")
    np.testing.assert_array_equal(scenarios.read_solution_csv(path), x)


def test_export_rejects_wrong_length(tmp_path):
    with pytest.raises(ValueError):
        scenarios.export_heatmap(np.zeros(3), fem.build_mesh(4), tmp_path / "bad")


# ---------------------------------------------------------------- scenarios


def test_all_bundled_scenarios_parse():
    for name in scenarios.EXAMPLES:
        cfg = scenarios.load_scenario(name)
        spec = SourceSpec.from_list(cfg["shapes"])
        x = scenarios.rasterize_source(spec, fem.build_mesh(cfg["source_grid"]))
        assert x.max() > 0
        assert fem.is_nested(fem.build_mesh(cfg["state_grid"]), fem.build_mesh(cfg["data_state_grid"])) \
            or cfg["state_grid"] == cfg["data_state_grid"]


def test_unknown_scenario_and_override():
    with pytest.raises(ValueError, match="unknown example"):
        scenarios.load_scenario("ex9")
    with pytest.raises(ValueError, match="unknown overrides"):
        scenarios.run_example("ex1", colour="red")


def test_scenario_from_json_path(tmp_path):
    cfg = scenarios.load_scenario("ex1")
    cfg["shapes"] = [{"kind": "points", "coords": [[0.5, 0.5]]}]
    path = tmp_path / "one.json"
    path.write_text(json.dumps(cfg))
    run = scenarios.run_example(str(path))
    assert run.name == "one"
    assert run.report.support_precision == 1.0 and run.report.support_recall == 1.0


def test_run_example_ex1_writes_artifacts(tmp_path):
    run = scenarios.run_example("ex1", out_dir=tmp_path)
    assert run.report.support_precision == 1.0 and run.report.support_recall == 1.0
    assert run.report.linf_error < 1e-2
    names = sorted(p.name for p in run.artifacts)
    assert names == ["report.json", "solution.csv", "solution.pgm", "true_source.csv", "true_source.pgm"]
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["parameters"]["alpha"] == 1e-4
    np.testing.assert_array_equal(scenarios.read_solution_csv(tmp_path / "solution.csv"), run.x)


def test_morozov_needs_noise():
    with pytest.raises(ValueError, match="noisy"):
        scenarios.run_example("ex1", alpha="morozov")
