"""Distance reports, heatmap export, cluster separation and layer-1 bounds."""

import numpy as np
import pytest

from taan.analysis import (
    BoundCheckReport,
    LayerDistanceReport,
    bound_report_csv,
    bound_report_text,
    check_l1_bounds,
    cluster_separation,
    export_heatmap,
    layer1_unit_gaussians,
    layer_distances,
    load_heatmap_csv,
)
from taan.metrics import GaussianMixture
from taan.network import ArchitectureSpec, build_model, to_hard_sharing


def spread_model(seed=0, task_count=3):
    arch = ArchitectureSpec(6, (8, 5), 1, task_count=task_count, basis_count=6)
    model = build_model(arch, seed)
    rng = np.random.default_rng(seed + 1)
    for layer in model.layers:
        layer.coords[:] = rng.uniform(-0.5, 0.5, layer.coords.shape)
    return model


def test_fresh_init_distances_are_tiny():
    # Coordinates start in [-0.01, 0.01]; with 8 hinges the squared distance
    # d' G d is bounded by (0.02)^2 * sum |G| ~ 5e-3, far below trained scale.
    model = build_model(ArchitectureSpec(6, (8, 5), 1, task_count=4), 3)
    for report in layer_distances(model):
        off = report.matrix[~np.eye(4, dtype=bool)]
        assert off.max() < 5e-3
        assert report.labels == ("task0", "task1", "task2", "task3")
    assert [r.layer_id for r in layer_distances(model)] == [0, 1]


def test_hard_sharing_distances_are_exactly_zero():
    model = to_hard_sharing(spread_model())
    for report in layer_distances(model):
        assert np.array_equal(report.matrix, np.zeros_like(report.matrix))


def test_layer_distances_respects_mixture():
    model = spread_model()
    standard = layer_distances(model)
    shifted = layer_distances(
        model,
        mixture=GaussianMixture(
            np.array([1.0]), np.array([1.5]), np.array([0.7])
        ),
    )
    assert not np.allclose(standard[0].matrix, shifted[0].matrix)


def test_heatmap_csv_round_trip(tmp_path):
    model = spread_model()
    report = layer_distances(model)[0]
    path = tmp_path / "layer0.csv"
    export_heatmap(report, path, fmt="csv")
    matrix, labels = load_heatmap_csv(path)
    assert labels == report.labels
    assert np.max(np.abs(matrix - report.matrix)) <= 1e-9
    with pytest.raises(ValueError):
        export_heatmap(report, tmp_path / "x.bin", fmt="png")


def test_heatmap_pgm_bytes(tmp_path):
    report = LayerDistanceReport(
        0, np.array([[0.0, 0.5], [0.5, 0.0]]), ("a", "b")
    )
    path = tmp_path / "layer0.pgm"
    export_heatmap(report, path, fmt="pgm")
    data = path.read_bytes()
    assert data == b"P5\n2 2\n255\n" + bytes([0, 255, 255, 0])
    # An all-zero matrix renders black rather than dividing by zero.
    zero = LayerDistanceReport(0, np.zeros((2, 2)), ("a", "b"))
    export_heatmap(zero, path, fmt="pgm")
    assert path.read_bytes() == b"P5\n2 2\n255\n" + bytes(4)


def test_heatmap_pgm_scaling_is_monotone(tmp_path):
    matrix = np.array(
        [
            [0.0, 0.2, 0.8],
            [0.2, 0.0, 0.4],
            [0.8, 0.4, 0.0],
        ]
    )
    report = LayerDistanceReport(1, matrix, ("a", "b", "c"))
    path = tmp_path / "layer1.pgm"
    export_heatmap(report, path, fmt="pgm")
    pixels = np.frombuffer(
        path.read_bytes()[len(b"P5\n3 3\n255\n"):], dtype=np.uint8
    ).reshape(3, 3)
    assert pixels[0, 2] == 255
    assert pixels[0, 1] < pixels[1, 2] < pixels[0, 2]
    assert np.array_equal(pixels, pixels.T)


def test_distance_report_validation():
    with pytest.raises(ValueError):
        LayerDistanceReport(0, np.zeros((2, 3)), ("a", "b"))
    with pytest.raises(ValueError):
        LayerDistanceReport(0, np.array([[0.0, 1.0], [2.0, 0.0]]), ("a", "b"))
    with pytest.raises(ValueError):
        LayerDistanceReport(0, np.array([[1.0, 0.5], [0.5, 0.0]]), ("a", "b"))
    with pytest.raises(ValueError):
        LayerDistanceReport(0, np.array([[0.0, -0.5], [-0.5, 0.0]]), ("a", "b"))
    with pytest.raises(ValueError):
        LayerDistanceReport(0, np.zeros((2, 2)), ("a", "b", "c"))
    report = LayerDistanceReport(0, np.zeros((2, 2)), (0, 1))
    assert report.labels == ("0", "1")


def test_cluster_separation_hand_matrix():
    matrix = np.array(
        [
            [0.0, 1.0, 4.0, 6.0],
            [1.0, 0.0, 5.0, 7.0],
            [4.0, 5.0, 0.0, 2.0],
            [6.0, 7.0, 2.0, 0.0],
        ]
    )
    within, between = cluster_separation(matrix, (0, 0, 1, 1))
    assert within == 1.5
    assert between == 5.5
    with pytest.raises(ValueError):
        cluster_separation(matrix, (0, 0, 0, 0))
    with pytest.raises(ValueError):
        cluster_separation(matrix, (0, 1))


def test_layer1_unit_gaussians_are_exact():
    model = spread_model()
    gaussians = layer1_unit_gaussians(model)
    linear = model.layers[0].linear
    assert len(gaussians) == linear.out_dim
    for n, g in enumerate(gaussians):
        assert g.mu == linear.bias[n]
        assert abs(g.sigma - np.sqrt(np.sum(linear.weight[n] ** 2))) < 1e-15


def test_l1_bound_holds_with_unit_envelope():
    model = spread_model(seed=5, task_count=2)
    gaussians = layer1_unit_gaussians(model)
    for tasks in ((0, 1), (0, 0)):
        report = check_l1_bounds(
            model, gaussians, 1.0, tasks, mc_samples=200_000, seed=7
        )
        assert report.passed
        # With envelope 1 the bound is an equality, so the Monte-Carlo mean
        # should straddle it rather than sit far below.
        assert report.inner_left >= report.inner_right - 4.0 * report.inner_se
    text = bound_report_text(report)
    assert "tasks 0 vs 0" in text and "yes" in text


def test_l1_bound_validation_and_csv(tmp_path):
    model = spread_model(seed=6, task_count=2)
    gaussians = layer1_unit_gaussians(model)
    with pytest.raises(ValueError):
        check_l1_bounds(model, gaussians, 0.0, (0, 1))
    with pytest.raises(ValueError):
        check_l1_bounds(model, gaussians[:-1], 1.0, (0, 1))
    report = check_l1_bounds(
        model, gaussians, 1.0, (0, 1), mc_samples=50_000, seed=3
    )
    path = tmp_path / "bounds.csv"
    bound_report_csv([report], path)
    lines = path.read_text(encoding="utf-8").strip().split("\n")
    assert lines[0] == "task1,task2,side,mc_mean,stderr,bound,passed"
    assert len(lines) == 3
    assert lines[1].startswith("0,1,inner,")
    assert lines[2].startswith("0,1,dist,")


def test_bound_report_validation():
    with pytest.raises(ValueError):
        BoundCheckReport((0, 1), np.nan, 0.1, 1.0, 0.5, 0.1, 1.0, 10)
    with pytest.raises(ValueError):
        BoundCheckReport((0, 1), 0.5, -0.1, 1.0, 0.5, 0.1, 1.0, 10)
    failing = BoundCheckReport((0, 1), 2.0, 0.01, 1.0, 0.5, 0.1, 1.0, 10)
    assert not failing.inner_pass and failing.dist_pass and not failing.passed
    assert "NO" in bound_report_text(failing)
