import numpy as np
import pytest

from app.core.errors import ConstructionError, UsageError
from app.services.comm_graph import (
    MixingMatrix,
    UndirectedGraph,
    build_metropolis_weights,
    mix,
    preset_graph,
    random_connected_graph,
    validate_mixing,
)


def test_two_node_complete_graph():
    W = build_metropolis_weights(preset_graph("complete", 2))
    np.testing.assert_allclose(W.weights, [[0.5, 0.5], [0.5, 0.5]])


def test_single_node():
    W = build_metropolis_weights(preset_graph("complete", 1))
    np.testing.assert_array_equal(W.weights, [[1.0]])


def test_path_of_three():
    W = build_metropolis_weights(preset_graph("path", 3))
    np.testing.assert_allclose(
        W.weights,
        [[2 / 3, 1 / 3, 0], [1 / 3, 1 / 3, 1 / 3], [0, 1 / 3, 2 / 3]],
        atol=1e-15,
    )


def test_disconnected_graph_is_rejected():
    g = UndirectedGraph.from_edges(4, [(0, 1), (2, 3)])
    assert not g.is_connected()
    with pytest.raises(ConstructionError):
        build_metropolis_weights(g)


def test_edge_list_validation():
    with pytest.raises(ConstructionError):
        UndirectedGraph.from_edges(3, [(0, 0)])
    with pytest.raises(ConstructionError):
        UndirectedGraph.from_edges(3, [(0, 3)])
    g = UndirectedGraph.from_edges(3, [(1, 0), (0, 1), (2, 1)])
    assert g.sorted_edges() == [(0, 1), (1, 2)]


def test_unknown_preset():
    with pytest.raises(ConstructionError):
        preset_graph("hypercube", 4)


@pytest.mark.parametrize("name", ["complete", "ring", "path", "star"])
@pytest.mark.parametrize("n", [1, 2, 3, 4, 7])
def test_presets_give_valid_mixing(name, n):
    g = preset_graph(name, n)
    assert g.is_connected()
    assert validate_mixing(build_metropolis_weights(g), g).ok


def test_metropolis_on_random_connected_graphs():
    rng = np.random.default_rng(2024)
    for k in range(100):
        n = int(rng.integers(2, 21))
        g = random_connected_graph(n, p=float(rng.uniform(0.15, 0.9)), seed=k)
        W = build_metropolis_weights(g)
        report = validate_mixing(W, g)
        assert report.ok, report.codes()
        assert np.max(np.abs(W.weights.sum(axis=0) - 1)) <= 1e-12
        assert np.max(np.abs(W.weights.sum(axis=1) - 1)) <= 1e-12
        np.testing.assert_array_equal(W.weights, W.weights.T)


def test_erdos_renyi_preset_is_seeded():
    a = preset_graph("erdos-renyi", 10, p=0.3, seed=4)
    b = preset_graph("erdos-renyi", 10, p=0.3, seed=4)
    assert a == b
    assert a.is_connected()


def test_validate_reports_row_sum_violation():
    g = preset_graph("complete", 3)
    weights = build_metropolis_weights(g).weights.copy()
    weights[0, 0] -= 0.1
    report = validate_mixing(MixingMatrix(weights), g)
    assert "row-stochastic" in report.codes()


def test_validate_reports_non_edge_weight():
    g = preset_graph("path", 3)
    weights = build_metropolis_weights(g).weights.copy()
    weights[0, 2] = weights[2, 0] = 0.1
    weights[0, 0] -= 0.1
    weights[2, 2] -= 0.1
    report = validate_mixing(MixingMatrix(weights), g)
    assert report.codes() == ["sparsity"]


def test_mix_fixed_point_and_identity():
    W = build_metropolis_weights(preset_graph("ring", 4))
    s = np.tile([1.0, 2.0, 3.0, 4.0], (4, 1))
    np.testing.assert_allclose(mix(W, s), s, atol=1e-15)
    states = np.random.default_rng(0).normal(size=(4, 4))
    np.testing.assert_array_equal(mix(MixingMatrix(np.eye(4)), states), states)
    with pytest.raises(UsageError):
        mix(W, np.zeros((3, 4)))
    with pytest.raises(UsageError):
        mix(W, np.zeros((4, 3)))


def test_mix_preserves_average():
    rng = np.random.default_rng(9)
    g = random_connected_graph(8, 0.4, seed=1)
    W = build_metropolis_weights(g)
    states = rng.normal(size=(8, 8))
    np.testing.assert_allclose(mix(W, states).mean(axis=0), states.mean(axis=0), atol=1e-12)


@pytest.mark.parametrize("name", ["complete", "ring", "path", "star"])
def test_repeated_mixing_reaches_consensus(name):
    W = build_metropolis_weights(preset_graph(name, 4))
    states = np.random.default_rng(1).uniform(0, 20, size=(4, 4))
    spread0 = np.max(np.linalg.norm(states - states.mean(axis=0), axis=1))
    for _ in range(200):
        states = mix(W, states)
    spread = np.max(np.linalg.norm(states - states.mean(axis=0), axis=1))
    assert spread <= 1e-8 * spread0
