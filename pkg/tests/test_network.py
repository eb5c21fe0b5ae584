"""Tests for graphs, Laplacians and the consensus projector."""

import numpy as np
import pytest

from osc_consensus.errors import (
    AsymmetricWeightsError,
    EdgeListError,
    NegativeWeightError,
    TopologyError,
)
from osc_consensus.network import (
    build_network,
    complete_weights,
    connectivity_check,
    cycle_weights,
    disagreement,
    disagreement_matrix,
    eigenvector_norms,
    load_edge_list,
    parse_edge_list,
    path_weights,
    random_network,
    require_high_order_topology,
    weights_from_edges,
)


def star_weights(n, outward=True):
    """Hub 0 sends to every leaf (outward) or receives from every leaf."""
    G = np.zeros((n, n))
    if outward:
        G[1:, 0] = 1.0
    else:
        G[0, 1:] = 1.0
    return G


def test_complete_graph_spectrum():
    """K3 has eigenvalues 0, 3, 3."""
    net = build_network(complete_weights(3))
    np.testing.assert_allclose(net.eigenvalues.real, [0.0, 3.0, 3.0], atol=1e-12)
    assert net.lambda2_real == pytest.approx(3.0)
    assert connectivity_check(net) == {"has_spanning_tree": True, "connected_undirected": True}


def test_single_node():
    """One agent is trivially connected."""
    net = build_network([[0.0]])
    assert net.N == 1
    assert net.lambda2_real == 0.0
    assert connectivity_check(net)["has_spanning_tree"]
    assert net.in_neighbors(0) == []


def test_path_graph():
    """The path is connected and its neighbours are the adjacent nodes."""
    net = build_network(path_weights(4))
    assert connectivity_check(net)["has_spanning_tree"]
    assert net.in_neighbors(1) == [0, 2]
    assert net.lambda2_real == pytest.approx(2 - np.sqrt(2))


def test_directed_cycle():
    """Directed 4-cycle: eigenvalues 0, 1 - i, 1 + i, 2 and a uniform left null vector."""
    net = build_network(cycle_weights(4, directed=True), directed=True)
    np.testing.assert_allclose(net.eigenvalues, [0, 1 - 1j, 1 + 1j, 2], atol=1e-12)
    assert net.lambda2_real == pytest.approx(1.0)
    np.testing.assert_allclose(net.psi1, net.phi1, atol=1e-12)
    assert net.in_neighbors(1) == [0]
    assert net.out_neighbors(1) == [2]


def test_star_digraphs():
    """An outward star has a spanning tree; an inward star does not."""
    outward = build_network(star_weights(4, outward=True), directed=True)
    inward = build_network(star_weights(4, outward=False), directed=True)
    assert connectivity_check(outward)["has_spanning_tree"]
    check = connectivity_check(inward)
    assert not check["has_spanning_tree"]
    assert check["connected_undirected"]


def test_disconnected_graph():
    """Two separate edges have no spanning tree."""
    G = np.zeros((4, 4))
    G[0, 1] = G[1, 0] = G[2, 3] = G[3, 2] = 1.0
    check = connectivity_check(build_network(G))
    assert check == {"has_spanning_tree": False, "connected_undirected": False}


def test_projector_removes_consensus(rng):
    """Consensus vectors have no disagreement and psi1 annihilates every disagreement."""
    net = build_network(star_weights(5), directed=True)
    np.testing.assert_allclose(disagreement(net, np.full(5, 3.7)), 0.0, atol=1e-12)
    x = rng.uniform(-1, 1, 5)
    assert abs(net.psi1 @ disagreement(net, x)) < 1e-12
    states = rng.uniform(-1, 1, (5, 4))
    delta = disagreement_matrix(net, states)
    np.testing.assert_allclose(delta[:, 2], disagreement(net, states[:, 2]))


def test_random_digraphs_agree_on_spanning_trees(rng):
    """Reachability and the zero-eigenvalue count agree on 200 random digraphs."""
    for _ in range(200):
        n = int(rng.integers(2, 8))
        G = (rng.uniform(size=(n, n)) < rng.uniform(0.1, 0.6)).astype(float)
        np.fill_diagonal(G, 0.0)
        connectivity_check(build_network(G, directed=True))


def test_random_network_has_spanning_tree(rng):
    """The random generator redraws until the graph qualifies."""
    for directed in (False, True):
        net = random_network(6, 0.3, directed, rng)
        assert connectivity_check(net)["has_spanning_tree"]
        assert net.directed is directed


def test_invalid_weights():
    """Negative, asymmetric and self-loop weights are rejected."""
    with pytest.raises(NegativeWeightError):
        build_network([[0, -1], [-1, 0]])
    with pytest.raises(AsymmetricWeightsError):
        build_network([[0, 1], [0, 0]])
    with pytest.raises(TopologyError):
        build_network([[1, 1], [1, 0]])
    with pytest.raises(TopologyError):
        build_network(np.zeros((2, 3)))


def test_high_order_topology():
    """Complex spectra and defective digraphs are refused; outward stars pass."""
    with pytest.raises(TopologyError):
        require_high_order_topology(build_network(cycle_weights(4, directed=True), directed=True))
    chain = np.zeros((3, 3))
    chain[1, 0] = chain[2, 1] = 1.0
    with pytest.raises(TopologyError):
        require_high_order_topology(build_network(chain, directed=True))
    require_high_order_topology(build_network(star_weights(4), directed=True))
    require_high_order_topology(build_network(path_weights(3)))


def test_eigenvector_norms():
    """Orthonormal eigenvectors for undirected graphs, block size one."""
    U_norm, U_inv_norm, N_max = eigenvector_norms(build_network(complete_weights(4)))
    assert N_max == 1
    assert U_norm >= 1.0 and U_inv_norm >= 1.0
    _, U_inv_norm, N_max = eigenvector_norms(build_network(star_weights(4), directed=True))
    assert N_max == 1 and np.isfinite(U_inv_norm)


def test_defective_digraph_uses_jordan_basis():
    """The chain 1 -> 2 -> 3 has a 2x2 Jordan block at eigenvalue 1."""
    chain = np.zeros((3, 3))
    chain[1, 0] = chain[2, 1] = 1.0
    U_norm, U_inv_norm, N_max = eigenvector_norms(build_network(chain, directed=True))
    assert N_max == 2
    assert np.isfinite(U_norm) and np.isfinite(U_inv_norm)
    assert U_norm * U_inv_norm >= 1.0


def test_large_defective_digraph_is_refused():
    """A 13-node directed chain is past the exact decomposition limit."""
    G = np.zeros((13, 13))
    for k in range(12):
        G[k + 1, k] = 1.0
    with pytest.raises(TopologyError, match="Jordan"):
        eigenvector_norms(build_network(G, directed=True))


def test_projector_is_idempotent(rng):
    """Applying the projector twice changes nothing."""
    for net in (build_network(star_weights(5), directed=True), build_network(path_weights(5))):
        states = rng.uniform(-2, 2, (5, 4))
        once = disagreement_matrix(net, states)
        np.testing.assert_allclose(disagreement_matrix(net, once), once, atol=1e-12)


def test_laplacian_rows_sum_to_zero(rng):
    """L 1 = 0 for every graph source."""
    G = rng.uniform(0, 2, (6, 6))
    np.fill_diagonal(G, 0.0)
    networks = [
        build_network(complete_weights(5)),
        build_network(path_weights(4)),
        build_network(cycle_weights(6, directed=True), directed=True),
        build_network(G, directed=True),
        random_network(7, 0.4, False, rng),
    ]
    for net in networks:
        np.testing.assert_allclose(net.L @ np.ones(net.N), 0.0, atol=1e-12)


def test_projector_needs_simple_zero_eigenvalue():
    """Two disjoint directed edges leave the zero eigenvalue repeated."""
    G = np.zeros((4, 4))
    G[1, 0] = G[3, 2] = 1.0
    net = build_network(G, directed=True)
    assert not net.zero_simple
    with pytest.raises(TopologyError):
        disagreement(net, np.arange(4.0))
    with pytest.raises(TopologyError):
        disagreement_matrix(net, np.ones((4, 2)))
    assert build_network(star_weights(4), directed=True).zero_simple


def test_parse_edge_list():
    """Comments, default weights and receiver-from-sender orientation."""
    text = "# sender receiver weight\n1 2\n2 3 0.5\n\n3 1 2  # back edge\n"
    count, edges = parse_edge_list(text)
    assert count == 3
    assert edges == [(1, 2, 1.0), (2, 3, 0.5), (3, 1, 2.0)]
    G = weights_from_edges(count, edges, directed=True)
    assert G[1, 0] == 1.0 and G[0, 1] == 0.0
    assert G[2, 1] == 0.5
    undirected = weights_from_edges(count, edges, directed=False)
    np.testing.assert_array_equal(undirected, undirected.T)


def test_edge_list_errors_carry_line_numbers():
    """Malformed lines report where they are."""
    with pytest.raises(EdgeListError) as excinfo:
        parse_edge_list("1 2\n1 x\n", source="g.txt")
    assert excinfo.value.line == 2
    assert "g.txt:2" in str(excinfo.value)
    with pytest.raises(EdgeListError):
        parse_edge_list("2 2\n")
    with pytest.raises(EdgeListError):
        parse_edge_list("0 1\n")
    with pytest.raises(EdgeListError):
        parse_edge_list("1 4\n", nodes=3)


def test_load_edge_list(tmp_path):
    """Edge-list files build networks; missing files raise FileNotFoundError."""
    path = tmp_path / "ring.txt"
    path.write_text("1 2\n2 3\n3 1\n")
    net = load_edge_list(path, directed=True)
    assert net.N == 3
    assert connectivity_check(net)["has_spanning_tree"]
    with pytest.raises(FileNotFoundError):
        load_edge_list(tmp_path / "missing.txt", directed=False)
