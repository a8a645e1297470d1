import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distdp.depgraph import (ConductanceMode, DisconnectedGraph, MixingMatrix, ShardedDataset,
                             best_cut, build_depgraph, cheeger_report, conductance_sweep,
                             discounted_radius, graph_from_adjacency, graph_report, mh_matrix,
                             normalized_laplacian_gap, shard_mdp)
from distdp.instances import TopologySpec, gen_thm1_pair, topology_adjacency
from distdp.mdp import ContractViolation, Mdp


def topo(kind, M):
    return graph_from_adjacency(topology_adjacency(TopologySpec(kind, M)))


def test_boundary_sets_and_weights():
    # machine 0 owns {0,1}, machine 1 owns {2}; 0 -> 2 and 1 -> 2, 2 -> 0
    mdp = Mdp.from_lists(3, 1, [(0, 0, 2, 1.0), (1, 0, 2, 0.5), (1, 0, 1, 0.5), (2, 0, 0, 1.0)],
                         [], 0.9)
    g = build_depgraph(shard_mdp(mdp, [0, 0, 1]))
    assert g.boundary == {(0, 1): (2,), (1, 0): (0,)}
    assert g.weights == {(0, 1): 2, (1, 0): 1}
    assert g.diameter == 1 and g.is_connected()


def test_disconnected_graph_carries_components():
    mdp = Mdp.from_lists(4, 1, [(s, 0, s, 1.0) for s in range(4)], [], 0.9)
    g = build_depgraph(shard_mdp(mdp, [0, 0, 1, 1]))
    with pytest.raises(DisconnectedGraph) as info:
        mh_matrix(g)
    assert sorted(map(sorted, info.value.components)) == [[0], [1]]


def test_partition_text_round_trip_and_errors():
    data = shard_mdp(gen_thm1_pair(3, 0.9).members[1], [0, 1, 2, 3])
    assert list(ShardedDataset.parse_partition(data.partition_text())) == [0, 1, 2, 3]
    with pytest.raises(ValueError, match="line 2"):
        ShardedDataset.parse_partition("0 0\n1\n")


def test_chain_distances():
    inst = gen_thm1_pair(5, 0.9)
    g = build_depgraph(inst.dataset(1))
    assert g.diameter == 5
    assert g.dist[0, 5] == 5 and list(g.ball(0, 2)) == [0, 1, 2]


@pytest.mark.parametrize("gamma,eps,expected", [
    (0.95, 0.01, 76),
    (0.5, 0.25, 0),
    (0.9, 0.01, 37),
    # log(1/2eps)/log(1/gamma) = 2 exactly: the strict definition gives 1
    (0.5, 0.125, 1),
])
def test_discounted_radius(gamma, eps, expected):
    assert discounted_radius(gamma, eps) == expected


def test_discounted_radius_domain():
    with pytest.raises(ContractViolation):
        discounted_radius(0.9, 0.5)
    with pytest.raises(ContractViolation):
        discounted_radius(1.0, 0.1)


@pytest.mark.parametrize("M", [8, 16, 64])
def test_ring_gap_closed_form(M):
    assert mh_matrix(topo("ring", M)).gap == pytest.approx((1 - math.cos(2 * math.pi / M)) / 2, abs=1e-12)


@pytest.mark.parametrize("M", [8, 16, 64])
def test_star_gap_closed_form(M):
    assert mh_matrix(topo("star", M)).gap == pytest.approx(1 / (2 * (M - 1)), abs=1e-12)


def test_frozen_spectral_values():
    assert mh_matrix(topo("grid", 64)).gap == pytest.approx(0.020556206995823056, rel=1e-9)
    assert conductance_sweep(topo("ring", 64)) == pytest.approx(0.03125)
    assert conductance_sweep(topo("star", 64)) == 1.0
    assert conductance_sweep(mh_matrix(topo("star", 64)), ConductanceMode.CHAIN) == pytest.approx(1 / 126)


def test_exhaustive_matches_brute_force():
    g = topo("ring", 6)
    cut = best_cut(g, ConductanceMode.GRAPH_VOLUME)
    assert cut.exact and cut.value == pytest.approx(2 / 6)
    assert len(cut.side) == 3


def test_sweep_upper_bounds_exhaustive():
    g = topo("grid", 16)
    exact = best_cut(g, exhaustive_limit=20).value
    sweep = best_cut(g, exhaustive_limit=0).value
    assert sweep >= exact - 1e-12


def test_mixing_matrix_validation():
    with pytest.raises(ContractViolation):
        MixingMatrix.from_matrix([[0.5, 0.4], [0.5, 0.6]])
    with pytest.raises(ContractViolation):
        MixingMatrix.from_matrix([[1.2, -0.2], [-0.2, 1.2]])


def test_reports():
    rep = graph_report(topo("star", 16))
    assert rep["M"] == 16 and rep["diameter"] == 2 and rep["phi_graph"] == 1.0
    ch = cheeger_report(topo("ring", 16))
    assert ch["laplacian_sandwich"]
    # the graph conductance does not sandwich the MH gap on the star
    assert not cheeger_report(topo("star", 16))["mh_vs_graph_phi_sandwich"]


def random_connected(n, p, seed):
    g = nx.gnp_random_graph(n, p, seed=seed)
    for i in range(n - 1):
        if not nx.has_path(g, i, i + 1):
            g.add_edge(i, i + 1)
    return graph_from_adjacency(nx.to_numpy_array(g) > 0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 10), p=st.floats(0.1, 0.9), seed=st.integers(0, 10_000))
def test_mh_is_symmetric_doubly_stochastic(n, p, seed):
    g = random_connected(n, p, seed)
    w = mh_matrix(g)
    assert np.allclose(w.W, w.W.T) and np.allclose(w.W.sum(axis=0), 1)
    assert np.all(w.W >= 0)
    # laziness keeps the spectrum in [0, 1]
    assert w.eigenvalues.min() >= -1e-12 and w.eigenvalues[0] == pytest.approx(1.0)
    assert np.array_equal(w.support(), g.adjacency)
    assert 0 < w.gap <= 1


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 10), p=st.floats(0.1, 0.9), seed=st.integers(0, 10_000))
def test_cheeger_sandwich_normalized_laplacian(n, p, seed):
    g = random_connected(n, p, seed)
    phi = best_cut(g).value
    lam = normalized_laplacian_gap(g)
    assert phi ** 2 / 2 <= lam + 1e-9 and lam <= 2 * phi + 1e-9
    chain = best_cut(mh_matrix(g), ConductanceMode.CHAIN).value
    gap = mh_matrix(g).gap
    assert chain ** 2 / 2 <= gap + 1e-9 and gap <= 2 * chain + 1e-9


@settings(max_examples=25, deadline=None)
@given(n=st.integers(3, 9), p=st.floats(0.2, 0.9), seed=st.integers(0, 10_000))
def test_distances_match_networkx(n, p, seed):
    g = random_connected(n, p, seed)
    G = nx.from_numpy_array(g.adjacency.astype(int))
    assert g.diameter == nx.diameter(G)
    lengths = dict(nx.all_pairs_shortest_path_length(G))
    assert all(g.dist[i, j] == lengths[i][j] for i in range(n) for j in range(n))
