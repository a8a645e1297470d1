import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distdp.depgraph import build_depgraph
from distdp.instances import (HardInstance, Topology, TopologySpec, decode_bits, gen_fed_tree,
                              gen_thm1_pair, gen_thm2_family, gen_topology_mdp, topology_adjacency,
                              tree_size)
from distdp.mdp import ContractViolation, solve_vstar


@pytest.mark.parametrize("kind,M,degrees,edges", [
    ("ring", 16, {2}, 16),
    ("path", 5, {1, 2}, 4),
    ("grid", 16, {2, 3, 4}, 24),
    ("star", 16, {1, 15}, 15),
    ("expander", 16, {4}, 32),
])
def test_topology_shapes(kind, M, degrees, edges):
    adj = topology_adjacency(TopologySpec(kind, M))
    assert np.array_equal(adj, adj.T) and not adj.diagonal().any()
    assert set(adj.sum(axis=1)) == degrees
    assert adj.sum() // 2 == edges


def test_tree_size_and_spec_errors():
    assert tree_size(2, 2) == 7
    assert TopologySpec("tree", 0, tree_depth=3, branching=2).M == 15
    with pytest.raises(ContractViolation):
        TopologySpec("grid", 10)
    with pytest.raises(ContractViolation):
        TopologySpec("expander", 5, expander_degree=3)


@pytest.mark.parametrize("kind", [t.value for t in Topology if t is not Topology.TREE])
def test_generated_mdp_realises_topology(kind):
    M = 16 if kind != "path" else 6
    spec = TopologySpec(kind, M)
    mdp, data = gen_topology_mdp(spec, seed=4)
    g = build_depgraph(data)
    assert np.array_equal(g.adjacency, topology_adjacency(spec))
    assert mdp.n_states == 4 * M
    assert np.all((mdp.reward >= 0) & (mdp.reward <= 1))


def test_generator_deterministic():
    a, _ = gen_topology_mdp(TopologySpec("grid", 9), seed=11)
    b, _ = gen_topology_mdp(TopologySpec("grid", 9), seed=11)
    assert a.to_json() == b.to_json()


def test_star_hub_rows_widen():
    mdp, data = gen_topology_mdp(TopologySpec("star", 64), seed=0)
    assert build_depgraph(data).degrees[0] == 63


def test_thm1_pair_values():
    inst = gen_thm1_pair(4, 0.8)
    assert isinstance(inst, HardInstance)
    v1 = solve_vstar(inst.members[1], 1e-13).values
    assert v1[0] == pytest.approx(0.8 ** 4, abs=1e-12)
    assert v1[4] == pytest.approx(1.0, abs=1e-12)
    assert np.all(solve_vstar(inst.members[0]).values == 0)
    assert list(inst.ownership) == [0, 1, 2, 3, 4]


def test_thm1_decoy_keeps_values():
    plain = solve_vstar(gen_thm1_pair(3, 0.7).members[1]).values
    decoy = gen_thm1_pair(3, 0.7, decoy=True).members[1]
    assert decoy.n_actions == 2
    assert np.allclose(solve_vstar(decoy).values, plain)


def test_thm2_family_enumeration():
    fam = gen_thm2_family(3, 3, 0.9)
    assert len(fam.members) == 8
    assert fam.designated["cut_edges"] == [(0, 1), (1, 2), (2, 3)]
    g = build_depgraph(fam.dataset((1, 0, 1)))
    assert g.diameter == 3


@settings(max_examples=20, deadline=None)
@given(L=st.integers(1, 4), bits=st.lists(st.integers(0, 1), min_size=1, max_size=5),
       gamma=st.floats(0.5, 0.95))
def test_thm2_values_and_decoding(L, bits, gamma):
    m = len(bits)
    fam = gen_thm2_family(L, m, gamma, bits)
    v = solve_vstar(fam.members[tuple(bits)], 1e-12).values
    assert np.allclose(v[:m], [gamma ** L * b for b in bits], atol=1e-10)
    assert decode_bits(v, L, m, gamma) == tuple(bits)


def test_fed_tree_path_and_values():
    inst = gen_fed_tree(2, 2, 3, 0.9, bits=[1, 0, 1])
    assert inst.designated["path"] == [0, 1, 3]
    assert inst.n_machines == 7
    mdp = inst.members[(1, 0, 1)]
    v = solve_vstar(mdp, 1e-12).values
    assert np.allclose(v[:3], [0.81, 0.0, 0.81], atol=1e-10)
    g = build_depgraph(inst.dataset((1, 0, 1)))
    # every tree edge is realised
    assert len(g.undirected_edges()) == 6
