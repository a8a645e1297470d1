"""Topologies, random sharded MDPs and the hard instance families of the lower bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import networkx as nx
import numpy as np

from .depgraph import ShardedDataset, shard_mdp
from .mdp import ContractViolation, Mdp


class Topology(str, Enum):
    RING = "ring"
    GRID = "grid"
    STAR = "star"
    EXPANDER = "expander"
    PATH = "path"
    TREE = "tree"


@dataclass(frozen=True)
class TopologySpec:
    kind: Topology
    M: int
    expander_degree: int = 4
    tree_depth: int = 2
    branching: int = 2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Topology(self.kind))
        if self.kind is Topology.TREE:
            object.__setattr__(self, "M", tree_size(self.tree_depth, self.branching))
        if self.M < 1:
            raise ContractViolation("M must be positive")
        if self.kind is Topology.GRID and math.isqrt(self.M) ** 2 != self.M:
            raise ContractViolation(f"grid needs a perfect-square M, got {self.M}")
        if self.kind is Topology.EXPANDER:
            d = self.expander_degree
            if d >= self.M or (d * self.M) % 2:
                raise ContractViolation(f"no {d}-regular graph on {self.M} nodes")


def tree_size(depth: int, branching: int) -> int:
    return sum(branching ** i for i in range(depth + 1))


def topology_adjacency(spec: TopologySpec) -> np.ndarray:
    M = spec.M
    adj = np.zeros((M, M), dtype=bool)

    def link(i, j):
        adj[i, j] = adj[j, i] = True

    if spec.kind is Topology.RING:
        for i in range(M):
            if M > 1 and (i + 1) % M != i:
                link(i, (i + 1) % M)
    elif spec.kind is Topology.PATH:
        for i in range(M - 1):
            link(i, i + 1)
    elif spec.kind is Topology.GRID:
        k = math.isqrt(M)
        for r in range(k):
            for c in range(k):
                i = r * k + c
                if c + 1 < k:
                    link(i, i + 1)
                if r + 1 < k:
                    link(i, i + k)
    elif spec.kind is Topology.STAR:
        for i in range(1, M):
            link(0, i)
    elif spec.kind is Topology.TREE:
        for child in range(1, M):
            link(child, (child - 1) // spec.branching)
    elif spec.kind is Topology.EXPANDER:
        rng = np.random.default_rng(spec.seed)
        while True:
            g = nx.random_regular_graph(spec.expander_degree, M, seed=int(rng.integers(2 ** 31)))
            if nx.is_connected(g):
                break
        for i, j in g.edges():
            link(i, j)
    np.fill_diagonal(adj, False)
    return adj


def contiguous_ownership(M: int, states_per_machine: int) -> np.ndarray:
    return np.repeat(np.arange(M), states_per_machine)


def gen_topology_mdp(spec: TopologySpec, states_per_machine: int = 4, gamma: float = 0.95,
                     seed: int = 0, n_actions: int = 2, n_successors: int = 3,
                     cross_per_edge: int = 3) -> tuple[Mdp, ShardedDataset]:
    """Random tabular MDP whose cross-machine transitions realise exactly ``spec``'s edges.

    States are owned contiguously. Every ``(s, a)`` row starts with
    ``n_successors`` successors on its own machine; each topological neighbour
    then receives ``cross_per_edge`` successors from this machine's rows,
    dealt round-robin. A cross successor replaces an internal one while the
    row has any left, otherwise the row grows (high-degree hubs). Weights are
    Dirichlet, rewards uniform on [0, 1].
    """
    if states_per_machine < 1 or n_successors < 1:
        raise ContractViolation("need at least one state per machine and one successor")
    if cross_per_edge < 1:
        raise ContractViolation("cross_per_edge must be >= 1 to realise the topology")
    adj = topology_adjacency(spec)
    M, spm = spec.M, states_per_machine
    rng = np.random.default_rng(seed)
    n = M * spm
    own = contiguous_ownership(M, spm)
    rows: dict[tuple[int, int], list[int]] = {}
    for s in range(n):
        for a in range(n_actions):
            rows[(s, a)] = list(own[s] * spm + rng.integers(0, spm, size=n_successors))
    for j in range(M):
        local_rows = [(j * spm + i // n_actions, i % n_actions)
                      for i in rng.permutation(spm * n_actions)]
        replaced = {r: 0 for r in local_rows}
        targets = np.repeat(np.flatnonzero(adj[j]), cross_per_edge)
        for i, k in enumerate(targets):
            row = local_rows[i % len(local_rows)]
            dest = int(k) * spm + int(rng.integers(spm))
            if replaced[row] < n_successors:
                rows[row][replaced[row]] = dest
                replaced[row] += 1
            else:
                rows[row].append(dest)
    transitions = []
    for (s, a), succ in rows.items():
        w = rng.dirichlet(np.ones(len(succ)))
        transitions.extend((s, a, int(s2), float(p)) for s2, p in zip(succ, w))
    reward = rng.uniform(0.0, 1.0, size=(n, n_actions))
    mdp = Mdp.from_lists(n, n_actions, transitions,
                         [(s, a, reward[s, a]) for s in range(n) for a in range(n_actions)],
                         gamma, normalize=True)
    return mdp, shard_mdp(mdp, own, M)


@dataclass
class HardInstance:
    """A family of MDPs sharing one sharded support.

    ``members`` maps a label (``0``/``1`` or a bit tuple) to an MDP; the
    dataset and ownership are those of the first member.
    """

    members: dict
    ownership: np.ndarray
    n_machines: int
    params: dict = field(default_factory=dict)
    designated: dict = field(default_factory=dict)

    def dataset(self, label) -> ShardedDataset:
        return shard_mdp(self.members[label], self.ownership, self.n_machines)

    def labels(self) -> list:
        return list(self.members)


def _chain_mdp(n_states, edges, rewards, gamma, decoy):
    n_actions = 2 if decoy else 1
    trans = []
    rew = []
    for s, s2 in edges:
        for a in range(n_actions):
            trans.append((s, a, s2, 1.0))
    for s, r in rewards.items():
        rew.append((s, 0, r))
    return Mdp.from_lists(n_states, n_actions, trans, rew, gamma)


def gen_thm1_pair(L: int, gamma: float, decoy: bool = False) -> HardInstance:
    """Two chain MDPs on a path of ``L+1`` machines differing only at the far end.

    ``x_l`` lives on machine ``l``; ``x_l -> x_{l+1}`` and ``x_L`` loops. The
    loaded member pays ``1-gamma`` at ``x_L`` so its value at ``x_0`` is
    ``gamma**L``. The optional decoy action copies the dynamics with zero reward.
    """
    if L < 1:
        raise ContractViolation("L must be >= 1")
    n = L + 1
    edges = [(l, l + 1) for l in range(L)] + [(L, L)]
    m0 = _chain_mdp(n, edges, {}, gamma, decoy)
    m1 = _chain_mdp(n, edges, {L: 1.0 - gamma}, gamma, decoy)
    return HardInstance({0: m0, 1: m1}, np.arange(n), n,
                        params={"L": L, "gamma": gamma, "decoy": decoy},
                        designated={"u": 0, "v": L, "x0": 0})


def _bits_chains(L, m, gamma, bits, extra_states=0):
    n = (L + 1) * m + extra_states
    edges = []
    rewards = {}
    for q in range(m):
        for l in range(L):
            edges.append((l * m + q, (l + 1) * m + q))
        last = L * m + q
        edges.append((last, last))
        if bits[q]:
            rewards[last] = 1.0 - gamma
    return n, edges, rewards


def gen_thm2_family(L: int, m: int, gamma: float, bits: Optional[Sequence[int]] = None) -> HardInstance:
    """``m`` parallel length-``L`` chains on a path of ``L+1`` machines.

    Chain ``q`` pays ``(1-gamma) b_q`` at its last state, so
    ``V*(x_0^(q)) = gamma**L b_q``. With ``bits=None`` all ``2**m`` members are built.
    State ``x_l^(q)`` has index ``l*m + q`` and lives on machine ``l``.
    """
    if L < 1 or m < 1:
        raise ContractViolation("L and m must be >= 1")
    vectors = [tuple(bits)] if bits is not None else [
        tuple((code >> q) & 1 for q in range(m)) for code in range(2 ** m)]
    members = {}
    for b in vectors:
        if len(b) != m:
            raise ContractViolation(f"bit vector length {len(b)} != m={m}")
        n, edges, rewards = _bits_chains(L, m, gamma, b)
        members[b] = _chain_mdp(n, edges, rewards, gamma, False)
    own = np.repeat(np.arange(L + 1), m)
    return HardInstance(members, own, L + 1,
                        params={"L": L, "m": m, "gamma": gamma},
                        designated={"u": 0, "v": L,
                                    "x0": [q for q in range(m)],
                                    "cut_edges": [(r - 1, r) for r in range(1, L + 1)]})


def decode_bits(values, L: int, m: int, gamma: float) -> tuple:
    """Recover ``b`` from value estimates at ``x_0^(q)`` by thresholding at ``gamma**L / 2``."""
    values = np.asarray(values, dtype=float)
    return tuple(int(values[q] > gamma ** L / 2) for q in range(m))


def gen_fed_tree(depth: int, branching: int, m: int, gamma: float,
                 bits: Optional[Sequence[int]] = None) -> HardInstance:
    """Rooted tree of machines with the bit-chain construction on its leftmost root-leaf path.

    Off-path machines each hold one zero-reward filler state that moves into
    an absorbing zero-reward sink on its parent, so the tree edges exist but
    nothing reachable from the chains changes.
    """
    if depth < 1:
        raise ContractViolation("depth must be >= 1")
    M = tree_size(depth, branching)
    parent = [-1] + [(c - 1) // branching for c in range(1, M)]
    path = [0]
    for _ in range(depth):
        path.append(path[-1] * branching + 1)
    on_path = set(path)
    off = [c for c in range(M) if c not in on_path]
    parents_with_off = sorted({parent[c] for c in off})
    vectors = [tuple(bits)] if bits is not None else [
        tuple((code >> q) & 1 for q in range(m)) for code in range(2 ** m)]
    chain_n = (depth + 1) * m
    sink = {p: chain_n + i for i, p in enumerate(parents_with_off)}
    filler = {c: chain_n + len(sink) + i for i, c in enumerate(off)}
    n = chain_n + len(sink) + len(filler)
    own = np.empty(n, dtype=np.int64)
    for l, machine in enumerate(path):
        own[l * m:(l + 1) * m] = machine
    for p, s in sink.items():
        own[s] = p
    for c, s in filler.items():
        own[s] = c
    members = {}
    for b in vectors:
        if len(b) != m:
            raise ContractViolation(f"bit vector length {len(b)} != m={m}")
        _, edges, rewards = _bits_chains(depth, m, gamma, b)
        edges += [(s, s) for s in sink.values()]
        edges += [(s, sink[parent[c]]) for c, s in filler.items()]
        members[b] = _chain_mdp(n, edges, rewards, gamma, False)
    return HardInstance(members, own, M,
                        params={"L": depth, "m": m, "gamma": gamma, "branching": branching},
                        designated={"u": 0, "path": path, "x0": list(range(m))})
