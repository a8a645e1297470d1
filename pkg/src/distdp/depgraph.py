"""Machine-level dependency graphs built from sharded offline data.

Covers the empirical transition graph, boundary states, BFS distances, the
discounted dependency radius, lazy Metropolis-Hastings gossip matrices and
conductance estimates.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .mdp import ContractViolation, Mdp

EXHAUSTIVE_LIMIT = 20
SWEEP_VECTORS = 3


@dataclass(frozen=True)
class Transition:
    s: int
    a: int
    r: float
    s_next: int


@dataclass
class ShardedDataset:
    """Transitions split across machines plus the state-ownership map.

    A transition lives in the shard of the machine owning its source state.
    """

    n_machines: int
    ownership: np.ndarray
    shards: list[list[Transition]]

    def __post_init__(self):
        self.ownership = np.asarray(self.ownership, dtype=np.int64)
        if len(self.shards) != self.n_machines:
            raise ContractViolation("need exactly one shard per machine")
        if self.ownership.size and (self.ownership.min() < 0
                                    or self.ownership.max() >= self.n_machines):
            raise ContractViolation("ownership maps a state to a nonexistent machine")
        n = self.ownership.size
        for j, shard in enumerate(self.shards):
            for t in shard:
                for st in (t.s, t.s_next):
                    if not 0 <= st < n:
                        raise ContractViolation(f"state {st} in shard {j} has no owner")
                if self.ownership[t.s] != j:
                    raise ContractViolation(
                        f"transition from state {t.s} stored on machine {j}, "
                        f"but owned by {self.ownership[t.s]}")

    @property
    def n_states(self) -> int:
        return int(self.ownership.size)

    def owned(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.ownership == j)

    def partition_text(self) -> str:
        return "".join(f"{s} {m}\n" for s, m in enumerate(self.ownership))

    @staticmethod
    def parse_partition(text: str) -> np.ndarray:
        pairs = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"partition line {lineno}: expected 'state machine', got {line!r}")
            pairs.append((int(parts[0]), int(parts[1])))
        own = np.full(len(pairs), -1, dtype=np.int64)
        for s, m in pairs:
            if not 0 <= s < len(pairs):
                raise ValueError(f"partition: state {s} out of range")
            own[s] = m
        if np.any(own < 0):
            raise ValueError("partition: states missing")
        return own


def shard_mdp(mdp: Mdp, ownership, n_machines: int | None = None) -> ShardedDataset:
    """One transition per supported ``(s, a, s')`` on the owner of ``s``."""
    ownership = np.asarray(ownership, dtype=np.int64)
    if ownership.shape != (mdp.n_states,):
        raise ContractViolation("ownership must cover every state")
    M = int(ownership.max()) + 1 if n_machines is None else n_machines
    shards: list[list[Transition]] = [[] for _ in range(M)]
    for s, a, s2, _p in mdp.transitions():
        shards[ownership[s]].append(Transition(s, a, float(mdp.reward[s, a]), s2))
    return ShardedDataset(M, ownership, shards)


class DisconnectedGraph(ContractViolation):
    def __init__(self, components):
        self.components = components
        super().__init__(f"support graph has {len(components)} components: {components}")


@dataclass
class DepGraph:
    M: int
    weights: dict  # (j, k) -> number of transitions in shard j landing in S_k
    boundary: dict  # (j, k) -> sorted tuple of states of k that j reads
    adjacency: np.ndarray  # undirected support, bool (M, M)
    dist: np.ndarray  # float, inf when unreachable

    @property
    def diameter(self) -> int:
        finite = self.dist[np.isfinite(self.dist)]
        return int(finite.max()) if finite.size else 0

    @cached_property
    def neighbors(self) -> list[list[int]]:
        return [list(map(int, np.flatnonzero(row))) for row in self.adjacency]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def undirected_edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(map(int, i), map(int, j)))

    def is_connected(self) -> bool:
        return self.M <= 1 or bool(np.all(np.isfinite(self.dist)))

    def components(self) -> list[list[int]]:
        _, labels = connected_components(csr_matrix(self.adjacency), directed=False)
        comps: dict[int, list[int]] = {}
        for node, lab in enumerate(labels):
            comps.setdefault(int(lab), []).append(node)
        return list(comps.values())

    def ball(self, j: int, radius: float) -> np.ndarray:
        """Machines within graph distance ``radius`` of ``j``."""
        return np.flatnonzero(self.dist[j] <= radius)

    def fingerprint(self) -> str:
        """Stable digest of the support, weights and boundary sets."""
        import hashlib
        doc = {
            "M": self.M,
            "edges": sorted([j, k, w] for (j, k), w in self.weights.items()),
            "boundary": sorted([j, k, list(b)] for (j, k), b in self.boundary.items()),
        }
        return hashlib.sha256(json.dumps(doc).encode()).hexdigest()

    def edge_list_text(self) -> str:
        return "".join(f"{j} {k} {w}\n" for (j, k), w in sorted(self.weights.items()))


def build_depgraph(data: ShardedDataset) -> DepGraph:
    M, own = data.n_machines, data.ownership
    weights: dict = {}
    boundary: dict = {}
    for j, shard in enumerate(data.shards):
        for t in shard:
            k = int(own[t.s_next])
            if k == j:
                continue
            weights[(j, k)] = weights.get((j, k), 0) + 1
            boundary.setdefault((j, k), set()).add(int(t.s_next))
    boundary = {e: tuple(sorted(b)) for e, b in boundary.items()}
    adj = np.zeros((M, M), dtype=bool)
    for j, k in weights:
        adj[j, k] = adj[k, j] = True
    dist = shortest_path(csr_matrix(adj.astype(float)), unweighted=True, directed=False)
    return DepGraph(M, weights, boundary, adj, dist)


def graph_from_adjacency(adj) -> DepGraph:
    """Support-only DepGraph (unit weights, no boundary sets) for pure topology analysis."""
    adj = np.asarray(adj, dtype=bool)
    adj = adj | adj.T
    np.fill_diagonal(adj, False)
    M = adj.shape[0]
    weights = {(int(i), int(j)): 1 for i, j in zip(*np.nonzero(adj))}
    dist = shortest_path(csr_matrix(adj.astype(float)), unweighted=True, directed=False)
    return DepGraph(M, weights, {}, adj, dist)


def discounted_radius(gamma: float, epsilon: float) -> int:
    """Largest ``L >= 0`` with ``gamma**L > 2 epsilon``.

    Evaluated by direct scan; the closed-form floor expression disagrees with
    this definition whenever ``log(1/2eps)/log(1/gamma)`` is an integer.
    """
    if not 0.0 < gamma < 1.0:
        raise ContractViolation(f"gamma must lie in (0,1), got {gamma}")
    if not 0.0 < epsilon < 0.5:
        raise ContractViolation(f"epsilon must lie in (0,1/2), got {epsilon}")
    L = 0
    while gamma ** (L + 1) > 2 * epsilon:
        L += 1
    return L


class Laziness(str, Enum):
    LAZY_HALF = "lazy_half"


@dataclass
class MixingMatrix:
    W: np.ndarray
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray = field(repr=False)

    @classmethod
    def from_matrix(cls, W) -> "MixingMatrix":
        W = np.asarray(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ContractViolation("mixing matrix must be square")
        if not np.allclose(W, W.T, atol=1e-12, rtol=0):
            raise ContractViolation("mixing matrix must be symmetric")
        if np.any(W < -1e-15) or np.any(np.abs(W.sum(axis=1) - 1) > 1e-12):
            raise ContractViolation("mixing matrix must be nonnegative with unit row sums")
        vals, vecs = np.linalg.eigh(W)
        order = np.argsort(vals)[::-1]
        return cls(W, vals[order], vecs[:, order])

    @property
    def M(self) -> int:
        return self.W.shape[0]

    @property
    def slem(self) -> float:
        """Second largest eigenvalue modulus."""
        if self.M == 1:
            return 0.0
        return float(max(abs(self.eigenvalues[1]), abs(self.eigenvalues[-1])))

    @property
    def gap(self) -> float:
        return 1.0 - self.slem

    @property
    def fiedler(self) -> np.ndarray:
        return self.eigenvectors[:, 1]

    def support(self) -> np.ndarray:
        adj = self.W > 0
        np.fill_diagonal(adj, False)
        return adj


def mh_matrix(g: DepGraph, laziness: Laziness = Laziness.LAZY_HALF) -> MixingMatrix:
    """Lazy Metropolis-Hastings weights ``1/(2 max(d_i, d_j))`` on the support graph."""
    Laziness(laziness)
    if not g.is_connected():
        raise DisconnectedGraph(g.components())
    adj = g.adjacency
    deg = adj.sum(axis=1)
    W = np.zeros((g.M, g.M))
    i, j = np.nonzero(adj)
    W[i, j] = 1.0 / (2.0 * np.maximum(deg[i], deg[j]))
    np.fill_diagonal(W, 0.0)
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return MixingMatrix.from_matrix(W)


def spectral_gap(w: MixingMatrix) -> float:
    return w.gap


def normalized_laplacian_gap(g: DepGraph) -> float:
    """Second smallest eigenvalue of ``I - D^{-1/2} A D^{-1/2}``."""
    A = g.adjacency.astype(float)
    d = A.sum(axis=1)
    if np.any(d == 0):
        return 0.0
    inv = 1.0 / np.sqrt(d)
    Lap = np.eye(g.M) - inv[:, None] * A * inv[None, :]
    return float(np.sort(np.linalg.eigvalsh(Lap))[1])


class ConductanceMode(str, Enum):
    GRAPH_VOLUME = "graph_volume"
    PAPER_DEFINITION = "paper_definition"
    CHAIN = "chain"  # stationary-normalised: sum_{S,S^c} W_ij / min(|S|,|S^c|)


@dataclass
class Cut:
    value: float
    side: tuple
    exact: bool


def _cut_scores(masks: np.ndarray, C: np.ndarray, size_fn) -> np.ndarray:
    """Ratio ``sum_{i in S, j notin S} C_ij / size_fn(S)`` for boolean rows of ``masks``."""
    x = masks.astype(float)
    cut = np.einsum("si,ij,sj->s", x, C, 1.0 - x)
    return cut / size_fn(masks)


def _scorer(mode: ConductanceMode, adj: np.ndarray, W: np.ndarray | None):
    M = adj.shape[0]
    if mode is ConductanceMode.GRAPH_VOLUME:
        C = adj.astype(float)
        deg = C.sum(axis=1)
        total = deg.sum()

        def size(masks):
            vol = masks.astype(float) @ deg
            return np.minimum(vol, total - vol)
        return C, size
    sizes = lambda masks: np.minimum(masks.sum(axis=1), M - masks.sum(axis=1)).astype(float)
    C = W.copy()
    np.fill_diagonal(C, 0.0)
    if mode is ConductanceMode.PAPER_DEFINITION:
        return C, lambda masks: sizes(masks) / M
    return C, sizes


def _sweep_vectors(mode: ConductanceMode, adj: np.ndarray, W: np.ndarray | None,
                   count: int = SWEEP_VECTORS) -> list[np.ndarray]:
    # several low eigenvectors: lambda_2 is degenerate on grids and tori
    if mode is ConductanceMode.GRAPH_VOLUME:
        A = adj.astype(float)
        d = A.sum(axis=1)
        inv = 1.0 / np.sqrt(d)
        Lap = np.eye(len(d)) - inv[:, None] * A * inv[None, :]
        _, vecs = np.linalg.eigh(Lap)
        return [inv * vecs[:, i] for i in range(1, min(count + 1, len(d)))]
    _, vecs = np.linalg.eigh(W)
    return [vecs[:, -1 - i] for i in range(1, min(count + 1, W.shape[0]))]


def best_cut(source: Union[DepGraph, MixingMatrix], mode=ConductanceMode.GRAPH_VOLUME,
             exhaustive_limit: int = EXHAUSTIVE_LIMIT) -> Cut:
    mode = ConductanceMode(mode)
    if isinstance(source, MixingMatrix):
        adj, W = source.support(), source.W
    else:
        adj = source.adjacency
        W = mh_matrix(source).W if mode is not ConductanceMode.GRAPH_VOLUME else None
    M = adj.shape[0]
    if M < 2:
        raise ContractViolation("conductance needs at least two machines")
    _, labels = connected_components(csr_matrix(adj), directed=False)
    if labels.max() > 0:
        raise DisconnectedGraph([list(np.flatnonzero(labels == c)) for c in range(labels.max() + 1)])
    C, size = _scorer(mode, adj, W)
    if M <= exhaustive_limit:
        # node M-1 fixed outside S; every nonempty S not containing it
        codes = np.arange(1, 2 ** (M - 1), dtype=np.int64)
        best = (math.inf, None)
        for start in range(0, codes.size, 1 << 16):
            chunk = codes[start:start + (1 << 16)]
            masks = ((chunk[:, None] >> np.arange(M)) & 1).astype(bool)
            scores = _cut_scores(masks, C, size)
            i = int(np.argmin(scores))
            if scores[i] < best[0]:
                best = (float(scores[i]), masks[i])
        return Cut(best[0], tuple(map(int, np.flatnonzero(best[1]))), True)
    best = Cut(math.inf, (), False)
    for vec in _sweep_vectors(mode, adj, W):
        order = np.argsort(vec, kind="stable")
        masks = np.tril(np.ones((M - 1, M), dtype=bool))[:, np.argsort(order)]
        scores = _cut_scores(masks, C, size)
        i = int(np.argmin(scores))
        if scores[i] < best.value:
            best = Cut(float(scores[i]), tuple(sorted(map(int, order[: i + 1]))), False)
    return best


def conductance_sweep(source: Union[DepGraph, MixingMatrix], mode=ConductanceMode.GRAPH_VOLUME,
                      exhaustive_limit: int = EXHAUSTIVE_LIMIT) -> float:
    """Conductance via Fiedler sweep cuts, exhaustive when ``M <= exhaustive_limit``.

    Sweep results are upper bounds on the true minimum.
    """
    return best_cut(source, mode, exhaustive_limit).value


def cheeger_report(g: DepGraph) -> dict:
    """Cheeger sandwich checks for the normalized Laplacian and for the MH matrix."""
    W = mh_matrix(g)
    phi_g = conductance_sweep(g, ConductanceMode.GRAPH_VOLUME)
    lam = normalized_laplacian_gap(g)
    phi_w = conductance_sweep(W, ConductanceMode.CHAIN)
    return {
        "phi_graph": phi_g,
        "laplacian_gap": lam,
        "laplacian_sandwich": phi_g ** 2 / 2 <= lam + 1e-12 and lam <= 2 * phi_g + 1e-12,
        "mh_gap": W.gap,
        "mh_vs_graph_phi_sandwich": phi_g ** 2 / 2 <= W.gap + 1e-12 and W.gap <= 2 * phi_g + 1e-12,
        "phi_chain": phi_w,
        "mh_chain_sandwich": phi_w ** 2 / 2 <= W.gap + 1e-12 and W.gap <= 2 * phi_w + 1e-12,
    }


def graph_report(g: DepGraph) -> dict:
    W = mh_matrix(g)
    return {
        "M": g.M,
        "diameter": g.diameter,
        "gap": W.gap,
        "phi_graph": conductance_sweep(g, ConductanceMode.GRAPH_VOLUME),
        "phi_paper": conductance_sweep(W, ConductanceMode.PAPER_DEFINITION),
        "eigenvalues": [float(x) for x in W.eigenvalues],
    }
