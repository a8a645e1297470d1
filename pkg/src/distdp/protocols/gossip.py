"""Gossip fitted value iteration over a doubly stochastic mixing matrix."""
from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix

from ..accounting import TranscriptLog, oracle_values
from ..depgraph import DepGraph, MixingMatrix, ShardedDataset
from ..mdp import NO_NOISE, ContractViolation, DeltaNoise, Mdp, backup_from_tables
from .network import DEFAULT_VALUE_WIDTH, Network
from .report import RunReport
from .sdbp import check_consistent, noise_vector

ERROR_STATS = ("max_machine", "mean")


class _SparseBellman:
    """Exact backup of many full tables at once via one sparse matrix per action."""

    def __init__(self, mdp: Mdp):
        n = mdp.n_states
        rows = np.broadcast_to(np.arange(n)[:, None], mdp.succ.shape[::2]).ravel()
        self.P = [csr_matrix((mdp.prob[:, a].ravel(), (rows, mdp.succ[:, a].ravel())), shape=(n, n))
                  for a in range(mdp.n_actions)]
        self.reward = mdp.reward
        self.gamma = mdp.gamma

    def __call__(self, V: np.ndarray) -> np.ndarray:
        out = None
        for a, P in enumerate(self.P):
            q = self.reward[:, a][:, None] + self.gamma * (P @ V.T)
            out = q if out is None else np.maximum(out, q)
        return out.T


def run_gossip_fvi(mdp: Mdp, data: ShardedDataset, g: DepGraph, w: MixingMatrix,
                   noise: DeltaNoise = NO_NOISE, T: int = 50_000,
                   epsilon: Optional[float] = None, *, vstar=None,
                   value_width: int = DEFAULT_VALUE_WIDTH, track_recursion: bool = False,
                   stop_at_target: bool = False, error_stat: str = "max_machine",
                   keep_values: bool = False, log: Optional[TranscriptLog] = None) -> RunReport:
    """Every machine holds a full table; local backup of owned states, then ``V <- W U``.

    ``sup_error`` is ``max_j ||V_j - V*||`` (``error_stat="max_machine"``) or
    ``||mean_j V_j - V*||`` (``"mean"``). ``mean_error`` and ``disagreement``
    always hold ``E_t`` and ``D_t``. With ``track_recursion`` the report also
    carries ``delta_eff[t] = max_j ||U_j - T V_j||`` (the measured deviation of
    the local step from the exact operator, pass-through coordinates included)
    and the pre-averaging disagreement ``max_j ||U_j - mean U||``, plus a per-round
    flag that every state's spread across machines shrank by ``1 - gap`` in
    the Euclidean norm (the sup-over-machines form is not implied by the gap).
    ``log`` records the full-table payloads (slow, meant for small instances).
    """
    if error_stat not in ERROR_STATS:
        raise ContractViolation(f"error_stat must be one of {ERROR_STATS}")
    if T < 0:
        raise ContractViolation("T must be >= 0")
    check_consistent(mdp, data, g)
    W = np.asarray(w.W, dtype=float)
    M = data.n_machines
    if W.shape != (M, M):
        raise ContractViolation(f"mixing matrix is {W.shape}, expected ({M}, {M})")
    off = (W != 0) & ~np.eye(M, dtype=bool)
    if np.any(off & ~g.adjacency):
        i, k = np.argwhere(off & ~g.adjacency)[0]
        raise ContractViolation(f"mixing matrix weights non-edge ({i}, {k})")
    vstar = oracle_values(mdp) if vstar is None else np.asarray(vstar, dtype=float)
    n = mdp.n_states
    own = data.ownership
    idx = np.arange(n)
    net = Network(g, value_width, log)
    pairs = [(j, k) for j in range(M) for k in range(M) if off[j, k]]
    rep = RunReport("gossip_fvi", mdp.gamma, epsilon, noise.delta if noise.active else 0.0, M)
    rep.diameter = g.diameter
    rep.gap = float(w.gap)
    V = np.zeros((M, n))
    # payloads are fixed full tables, so bits are charged in closed form unless logging
    round_bits = len(pairs) * n * value_width
    contraction = 1.0 - float(w.gap)
    l2_ok: list = []
    exact = _SparseBellman(mdp) if track_recursion else None

    def stats(V):
        mean = V.mean(axis=0)
        E = float(np.max(np.abs(mean - vstar)))
        D = float(np.max(np.abs(V - mean)))
        sup = float(np.max(np.abs(V - vstar))) if error_stat == "max_machine" else E
        return mean, sup, E, D

    _, sup, E, D = stats(V)
    rep.record(0, V.mean(axis=0), sup, E, D, 0, epsilon, keep_values)
    for t in range(T):
        U = V.copy()
        U[own, idx] = backup_from_tables(mdp, V, idx, own) + noise_vector(noise, n, own, t)
        if track_recursion:
            rep.delta_eff.append(float(np.max(np.abs(U - exact(V)))))
            rep.pre_gossip_disagreement.append(float(np.max(np.abs(U - U.mean(axis=0)))))
        if log is not None:
            net.begin_round(t)
            for j, k in pairs:
                net.send(k, j, idx, U[k])
        V = W @ U
        if track_recursion:
            pre = np.linalg.norm(U - U.mean(axis=0), axis=0)
            post = np.linalg.norm(V - V.mean(axis=0), axis=0)
            l2_ok.append(bool(np.all(post <= contraction * pre + 1e-12)))
        if log is not None:
            net.end_round(list(V))
        mean, sup, E, D = stats(V)
        hit = rep.record(t + 1, mean, sup, E, D, (t + 1) * round_bits, epsilon, keep_values)
        if hit and stop_at_target:
            break
    rounds = rep.rounds_run
    rep.edge_bits = {(k, j): rounds * n * value_width for j, k in pairs}
    rep.machine_outputs = [V[j].copy() for j in range(M)]
    rep.final_values = V.mean(axis=0)
    rep.extras["error_stat"] = error_stat
    if track_recursion:
        rep.extras["l2_contraction_ok"] = l2_ok
    return rep
