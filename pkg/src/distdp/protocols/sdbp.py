"""Direct boundary propagation, its bandwidth-capped variant, and two reference protocols.

All runs start from ``V^(0) = 0``. A boundary value that has never arrived is
read as that initial zero, which keeps exact-case SDBP equal to ``T^t 0``.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..accounting import TranscriptLog, oracle_values
from ..depgraph import DepGraph, ShardedDataset
from ..mdp import NO_NOISE, ContractViolation, DeltaNoise, Mdp, backup_from_tables
from .network import DEFAULT_VALUE_WIDTH, Network
from .report import RunReport


def check_consistent(mdp: Mdp, data: ShardedDataset, g: DepGraph) -> None:
    """Every cross-machine successor of an owned row must be a declared boundary state."""
    if data.n_states != mdp.n_states:
        raise ContractViolation(
            f"dataset covers {data.n_states} states, MDP has {mdp.n_states}")
    if g.M != data.n_machines:
        raise ContractViolation("dependency graph and dataset disagree on M")
    own = data.ownership
    live = mdp.prob > 0
    src = np.broadcast_to(np.arange(mdp.n_states)[:, None, None], mdp.succ.shape)
    cross = live & (own[mdp.succ] != own[src])
    declared = {(j, k): set(b) for (j, k), b in g.boundary.items()}
    for s, s2 in zip(src[cross], mdp.succ[cross]):
        if int(s2) not in declared.get((int(own[s]), int(own[s2])), ()):
            raise ContractViolation(
                f"state {s} on machine {own[s]} needs {s2} from machine {own[s2]}, "
                "which is not a boundary state of the dependency graph")


def noise_vector(noise: DeltaNoise, n_states: int, ownership: np.ndarray, round_: int,
                 machines=None) -> np.ndarray:
    """Per-state perturbation where state ``s`` takes its owner's draw for this round."""
    eps = np.zeros(n_states)
    if not noise.active:
        return eps
    machines = range(int(ownership.max()) + 1) if machines is None else machines
    for j in machines:
        mask = ownership == j
        eps[mask] = noise.draw(n_states, j, round_)[mask]
    return eps


class _Ctx:
    """Oracle, ownership and bookkeeping shared by the synchronous runners."""

    def __init__(self, mdp, data, vstar):
        self.mdp = mdp
        self.own = data.ownership
        self.n = mdp.n_states
        self.idx = np.arange(self.n)
        self.M = data.n_machines
        self.owned = [data.owned(j) for j in range(self.M)]
        self.vstar = oracle_values(mdp) if vstar is None else np.asarray(vstar, dtype=float)

    def err(self, table) -> float:
        return float(np.max(np.abs(table - self.vstar))) if self.n else 0.0


def _new_report(name, mdp, data, g, noise, epsilon):
    rep = RunReport(name, mdp.gamma, epsilon, noise.delta if noise.active else 0.0,
                    data.n_machines)
    if g is not None:
        rep.diameter = g.diameter
    return rep


def run_sdbp(mdp: Mdp, data: ShardedDataset, g: DepGraph, noise: DeltaNoise = NO_NOISE,
             T: int = 200, epsilon: Optional[float] = None, *, vstar=None,
             value_width: int = DEFAULT_VALUE_WIDTH, local_sweeps: int = 1,
             log: Optional[TranscriptLog] = None, keep_values: bool = True,
             keep_rounds: bool = False, stop_at_target: bool = False,
             payload_seed: Optional[int] = None) -> RunReport:
    """Synchronous direct boundary propagation.

    Each round every machine ``k`` sends ``{V_k(s) : s in boundary(j, k)}`` to
    each reader ``j``, then every machine backs up its owned states from its
    local view (own values plus cached boundary values). ``local_sweeps > 1``
    repeats the local backup within a round. ``payload_seed`` shuffles payload
    order per message, a randomised variant whose outputs are unchanged.
    """
    if T < 0:
        raise ContractViolation("T must be >= 0")
    if local_sweeps < 1:
        raise ContractViolation("local_sweeps must be >= 1")
    check_consistent(mdp, data, g)
    ctx = _Ctx(mdp, data, vstar)
    net = Network(g, value_width, log, keep_rounds)
    views = np.zeros((ctx.M, ctx.n))
    links = sorted(g.boundary.items())
    rep = _new_report("sdbp", mdp, data, g, noise, epsilon)
    table = views[ctx.own, ctx.idx]
    rep.record(0, table, ctx.err(table), ctx.err(table), 0.0, 0, epsilon, keep_values)
    for t in range(T):
        net.begin_round(t)
        inbox = []
        for (j, k), states in links:
            states = np.asarray(states)
            if payload_seed is not None:
                states = np.random.default_rng([payload_seed, t, j, k]).permutation(states)
            msg = net.send(k, j, states, views[k, states])
            inbox.append(msg)
        for msg in inbox:
            views[msg.receiver, list(msg.states)] = msg.values
        eps = noise_vector(noise, ctx.n, ctx.own, t)
        for _ in range(local_sweeps):
            views[ctx.own, ctx.idx] = backup_from_tables(mdp, views, ctx.idx, ctx.own) + eps
        table = views[ctx.own, ctx.idx]
        net.end_round([views[j, ctx.owned[j]] for j in range(ctx.M)] if log else None)
        e = ctx.err(table)
        hit = rep.record(t + 1, table, e, e, 0.0, net.cum_bits, epsilon, keep_values)
        if hit and stop_at_target:
            break
    rep.edge_bits = dict(net.ledger.per_edge)
    rep.machine_outputs = [views[j, ctx.owned[j]].copy() for j in range(ctx.M)]
    rep.final_values = table.copy()
    rep.extras["network_rounds"] = net.rounds
    return rep


def run_broadcast(mdp: Mdp, data: ShardedDataset, noise: DeltaNoise = NO_NOISE, T: int = 200,
                  epsilon: Optional[float] = None, *, vstar=None,
                  value_width: int = DEFAULT_VALUE_WIDTH, keep_values: bool = True,
                  stop_at_target: bool = False) -> RunReport:
    """Centralised value iteration with the same per-owner noisy operators, one sweep per round.

    Bits count every state value being broadcast once per sweep.
    """
    ctx = _Ctx(mdp, data, vstar)
    rep = _new_report("broadcast", mdp, data, None, noise, epsilon)
    v = np.zeros(ctx.n)
    rep.record(0, v, ctx.err(v), ctx.err(v), 0.0, 0, epsilon, keep_values)
    one_owner = np.zeros(ctx.n, dtype=np.int64)
    for t in range(T):
        eps = noise_vector(noise, ctx.n, ctx.own, t)
        v = backup_from_tables(mdp, v[None, :], ctx.idx, one_owner) + eps
        e = ctx.err(v)
        hit = rep.record(t + 1, v, e, e, 0.0, (t + 1) * ctx.n * value_width, epsilon, keep_values)
        if hit and stop_at_target:
            break
    rep.final_values = v.copy()
    rep.machine_outputs = [v[ctx.owned[j]].copy() for j in range(ctx.M)]
    return rep


def run_sdbp_bandwidth(mdp: Mdp, data: ShardedDataset, g: DepGraph, B: Optional[float],
                       T: int, noise: DeltaNoise = NO_NOISE, epsilon: Optional[float] = None, *,
                       vstar=None, value_width: int = DEFAULT_VALUE_WIDTH,
                       log: Optional[TranscriptLog] = None,
                       keep_values: bool = True, stop_at_target: bool = False) -> RunReport:
    """SDBP with at most ``B`` bits per directed edge per round.

    Each link keeps a FIFO of boundary states whose value differs from the
    last one transmitted (the initial zero counts as transmitted). A state
    re-enters at the back after it is sent; states that changed in the same
    round are queued least-recently-sent first. ``B=None`` or ``inf`` removes
    the cap, which leaves the iterates identical to :func:`run_sdbp`.
    """
    cap = math.inf if B is None else B
    if cap < value_width:
        raise ContractViolation(f"B={B} cannot carry one {value_width}-bit value")
    per_round = math.inf if math.isinf(cap) else int(cap // value_width)
    check_consistent(mdp, data, g)
    ctx = _Ctx(mdp, data, vstar)
    net = Network(g, value_width, log)
    views = np.zeros((ctx.M, ctx.n))
    links = sorted(g.boundary.items())
    last_value = {lk: {int(s): 0.0 for s in b} for lk, b in links}
    last_round = {lk: {int(s): -1 for s in b} for lk, b in links}
    queues = {lk: [] for lk, _ in links}
    rep = _new_report("sdbp_bandwidth", mdp, data, g, noise, epsilon)
    table = views[ctx.own, ctx.idx]
    rep.record(0, table, ctx.err(table), ctx.err(table), 0.0, 0, epsilon, keep_values)
    max_queue = 0
    max_edge_bits = 0
    for t in range(T):
        net.begin_round(t)
        inbox = []
        for lk, states in links:
            j, k = lk
            q = queues[lk]
            queued = set(q)
            fresh = [int(s) for s in states
                     if int(s) not in queued and views[k, s] != last_value[lk][int(s)]]
            fresh.sort(key=lambda s: (last_round[lk][s], s))
            q.extend(fresh)
            max_queue = max(max_queue, len(q))
            n_send = len(q) if math.isinf(per_round) else min(per_round, len(q))
            batch, queues[lk] = q[:n_send], q[n_send:]
            if not batch:
                continue
            msg = net.send(k, j, batch, views[k, batch])
            max_edge_bits = max(max_edge_bits, msg.bit_size)
            for s, val in zip(batch, msg.values):
                last_value[lk][s] = float(val)
                last_round[lk][s] = t
            inbox.append(msg)
        for msg in inbox:
            views[msg.receiver, list(msg.states)] = msg.values
        eps = noise_vector(noise, ctx.n, ctx.own, t)
        views[ctx.own, ctx.idx] = backup_from_tables(mdp, views, ctx.idx, ctx.own) + eps
        table = views[ctx.own, ctx.idx]
        net.end_round([views[j, ctx.owned[j]] for j in range(ctx.M)] if log else None)
        e = ctx.err(table)
        hit = rep.record(t + 1, table, e, e, 0.0, net.cum_bits, epsilon, keep_values)
        if hit and stop_at_target:
            break
    rep.edge_bits = dict(net.ledger.per_edge)
    rep.machine_outputs = [views[j, ctx.owned[j]].copy() for j in range(ctx.M)]
    rep.final_values = table.copy()
    rep.extras.update(bandwidth=cap, values_per_round=per_round, max_queue=max_queue,
                      max_edge_round_bits=max_edge_bits,
                      per_round_bits=list(net.ledger.per_round))
    return rep


def _solve_known(mdp: Mdp, known_states: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Optimal values of the sub-MDP on ``known_states``; unknown states stay at 0."""
    v = np.zeros(mdp.n_states)
    if known_states.size == 0:
        return v
    g = mdp.gamma
    stop = tol * (1 - g) / g
    while True:
        nxt = v.copy()
        nxt[known_states] = backup_from_tables(mdp, v[None, :], known_states,
                                               np.zeros(known_states.size, dtype=np.int64))
        change = float(np.max(np.abs(nxt - v)))
        v = nxt
        if change <= stop:
            return v


def run_flooding(mdp: Mdp, data: ShardedDataset, g: DepGraph, T: int,
                 epsilon: Optional[float] = None, *, vstar=None,
                 value_width: int = DEFAULT_VALUE_WIDTH,
                 log: Optional[TranscriptLog] = None) -> RunReport:
    """Unbounded-message protocol: forward every known shard, solve what is known.

    After ``R`` rounds machine ``j`` holds exactly the shards of its radius-``R``
    ball and outputs the optimal values of that sub-MDP (unknown states read
    as 0). This is the fastest any protocol can gather information.
    """
    check_consistent(mdp, data, g)
    ctx = _Ctx(mdp, data, vstar)
    net = Network(g, value_width, log)
    known = [{j} for j in range(ctx.M)]
    rep = _new_report("flooding", mdp, data, g, NO_NOISE, epsilon)

    def outputs():
        est = [_solve_known(mdp, np.flatnonzero(np.isin(ctx.own, sorted(kn)))) for kn in known]
        return est, np.array([est[ctx.own[s]][s] for s in range(ctx.n)])

    est, table = outputs()
    rep.record(0, table, ctx.err(table), ctx.err(table), 0.0, 0, epsilon, True)
    for t in range(T):
        net.begin_round(t)
        incoming = [set() for _ in range(ctx.M)]
        for k in range(ctx.M):
            states = np.flatnonzero(np.isin(ctx.own, sorted(known[k])))
            payload = np.concatenate([mdp.reward[states].ravel(), mdp.prob[states].ravel(),
                                      mdp.succ[states].ravel().astype(float)])
            for j in g.neighbors[k]:
                net.send(k, j, states, payload)
                incoming[j] |= known[k]
        for j in range(ctx.M):
            known[j] |= incoming[j]
        est, table = outputs()
        net.end_round([est[j][ctx.owned[j]] for j in range(ctx.M)] if log else None)
        e = ctx.err(table)
        rep.record(t + 1, table, e, e, 0.0, net.cum_bits, epsilon, True)
    rep.machine_outputs = [est[j][ctx.owned[j]].copy() for j in range(ctx.M)]
    rep.final_values = table.copy()
    rep.extras["known"] = [sorted(k) for k in known]
    return rep
