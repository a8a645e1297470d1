"""Bounded-delay asynchronous direct boundary propagation.

Wall-clock round ``t`` runs: every machine sends its current boundary values,
then every machine consumes the buffered messages whose delivery round has
come, then machines scheduled to update apply one local backup. A message sent
in round ``t`` is delivered in round ``t + h`` with hold ``0 <= h <= D-1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .accounting import TranscriptLog, oracle_values
from .depgraph import DepGraph, ShardedDataset, build_depgraph, discounted_radius, shard_mdp
from .mdp import NO_NOISE, ContractViolation, DeltaNoise, Mdp, backup_from_tables
from .protocols.network import DEFAULT_VALUE_WIDTH, Network
from .protocols.report import RunReport
from .protocols.sdbp import check_consistent, noise_vector


class DelayMode(str, Enum):
    ADVERSARIAL_MAX = "adversarial_max"
    UNIFORM_RANDOM = "uniform_random"
    PER_EDGE_FIXED = "per_edge_fixed"


@dataclass(frozen=True)
class DelaySchedule:
    """Message holds and update cadence satisfying the bounded-delay assumption.

    ``adversarial_max`` holds every message exactly ``D-1`` rounds and lets a
    machine update only in the last round of each batch. The random modes
    draw holds uniformly on ``{0, ..., D-1}`` per message or once per directed
    edge. ``update_cadence=c`` makes machines update in rounds ``t`` with
    ``t % c == c - 1``; it defaults to ``D`` for the adversarial mode and 1 otherwise.
    """

    mode: DelayMode = DelayMode.ADVERSARIAL_MAX
    D: int = 1
    seed: int = 0
    update_cadence: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", DelayMode(self.mode))
        if self.D < 1:
            raise ContractViolation(f"D must be >= 1, got {self.D}")
        if self.update_cadence is None:
            c = self.D if self.mode is DelayMode.ADVERSARIAL_MAX else 1
            object.__setattr__(self, "update_cadence", c)
        if not 1 <= self.update_cadence <= self.D:
            raise ContractViolation(
                f"update cadence {self.update_cadence} breaks the one-update-per-{self.D}-rounds rule")

    def hold(self, sender: int, receiver: int, t: int) -> int:
        if self.D == 1:
            return 0
        if self.mode is DelayMode.ADVERSARIAL_MAX:
            return self.D - 1
        key = [self.seed, sender, receiver] if self.mode is DelayMode.PER_EDGE_FIXED \
            else [self.seed, sender, receiver, t]
        return int(np.random.default_rng(key).integers(0, self.D))

    def updates_at(self, t: int) -> bool:
        c = self.update_cadence
        return t % c == c - 1


@dataclass
class _InFlight:
    send_round: int
    deliver_round: int
    sender: int
    receiver: int
    states: np.ndarray
    values: np.ndarray


def run_async_sdbp(mdp: Mdp, data: ShardedDataset, g: DepGraph, noise: DeltaNoise = NO_NOISE,
                   schedule: DelaySchedule = DelaySchedule(), T: int = 200,
                   epsilon: Optional[float] = None, *, vstar=None,
                   value_width: int = DEFAULT_VALUE_WIDTH, log: Optional[TranscriptLog] = None,
                   keep_values: bool = True, stop_at_target: bool = False) -> RunReport:
    """A-SDBP under ``schedule``; the report carries batch snapshots ``V[b] = V(bD)``.

    A cached boundary value is only overwritten by a message sent no earlier
    than the one it came from, so late deliveries never roll values back.
    """
    if T < 0:
        raise ContractViolation("T must be >= 0")
    check_consistent(mdp, data, g)
    D = schedule.D
    own = data.ownership
    n, M = mdp.n_states, data.n_machines
    idx = np.arange(n)
    owned = [data.owned(j) for j in range(M)]
    vstar = oracle_values(mdp) if vstar is None else np.asarray(vstar, dtype=float)
    net = Network(g, value_width, log)
    views = np.zeros((M, n))
    stamp = np.full((M, n), -1, dtype=np.int64)
    links = [(j, k, np.asarray(b)) for (j, k), b in sorted(g.boundary.items())]
    buffer: list[_InFlight] = []
    rep = RunReport("async_sdbp", mdp.gamma, epsilon, noise.delta if noise.active else 0.0, M)
    rep.diameter = g.diameter
    rep.D = D
    max_hold = 0
    updates = np.zeros(M, dtype=np.int64)

    def snap(t):
        table = views[own, idx]
        err = float(np.max(np.abs(table - vstar))) if n else 0.0
        hit = rep.record(t, table, err, err, 0.0, net.cum_bits, epsilon, keep_values)
        if t % D == 0:
            rep.batch_snapshots[t // D] = table.copy()
        return hit

    snap(0)
    for t in range(T):
        net.begin_round(t)
        for j, k, states in links:
            msg = net.send(k, j, states, views[k, states])
            h = schedule.hold(k, j, t)
            buffer.append(_InFlight(t, t + h, k, j, states, msg.values))
        due = sorted((m for m in buffer if m.deliver_round <= t),
                     key=lambda m: (m.send_round, m.sender, m.receiver))
        buffer = [m for m in buffer if m.deliver_round > t]
        for m in due:
            held = t - m.send_round
            if held > D - 1:
                raise AssertionError(f"message held {held} rounds with D={D}")
            max_hold = max(max_hold, held)
            newer = stamp[m.receiver, m.states] <= m.send_round
            views[m.receiver, m.states[newer]] = m.values[newer]
            stamp[m.receiver, m.states[newer]] = m.send_round
        if schedule.updates_at(t):
            eps = noise_vector(noise, n, own, t)
            views[own, idx] = backup_from_tables(mdp, views, idx, own) + eps
            updates += 1
        net.end_round([views[j, owned[j]] for j in range(M)] if log else None)
        if snap(t + 1) and stop_at_target:
            break
    if any(m.deliver_round - m.send_round > D - 1 for m in buffer):
        raise AssertionError("buffered message violates the delay bound")
    rep.edge_bits = dict(net.ledger.per_edge)
    rep.machine_outputs = [views[j, owned[j]].copy() for j in range(M)]
    rep.final_values = views[own, idx].copy()
    rep.extras.update(schedule=schedule.mode.value, max_hold=max_hold,
                      updates_per_machine=updates.tolist(),
                      batch_rounds={b: b * D for b in rep.batch_snapshots})
    return rep


def first_influence_round(rep: RunReport, state: int, tol: float = 0.0) -> Optional[int]:
    """First recorded round at which ``state``'s assembled value exceeds ``tol`` in magnitude."""
    for t, table in enumerate(rep.values):
        if abs(table[state]) > tol:
            return t
    return None


@dataclass
class BatchVerdict:
    j: int
    b: int
    radius: int
    passed: bool
    max_change: float
    witness: dict = field(default_factory=dict)


def perturb_outside(mdp: Mdp, ownership, keep_machines, seed: int = 0) -> Mdp:
    """Redraw every reward owned outside ``keep_machines`` uniformly on [0, 1]."""
    mask = ~np.isin(np.asarray(ownership), list(keep_machines))
    reward = np.array(mdp.reward, copy=True)
    fresh = np.random.default_rng(seed).uniform(0.0, 1.0, size=reward.shape)
    reward[mask] = fresh[mask]
    return mdp.with_rewards(reward)


def batch_lightcone_check(mdp: Mdp, ownership, schedule: DelaySchedule, j: int, b: int,
                          noise: DeltaNoise = NO_NOISE, radius: Optional[int] = None,
                          n_machines: Optional[int] = None, seed: int = 0) -> BatchVerdict:
    """Perturb all rewards outside ``radius`` (default ``b``) of ``j``; ``V[b]`` at ``j`` must not move.

    The radius-``b`` claim is exact under the adversarial schedule. Faster
    schedules can move information more than one hop per batch, so a failure
    there is a measurement, reported with its witness.
    """
    if b < 0:
        raise ContractViolation("b must be >= 0")
    ownership = np.asarray(ownership)
    n_machines = int(ownership.max()) + 1 if n_machines is None else n_machines
    radius = b if radius is None else radius
    data = shard_mdp(mdp, ownership, n_machines)
    g = build_depgraph(data)
    other = perturb_outside(mdp, ownership, g.ball(j, radius), seed)
    T = b * schedule.D
    zero = np.zeros(mdp.n_states)
    ra = run_async_sdbp(mdp, data, g, noise, schedule, T, vstar=zero)
    rb = run_async_sdbp(other, shard_mdp(other, ownership, n_machines), g, noise, schedule, T,
                        vstar=zero)
    mine = np.flatnonzero(ownership == j)
    va, vb = ra.batch_snapshots[b][mine], rb.batch_snapshots[b][mine]
    change = float(np.max(np.abs(va - vb))) if mine.size else 0.0
    ok = bool(np.array_equal(va, vb))
    witness = {} if ok else {"state": int(mine[np.argmax(np.abs(va - vb))]),
                             "before": va.tolist(), "after": vb.tolist()}
    return BatchVerdict(j, b, radius, ok, change, witness)


def batch_dominance(rep: RunReport, mdp: Mdp) -> list[dict]:
    """Per batch: ``V[b] >= T^b 0 - delta/(1-gamma)`` and ``V[b] <= V* + delta/(1-gamma)``."""
    from .mdp import truncated_sequence
    slack = rep.delta / (1 - mdp.gamma)
    bmax = max(rep.batch_snapshots, default=0)
    seq = truncated_sequence(mdp, bmax)
    vstar = oracle_values(mdp)
    rows = []
    for b, vb in sorted(rep.batch_snapshots.items()):
        below = float(np.max(seq[b] - vb)) if vb.size else 0.0
        above = float(np.max(vb - vstar)) if vb.size else 0.0
        rows.append({"batch": b, "lag_behind_truncation": below, "overshoot": above,
                     "ok": bool(below <= slack + 1e-12 and above <= slack + 1e-9)})
    return rows


def async_round_bound(gamma: float, epsilon: float, D: int) -> int:
    """Wall-clock lower bound ``D * L_eps`` for graphs whose diameter reaches ``L_eps``."""
    if D < 1:
        raise ContractViolation("D must be >= 1")
    return D * discounted_radius(gamma, epsilon)
