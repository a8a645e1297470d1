"""Paired-run checks that a machine's view after R rounds depends only on its radius-R ball."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from ..accounting import TranscriptLog
from ..depgraph import build_depgraph, mh_matrix, shard_mdp
from ..mdp import ContractViolation, Mdp
from .gossip import run_gossip_fvi
from .sdbp import run_flooding, run_sdbp


def _sdbp(mdp, data, g, R, log):
    return run_sdbp(mdp, data, g, T=R, log=log)


def _sdbp_sweeps(mdp, data, g, R, log, sweeps=4):
    return run_sdbp(mdp, data, g, T=R, log=log, local_sweeps=sweeps)


def _flooding(mdp, data, g, R, log):
    return run_flooding(mdp, data, g, R, log=log)


def _gossip(mdp, data, g, R, log):
    return run_gossip_fvi(mdp, data, g, mh_matrix(g), T=R, log=log)


# every runner has the signature (mdp, data, g, rounds, log) -> RunReport
PROTOCOLS: dict[str, Callable] = {
    "sdbp": _sdbp,
    "sdbp_sweeps": _sdbp_sweeps,
    "flooding": _flooding,
    "gossip": _gossip,
}


@dataclass
class LocalityVerdict:
    protocol: str
    u: int
    R: int
    passed: bool
    transcript_equal: bool
    outputs_equal: bool
    output_gap: float
    first_divergence: Optional[int]  # 1-based round at which u's view first differs
    precondition_met: bool
    witness: dict = field(default_factory=dict)

    def line(self) -> str:
        state = "pass" if self.passed else "fail"
        return (f"{self.protocol} u={self.u} R={self.R}: {state} "
                f"(output gap {self.output_gap:.3g}, first divergence {self.first_divergence})")


def _resolve(protocol) -> tuple[str, Callable]:
    if callable(protocol):
        return getattr(protocol, "__name__", "custom"), protocol
    if protocol not in PROTOCOLS:
        raise ContractViolation(f"unknown protocol {protocol!r}; choose from {sorted(PROTOCOLS)}")
    return protocol, PROTOCOLS[protocol]


def differing_states(a: Mdp, b: Mdp) -> np.ndarray:
    """States whose rewards or transition rows differ between two same-shape MDPs."""
    if (a.n_states, a.n_actions) != (b.n_states, b.n_actions) or a.gamma != b.gamma:
        raise ContractViolation("instances must share state/action spaces and gamma")
    if a.succ.shape != b.succ.shape:
        return np.arange(a.n_states)
    diff = np.any(a.reward != b.reward, axis=1)
    diff |= np.any((a.succ != b.succ) | (a.prob != b.prob), axis=(1, 2))
    return np.flatnonzero(diff)


def _paired(protocol, pair, ownership, n_machines, u, R):
    name, runner = _resolve(protocol)
    a, b = pair
    data_a = shard_mdp(a, ownership, n_machines)
    data_b = shard_mdp(b, ownership, n_machines)
    g = build_depgraph(data_a)
    if build_depgraph(data_b).fingerprint() != g.fingerprint():
        raise ContractViolation("the two instances do not share a dependency graph")
    logs, reps = [], []
    for mdp, data in ((a, data_a), (b, data_b)):
        log = TranscriptLog(n_machines, watch={u})
        reps.append(runner(mdp, data, g, R, log))
        logs.append(log)
    return name, g, logs, reps


def indistinguishability_check(protocol: Union[str, Callable], pair, ownership, u: int, R: int,
                               n_machines: Optional[int] = None,
                               strict: bool = True) -> LocalityVerdict:
    """Run ``protocol`` for ``R`` rounds on both instances and compare everything ``u`` sees.

    Passes when the messages ``u`` received and ``u``'s outputs are identical
    across the two runs. With ``strict`` the instances must differ only on
    machines farther than ``R`` from ``u``; otherwise that condition is only
    reported, so the failing side of the bound can be exercised.
    """
    if R < 0:
        raise ContractViolation("R must be >= 0")
    ownership = np.asarray(ownership)
    n_machines = int(ownership.max()) + 1 if n_machines is None else n_machines
    diff = differing_states(*pair)
    name, g, logs, reps = _paired(protocol, pair, ownership, n_machines, u, R)
    near = [int(s) for s in diff if g.dist[u, ownership[s]] <= R]
    met = not near
    witness = {}
    if near:
        witness = {"state": near[0], "machine": int(ownership[near[0]]),
                   "distance": float(g.dist[u, ownership[near[0]]])}
        if strict:
            raise ContractViolation(
                f"instances differ at state {near[0]} on machine {witness['machine']}, "
                f"distance {witness['distance']:.0f} <= R={R} from machine {u}")
    sa, sb = logs[0].machine_streams[u], logs[1].machine_streams[u]
    first = next((r + 1 for r, (x, y) in enumerate(zip(sa, sb)) if x != y), None)
    transcript_equal = logs[0].received[u] == logs[1].received[u]
    oa, ob = reps[0].machine_outputs[u], reps[1].machine_outputs[u]
    outputs_equal = bool(np.array_equal(oa, ob))
    gap = float(np.max(np.abs(oa - ob))) if oa.size else 0.0
    if first is None and not (transcript_equal and outputs_equal):
        first = R
    if not (transcript_equal and outputs_equal):
        witness.setdefault("output_a", oa.tolist())
        witness.setdefault("output_b", ob.tolist())
    return LocalityVerdict(name, u, R, transcript_equal and outputs_equal, transcript_equal,
                           outputs_equal, gap, first, met, witness)


def zero_rewards_outside(mdp: Mdp, ownership, keep_machines) -> Mdp:
    """Copy of ``mdp`` with every reward owned outside ``keep_machines`` set to zero."""
    mask = ~np.isin(np.asarray(ownership), list(keep_machines))
    reward = np.array(mdp.reward, copy=True)
    reward[mask] = 0.0
    return mdp.with_rewards(reward)


def lightcone_check(protocol: Union[str, Callable], mdp: Mdp, ownership, j: int, R: int,
                    n_machines: Optional[int] = None) -> LocalityVerdict:
    """Zero all rewards outside radius ``R`` of ``j``; ``j``'s view after ``R`` rounds must not move."""
    ownership = np.asarray(ownership)
    n_machines = int(ownership.max()) + 1 if n_machines is None else n_machines
    g = build_depgraph(shard_mdp(mdp, ownership, n_machines))
    cut = zero_rewards_outside(mdp, ownership, g.ball(j, R))
    return indistinguishability_check(protocol, (mdp, cut), ownership, j, R, n_machines)
