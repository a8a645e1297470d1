"""Tabular discounted MDPs and Bellman operators.

Transitions are stored as padded successor arrays of shape
``(n_states, n_actions, width)``; unused slots point at the state itself
with probability zero so every backup is a fixed-width gather.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

PROB_TOL = 1e-12


class ContractViolation(ValueError):
    """Raised when an operation is called outside its documented preconditions."""


@dataclass(frozen=True, eq=False)
class Mdp:
    n_states: int
    n_actions: int
    succ: np.ndarray  # (S, A, K) int
    prob: np.ndarray  # (S, A, K) float
    reward: np.ndarray  # (S, A) float
    gamma: float

    def __post_init__(self):
        S, A = self.n_states, self.n_actions
        if not 0.0 < self.gamma < 1.0:
            raise ContractViolation(f"gamma must lie in (0,1), got {self.gamma}")
        if self.succ.shape[:2] != (S, A) or self.prob.shape != self.succ.shape:
            raise ContractViolation("transition arrays do not match (n_states, n_actions)")
        if self.reward.shape != (S, A):
            raise ContractViolation("reward array does not match (n_states, n_actions)")
        if np.any(self.prob < 0):
            raise ContractViolation("negative transition probability")
        sums = self.prob.sum(axis=2)
        if np.any(np.abs(sums - 1.0) > PROB_TOL):
            s, a = np.argwhere(np.abs(sums - 1.0) > PROB_TOL)[0]
            raise ContractViolation(f"P(.|{s},{a}) sums to {sums[s, a]!r}")
        if np.any((self.reward < 0) | (self.reward > 1)):
            raise ContractViolation("rewards must lie in [0,1]")
        if np.any((self.succ < 0) | (self.succ >= S)):
            raise ContractViolation("successor index out of range")
        for arr in (self.succ, self.prob, self.reward):
            arr.setflags(write=False)

    @classmethod
    def from_lists(cls, n_states, n_actions, transitions, rewards, gamma, normalize=False):
        """Build from ``[(s, a, s', p), ...]`` and ``[(s, a, r), ...]``.

        Repeated ``(s, a, s')`` entries are merged; missing rewards are zero.
        ``normalize`` rescales each row to sum to one (for generated weights).
        """
        table = {}
        for s, a, s2, p in transitions:
            key = (int(s), int(a))
            table.setdefault(key, {})
            table[key][int(s2)] = table[key].get(int(s2), 0.0) + float(p)
        width = max((len(v) for v in table.values()), default=1)
        succ = np.repeat(np.arange(n_states)[:, None, None], n_actions, axis=1)
        succ = np.repeat(succ, width, axis=2).astype(np.int64)
        prob = np.zeros((n_states, n_actions, width))
        for (s, a), row in table.items():
            for k, s2 in enumerate(sorted(row)):
                succ[s, a, k] = s2
                prob[s, a, k] = row[s2]
        if normalize:
            tot = prob.sum(axis=2, keepdims=True)
            prob = np.divide(prob, tot, out=prob, where=tot > 0)
        reward = np.zeros((n_states, n_actions))
        for s, a, r in rewards:
            reward[int(s), int(a)] = float(r)
        return cls(n_states, n_actions, succ, prob, reward, float(gamma))

    def transitions(self) -> list[tuple[int, int, int, float]]:
        """Canonical ``(s, a, s', p)`` list with zero-probability padding dropped."""
        out = []
        for s in range(self.n_states):
            for a in range(self.n_actions):
                row = {}
                for s2, p in zip(self.succ[s, a], self.prob[s, a]):
                    if p > 0:
                        row[int(s2)] = row.get(int(s2), 0.0) + float(p)
                out.extend((s, a, s2, row[s2]) for s2 in sorted(row))
        return out

    def successors(self, s: int) -> set[int]:
        mask = self.prob[s] > 0
        return set(int(x) for x in self.succ[s][mask])

    def with_rewards(self, reward: np.ndarray) -> "Mdp":
        return Mdp(self.n_states, self.n_actions, self.succ.copy(), self.prob.copy(),
                   np.asarray(reward, dtype=float).copy(), self.gamma)

    def to_json(self) -> str:
        doc = {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "transitions": [list(t) for t in self.transitions()],
            "rewards": [[s, a, float(self.reward[s, a])]
                        for s in range(self.n_states) for a in range(self.n_actions)],
        }
        return json.dumps(doc, indent=None, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Mdp":
        doc = json.loads(text)
        return cls.from_lists(doc["n_states"], doc["n_actions"], doc["transitions"],
                              doc["rewards"], doc["gamma"])


class NoiseMode(str, Enum):
    NONE = "none"
    UNIFORM_BOUNDED = "uniform_bounded"
    WORST_CASE_SIGN = "worst_case_sign"


@dataclass(frozen=True)
class DeltaNoise:
    """Per-state perturbation of magnitude at most ``delta`` injected into backups.

    The draw for a state depends only on ``(seed, machine_id, round, state)``.
    ``worst_case_sign`` shifts every entry by exactly ``+delta`` or ``-delta``.
    """

    delta: float = 0.0
    seed: int = 0
    mode: NoiseMode = NoiseMode.NONE

    def __post_init__(self):
        if self.delta < 0:
            raise ContractViolation(f"delta must be >= 0, got {self.delta}")
        object.__setattr__(self, "mode", NoiseMode(self.mode))

    @property
    def active(self) -> bool:
        return self.mode is not NoiseMode.NONE and self.delta > 0

    def draw(self, n_states: int, machine_id: int, round_: int) -> np.ndarray:
        """Perturbation vector over all states for one (machine, round)."""
        if not self.active:
            return np.zeros(n_states)
        rng = np.random.default_rng([self.seed, machine_id, round_])
        if self.mode is NoiseMode.UNIFORM_BOUNDED:
            return rng.uniform(-self.delta, self.delta, size=n_states)
        signs = rng.integers(0, 2, size=n_states) * 2 - 1
        return self.delta * signs


NO_NOISE = DeltaNoise()


def _check_table(mdp: Mdp, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (mdp.n_states,):
        raise ContractViolation(
            f"value table has shape {v.shape}, expected ({mdp.n_states},)")
    return v


def q_values(mdp: Mdp, v: np.ndarray, states: Optional[np.ndarray] = None) -> np.ndarray:
    """``r(s,a) + gamma * sum_s' P(s'|s,a) v(s')`` for the requested rows."""
    if states is None:
        succ, prob, reward = mdp.succ, mdp.prob, mdp.reward
    else:
        succ, prob, reward = mdp.succ[states], mdp.prob[states], mdp.reward[states]
    # fixed left-to-right accumulation so any row subset reproduces the full backup bit-for-bit
    acc = prob[..., 0] * v[succ[..., 0]]
    for k in range(1, succ.shape[-1]):
        acc = acc + prob[..., k] * v[succ[..., k]]
    return reward + mdp.gamma * acc


def bellman_apply(mdp: Mdp, v, states: Optional[Sequence[int]] = None) -> np.ndarray:
    """One exact Bellman optimality backup.

    Only ``states`` are refreshed (all states by default); the remaining entries
    are copied from ``v``.
    """
    v = _check_table(mdp, v)
    if states is None:
        return q_values(mdp, v).max(axis=1)
    idx = np.asarray(states, dtype=np.int64)
    out = v.copy()
    if idx.size:
        out[idx] = q_values(mdp, v, idx).max(axis=1)
    return out


def backup_from_tables(mdp: Mdp, tables: np.ndarray, states: np.ndarray,
                       table_of_state: np.ndarray) -> np.ndarray:
    """Backups of ``states[i]`` evaluated against ``tables[table_of_state[i]]``.

    Each row uses the same accumulation order as :func:`bellman_apply`, so a
    backup against a table holding the same successor values is bit-identical.
    """
    succ, prob = mdp.succ[states], mdp.prob[states]
    rows = np.asarray(table_of_state)[:, None]
    acc = prob[..., 0] * tables[rows, succ[..., 0]]
    for k in range(1, succ.shape[-1]):
        acc = acc + prob[..., k] * tables[rows, succ[..., k]]
    return (mdp.reward[states] + mdp.gamma * acc).max(axis=1)


def bellman_all_tables(mdp: Mdp, tables: np.ndarray) -> np.ndarray:
    """Exact backup of every row of a ``(machines, n_states)`` stack of tables."""
    acc = mdp.prob[None, ..., 0] * tables[:, mdp.succ[..., 0]]
    for k in range(1, mdp.succ.shape[-1]):
        acc = acc + mdp.prob[None, ..., k] * tables[:, mdp.succ[..., k]]
    return (mdp.reward[None] + mdp.gamma * acc).max(axis=2)


def greedy_actions(mdp: Mdp, v) -> np.ndarray:
    # argmax returns the first maximiser: lowest action index wins ties
    return q_values(mdp, _check_table(mdp, v)).argmax(axis=1)


def bellman_apply_noisy(mdp: Mdp, v, noise: DeltaNoise, machine_id: int, round_: int,
                        states: Optional[Sequence[int]] = None) -> np.ndarray:
    out = bellman_apply(mdp, v, states)
    if not noise.active:
        return out
    eps = noise.draw(mdp.n_states, machine_id, round_)
    if states is None:
        return out + eps
    idx = np.asarray(states, dtype=np.int64)
    out[idx] += eps[idx]
    return out


@dataclass
class Solution:
    values: np.ndarray
    iterations: int
    residual: float


def solve_vstar(mdp: Mdp, tol: float = 1e-10, max_iter: int = 1_000_000) -> Solution:
    """Value iteration from zero with a certified sup-norm error of at most ``tol``.

    Stops once ``||V_{k+1} - V_k|| <= tol (1-gamma)/gamma``; by contraction the
    returned iterate is then within ``tol`` of the fixed point.
    """
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    g = mdp.gamma
    stop = tol * (1 - g) / g
    v = np.zeros(mdp.n_states)
    for it in range(1, max_iter + 1):
        nxt = bellman_apply(mdp, v)
        change = float(np.max(np.abs(nxt - v))) if v.size else 0.0
        v = nxt
        if change <= stop:
            return Solution(v, it, change)
    raise RuntimeError("value iteration did not reach the requested tolerance")


def truncated_vstar(mdp: Mdp, horizon: int) -> np.ndarray:
    """``T^horizon 0``: the optimal value of the first ``horizon`` rewards."""
    if horizon < 0:
        raise ContractViolation("horizon must be >= 0")
    v = np.zeros(mdp.n_states)
    for _ in range(horizon):
        v = bellman_apply(mdp, v)
    return v


def truncated_sequence(mdp: Mdp, horizon: int) -> list[np.ndarray]:
    """``[T^0 0, T^1 0, ..., T^horizon 0]``."""
    seq = [np.zeros(mdp.n_states)]
    for _ in range(horizon):
        seq.append(bellman_apply(mdp, seq[-1]))
    return seq


def sup_norm(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.max(np.abs(x))) if x.size else 0.0
