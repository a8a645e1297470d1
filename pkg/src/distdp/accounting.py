"""Measurement for protocol runs: transcripts, bit ledgers and closed-form bound comparators."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .depgraph import discounted_radius
from .mdp import ContractViolation, Mdp, solve_vstar

ORACLE_TOL = 1e-10
DIGEST_DECIMALS = 12


def oracle_values(mdp: Mdp, tol: float = ORACLE_TOL) -> np.ndarray:
    return solve_vstar(mdp, tol).values


def _payload_bytes(states, values) -> bytes:
    vals = np.round(np.asarray(values, dtype=float), DIGEST_DECIMALS) + 0.0  # folds -0.0
    return json.dumps([list(map(int, states)), [repr(float(v)) for v in vals]]).encode()


class TranscriptLog:
    """Hash chains over everything each machine and each edge carries.

    ``machine_streams[j][t]`` digests all payloads machine ``j`` received up
    to and including round ``t`` plus its output after that round;
    ``edge_streams[(i, k)][t]`` (``i < k``) digests both directions of the edge.
    Payload values are rounded to 12 decimals before hashing.
    """

    def __init__(self, M: int, watch: Optional[set] = None):
        self.M = M
        self.watch = watch
        self._machine = [hashlib.sha256(b"machine") for _ in range(M)]
        self._edge: dict = {}
        self.machine_streams: list[list[str]] = [[] for _ in range(M)]
        self.edge_streams: dict = {}
        self.received: list[list[tuple]] = [[] for _ in range(M)]

    def on_message(self, t: int, sender: int, receiver: int, states, values) -> None:
        blob = f"{t}|{sender}->{receiver}|".encode() + _payload_bytes(states, values)
        self._machine[receiver].update(blob)
        key = (min(sender, receiver), max(sender, receiver))
        self._edge.setdefault(key, hashlib.sha256(b"edge")).update(blob)
        if self.watch is None or receiver in self.watch:
            self.received[receiver].append(
                (t, sender, tuple(map(int, states)), tuple(np.round(np.asarray(values, float), DIGEST_DECIMALS))))

    def end_round(self, t: int, outputs: Optional[list] = None) -> None:
        for j in range(self.M):
            h = self._machine[j].copy()
            if outputs is not None:
                h.update(b"out" + _payload_bytes(range(len(outputs[j])), outputs[j]))
            self.machine_streams[j].append(h.hexdigest())
        for key, h in self._edge.items():
            stream = self.edge_streams.setdefault(key, [])
            stream.extend([hashlib.sha256(b"edge").hexdigest()] * (t - len(stream)))
            stream.append(h.hexdigest())

    def edge_stream(self, i: int, k: int, rounds: int) -> list[str]:
        """Per-round cumulative digest of edge ``{i, k}``, padded for silent rounds."""
        key = (min(i, k), max(i, k))
        empty = hashlib.sha256(b"edge").hexdigest()
        stream = list(self.edge_streams.get(key, []))
        if len(stream) < rounds:
            stream += [stream[-1] if stream else empty] * (rounds - len(stream))
        return stream[:rounds]

    def edge_digest(self, i: int, k: int) -> str:
        key = (min(i, k), max(i, k))
        h = self._edge.get(key)
        return h.hexdigest() if h is not None else hashlib.sha256(b"edge").hexdigest()


@dataclass
class BitLedger:
    """Cumulative bits per directed edge plus per-round totals."""

    per_edge: dict = field(default_factory=dict)
    per_round: list = field(default_factory=list)
    _current: int = 0

    def charge(self, sender: int, receiver: int, bits: int) -> None:
        if bits < 0:
            raise ContractViolation("negative bit count")
        self.per_edge[(sender, receiver)] = self.per_edge.get((sender, receiver), 0) + bits
        self._current += bits

    def close_round(self) -> int:
        self.per_round.append(self._current)
        self._current = 0
        return self.per_round[-1]

    @property
    def total(self) -> int:
        return sum(self.per_round) + self._current

    def cumulative(self) -> list[int]:
        return list(np.cumsum(self.per_round, dtype=np.int64).tolist())

    def undirected(self, i: int, k: int) -> int:
        return self.per_edge.get((i, k), 0) + self.per_edge.get((k, i), 0)

    def cut_bits(self, side) -> int:
        """Bits carried by edges crossing the cut ``(side, complement)``."""
        side = set(side)
        return sum(b for (i, k), b in self.per_edge.items() if (i in side) != (k in side))

    @staticmethod
    def merge(ledgers) -> "BitLedger":
        out = BitLedger()
        for led in ledgers:
            for e, b in led.per_edge.items():
                out.per_edge[e] = out.per_edge.get(e, 0) + b
            for t, b in enumerate(led.per_round):
                if t < len(out.per_round):
                    out.per_round[t] += b
                else:
                    out.per_round.append(b)
        return out


class Bound(str, Enum):
    THM5_DIRECT = "thm5_direct"
    THM7_ASYNC = "thm7_async"
    THM8_GOSSIP = "thm8_gossip"
    THM1_ROUNDS = "thm1_rounds"
    THM2_BITS = "thm2_bits"


@dataclass
class VerdictTable:
    bound: str
    rows: list  # dicts: round, measured, bound, ok, slack (+ bound-specific fields)
    notes: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(r["ok"] for r in self.rows)

    @property
    def min_slack(self) -> float:
        return min((r["slack"] for r in self.rows), default=math.inf)

    def first_violation(self):
        return next((r for r in self.rows if not r["ok"]), None)

    def summary(self) -> dict:
        bad = self.first_violation()
        return {"bound": self.bound, "rows": len(self.rows), "ok": self.ok,
                "min_slack": self.min_slack, "first_violation": bad, **self.notes}

    def to_json(self) -> str:
        return json.dumps({"summary": self.summary(), "rows": self.rows}, indent=2, default=float)

    def to_markdown(self, max_rows: int = 20) -> str:
        if not self.rows:
            return f"**{self.bound}**: no rows\n"
        cols = list(self.rows[0])
        lines = [f"**{self.bound}**: {'satisfied' if self.ok else 'VIOLATED'}, "
                 f"min slack {self.min_slack:.3g}", "",
                 "| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
        for r in self.rows[:max_rows]:
            lines.append("| " + " | ".join(_fmt(r[c]) for c in cols) + " |")
        if len(self.rows) > max_rows:
            lines.append(f"| ... {len(self.rows) - max_rows} more rows |" + " |" * (len(cols) - 1))
        return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


# float slack for inequalities whose two sides are computed separately
BOUND_ATOL = 1e-12


def _series(report, name):
    vals = getattr(report, name, None)
    if vals is None or len(vals) == 0:
        raise ContractViolation(f"report has no {name!r} series")
    return np.asarray(vals, dtype=float)


def compare_bounds(report, bound, **params) -> VerdictTable:
    """Per-round check of a run against a closed-form bound.

    ``thm8_gossip`` checks the average-error and disagreement recursions and
    the potential ``B_t = E_t + 4/(1-gamma) D_t`` with ``c = 1/8``. By default
    the per-round local-consistency constant is the measured
    ``max_j ||U_j - T V_j||`` (``delta_source="measured"``); pass
    ``delta_source="configured"`` to use the injected noise level instead.
    """
    bound = Bound(bound)
    g = report.gamma
    delta = float(params.get("delta", getattr(report, "delta", 0.0)))
    rows = []
    if bound is Bound.THM5_DIRECT or bound is Bound.THM7_ASYNC:
        D = int(params.get("D", getattr(report, "D", 1))) if bound is Bound.THM7_ASYNC else 1
        err = _series(report, "sup_error")
        for t, e in enumerate(err):
            b = g ** (t // D) / (1 - g) + delta / (1 - g)
            rows.append({"round": t, "measured": float(e), "bound": b,
                         "ok": bool(e <= b + BOUND_ATOL), "slack": b - float(e)})
        return VerdictTable(bound.value, rows, {"D": D, "delta": delta})
    if bound is Bound.THM8_GOSSIP:
        E = _series(report, "mean_error")
        Dis = _series(report, "disagreement")
        gap = float(params.get("gap", report.gap))
        source = params.get("delta_source", "measured")
        if source == "measured":
            dts = _series(report, "delta_eff")
        elif source == "configured":
            dts = np.full(len(E) - 1, delta)
        else:
            raise ContractViolation(f"unknown delta_source {source!r}")
        c = 1.0 / 8.0
        alpha = 4.0 / (1 - g)
        rho = 1 - c * (1 - g) * gap
        C0 = 1 + 2 * alpha
        B = E + alpha * Dis
        for t in range(len(E) - 1):
            d = float(dts[t])
            e_rhs = d + g * E[t] + g * Dis[t]
            d_rhs = (1 - gap) * (2 * g * Dis[t] + 2 * d)
            b_rhs = rho * B[t] + C0 * d
            ok_e = E[t + 1] <= e_rhs + BOUND_ATOL
            ok_d = Dis[t + 1] <= d_rhs + BOUND_ATOL
            ok_b = B[t + 1] <= b_rhs + BOUND_ATOL
            rows.append({"round": t + 1, "measured": float(B[t + 1]), "bound": float(b_rhs),
                         "ok": bool(ok_e and ok_d and ok_b),
                         "slack": float(min(e_rhs - E[t + 1], d_rhs - Dis[t + 1], b_rhs - B[t + 1])),
                         "E_ok": bool(ok_e), "D_ok": bool(ok_d), "B_ok": bool(ok_b), "delta_t": d})
        return VerdictTable(bound.value, rows, {"rho": rho, "C0": C0, "alpha": alpha,
                                                "gap": gap, "delta_source": source})
    if bound is Bound.THM1_ROUNDS:
        eps = float(params.get("epsilon", report.epsilon))
        diam = int(params["diameter"]) if "diameter" in params else int(report.diameter)
        lb = min(diam, discounted_radius(g, eps))
        r = report.rounds_to_target
        if r is None:
            rows.append({"round": None, "measured": None, "bound": lb, "ok": True,
                         "slack": math.inf, "accurate": False})
        else:
            rows.append({"round": r, "measured": r, "bound": lb, "ok": bool(r >= lb),
                         "slack": float(r - lb), "accurate": True})
        return VerdictTable(bound.value, rows, {"lower_bound": lb})
    if bound is Bound.THM2_BITS:
        # report here is a BitReport
        fam = report
        need = 2 ** fam.m
        for e, cnt in sorted(fam.distinct_per_edge.items()):
            rows.append({"round": None, "edge": str(e), "measured": cnt, "bound": need,
                         "ok": bool(cnt >= need), "slack": float(cnt - need)})
        rows.append({"round": None, "edge": "total_bits", "measured": fam.min_total_bits,
                     "bound": fam.m * fam.L, "ok": bool(fam.min_total_bits >= fam.m * fam.L),
                     "slack": float(fam.min_total_bits - fam.m * fam.L)})
        return VerdictTable(bound.value, rows, {"m": fam.m, "L": fam.L})
    raise ContractViolation(f"unsupported bound {bound}")


@dataclass
class BitReport:
    L: int
    m: int
    gamma: float
    protocol: str
    distinct_per_edge: dict  # (r-1, r) -> number of distinct transcripts over the family
    rounds_to_distinguish: dict  # (r-1, r) -> first R at which the edge separates the family
    total_bits: dict  # bit-vector -> raw payload bits
    information_floor: int  # m * L distinguishability units
    accuracy_failures: list
    rounds: int

    @property
    def min_total_bits(self) -> int:
        return min(self.total_bits.values())

    @property
    def all_distinct(self) -> bool:
        return all(c == 2 ** self.m for c in self.distinct_per_edge.values())


def verify_bit_lowerbound(L: int, m: int, gamma: float, run: Callable, rounds: int,
                          epsilon: Optional[float] = None, protocol: str = "sdbp") -> BitReport:
    """Enumerate the full bit-vector family and count distinct cut transcripts.

    ``run(mdp, data, g, rounds, log)`` executes a protocol with transcript
    logging and returns its RunReport. ``epsilon`` defaults to ``gamma**L / 8``.
    """
    from .depgraph import build_depgraph
    from .instances import decode_bits, gen_thm2_family

    if m > 12:
        raise ContractViolation("exhaustive enumeration limited to m <= 12")
    fam = gen_thm2_family(L, m, gamma)
    eps = gamma ** L / 8 if epsilon is None else epsilon
    if not eps < gamma ** L / 4:
        raise ContractViolation("epsilon must be below gamma**L / 4")
    cuts = [(r - 1, r) for r in range(1, L + 1)]
    streams = {e: {} for e in cuts}
    totals = {}
    failures = []
    g = None
    for b, mdp in fam.members.items():
        data = fam.dataset(b)
        g = g or build_depgraph(data)
        log = TranscriptLog(fam.n_machines, watch=set())
        rep = run(mdp, data, g, rounds, log)
        for e in cuts:
            streams[e][b] = log.edge_stream(*e, rounds)
        totals[b] = int(rep.cum_bits_total[-1]) if rep.cum_bits_total else 0
        est = rep.values[-1][:m]
        vstar = np.asarray([gamma ** L * bit for bit in b])
        if np.max(np.abs(est - vstar)) > eps or decode_bits(est, L, m, gamma) != b:
            failures.append(b)
    distinct = {e: len({s[-1] for s in streams[e].values()}) for e in cuts}
    first = {}
    for e in cuts:
        first[e] = None
        for R in range(1, rounds + 1):
            if len({s[R - 1] for s in streams[e].values()}) == 2 ** m:
                first[e] = R
                break
    return BitReport(L, m, gamma, protocol, distinct, first, totals, m * L, failures, rounds)
