"""Per-round traces of protocol executions and their CSV/JSON exports."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

CSV_COLUMNS = ("round", "sup_error", "mean_error", "disagreement", "cum_bits_total")


@dataclass
class RunReport:
    algorithm: str
    gamma: float
    epsilon: Optional[float]
    delta: float
    M: int
    sup_error: list = field(default_factory=list)
    mean_error: list = field(default_factory=list)
    disagreement: list = field(default_factory=list)
    cum_bits_total: list = field(default_factory=list)
    values: list = field(default_factory=list)  # assembled V^(t), when kept
    edge_bits: dict = field(default_factory=dict)
    rounds_to_target: Optional[int] = None
    rounds_run: int = 0
    machine_outputs: list = field(default_factory=list)
    final_values: Optional[np.ndarray] = None
    topology: str = ""
    gap: float = float("nan")
    phi: float = float("nan")
    diameter: int = 0
    D: int = 1
    delta_eff: list = field(default_factory=list)
    pre_gossip_disagreement: list = field(default_factory=list)
    batch_snapshots: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def budget_exceeded(self) -> bool:
        return self.epsilon is not None and self.rounds_to_target is None

    def record(self, t: int, table: np.ndarray, sup_err: float, mean_err: float,
               disagreement: float, cum_bits: int, epsilon: Optional[float], keep: bool) -> bool:
        """Append round ``t`` statistics; returns True when the target was first reached."""
        self.sup_error.append(sup_err)
        self.mean_error.append(mean_err)
        self.disagreement.append(disagreement)
        self.cum_bits_total.append(int(cum_bits))
        if keep:
            self.values.append(np.array(table, copy=True))
        self.rounds_run = t
        if epsilon is not None and self.rounds_to_target is None and sup_err <= epsilon:
            self.rounds_to_target = t
            return True
        return False

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        batch_of = {t: b for b, t in self.extras.get("batch_rounds", {}).items()}
        header = list(CSV_COLUMNS) + (["batch"] if batch_of else [])
        w.writerow(header)
        for t in range(len(self.sup_error)):
            row = [t, repr(float(self.sup_error[t])), repr(float(self.mean_error[t])),
                   repr(float(self.disagreement[t])), int(self.cum_bits_total[t])]
            if batch_of:
                row.append(batch_of.get(t, ""))
            w.writerow(row)
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "topology": self.topology,
            "M": self.M,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "gap": None if np.isnan(self.gap) else float(self.gap),
            "phi": None if np.isnan(self.phi) else float(self.phi),
            "diameter": int(self.diameter),
            "rounds_to_target": self.rounds_to_target,
            "budget_exceeded": self.budget_exceeded,
            "rounds_run": self.rounds_run,
            "final_sup_error": float(self.sup_error[-1]) if self.sup_error else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)
