"""Experiment configuration: a flat YAML document with one optional nested section."""
from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from ..async_engine import DelayMode
from ..instances import Topology, TopologySpec
from ..mdp import ContractViolation, NoiseMode

ALGORITHMS = ("sdbp", "broadcast", "gossip", "async_sdbp", "sdbp_bandwidth")


@dataclass
class InstanceParams:
    states_per_machine: int = 4
    n_actions: int = 2
    n_successors: int = 3
    cross_per_edge: int = 3
    expander_degree: int = 4


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    topologies: list = field(default_factory=lambda: ["ring", "grid", "star", "expander"])
    M: int = 16
    algorithms: list = field(default_factory=lambda: ["sdbp", "broadcast", "gossip"])
    gamma: float = 0.95
    epsilon: float = 0.01
    delta: float = 0.0
    noise_mode: str = "none"
    D: int = 1
    schedule: str = "adversarial_max"
    B: Optional[int] = None
    value_width: int = 64
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    budget: int = 20_000
    workers: int = 1
    output_dir: str = "runs"
    instance: InstanceParams = field(default_factory=InstanceParams)

    def __post_init__(self):
        if isinstance(self.instance, dict):
            self.instance = InstanceParams(**self.instance)
        self.topologies = [str(t) for t in self.topologies]
        self.algorithms = [str(a) for a in self.algorithms]
        self.seeds = [int(s) for s in self.seeds]
        self.validate()

    def validate(self) -> None:
        for t in self.topologies:
            if t not in {x.value for x in Topology}:
                raise ContractViolation(f"unknown topology {t!r}")
            TopologySpec(t, self.M, self.instance.expander_degree)
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ContractViolation(f"unknown algorithm {a!r}; choose from {ALGORITHMS}")
        if not 0 < self.gamma < 1:
            raise ContractViolation("gamma must lie in (0,1)")
        if not 0 < self.epsilon < 0.5:
            raise ContractViolation("epsilon must lie in (0,1/2)")
        if self.delta < 0:
            raise ContractViolation("delta must be >= 0")
        if self.noise_mode not in {m.value for m in NoiseMode}:
            raise ContractViolation(f"unknown noise_mode {self.noise_mode!r}")
        if self.schedule not in {m.value for m in DelayMode}:
            raise ContractViolation(f"unknown schedule {self.schedule!r}")
        if self.D < 1:
            raise ContractViolation("D must be >= 1")
        if self.B is not None and self.B < self.value_width:
            raise ContractViolation("B must carry at least one value")
        if not self.seeds:
            raise ContractViolation("at least one seed is required")
        if self.budget < 1 or self.workers < 1:
            raise ContractViolation("budget and workers must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ContractViolation(f"unknown config keys: {sorted(extra)}")
        return cls(**doc)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            doc = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ContractViolation(f"config does not parse: {exc}") from exc
        if not isinstance(doc, dict):
            raise ContractViolation("config must be a mapping")
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_yaml(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_yaml())

    def digest(self) -> str:
        return hashlib.sha256(self.to_yaml().encode()).hexdigest()[:16]

    def noise_active(self) -> bool:
        return self.delta > 0 and self.noise_mode != "none"

    def bandwidth(self) -> float:
        return math.inf if self.B is None else float(self.B)
