"""Synchronous message-passing network restricted to the dependency-graph support."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..accounting import BitLedger, TranscriptLog
from ..depgraph import DepGraph
from ..mdp import ContractViolation

DEFAULT_VALUE_WIDTH = 64


@dataclass
class Message:
    sender: int
    receiver: int
    states: tuple
    values: np.ndarray
    bit_size: int


@dataclass
class NetworkRound:
    t: int
    messages: list = field(default_factory=list)


class Network:
    """Counts and optionally records every message of a run.

    Messages may only travel along undirected support edges; each one costs
    ``len(payload) * value_width`` bits.
    """

    def __init__(self, g: DepGraph, value_width: int = DEFAULT_VALUE_WIDTH,
                 log: Optional[TranscriptLog] = None, keep_rounds: bool = False):
        if value_width < 1:
            raise ContractViolation("value_width must be positive")
        self.g = g
        self.value_width = value_width
        self.ledger = BitLedger()
        self.log = log
        self.keep_rounds = keep_rounds
        self.rounds: list[NetworkRound] = []
        self._round: Optional[NetworkRound] = None

    def begin_round(self, t: int) -> None:
        self._round = NetworkRound(t)

    def _check(self, sender: int, receiver: int) -> None:
        if sender == receiver or not self.g.adjacency[sender, receiver]:
            raise ContractViolation(f"{sender} -> {receiver} is not a support edge")

    def send(self, sender: int, receiver: int, states, values) -> Message:
        self._check(sender, receiver)
        states = tuple(int(s) for s in states)
        values = np.array(values, dtype=float, copy=True)
        msg = Message(sender, receiver, states, values, len(states) * self.value_width)
        self.ledger.charge(sender, receiver, msg.bit_size)
        if self.log is not None:
            self.log.on_message(self._round.t, sender, receiver, states, values)
        if self.keep_rounds:
            self._round.messages.append(msg)
        return msg

    def charge_bulk(self, sender: int, receiver: int, n_values: int) -> None:
        """Account for a payload without materialising it (full-table gossip)."""
        self._check(sender, receiver)
        self.ledger.charge(sender, receiver, n_values * self.value_width)

    def end_round(self, outputs=None) -> int:
        if self.log is not None:
            self.log.end_round(self._round.t, outputs)
        if self.keep_rounds:
            self.rounds.append(self._round)
        return self.ledger.close_round()

    @property
    def cum_bits(self) -> int:
        return self.ledger.total
