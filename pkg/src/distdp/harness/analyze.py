"""Graph-level report for a sharded dataset: distances, conductance, spectrum and round budgets."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional

from ..depgraph import (ConductanceMode, DisconnectedGraph, ShardedDataset, build_depgraph,
                        conductance_sweep, discounted_radius, mh_matrix, shard_mdp)
from ..instances import TopologySpec, gen_topology_mdp
from ..mdp import ContractViolation, Mdp

GOSSIP_C = 1.0 / 8.0


def sdbp_budget(gamma: float, epsilon: float) -> int:
    """Smallest ``T`` with ``gamma**T / (1-gamma) <= epsilon``."""
    return max(0, math.ceil(math.log(1.0 / ((1 - gamma) * epsilon)) / math.log(1.0 / gamma)))


def gossip_budget(gamma: float, epsilon: float, gap: float, b0: Optional[float] = None) -> float:
    """Rounds for ``rho**T B_0 <= epsilon`` with ``rho = 1 - (1/8)(1-gamma) gap`` and ``B_0 = 1/(1-gamma)``."""
    b0 = 1.0 / (1 - gamma) if b0 is None else b0
    if gap <= 0:
        return math.inf
    rate = GOSSIP_C * (1 - gamma) * gap
    return math.ceil(math.log(b0 / epsilon) / -math.log1p(-rate))


def load_dataset(mdp_path, partition_path) -> tuple[Mdp, ShardedDataset]:
    try:
        mdp = Mdp.from_json(Path(mdp_path).read_text())
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ContractViolation(f"{mdp_path}: cannot parse MDP ({exc})") from exc
    try:
        own = ShardedDataset.parse_partition(Path(partition_path).read_text())
    except ValueError as exc:
        raise ContractViolation(f"{partition_path}: {exc}") from exc
    return mdp, shard_mdp(mdp, own)


def analyze(data: ShardedDataset, gamma: float, epsilon: float, D: int = 1) -> dict:
    g = build_depgraph(data)
    if not g.is_connected():
        raise DisconnectedGraph(g.components())
    w = mh_matrix(g)
    phi_graph = conductance_sweep(g, ConductanceMode.GRAPH_VOLUME)
    phi_paper = conductance_sweep(w, ConductanceMode.PAPER_DEFINITION)
    L = discounted_radius(gamma, epsilon)
    t5 = sdbp_budget(gamma, epsilon)
    rep = {
        "M": g.M,
        "diameter": g.diameter,
        "phi_graph_volume": phi_graph,
        "phi_paper_definition": phi_paper,
        "gap": w.gap,
        "gamma": gamma,
        "epsilon": epsilon,
        "L_eps": L,
        "round_lower_bound": min(g.diameter, L),
        "budget_sdbp": t5,
        "budget_async": D * t5,
        "async_lower_bound": D * min(g.diameter, L),
        "budget_gossip": gossip_budget(gamma, epsilon, w.gap),
        "D": D,
        "notes": [],
    }
    if w.gap < phi_graph ** 2 / 2:
        rep["notes"].append(
            f"gap(W) = {w.gap:.4f} is below Phi^2/2 = {phi_graph ** 2 / 2:.4f}: the gossip matrix "
            "mixes far slower than the graph's conductance suggests (the Cheeger sandwich holds for "
            "the normalized Laplacian, not for the Metropolis-Hastings matrix on an irregular graph), "
            "so expect slow gossip convergence despite high conductance.")
    return rep


def preset_dataset(topology: str, M: int, gamma: float, seed: int = 0,
                   states_per_machine: int = 4) -> ShardedDataset:
    _, data = gen_topology_mdp(TopologySpec(topology, M, seed=seed), states_per_machine, gamma, seed)
    return data


def render(rep: dict) -> str:
    lines = [
        f"machines M            {rep['M']}",
        f"diameter              {rep['diameter']}",
        f"Phi (graph volume)    {rep['phi_graph_volume']:.4f}",
        f"Phi (paper, on W)     {rep['phi_paper_definition']:.4f}",
        f"gap(W), lazy MH       {rep['gap']:.5f}",
        f"L_eps (gamma={rep['gamma']}, eps={rep['epsilon']})  {rep['L_eps']}",
        f"round lower bound     {rep['round_lower_bound']}  (min of diameter and L_eps)",
        f"SDBP budget           {rep['budget_sdbp']}",
        f"async budget (D={rep['D']})   {rep['budget_async']}  (lower bound {rep['async_lower_bound']})",
        f"gossip budget         {rep['budget_gossip']}",
    ]
    lines += [f"note: {n}" for n in rep["notes"]]
    return "\n".join(lines) + "\n"
