"""Small-scale verifier suites; each check yields a name, a pass flag and a detail string."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..accounting import compare_bounds, verify_bit_lowerbound
from ..async_engine import DelaySchedule, batch_lightcone_check, run_async_sdbp
from ..depgraph import build_depgraph, mh_matrix
from ..instances import TopologySpec, gen_thm1_pair, gen_topology_mdp
from ..mdp import DeltaNoise
from ..protocols import indistinguishability_check, lightcone_check, run_gossip_fvi, run_sdbp
from ..protocols import run_sdbp_bandwidth

SUITES = ("locality", "bits", "async", "gossip_recursion")


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.suite}: {self.name} {self.detail}".rstrip()


def locality_suite(Ls=range(1, 7), gamma: float = 0.9) -> list[Check]:
    out = []
    for L in Ls:
        inst = gen_thm1_pair(L, gamma)
        pair = (inst.members[0], inst.members[1])
        for proto in ("sdbp", "sdbp_sweeps", "flooding", "gossip"):
            v = indistinguishability_check(proto, pair, inst.ownership, 0, L - 1)
            out.append(Check("locality", f"L={L} {proto} R={L - 1} indistinguishable", v.passed))
        v = indistinguishability_check("flooding", pair, inst.ownership, 0, L, strict=False)
        ok = (not v.passed) and abs(v.output_gap - gamma ** L) <= 1e-9
        out.append(Check("locality", f"L={L} flooding R={L} separates by gamma^L", ok,
                         f"(gap {v.output_gap:.6g} vs {gamma ** L:.6g})"))
    mdp, data = gen_topology_mdp(TopologySpec("ring", 8), seed=3)
    for proto in ("sdbp", "gossip"):
        for R in (1, 2, 3):
            v = lightcone_check(proto, mdp, data.ownership, 0, R)
            out.append(Check("locality", f"ring M=8 {proto} light cone R={R}", v.passed))
    return out


def bits_suite(L: int = 3, m: int = 4, gamma: float = 0.5, B: int = 128, width: int = 64) -> list[Check]:
    out = []

    def sdbp(mdp, data, g, R, log):
        return run_sdbp(mdp, data, g, T=R, log=log, vstar=np.zeros(mdp.n_states))

    def capped(mdp, data, g, R, log):
        return run_sdbp_bandwidth(mdp, data, g, B, R, log=log, vstar=np.zeros(mdp.n_states),
                                  value_width=width)

    rounds = L + math.ceil(m * width / B) + 4
    rep = verify_bit_lowerbound(L, m, gamma, sdbp, rounds)
    out.append(Check("bits", f"L={L} m={m} every cut edge carries 2^m transcripts",
                     rep.all_distinct, f"{rep.distinct_per_edge}"))
    out.append(Check("bits", "every family member decoded", not rep.accuracy_failures))
    out.append(Check("bits", "total bits >= m L", compare_bounds(rep, "thm2_bits").ok))
    rep = verify_bit_lowerbound(L, m, gamma, capped, rounds)
    target = max(L, math.ceil(m * width / B))
    R = rep.rounds_to_distinguish[(0, 1)]
    ok = rep.all_distinct and R is not None and target / 2 <= R <= 2 * target
    out.append(Check("bits", f"B={B} rounds within 2x of max(L, ceil(m w / B))", ok,
                     f"(R={R}, target {target})"))
    return out


def async_suite(M: int = 16, T: int = 300) -> list[Check]:
    out = []
    mdp, data = gen_topology_mdp(TopologySpec("ring", M), seed=1)
    g = build_depgraph(data)
    sync = run_sdbp(mdp, data, g, T=60)
    for D in (1, 2, 4):
        for mode in ("adversarial_max", "uniform_random", "per_edge_fixed"):
            for noise in (DeltaNoise(), DeltaNoise(0.05, 7, "worst_case_sign")):
                rep = run_async_sdbp(mdp, data, g, noise, DelaySchedule(mode, D, seed=D), T)
                v = compare_bounds(rep, "thm7_async")
                out.append(Check("async", f"D={D} {mode} {noise.mode.value} error bound", v.ok,
                                 f"(min slack {v.min_slack:.3g})"))
    for mode in ("adversarial_max", "uniform_random"):
        rep = run_async_sdbp(mdp, data, g, schedule=DelaySchedule(mode, 1), T=60)
        same = all(np.array_equal(a, b) for a, b in zip(rep.values, sync.values))
        out.append(Check("async", f"D=1 {mode} trace equals synchronous SDBP", same))
    for b in range(6):
        v = batch_lightcone_check(mdp, data.ownership, DelaySchedule("adversarial_max", 2), 0, b)
        out.append(Check("async", f"batch light cone b={b} (ring M={M}, D=2)", v.passed,
                         f"(max change {v.max_change:.3g})"))
    return out


def gossip_recursion_suite(M: int = 16, T: int = 2000) -> list[Check]:
    out = []
    mdp, data = gen_topology_mdp(TopologySpec("ring", M), seed=0)
    g = build_depgraph(data)
    w = mh_matrix(g)
    for noise in (DeltaNoise(), DeltaNoise(0.05, 2, "worst_case_sign"), DeltaNoise(0.05, 2, "uniform_bounded")):
        rep = run_gossip_fvi(mdp, data, g, w, noise, T, track_recursion=True)
        v = compare_bounds(rep, "thm8_gossip")
        out.append(Check("gossip_recursion", f"ring M={M} {noise.mode.value} recursion and potential",
                         v.ok, f"(min slack {v.min_slack:.3g})"))
        out.append(Check("gossip_recursion", f"ring M={M} {noise.mode.value} Euclidean disagreement contraction",
                         all(rep.extras["l2_contraction_ok"])))
    return out


def run_suite(name: str) -> list[Check]:
    names = SUITES if name == "all" else (name,)
    table = {"locality": locality_suite, "bits": bits_suite, "async": async_suite,
             "gossip_recursion": gossip_recursion_suite}
    checks = []
    for n in names:
        checks.extend(table[n]())
    return checks
