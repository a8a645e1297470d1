import numpy as np
import pytest

from distdp.accounting import (BitLedger, Bound, TranscriptLog, compare_bounds,
                               verify_bit_lowerbound)
from distdp.depgraph import build_depgraph
from distdp.instances import TopologySpec, gen_topology_mdp
from distdp.mdp import ContractViolation
from distdp.protocols import run_sdbp, run_sdbp_bandwidth
from distdp.protocols.report import RunReport


def test_ledger_totals_and_cuts():
    led = BitLedger()
    led.charge(0, 1, 64)
    led.charge(1, 2, 32)
    led.close_round()
    led.charge(1, 0, 64)
    led.close_round()
    assert led.total == 160
    assert led.cumulative() == [96, 160]
    assert led.undirected(0, 1) == 128
    assert led.cut_bits({0}) == 128
    merged = BitLedger.merge([led, led])
    assert merged.per_round == [192, 128]
    with pytest.raises(ContractViolation):
        led.charge(0, 1, -1)


def test_transcript_rounding_and_padding():
    a, b = TranscriptLog(2), TranscriptLog(2)
    a.on_message(0, 0, 1, [3], [0.1 + 0.2])
    b.on_message(0, 0, 1, [3], [0.3])
    a.end_round(0)
    b.end_round(0)
    assert a.edge_digest(0, 1) == b.edge_digest(1, 0)
    assert len(a.edge_stream(0, 1, 4)) == 4


def _fake(errors, gamma=0.9, delta=0.0, D=1):
    rep = RunReport("x", gamma, 0.01, delta, 2)
    rep.sup_error = list(errors)
    rep.D = D
    return rep


def test_direct_bound_rows():
    ok = compare_bounds(_fake([1 / 0.1, 0.9 / 0.1]), Bound.THM5_DIRECT)
    assert ok.ok and ok.min_slack == pytest.approx(0.0, abs=1e-12)
    bad = compare_bounds(_fake([1.0, 9.5]), Bound.THM5_DIRECT)
    assert not bad.ok and bad.first_violation()["round"] == 1


def test_async_bound_uses_batches():
    rep = _fake([10, 10, 9], D=2)
    assert compare_bounds(rep, Bound.THM7_ASYNC).ok
    assert not compare_bounds(_fake([10, 10, 9.5], D=2), Bound.THM7_ASYNC).ok


def test_rounds_lower_bound_row():
    rep = _fake([1.0])
    rep.rounds_to_target = 3
    rep.diameter = 8
    t = compare_bounds(rep, Bound.THM1_ROUNDS)
    assert t.notes["lower_bound"] == 8 and not t.ok


def test_bits_family_exhaustive():
    def sdbp(mdp, data, g, R, log):
        return run_sdbp(mdp, data, g, T=R, log=log)

    L, m = 3, 4
    rep = verify_bit_lowerbound(L, m, 0.5, sdbp, L + 6)
    assert rep.all_distinct and not rep.accuracy_failures
    assert rep.min_total_bits >= m * L
    assert compare_bounds(rep, Bound.THM2_BITS).ok


def test_bits_under_bandwidth_cap():
    L, m, B = 3, 4, 128

    def capped(mdp, data, g, R, log):
        return run_sdbp_bandwidth(mdp, data, g, B, T=R, log=log)

    rounds = L + int(np.ceil(m * 64 / B)) + 2
    rep = verify_bit_lowerbound(L, m, 0.5, capped, rounds)
    assert rep.all_distinct
    assert max(rep.rounds_to_distinguish.values()) <= L + m * 64 // B


def test_bits_epsilon_guard():
    with pytest.raises(ContractViolation):
        verify_bit_lowerbound(2, 2, 0.5, lambda *a: None, 3, epsilon=0.1)


def test_verdict_markdown():
    mdp, data = gen_topology_mdp(TopologySpec("ring", 4), seed=0)
    rep = run_sdbp(mdp, data, build_depgraph(data), T=5)
    md = compare_bounds(rep, Bound.THM5_DIRECT).to_markdown()
    assert "satisfied" in md and "| round |" in md
