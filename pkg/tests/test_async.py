import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distdp.accounting import Bound, compare_bounds
from distdp.async_engine import (DelayMode, DelaySchedule, async_round_bound, batch_dominance,
                                 batch_lightcone_check, first_influence_round, run_async_sdbp)
from distdp.depgraph import build_depgraph
from distdp.instances import TopologySpec, gen_thm1_pair, gen_topology_mdp
from distdp.mdp import ContractViolation, DeltaNoise
from distdp.protocols import run_sdbp


def _inst(kind="ring", M=9, seed=0):
    mdp, data = gen_topology_mdp(TopologySpec(kind, M), seed=seed)
    return mdp, data, build_depgraph(data)


def test_schedule_validation():
    with pytest.raises(ContractViolation):
        DelaySchedule(D=0)
    with pytest.raises(ContractViolation):
        DelaySchedule(DelayMode.UNIFORM_RANDOM, D=2, update_cadence=3)
    assert DelaySchedule(D=4).update_cadence == 4
    assert DelaySchedule("uniform_random", D=4).update_cadence == 1


@settings(max_examples=30, deadline=None)
@given(D=st.integers(1, 6), mode=st.sampled_from(list(DelayMode)), t=st.integers(0, 100),
       s=st.integers(0, 9), r=st.integers(0, 9))
def test_holds_within_bound(D, mode, t, s, r):
    h = DelaySchedule(mode, D, seed=2).hold(s, r, t)
    assert 0 <= h <= D - 1


@pytest.mark.parametrize("mode", list(DelayMode))
def test_unit_delay_is_synchronous(mode):
    mdp, data, g = _inst("grid", 9)
    a = run_async_sdbp(mdp, data, g, schedule=DelaySchedule(mode, 1), T=30)
    b = run_sdbp(mdp, data, g, T=30)
    assert all(np.array_equal(x, y) for x, y in zip(a.values, b.values))


@pytest.mark.parametrize("mode", list(DelayMode))
@pytest.mark.parametrize("D", [2, 3])
def test_async_error_bound(mode, D):
    mdp, data, g = _inst("ring", 9, seed=1)
    noise = DeltaNoise(0.02, 4, "uniform_bounded")
    rep = run_async_sdbp(mdp, data, g, noise, DelaySchedule(mode, D, seed=1), T=150)
    assert rep.extras["max_hold"] <= D - 1
    assert compare_bounds(rep, Bound.THM7_ASYNC).ok
    assert all(row["ok"] for row in batch_dominance(rep, mdp))


def test_adversarial_matches_truncation_per_batch():
    mdp, data, g = _inst("star", 9)
    D = 3
    rep = run_async_sdbp(mdp, data, g, schedule=DelaySchedule(D=D), T=30)
    rows = batch_dominance(rep, mdp)
    assert max(abs(r["lag_behind_truncation"]) for r in rows) == 0.0


def test_adversarial_first_influence_on_chain():
    L, D = 4, 3
    inst = gen_thm1_pair(L, 0.8)
    data = inst.dataset(1)
    rep = run_async_sdbp(inst.members[1], data, build_depgraph(data), schedule=DelaySchedule(D=D),
                         T=D * (L + 2))
    assert first_influence_round(rep, 0) == D * (L + 1)


@pytest.mark.parametrize("b", [0, 1, 2, 3])
def test_batch_lightcone_adversarial(b):
    mdp, data, _ = _inst("ring", 9, seed=3)
    v = batch_lightcone_check(mdp, data.ownership, DelaySchedule(D=2), 0, b)
    assert v.passed, v.witness


def test_round_bound_values():
    assert async_round_bound(0.95, 0.01, 4) == 304
    assert async_round_bound(0.5, 0.25, 3) == 0
    with pytest.raises(ContractViolation):
        async_round_bound(0.9, 0.1, 0)


def test_csv_has_batch_column():
    mdp, data, g = _inst("ring", 4)
    rep = run_async_sdbp(mdp, data, g, schedule=DelaySchedule(D=2), T=6)
    lines = rep.to_csv().splitlines()
    assert lines[0].endswith(",batch")
    assert lines[3].endswith(",1") and lines[2].endswith(",")
