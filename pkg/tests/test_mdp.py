import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distdp.instances import gen_thm1_pair
from distdp.mdp import (ContractViolation, DeltaNoise, Mdp, bellman_apply, bellman_apply_noisy,
                        greedy_actions, q_values, solve_vstar, sup_norm, truncated_sequence,
                        truncated_vstar)


def two_state():
    # s0: a0 stays (r=1), a1 -> s1 (r=0); s1 absorbing with r=0.5
    return Mdp.from_lists(2, 2, [(0, 0, 0, 1.0), (0, 1, 1, 1.0), (1, 0, 1, 1.0), (1, 1, 1, 1.0)],
                          [(0, 0, 1.0), (0, 1, 0.0), (1, 0, 0.5), (1, 1, 0.5)], 0.9)


def random_mdp(seed, n=6, A=2, gamma=0.8):
    rng = np.random.default_rng(seed)
    trans = []
    for s in range(n):
        for a in range(A):
            succ = rng.choice(n, size=3, replace=False)
            for s2, p in zip(succ, rng.dirichlet(np.ones(3))):
                trans.append((s, a, int(s2), float(p)))
    rew = [(s, a, float(rng.uniform())) for s in range(n) for a in range(A)]
    return Mdp.from_lists(n, A, trans, rew, gamma, normalize=True)


def test_two_state_fixed_point():
    # V(s1) = 0.5 / 0.1 = 5; V(s0) = max(1/0.1, 0.9*5) = 10
    sol = solve_vstar(two_state(), tol=1e-12)
    assert sol.values == pytest.approx([10.0, 5.0], abs=1e-11)
    assert list(greedy_actions(two_state(), sol.values)) == [0, 0]


def test_one_backup_by_hand():
    v = bellman_apply(two_state(), [2.0, 3.0])
    # s0: max(1 + 0.9*2, 0 + 0.9*3) = 2.8; s1: 0.5 + 2.7 = 3.2
    assert v == pytest.approx([2.8, 3.2], abs=1e-15)


def test_chain_vstar_and_light_cone():
    inst = gen_thm1_pair(3, 0.5)
    m1 = inst.members[1]
    assert solve_vstar(m1, 1e-13).values[0] == pytest.approx(0.125, abs=1e-12)
    assert np.all(solve_vstar(inst.members[0]).values == 0)
    assert truncated_vstar(m1, 3)[0] == 0.0
    # the first reward reaches x0 after L+1 backups
    assert truncated_vstar(m1, 4)[0] == pytest.approx(0.125 * 0.5, abs=1e-15)


def test_solve_vstar_error_certificate():
    mdp = random_mdp(3)
    exact = solve_vstar(mdp, 1e-13).values
    for tol in (1e-2, 1e-5, 1e-8):
        assert sup_norm(solve_vstar(mdp, tol).values - exact) <= tol


def test_subset_backup_matches_full_bitwise():
    mdp = random_mdp(1)
    v = np.random.default_rng(0).random(mdp.n_states)
    full = bellman_apply(mdp, v)
    part = bellman_apply(mdp, v, [1, 4])
    assert part[1] == full[1] and part[4] == full[4]
    assert part[0] == v[0]


def test_truncated_sequence_prefixes():
    mdp = random_mdp(2)
    seq = truncated_sequence(mdp, 5)
    assert len(seq) == 6 and np.all(seq[0] == 0)
    assert np.array_equal(seq[5], truncated_vstar(mdp, 5))


def test_json_round_trip():
    mdp = random_mdp(4)
    back = Mdp.from_json(mdp.to_json())
    assert back.transitions() == mdp.transitions()
    assert np.array_equal(back.reward, mdp.reward) and back.gamma == mdp.gamma
    doc = json.loads(mdp.to_json())
    assert set(doc) == {"n_states", "n_actions", "gamma", "transitions", "rewards"}


@pytest.mark.parametrize("kwargs", [
    dict(transitions=[(0, 0, 0, 0.5)], rewards=[], gamma=0.9),
    dict(transitions=[(0, 0, 0, 1.0)], rewards=[(0, 0, 1.5)], gamma=0.9),
    dict(transitions=[(0, 0, 0, 1.0)], rewards=[], gamma=1.0),
    dict(transitions=[(0, 0, 3, 1.0)], rewards=[], gamma=0.9),
])
def test_invalid_mdps_rejected(kwargs):
    with pytest.raises(ContractViolation):
        Mdp.from_lists(1, 1, **kwargs)


def test_table_shape_checked():
    with pytest.raises(ContractViolation):
        bellman_apply(two_state(), [1.0, 2.0, 3.0])


def test_noise_modes():
    worst = DeltaNoise(0.05, 7, "worst_case_sign")
    d = worst.draw(50, 2, 9)
    assert np.all(np.abs(d) == 0.05)
    assert np.array_equal(d, worst.draw(50, 2, 9))
    assert not np.array_equal(d, worst.draw(50, 3, 9))
    uni = DeltaNoise(0.05, 7, "uniform_bounded").draw(1000, 0, 0)
    assert np.max(np.abs(uni)) <= 0.05 and np.std(uni) > 0.01
    assert not DeltaNoise(0.0, 1, "uniform_bounded").active
    with pytest.raises(ContractViolation):
        DeltaNoise(-1.0)


def test_noisy_backup_deviation_bounded():
    mdp = random_mdp(5)
    v = np.random.default_rng(1).random(mdp.n_states)
    noise = DeltaNoise(0.02, 3, "uniform_bounded")
    diff = bellman_apply_noisy(mdp, v, noise, 1, 4) - bellman_apply(mdp, v)
    assert sup_norm(diff) <= 0.02


tables = st.lists(st.floats(-5, 5, allow_nan=False), min_size=6, max_size=6)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), u=tables, v=tables)
def test_contraction(seed, u, v):
    mdp = random_mdp(seed % 50)
    u, v = np.array(u), np.array(v)
    lhs = sup_norm(bellman_apply(mdp, u) - bellman_apply(mdp, v))
    assert lhs <= mdp.gamma * sup_norm(u - v) + 1e-12


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), u=tables, bump=st.lists(st.floats(0, 3), min_size=6, max_size=6))
def test_monotone(seed, u, bump):
    mdp = random_mdp(seed % 50)
    u = np.array(u)
    assert np.all(bellman_apply(mdp, u + np.array(bump)) >= bellman_apply(mdp, u) - 1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), T=st.integers(0, 60))
def test_truncation_error(seed, T):
    mdp = random_mdp(seed % 50)
    err = sup_norm(truncated_vstar(mdp, T) - solve_vstar(mdp, 1e-12).values)
    assert err <= mdp.gamma ** T / (1 - mdp.gamma) + 1e-10


def test_q_values_rows():
    mdp = two_state()
    q = q_values(mdp, np.array([10.0, 5.0]))
    assert np.allclose(q, [[10.0, 4.5], [5.0, 5.0]], atol=1e-12)
