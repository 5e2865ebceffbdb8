from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subgoal_avi.avi import (
    AbstractPolicy,
    StructuralError,
    check_contraction,
    expected_vi,
    extract_policy,
    interval_vi,
    suboptimality_bound,
)
from subgoal_avi.estimation import ExpectedADP, IntervalADP, epsilons
from subgoal_avi.oracle import exact_tables, random_instance, shortest_path_options


def interval(gamma, n_regions, edges, T_lo, T_hi, R_lo, R_hi):
    src = np.array([a for a, _ in edges])
    dst = np.array([b for _, b in edges])
    T_inf = np.zeros((len(edges), n_regions))
    T_sup = np.zeros_like(T_inf)
    for o, (_, b) in enumerate(edges):
        T_inf[o, b], T_sup[o, b] = T_lo[o], T_hi[o]
    return IntervalADP(gamma, n_regions, src, dst, np.ones(len(edges), bool), T_inf=T_inf, T_sup=T_sup,
                       R_inf=np.array(R_lo, float), R_sup=np.array(R_hi, float),
                       counts=np.ones(len(edges), int))


def expected(gamma, n_regions, edges, T, R):
    a = interval(gamma, n_regions, edges, T, T, R, R)
    return ExpectedADP(gamma, n_regions, a.sources, a.targets, a.available, T_D=a.T_inf, R_D=a.R_inf,
                       counts=a.counts)


def test_one_step_chain():
    g = 0.95
    res = interval_vi(interval(g, 2, [(0, 1)], [g * g], [g * g], [g], [g]))
    assert res.converged
    np.testing.assert_allclose(res.V_inf, [0.95, 0.0])
    np.testing.assert_allclose(res.V_sup, [0.95, 0.0])


def test_two_step_chain():
    g = 0.9
    res = interval_vi(interval(g, 3, [(0, 1), (1, 2)], [g ** 3, g], [g, g], [0, 1], [0, 1]), tol=1e-14)
    np.testing.assert_allclose(res.V_inf, [0.729, 1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(res.V_sup, [0.9, 1.0, 0.0], atol=1e-12)


def test_zero_rewards_give_zero_values():
    res = interval_vi(interval(0.9, 3, [(0, 1), (1, 0), (1, 2)], [0.5, 0.5, 0.9], [0.8, 0.8, 0.9],
                               [0, 0, 0], [0, 0, 0]))
    assert np.all(res.V_inf == 0) and np.all(res.V_sup == 0)


def test_expected_vi_examples():
    g = 0.95
    res = expected_vi(expected(g, 2, [(0, 1)], [g * g], [g]))
    assert res.V[0] == pytest.approx(g)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
def test_reward_scaling_is_linear(seed, c):
    rng = np.random.default_rng(seed)
    edges = [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (2, 0)]
    T = rng.uniform(0.05, 0.3, size=len(edges))
    R = rng.uniform(0, 1, size=len(edges))
    a = expected_vi(expected(0.9, 4, edges, T, R), tol=1e-13)
    b = expected_vi(expected(0.9, 4, edges, T, c * R), tol=1e-13)
    np.testing.assert_allclose(b.V, c * a.V, rtol=1e-9, atol=1e-12)
    pa = extract_policy(a.Q, a_src := np.array([e[0] for e in edges]))
    pb = extract_policy(b.Q, a_src)
    # argmax is invariant unless two options were tied to rounding error
    gaps = [abs(np.diff(np.sort(a.Q[a_src == r])[-2:]))[0] for r in range(3)]
    for r in range(3):
        if gaps[r] > 1e-9:
            assert pa.choice[r] == pb.choice[r]


def test_extract_policy_argmax_and_ties():
    src = np.array([0, 0, 1])
    assert extract_policy(np.array([0.5, 0.7, 0.1]), src).choice == {0: 1, 1: 2}
    assert extract_policy(np.array([0.7, 0.7, 0.1]), src).choice[0] == 0
    with pytest.raises(StructuralError):
        extract_policy(np.array([0.5, 0.7, 0.1]), src, regions=[0, 1, 2])


def test_unavailable_options_are_skipped():
    src = np.array([0, 0])
    pol = extract_policy(np.array([0.9, 0.1]), src, available=np.array([False, True]))
    assert pol.choice == {0: 1}


def test_policy_plan_and_roundtrip(tmp_path):
    edges = ((0, 1), (1, 2), (1, 0))
    pol = AbstractPolicy({0: 0, 1: 1}, "conservative", edges)
    assert pol.plan(0, 2) == [0, 1, 2]
    pol.save(tmp_path / "p.txt")
    back = AbstractPolicy.load(tmp_path / "p.txt", edges)
    assert back.choice == pol.choice and back.provenance == "conservative"
    looping = AbstractPolicy({0: 0, 1: 2}, "expected", edges)
    assert looping.plan(0, 2) == [0, 1, 0]


def test_contraction_examples():
    holds, f = check_contraction(9, 0.004, 0.95)
    assert holds and f == pytest.approx(0.986)
    holds, _ = check_contraction(14, 0.005, 0.95)
    assert not holds
    assert check_contraction(5, 0.0, 0.7) == (True, 0.7)


def test_bound_examples():
    assert suboptimality_bound(4, 0.0, 0.0, 0.9) == 0.0
    assert suboptimality_bound(3, 0.02, 0.05, 0.9) == pytest.approx(16.25)
    assert suboptimality_bound(10, 0.01, 0.0, 0.9) == math.inf
    assert suboptimality_bound(10, 0.0099999, 0.0, 0.9) > 1e4


def test_expanding_upper_iteration_is_reported():
    # sup transitions sum to more than one: the upper recursion diverges
    adp = interval(0.9, 2, [(0, 0 + 1), (1, 0)], [0.1, 0.1], [1.5, 1.5], [1, 1], [1, 1])
    res = interval_vi(adp, max_iters=10_000)
    assert res.converged_inf and not res.converged_sup
    assert res.iterations < 10_000


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_residuals_contract(seed):
    inst = random_instance(seed)
    adp = exact_tables(inst, shortest_path_options(inst))
    eps_T, _ = epsilons(adp)
    holds, factor = check_contraction(inst.spec.n_regions, eps_T, inst.gamma)
    res = interval_vi(adp, tol=1e-13)
    if not holds:
        return
    for r in (res.residuals_inf, res.residuals_sup):
        for a, b in zip(r, r[1:]):
            assert b <= (factor + 1e-12) * a + 1e-15
