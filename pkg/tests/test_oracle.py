from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subgoal_avi.abstraction import validate
from subgoal_avi.avi import AbstractPolicy, interval_vi
from subgoal_avi.oracle import (
    OracleOptions,
    TabularInstance,
    bottleneck_instance,
    check_lemmas,
    concrete_vi,
    exact_option_vi,
    exact_policy_value,
    exact_tables,
    random_instance,
    shortest_path_options,
    singleton_instance,
)

RIGHT, LEFT = 2, 3


def corridor(gamma=0.95):
    """1x3 corridor: region 0 = left cell, goal region 1 = right cell."""
    inst = TabularInstance(1, 3, np.zeros((1, 3), bool), [(0, 0, 0, 0), (0, 2, 0, 2)], [(0, 1)], 0, 1, gamma)
    return inst, OracleOptions({(0, 1): np.full(inst.n_states, RIGHT)})


def test_corridor_value():
    inst, opts = corridor()
    V, _ = exact_option_vi(inst, opts)
    assert V[0] == pytest.approx(0.95)
    assert V[2] == 0.0  # goal is a sink
    assert np.isnan(V[1])  # not in any region


def test_unreachable_option_changes_nothing():
    inst = TabularInstance(1, 4, np.zeros((1, 4), bool), [(0, 0, 0, 0), (0, 2, 0, 2), (0, 3, 0, 3)],
                           [(0, 1), (0, 2)], 0, 1, 0.9)
    base = OracleOptions({(0, 1): np.full(inst.n_states, RIGHT)})
    more = OracleOptions({(0, 1): np.full(inst.n_states, RIGHT), (0, 2): np.full(inst.n_states, LEFT)})
    np.testing.assert_array_equal(exact_option_vi(inst, base)[0], exact_option_vi(inst, more)[0])


def test_policy_value_examples():
    inst, opts = corridor()
    V, _ = exact_option_vi(inst, opts)
    Vp, J = exact_policy_value(inst, opts, AbstractPolicy({0: 0}, edges=inst.spec.edges))
    np.testing.assert_array_equal(Vp[inst.region_of >= 0], V[inst.region_of >= 0])
    assert J == pytest.approx(0.95)
    stuck = OracleOptions({(0, 1): np.full(inst.n_states, LEFT)})
    Vs, Js = exact_policy_value(inst, stuck, AbstractPolicy({0: 0}, edges=inst.spec.edges))
    assert Js == 0.0 and Vs[0] == 0.0


def test_concrete_vi_corridor():
    inst, _ = corridor()
    V = concrete_vi(inst)
    np.testing.assert_allclose(V, [0.95, 1.0, 0.0])


def test_exact_tables_singletons():
    inst = singleton_instance(3)
    adp = exact_tables(inst, shortest_path_options(inst))
    av = adp.available
    np.testing.assert_array_equal(adp.T_inf[av], adp.T_sup[av])


def test_generators_are_reproducible_and_valid():
    for seed in range(20):
        a, b = random_instance(seed), random_instance(seed)
        assert a.to_dict() == b.to_dict()
        assert a.n_states <= 200
        assert validate(a.spec).ok
        bn = bottleneck_instance(seed)
        assert validate(bn.spec).ok


def test_instance_roundtrip(tmp_path):
    inst = bottleneck_instance(4)
    inst.save(tmp_path / "inst.json")
    back = TabularInstance.load(tmp_path / "inst.json")
    assert back.to_dict() == inst.to_dict()
    np.testing.assert_array_equal(back.next, inst.next)


def test_shortest_path_options_reach_targets_when_possible():
    inst = bottleneck_instance(1)
    opts = shortest_path_options(inst)
    for src, dst in inst.spec.edges:
        for i in inst.members(src):
            term, _, _ = inst.run_option(opts[(src, dst)], src, int(i))
            if term is not None:
                assert inst.region_of[term] >= 0


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 1_000_000))
def test_lemmas_on_random_instances(seed):
    rep = check_lemmas(random_instance(seed))
    assert rep.sandwich_ok and rep.decay_ok
    if rep.contracts:
        assert rep.gap_ok and rep.option_gap_ok


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1_000_000))
def test_lemmas_on_bottleneck_instances(seed):
    rep = check_lemmas(bottleneck_instance(seed), concrete=True)
    assert rep.sandwich_ok and rep.decay_ok
    if rep.contracts:
        assert rep.concrete_gap_ok


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1_000_000))
def test_markov_collapse(seed):
    inst = singleton_instance(seed)
    opts = shortest_path_options(inst)
    V, _ = exact_option_vi(inst, opts)
    vi = interval_vi(exact_tables(inst, opts), tol=1e-13)
    for r in range(inst.spec.n_regions):
        i = inst.members(r)[0]
        assert abs(vi.V_inf[r] - V[i]) < 1e-6
        assert abs(vi.V_sup[r] - V[i]) < 1e-6
