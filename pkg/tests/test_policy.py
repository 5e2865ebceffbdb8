from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subgoal_avi.abstraction import AbstractSpec, SubgoalRegion, doorway_spec
from subgoal_avi.env import Box, ConfigurationError, build_env
from subgoal_avi.policy import (
    ArsConfig,
    MlpPolicy,
    Normalizer,
    SubMdpTask,
    act,
    run_batch,
    shaped_return,
    train_option,
)


def test_zero_policy_acts_at_midpoint():
    pol = MlpPolicy.zeros(max_speed=1.0)
    for s in ([0.0, 0.0], [5.0, -3.0]):
        np.testing.assert_allclose(act(pol, s), [0.5, 0.0])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 1000), st.tuples(st.floats(-100, 100), st.floats(-100, 100)))
def test_actions_bounded_and_deterministic(seed, s):
    pol = MlpPolicy.initialize(np.random.default_rng(seed))
    pol.params = pol.params + np.random.default_rng(seed + 1).standard_normal(pol.n_params)
    a = act(pol, s)
    assert 0.0 <= a[0] <= pol.max_speed
    assert -math.pi <= a[1] < math.pi
    np.testing.assert_array_equal(a, act(pol, s))


def test_shaped_return_examples():
    c = np.array([1.0, 1.0])
    assert shaped_return(np.array([[0.0, 0.0], [1.0, 1.0]]), c, 1.0) == 0.0
    still = np.repeat([[4.0, 1.0]], 6, axis=0)
    assert shaped_return(still, c, 2.0) == pytest.approx(-5 * 3.0 / 2.0)
    towards = np.array([[4.0, 1.0], [3.0, 1.0], [2.0, 1.0]])
    assert shaped_return(towards, c, 1.0) > shaped_return(still[:3], c, 1.0)
    # sink padding charges the final distance for the unused steps
    assert shaped_return(towards, c, 1.0, horizon=5) == pytest.approx(-(2 + 1) - 3 * 1)


def test_shaped_return_matches_kernel():
    env = build_env("nine_rooms")
    spec = doorway_spec(env)
    pol = MlpPolicy.initialize(np.random.default_rng(0))
    pol.params = pol.params + 0.3 * np.random.default_rng(1).standard_normal(pol.n_params)
    starts = np.array([[3.5, 3.5], [4.2, 4.8]])
    out = run_batch(env, spec, np.repeat(pol.params[None], 2, 0), pol, starts, 3, 1, 30, 8.0, record=True)
    for i in range(2):
        t = out["steps"][i]
        ref = shaped_return(out["traj"][i, : t + 1], spec.regions[1].center, 8.0, horizon=30)
        assert out["shaped"][i] == pytest.approx(ref, rel=1e-12)


def test_normalizer_merge_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.normal(3.0, 2.0, size=(500, 2))
    n = Normalizer(2)
    n.observe(x[:200])
    n.merge(x[200:].sum(0), (x[200:] ** 2).sum(0), 300)
    mean, std = n.snapshot()
    np.testing.assert_allclose(mean, x.mean(0), rtol=1e-10)
    np.testing.assert_allclose(std, x.std(0), rtol=1e-8)


def test_normalizer_identity_until_two_samples():
    n = Normalizer(2)
    mean, std = n.snapshot()
    np.testing.assert_array_equal(mean, [0, 0])
    np.testing.assert_array_equal(std, [1, 1])


def test_policy_save_load(tmp_path):
    pol = MlpPolicy.initialize(np.random.default_rng(2))
    pol.normalizer.observe(np.random.default_rng(3).normal(size=(10, 2)))
    pol.save(tmp_path / "p.bin")
    back = MlpPolicy.load(tmp_path / "p.bin")
    np.testing.assert_array_equal(back.params, pol.params)
    np.testing.assert_array_equal(back.normalizer.snapshot()[1], pol.normalizer.snapshot()[1])
    np.testing.assert_array_equal(act(back, [1.0, 2.0]), act(pol, [1.0, 2.0]))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ArsConfig(top_b=40, n_directions=30)
    with pytest.raises(ConfigurationError):
        ArsConfig(step_size=0.0)
    d = ArsConfig()
    assert (d.step_size, d.noise, d.n_directions, d.top_b, d.iterations_per_round) == (0.3, 0.05, 30, 15, 300)


def _corridor():
    """Single open room; go from a left square to a right square."""
    env = build_env("nine_rooms")
    left = SubgoalRegion.from_box(0, Box((1.0, 3.0), (2.0, 4.0)))
    right = SubgoalRegion.from_box(1, Box((6.0, 3.0), (7.0, 4.0)))
    goal = SubgoalRegion.from_box(2, env.goal_box)
    spec = AbstractSpec((left, right, goal), ((0, 1), (1, 2)), 0, 2)
    task = SubMdpTask(spec, 0, 1, np.random.default_rng(0).uniform((1, 3), (2, 4), size=(50, 2)))
    return env, task


def test_task_rejects_non_edges():
    env, task = _corridor()
    with pytest.raises(ConfigurationError):
        SubMdpTask(task.spec, 1, 0, task.starts)
    with pytest.raises(ConfigurationError):
        SubMdpTask(task.spec, 0, 1, np.zeros((0, 2)))


def test_training_improves_toy_task():
    cfg = ArsConfig(step_size=0.05, noise=0.05, episode_horizon=20)
    gains = []
    for seed in range(3):
        env, task = _corridor()
        pol = MlpPolicy.initialize(np.random.default_rng(seed))
        stats = train_option(env, task, pol, cfg, seed=seed, iterations=50)
        first, last = np.mean(stats.returns[:5]), np.mean(stats.returns[-5:])
        gains.append(last - first)
        assert stats.env_steps == env.steps
    assert all(g > 0 for g in gains)


def test_zero_noise_leaves_parameters_unchanged():
    env, task = _corridor()
    pol = MlpPolicy.initialize(np.random.default_rng(0))
    before = pol.params.copy()
    train_option(env, task, pol, ArsConfig(noise=0.0, episode_horizon=10, normalize=False),
                 seed=0, iterations=3)
    # each antithetic pair shares its start, so r+ == r- and the step is zero
    np.testing.assert_array_equal(pol.params, before)


def test_training_is_reproducible():
    outs = []
    for _ in range(2):
        env, task = _corridor()
        pol = MlpPolicy.initialize(np.random.default_rng(5))
        train_option(env, task, pol, ArsConfig(step_size=0.05, episode_horizon=15), seed=11, iterations=4)
        outs.append(pol.params)
    np.testing.assert_array_equal(outs[0], outs[1])


def test_step_limit_stops_training():
    env, task = _corridor()
    pol = MlpPolicy.initialize(np.random.default_rng(0))
    cfg = ArsConfig(episode_horizon=10)
    stats = train_option(env, task, pol, cfg, seed=0, iterations=100, step_limit=1000)
    assert stats.iterations < 100
    assert stats.env_steps < 1000 + 2 * cfg.n_directions * cfg.episode_horizon
