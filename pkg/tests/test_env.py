from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subgoal_avi.env import (
    Box,
    ConfigurationError,
    InvalidInputError,
    build_env,
    micro_step,
    read_geometry_overrides,
)


@pytest.fixture(scope="module")
def env():
    return build_env("nine_rooms")


def test_open_room_step(env):
    np.testing.assert_allclose(env.step([1.0, 1.0], [0.5, 0.0]), [1.5, 1.0])


def test_zero_speed_is_identity(env):
    for th in (0.0, 1.0, -2.5, 10.0):
        np.testing.assert_array_equal(env.step([2.0, 3.0], [0.0, th]), [2.0, 3.0])


def test_boundary_contact_is_retracted(env):
    out = env.step([0.3, 1.0], [1.0, math.pi])
    np.testing.assert_allclose(out, [env.contact_epsilon, 1.0], atol=1e-12)
    # brute-force reference agrees to within its resolution
    ref = micro_step(env, [0.3, 1.0], [1.0, math.pi], substeps=20000)
    np.testing.assert_allclose(out, ref, atol=1e-4)


def test_speed_is_clipped(env):
    np.testing.assert_allclose(env.step([2.0, 2.0], [5.0, 0.0]), [3.0, 2.0])
    np.testing.assert_allclose(env.step([2.0, 2.0], [-1.0, 0.0]), [2.0, 2.0])


def test_heading_taken_modulo_two_pi(env):
    a = env.step([2.0, 2.0], [1.0, 0.3])
    b = env.step([2.0, 2.0], [1.0, 0.3 + 4 * math.pi])
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_interior_wall_blocks_but_doorway_passes(env):
    # wall at x = 8 with a gap for y in [3, 5]
    blocked = env.step([7.5, 1.0], [1.0, 0.0])
    assert blocked[0] < 8.0
    np.testing.assert_allclose(blocked, [8.0 - env.contact_epsilon, 1.0], atol=1e-12)
    np.testing.assert_allclose(env.step([7.5, 4.0], [1.0, 0.0]), [8.5, 4.0])


def test_non_finite_input_rejected(env):
    with pytest.raises(InvalidInputError):
        env.step([np.nan, 1.0], [1.0, 0.0])
    with pytest.raises(InvalidInputError):
        env.step([1.0, 1.0], [np.inf, 0.0])
    with pytest.raises(InvalidInputError):
        env.reward([1.0, 1.0], [1.0, np.nan])


def test_reward_examples(env):
    g = env.goal_box
    below = [g.center[0], g.lo[1] - 0.5]
    assert env.reward(below, [1.0, math.pi / 2]) == 1.0
    assert env.reward(g.center, [1.0, 0.0]) == 0.0
    assert env.reward([1.0, 1.0], [1.0, 0.0]) == 0.0


def test_goal_is_sink(env):
    c = env.goal_box.center
    for th in np.linspace(-3, 3, 7):
        np.testing.assert_array_equal(env.step(c, [1.0, th]), c)


def test_build_env_layouts():
    nine = build_env("nine_rooms")
    assert (nine.geometry.grid_rows, nine.geometry.grid_cols) == (3, 3)
    assert nine.geometry.obstacle_boxes == ()
    sixteen = build_env("sixteen_rooms")
    assert (sixteen.geometry.grid_rows, sixteen.geometry.grid_cols) == (4, 4)
    obst = build_env("nine_rooms_obstacle")
    assert len(obst.geometry.obstacle_boxes) == 1
    box = obst.geometry.obstacle_boxes[0]
    assert obst.geometry.room_of(box.center) == (1, 1)
    assert nine.geometry.room_of(nine.start_box.center) == (0, 0)
    assert nine.geometry.room_of(nine.goal_box.center) == (2, 2)
    assert sixteen.geometry.room_of(sixteen.goal_box.center) == (3, 3)


def test_unknown_env_name():
    with pytest.raises(ConfigurationError):
        build_env("twelve_rooms")
    with pytest.raises(ConfigurationError):
        build_env("nine_rooms", {"wall_colour": 1})


def test_geometry_overrides_from_file(tmp_path):
    p = tmp_path / "geom.ini"
    p.write_text("[env]\nroom_size = 10\ndoorway_width = 3\ngamma = 0.9\n")
    overrides = read_geometry_overrides(p)
    env = build_env("nine_rooms", overrides)
    assert env.geometry.room_size == 10.0
    assert env.geometry.doorway_width == 3.0
    assert env.gamma == 0.9
    assert env.geometry.width == 30.0


def test_doorway_gaps_are_centered(env):
    g = env.geometry
    walls = env.walls
    # the vertical wall at x=8 in row 0 leaves exactly [3, 5] open
    segs = sorted((y0, y1) for x0, y0, x1, y1 in walls if x0 == x1 == 8.0 and y1 <= 8.0)
    assert segs == [(0.0, 3.0), (5.0, 8.0)]
    assert g.width == g.height == 24.0


def test_initial_states_inside_start_region(env):
    pts = env.sample_initial(np.random.default_rng(3), n=500)
    assert env.start_box.contains_many(pts).all()


def test_step_counter_counts_transitions():
    env = build_env("nine_rooms")
    env.step([1, 1], [1, 0])
    env.step_many(np.ones((5, 2)), np.ones((5, 2)))
    assert env.steps == 6
    env.reward([1, 1], [1, 0])
    assert env.steps == 6  # reward queries are not transitions
    assert env.fork().steps == 0


positions = st.tuples(st.floats(0.0, 24.0), st.floats(0.0, 24.0))
actions = st.tuples(st.floats(-0.5, 1.5), st.floats(-10.0, 10.0))


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(["nine_rooms", "nine_rooms_obstacle"]), positions, st.lists(actions, min_size=1, max_size=30))
def test_containment_and_reward_sparsity(name, start, acts):
    env = build_env(name)
    s = np.array(start)
    if env.geometry.inside_obstacle(s):
        return
    total = 0.0
    for a in acts:
        total += env.reward(s, a)
        s = env.step(s, a)
        assert env.geometry.inside_workspace(s, tol=env.contact_epsilon)
        assert not env.geometry.inside_obstacle(s)
    assert total in (0.0, 1.0)


@settings(max_examples=150, deadline=None)
@given(positions, actions)
def test_step_matches_micro_simulation(start, a):
    env = build_env("nine_rooms_obstacle")
    s = np.array(start)
    if env.geometry.inside_obstacle(s):
        return
    fast = env.step(s, a)
    slow = micro_step(env, s, a, substeps=2000)
    # the reference stops up to one substep early
    assert np.linalg.norm(fast - slow) <= 1.5 / 2000 + 1e-6


@settings(max_examples=100, deadline=None)
@given(positions, st.lists(actions, min_size=1, max_size=10))
def test_determinism(start, acts):
    e1, e2 = build_env("nine_rooms", seed=1), build_env("nine_rooms", seed=1)
    s1 = s2 = np.array(start)
    for a in acts:
        s1, s2 = e1.step(s1, a), e2.step(s2, a)
        assert s1.tobytes() == s2.tobytes()


def test_box_helpers():
    b = Box((0, 0), (2, 2))
    assert b.contains((2, 2)) and not b.contains((2.01, 1))
    assert b.intersects(Box((2, 2), (3, 3)))
    assert not b.intersects(Box((2.1, 0), (3, 3)))
    with pytest.raises(ConfigurationError):
        Box((1, 1), (1, 2))
