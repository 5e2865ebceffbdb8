"""Pure numpy implementation of the rollout kernels.

Mirrors ``_rollout.pyx`` operation for operation; vectorised across episodes,
sequential in time.
"""
from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def _move(px, py, v, th, walls, goal, eps):
    """Advance positions ``(px, py)`` with speed ``v`` and heading ``th``."""
    c, s = np.cos(th), np.sin(th)
    dx, dy = v * c, v * s
    best = np.full(px.shape, np.inf)
    for x1, y1, x2, y2 in walls:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if x1 == x2:
                ex = px + dx
                cross = ((dx > 0) & (px <= x1) & (ex >= x1)) | ((dx < 0) & (px >= x1) & (ex <= x1))
                t = (x1 - px) / dx
                yh = py + t * dy
                ok = cross & (yh >= y1) & (yh <= y2)
            else:
                ey = py + dy
                cross = ((dy > 0) & (py <= y1) & (ey >= y1)) | ((dy < 0) & (py >= y1) & (ey <= y1))
                t = (y1 - py) / dy
                xh = px + t * dx
                ok = cross & (xh >= x1) & (xh <= x2)
        best = np.where(ok & (t < best), t, best)
    hit = np.isfinite(best)
    dist = np.where(hit, np.maximum(best * v - eps, 0.0), v)
    nx = np.where(hit, px + dist * c, px + dx)
    ny = np.where(hit, py + dist * s, py + dy)
    sink = (px >= goal[0]) & (px <= goal[2]) & (py >= goal[1]) & (py <= goal[3])
    return np.where(sink, px, nx), np.where(sink, py, ny)


def _clip_action(a0, a1, max_speed):
    v = np.minimum(np.maximum(a0, 0.0), max_speed)
    return v, a1


def step_batch(states, actions, walls, goal, max_speed, eps):
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=float)
    v, th = _clip_action(actions[:, 0], actions[:, 1], max_speed)
    nx, ny = _move(states[:, 0].copy(), states[:, 1].copy(), v, th, walls, goal, eps)
    return np.stack([nx, ny], axis=1)


def _split(params, sizes):
    n_in, h1, h2, n_out = sizes
    n = params.shape[0]
    o = 0
    parts = []
    for a, b in ((n_in, h1), (h1, h2), (h2, n_out)):
        W = params[:, o:o + a * b].reshape(n, a, b)
        o += a * b
        bias = params[:, o:o + b]
        o += b
        parts.append((W, bias))
    return parts


def policy_forward(params, sizes, obs, max_speed):
    """Per-episode MLP forward pass; returns (speed, heading)."""
    (W1, b1), (W2, b2), (W3, b3) = _split(params, sizes)
    h = np.tanh(np.einsum("ni,nij->nj", obs, W1) + b1)
    h = np.tanh(np.einsum("ni,nij->nj", h, W2) + b2)
    u = np.einsum("ni,nij->nj", h, W3) + b3
    v = max_speed * 0.5 * (np.tanh(u[:, 0]) + 1.0)
    th = math.pi * u[:, 1]
    th = th - TWO_PI * np.floor((th + math.pi) / TWO_PI)
    return v, th


def _region_of(px, py, regions):
    out = np.full(px.shape, -1, dtype=np.int64)
    for j in range(regions.shape[0] - 1, -1, -1):
        x0, y0, x1, y1 = regions[j]
        inside = (px >= x0) & (px <= x1) & (py >= y0) & (py <= y1)
        out = np.where(inside, j, out)
    return out


def run_episodes(params, sizes, norm_mean, norm_std, starts, walls, goal, regions, source,
                 target_center, horizon, gamma, max_speed, eps, distance_scale, pad_sink,
                 record=False):
    """Run one option episode per row of ``params``/``starts``.

    Returns a dict with final states, step counts, terminating region (-1 for
    none), shaped return, discounted true reward, visited-state statistics and,
    when ``record`` is set, the padded trajectories.
    """
    params = np.asarray(params, dtype=float)
    starts = np.asarray(starts, dtype=float)
    n = starts.shape[0]
    px, py = starts[:, 0].copy(), starts[:, 1].copy()
    steps = np.zeros(n, dtype=np.int64)
    term = np.full(n, -1, dtype=np.int64)
    shaped = np.zeros(n)
    disc = np.zeros(n)
    active = np.ones(n, dtype=bool)
    ssum = np.zeros(2)
    ssq = np.zeros(2)
    count = 0
    traj = None
    if record:
        traj = np.zeros((n, horizon + 1, 2))
        traj[:, 0, 0], traj[:, 0, 1] = px, py
    cx, cy = target_center
    g = 1.0
    for t in range(horizon):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        x, y = px[idx], py[idx]
        obs = np.stack([x, y], axis=1)
        ssum += obs.sum(axis=0)
        ssq += (obs * obs).sum(axis=0)
        count += idx.size
        v, th = policy_forward(params[idx], sizes, (obs - norm_mean) / norm_std, max_speed)
        was_goal = (x >= goal[0]) & (x <= goal[2]) & (y >= goal[1]) & (y <= goal[3])
        nx, ny = _move(x, y, v, th, walls, goal, eps)
        now_goal = (nx >= goal[0]) & (nx <= goal[2]) & (ny >= goal[1]) & (ny <= goal[3])
        disc[idx] += g * (now_goal & ~was_goal)
        g *= gamma
        steps[idx] += 1
        shaped[idx] -= np.hypot(nx - cx, ny - cy) / distance_scale
        px[idx], py[idx] = nx, ny
        if record:
            traj[idx, t + 1, 0], traj[idx, t + 1, 1] = nx, ny
        reg = _region_of(nx, ny, regions)
        stop = (reg >= 0) & (reg != source)
        term[idx[stop]] = reg[stop]
        active[idx[stop]] = False
    if pad_sink:
        rem = horizon - steps
        shaped -= rem * np.hypot(px - cx, py - cy) / distance_scale
    out = {
        "final": np.stack([px, py], axis=1),
        "steps": steps,
        "term": term,
        "shaped": shaped,
        "disc": disc,
        "state_sum": ssum,
        "state_sumsq": ssq,
        "state_count": count,
    }
    if record:
        out["traj"] = traj
    return out
