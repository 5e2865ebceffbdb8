"""Throughput of the compiled and numpy rollout kernels.

    python3 benchmarks/bench_kernels.py [--episodes 60] [--horizon 40] [--repeats 5]

Reports simulator steps per second for batched option episodes (the inner
loop of option training and estimation) and for single-step batches.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from subgoal_avi import _kernels
from subgoal_avi.abstraction import doorway_spec
from subgoal_avi.env import build_env
from subgoal_avi.policy import MlpPolicy


def episode_args(env, spec, n, horizon, seed=0):
    rng = np.random.default_rng(seed)
    pol = MlpPolicy.initialize(rng)
    params = np.ascontiguousarray(pol.params + 0.3 * rng.standard_normal((n, pol.n_params)))
    starts = rng.uniform(env.start_box.lo, env.start_box.hi, size=(n, 2))
    return (params, pol.sizes, np.zeros(2), np.ones(2), starts, env.walls, env.goal, spec.boxes_array(),
            spec.initial_id, np.asarray(spec.regions[1].center), horizon, env.gamma, env.max_speed,
            env.contact_epsilon, 8.0, True)


def best_of(fn, repeats):
    best, out = np.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=60)
    ap.add_argument("--horizon", type=int, default=40)
    ap.add_argument("--batch", type=int, default=10_000, help="states per single-step batch")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    env = build_env("nine_rooms_obstacle")
    spec = doorway_spec(env)
    ep_args = episode_args(env, spec, args.episodes, args.horizon)
    rng = np.random.default_rng(1)
    states = np.ascontiguousarray(rng.uniform(0, 24, size=(args.batch, 2)))
    actions = np.ascontiguousarray(np.stack([rng.uniform(0, 1, args.batch), rng.uniform(-4, 4, args.batch)], 1))

    rates = {}
    print(f"{'backend':8s} {'episodes steps/s':>18s} {'step_batch steps/s':>20s}")
    for name, mod in _kernels.available_backends().items():
        t, out = best_of(lambda: mod.run_episodes(*ep_args), args.repeats)
        ep_rate = int(out["steps"].sum()) / t
        t2, _ = best_of(lambda: mod.step_batch(states, actions, env.walls, env.goal, env.max_speed,
                                               env.contact_epsilon), args.repeats)
        rates[name] = (ep_rate, args.batch / t2)
        print(f"{name:8s} {ep_rate:18,.0f} {args.batch / t2:20,.0f}")
    if len(rates) == 2:
        c, p = rates["cython"], rates["python"]
        print(f"speedup  {c[0] / p[0]:17.1f}x {c[1] / p[1]:19.1f}x")
    print(f"default backend: {_kernels.BACKEND}")


if __name__ == "__main__":
    main()
