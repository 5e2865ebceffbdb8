"""Command-line entry point: train, eval, transfer, bound, regions."""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .aavi import HierarchicalPolicy, evaluate
from .abstraction import AbstractSpec, validate
from .avi import AbstractPolicy, check_contraction, suboptimality_bound
from .env import ENV_NAMES, ConfigurationError, build_env, read_geometry_overrides
from .options import OptionSet

OUTPUT_ENV_VAR = "SUBGOAL_AVI_OUTPUT"
REGION_KINDS = ("doorways", "room_centers", "full_rooms", "random", "file")
log = logging.getLogger("subgoal_avi")


def output_root(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ENV_VAR, "runs"))


# Config file handling ----------------------------------------------------------
# Every option below may also appear in the INI file under [run]; a flag given
# on the command line wins.
_FILE_KEYS = {
    "env": str, "regions": str, "spec_file": str, "n": int, "k": int, "iterations": int,
    "seeds": str, "budget": int, "out": str, "ars_iterations": int, "horizon": int, "step_size": float,
    "noise": float, "directions": int, "top_b": int, "alpha": str, "eval_episodes": int,
    "induce_episodes": int, "m_starts": int, "pool_capacity": int,
}


def load_config(path: str | None) -> tuple[dict, dict]:
    """Return ``(run keys, env geometry overrides)`` from an INI file."""
    if not path:
        return {}, {}
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigurationError(f"cannot read config file {path}")
    run = {}
    if parser.has_section("run"):
        for key, val in parser.items("run"):
            if key not in _FILE_KEYS:
                raise ConfigurationError(f"unknown key [run] {key}")
            try:
                run[key] = _FILE_KEYS[key](val)
            except ValueError:
                raise ConfigurationError(f"bad value for {key}: {val!r}") from None
    return run, read_geometry_overrides(path)


def merged(args: argparse.Namespace, file_keys: dict, key: str, default=None):
    val = getattr(args, key, None)
    if val is not None:
        return val
    return file_keys.get(key, default)


def parse_seeds(text) -> list[int]:
    if isinstance(text, int):
        return [text]
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise ConfigurationError("no seeds given")
    return out


# Subcommands ----------------------------------------------------------------------

def cmd_train(args: argparse.Namespace) -> int:
    fk, geom = load_config(args.config)
    env_name = merged(args, fk, "env", "nine_rooms")
    regions = merged(args, fk, "regions", "doorways")
    seeds = parse_seeds(merged(args, fk, "seeds", "0"))
    iterations = merged(args, fk, "iterations", 20)
    budget = merged(args, fk, "budget", ex.BUDGETS.get((env_name, regions)))
    if budget is not None and budget <= 0:
        raise ConfigurationError("budget must be positive")
    if iterations < 1:
        raise ConfigurationError("iterations must be >= 1")
    spec_file = merged(args, fk, "spec_file")
    if regions == "file" and (not spec_file or not Path(spec_file).exists()):
        raise ConfigurationError(f"spec file not found: {spec_file}")
    out = output_root(merged(args, fk, "out"))
    horizon = merged(args, fk, "horizon", ex.ROOMS_HORIZON)
    ars = replace(ex.ROOMS_ARS, episode_horizon=horizon,
                  iterations_per_round=merged(args, fk, "ars_iterations", ex.ROOMS_ARS.iterations_per_round),
                  step_size=merged(args, fk, "step_size", ex.ROOMS_ARS.step_size),
                  noise=merged(args, fk, "noise", ex.ROOMS_ARS.noise),
                  n_directions=merged(args, fk, "directions", ex.ROOMS_ARS.n_directions),
                  top_b=merged(args, fk, "top_b", ex.ROOMS_ARS.top_b))
    est = replace(ex.ROOMS_ESTIMATION, horizon=horizon, m_starts=merged(args, fk, "m_starts", 20))
    alpha = merged(args, fk, "alpha", "0.5")
    alpha = alpha if alpha == "harmonic" else float(alpha)
    curves = []
    for seed in seeds:
        env = build_env(env_name, geom, seed=seed)
        spec = ex.make_spec(env, regions, seed=seed, n=merged(args, fk, "n"), k=merged(args, fk, "k"),
                            spec_file=spec_file)
        report = validate(spec)
        if not report.ok:
            raise ConfigurationError(f"invalid spec:\n{report}")
        cfg = ex.rooms_config(max_iterations=iterations, budget=budget, ars=ars, estimation=est, alpha=alpha,
                              eval_episodes=merged(args, fk, "eval_episodes", 100),
                              induce_episodes=merged(args, fk, "induce_episodes", 50),
                              pool_capacity=merged(args, fk, "pool_capacity", 200))
        run_dir = out / f"seed_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        meta = {"env": env_name, "geometry": geom, "regions": regions, "seed": seed, "horizon": horizon,
                "max_option_steps": 2 * spec.n_regions, "config": ex.config_dict(cfg)}

        def checkpoint(i, res, run_dir=run_dir, env=env, spec=spec, meta=meta):
            ex.save_run(run_dir / f"iter_{i:03d}", ex.RunOutput(env, spec, res), meta)
            ex.write_curve(run_dir / "curve.csv", res.curve)
            c = res.curve[-1]
            print(f"seed {meta['seed']} iter {i}: steps={c.env_steps} success={c.success_prob:.2f} "
                  f"reward={c.disc_reward:.4f}", flush=True)

        from .aavi import run_aavi

        res = run_aavi(env, spec, cfg, seed=seed, on_iteration=checkpoint)
        run = ex.RunOutput(env, spec, res)
        ex.save_run(run_dir / "final", run, meta)
        ex.write_curve(run_dir / "curve.csv", res.curve)
        curves.append(res.curve)
        print(f"seed {seed}: plan {' -> '.join(map(str, run.plan()))}")
    ex.write_curve(out / "curve_mean.csv", ex.mean_curve(curves))
    return 0


def _load_artifacts(path: Path):
    try:
        meta = json.loads((path / "run.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read artifacts in {path}: {exc}") from None
    spec = AbstractSpec.load(path / "spec.json")
    options = OptionSet.load(path / "options")
    policy = AbstractPolicy.load(path / "policy.txt", spec.edges)
    for r, o in policy.choice.items():
        if not 0 <= o < spec.n_edges or spec.edges[o][0] != r:
            raise ConfigurationError(f"policy choice {r}->{o} does not match the spec")
    for e, pol in options.policies.items():
        if pol.in_dim != 2 or e not in spec.edges:
            raise ConfigurationError(f"option {e} does not match the spec or state dimension")
    return meta, spec, options, policy


def cmd_eval(args: argparse.Namespace) -> int:
    meta, spec, options, policy = _load_artifacts(Path(args.artifacts))
    env = build_env(args.env or meta["env"], meta.get("geometry"), seed=args.seed)
    hp = HierarchicalPolicy(spec, options, policy, meta.get("horizon", ex.ROOMS_HORIZON))
    rep = evaluate(env, hp, args.episodes, 2 * spec.n_regions, args.seed)
    print(json.dumps({"success_probability": rep.success_probability,
                      "mean_discounted_reward": rep.mean_discounted_reward,
                      "episodes": rep.episodes, "env_steps": rep.env_steps}, sort_keys=True))
    return 0


def cmd_transfer(args: argparse.Namespace) -> int:
    meta, spec, options, _ = _load_artifacts(Path(args.artifacts))
    if args.start is not None or args.goal is not None:
        spec = spec.with_endpoints(spec.initial_id if args.start is None else args.start,
                                   spec.goal_id if args.goal is None else args.goal)
    env = build_env(args.env, seed=args.seed)
    est = replace(ex.ROOMS_ESTIMATION, horizon=meta.get("horizon", ex.ROOMS_HORIZON), grid=args.grid)
    out = ex.transfer(env, spec, options, est, args.episodes, args.seed)
    plan = out.plan(spec)
    print(json.dumps({"plan": plan, "success_probability": out.report.success_probability,
                      "mean_discounted_reward": out.report.mean_discounted_reward,
                      "estimation_steps": out.estimation_steps, "eps_T": out.epsilons[0],
                      "eps_R": out.epsilons[1]}, sort_keys=True))
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        out.policy.save(d / "policy.txt")
        out.adp.save(d / "tables.txt")
    return 0


def cmd_bound(args: argparse.Namespace) -> int:
    if min(args.n_regions, args.eps_t, args.eps_r) < 0 or not 0 <= args.gamma < 1:
        raise ConfigurationError("inputs must be nonnegative and gamma in [0, 1)")
    holds, factor = check_contraction(args.n_regions, args.eps_t, args.gamma)
    bound = suboptimality_bound(args.n_regions, args.eps_t, args.eps_r, args.gamma)
    print(f"contraction factor: {factor:.6g}")
    print(f"assumption holds: {'yes' if holds else 'no'}")
    print(f"bound: {bound:.6g}" if holds else "bound: inf (assumption violated)")
    return 0


def cmd_regions(args: argparse.Namespace) -> int:
    if args.validate:
        spec = AbstractSpec.load(args.validate)
        report = validate(spec)
        print(report)
        return 0 if report.ok else 1
    env = build_env(args.env, seed=args.seed)
    spec = ex.make_spec(env, args.kind, seed=args.seed, n=args.n, k=args.k)
    if args.out:
        spec.save(args.out)
    print(f"{spec.name}: {spec.n_regions} regions, {spec.n_edges} edges, "
          f"start {spec.initial_id}, goal {spec.goal_id}")
    for r in spec.regions:
        print(f"  {r.id:3d} {spec.label(r.id):>12s} lo={r.box.lo} hi={r.box.hi}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subgoal-avi", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run alternating abstract value iteration")
    t.add_argument("--config", help="INI file with [run] and [env] sections")
    t.add_argument("--env", choices=ENV_NAMES)
    t.add_argument("--regions", choices=REGION_KINDS)
    t.add_argument("--spec-file", dest="spec_file")
    t.add_argument("--n", type=int)
    t.add_argument("--k", type=int)
    t.add_argument("--iterations", type=int, help="maximum A-AVI iterations (1 = no alternation)")
    t.add_argument("--seed", "--seeds", dest="seeds", help="seed list, e.g. 0,1,2 or 0-4")
    t.add_argument("--budget", type=int, help="simulator step budget")
    t.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV_VAR} or ./runs)")
    t.add_argument("--ars-iterations", dest="ars_iterations", type=int)
    t.add_argument("--horizon", type=int)
    t.add_argument("--step-size", dest="step_size", type=float)
    t.add_argument("--noise", type=float)
    t.add_argument("--directions", type=int)
    t.add_argument("--top-b", dest="top_b", type=int)
    t.add_argument("--alpha", help="mixing weight or 'harmonic'")
    t.add_argument("--eval-episodes", dest="eval_episodes", type=int)
    t.add_argument("--induce-episodes", dest="induce_episodes", type=int)
    t.add_argument("--m-starts", dest="m_starts", type=int)
    t.add_argument("--pool-capacity", dest="pool_capacity", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate saved options and policy")
    e.add_argument("artifacts", help="directory written by train (e.g. runs/seed_0/final)")
    e.add_argument("--env", choices=ENV_NAMES)
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("transfer", help="replan frozen options on another environment")
    r.add_argument("artifacts")
    r.add_argument("--env", choices=ENV_NAMES, required=True)
    r.add_argument("--start", type=int)
    r.add_argument("--goal", type=int)
    r.add_argument("--grid", type=int, default=4)
    r.add_argument("--episodes", type=int, default=100)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out")
    r.set_defaults(func=cmd_transfer)

    b = sub.add_parser("bound", help="suboptimality bound calculator")
    b.add_argument("--n-regions", dest="n_regions", type=int, required=True)
    b.add_argument("--eps-t", dest="eps_t", type=float, required=True)
    b.add_argument("--eps-r", dest="eps_r", type=float, required=True)
    b.add_argument("--gamma", type=float, default=0.95)
    b.set_defaults(func=cmd_bound)

    g = sub.add_parser("regions", help="generate, print or validate region layouts")
    g.add_argument("--env", choices=ENV_NAMES, default="nine_rooms")
    g.add_argument("--kind", choices=REGION_KINDS[:-1], default="doorways")
    g.add_argument("--n", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.add_argument("--validate", metavar="SPEC")
    g.set_defaults(func=cmd_regions)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
