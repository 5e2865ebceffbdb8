"""Experiment presets and runners shared by the CLI and the acceptance suite."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .aavi import AAVIConfig, AAVIResult, CurveRecord, EvalReport, HierarchicalPolicy, evaluate, run_aavi
from .abstraction import AbstractSpec, build_spec
from .avi import AbstractPolicy, extract_policy, interval_vi
from .env import RoomsEnv, build_env
from .estimation import EstimationConfig, IntervalADP, epsilons, estimate_interval
from .options import OptionSet
from .policy import ArsConfig

# Hyperparameters used for the rooms experiments. The random-search step size
# is smaller than the ArsConfig default: with this network and heading
# parameterisation the default makes every update overshoot.
ROOMS_HORIZON = 40
ROOMS_ARS = ArsConfig(step_size=0.05, noise=0.05, n_directions=30, top_b=15,
                      iterations_per_round=5, episode_horizon=ROOMS_HORIZON)
ROOMS_ESTIMATION = EstimationConfig(horizon=ROOMS_HORIZON, grid=4, m_rollouts=1, m_starts=20)

BUDGETS = {
    ("nine_rooms", "doorways"): 2_000_000,
    ("nine_rooms", "room_centers"): 2_000_000,
    ("nine_rooms", "full_rooms"): 2_000_000,
    ("nine_rooms", "random"): 10_000_000,
    ("sixteen_rooms", "doorways"): 5_000_000,
    ("sixteen_rooms", "random"): 10_000_000,
}
RANDOM_DEFAULTS = {"nine_rooms": (20, 7), "sixteen_rooms": (25, 7)}
CURVE_HEADER = ("iteration", "env_steps", "success_prob", "disc_reward", "wall_secs")


def rooms_config(max_iterations: int = 20, budget: int | None = None, **overrides) -> AAVIConfig:
    cfg = AAVIConfig(n_iterations=max_iterations, ars=replace(ROOMS_ARS), estimation=replace(ROOMS_ESTIMATION),
                     step_budget=budget)
    return replace(cfg, **overrides)


def ablation_config(spec: AbstractSpec, budget: int) -> AAVIConfig:
    """One round only; every edge gets an equal share of ``budget``.

    The share is reduced by the worst-case overshoot of the last random-search
    iteration and by the estimation rollouts, so the total never exceeds it.
    """
    ars, est = replace(ROOMS_ARS), replace(ROOMS_ESTIMATION)
    per_iter = 2 * ars.n_directions * ars.episode_horizon
    est_cost = spec.n_edges * est.m_starts * est.m_rollouts * est.horizon
    share = (budget - est_cost) // spec.n_edges - per_iter
    ars = replace(ars, iterations_per_round=10**9)
    return AAVIConfig(n_iterations=1, ars=ars, estimation=est, step_budget=budget, edge_step_limit=int(share))


def make_spec(env: RoomsEnv, regions: str, seed: int = 0, n: int | None = None, k: int | None = None,
              spec_file: str | None = None) -> AbstractSpec:
    if regions == "file":
        if not spec_file:
            raise ValueError("regions=file needs a spec file")
        return AbstractSpec.load(spec_file)
    if regions == "random":
        dn, dk = RANDOM_DEFAULTS.get(env.name, (20, 7))
        return build_spec(env, "random", n_points=n or dn, k_neighbors=k or dk, seed=seed)
    return build_spec(env, regions)


@dataclass
class RunOutput:
    env: RoomsEnv
    spec: AbstractSpec
    result: AAVIResult

    @property
    def final(self) -> CurveRecord:
        return self.result.curve[-1]

    def plan(self) -> list[int]:
        return self.result.policy.abstract.plan(self.spec.initial_id, self.spec.goal_id)


def run_experiment(env_name: str, regions: str, seed: int, ablation: bool = False,
                   budget: int | None = None, config: AAVIConfig | None = None,
                   spec: AbstractSpec | None = None, **spec_kw) -> RunOutput:
    env = build_env(env_name, seed=seed)
    spec = spec or make_spec(env, regions, seed=seed, **spec_kw)
    budget = budget or BUDGETS.get((env_name, regions))
    if config is None:
        config = ablation_config(spec, budget) if ablation else rooms_config(budget=budget)
    res = run_aavi(env, spec, config, seed=seed)
    return RunOutput(env, spec, res)


@dataclass
class TransferOutput:
    policy: AbstractPolicy
    report: EvalReport
    estimation_steps: int
    adp: IntervalADP
    epsilons: tuple[float, float]
    converged_inf: bool

    def plan(self, spec: AbstractSpec) -> list[int]:
        return self.policy.plan(spec.initial_id, spec.goal_id)


def transfer(env: RoomsEnv, spec: AbstractSpec, options: OptionSet, estimation: EstimationConfig = ROOMS_ESTIMATION,
             eval_episodes: int = 100, seed: int = 0) -> TransferOutput:
    """Replan with frozen options: interval tables, lower value iteration, conservative policy."""
    before = env.steps
    adp = estimate_interval(env, spec, options, m_rollouts=estimation.m_rollouts, horizon=estimation.horizon,
                            grid=estimation.grid)
    used = env.steps - before
    vi = interval_vi(adp)
    pol = extract_policy(vi.Q_inf, adp.sources, adp.available, provenance="conservative", edges=spec.edges)
    hp = HierarchicalPolicy(spec, options, pol, estimation.horizon)
    rep = evaluate(env, hp, eval_episodes, 2 * spec.n_regions, seed)
    return TransferOutput(pol, rep, used, adp, epsilons(adp), vi.converged_inf)


# Curve files -----------------------------------------------------------------

def write_curve(path: str | Path, records: Sequence[CurveRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CURVE_HEADER)
        for r in records:
            w.writerow([r.iteration, r.env_steps, repr(r.success_prob), repr(r.disc_reward), f"{r.wall_secs:.3f}"])


def read_curve(path: str | Path) -> list[CurveRecord]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [CurveRecord(int(r["iteration"]), int(r["env_steps"]), float(r["success_prob"]),
                        float(r["disc_reward"]), float(r["wall_secs"])) for r in rows]


def mean_curve(curves: Sequence[Sequence[CurveRecord]]) -> list[CurveRecord]:
    """Average by iteration index; a run that stopped early carries its last row forward."""
    if not curves:
        return []
    n = max(len(c) for c in curves)
    out = []
    for i in range(n):
        rows = [c[min(i, len(c) - 1)] for c in curves]
        out.append(CurveRecord(i + 1, int(round(np.mean([r.env_steps for r in rows]))),
                               float(np.mean([r.success_prob for r in rows])),
                               float(np.mean([r.disc_reward for r in rows])),
                               float(np.mean([r.wall_secs for r in rows]))))
    return out


def save_run(directory: str | Path, run: RunOutput, meta: dict) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    run.spec.save(d / "spec.json")
    run.result.options.save(d / "options")
    run.result.policy.abstract.save(d / "policy.txt")
    (d / "distribution.json").write_text(json.dumps(run.result.distribution.to_dict()) + "\n")
    (d / "run.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def config_dict(cfg: AAVIConfig) -> dict:
    return asdict(cfg)
