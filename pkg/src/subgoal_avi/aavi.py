"""Alternating abstract value iteration: train options, plan, re-sample starts, repeat."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .abstraction import AbstractSpec
from .avi import AbstractPolicy, expected_vi, extract_policy
from .estimation import EstimationConfig, estimate_expected
from .options import OptionSet
from .policy import ArsConfig, SubMdpTask, run_batch, train_option

log = logging.getLogger(__name__)


@dataclass
class RegionDistribution:
    """Weighted state pools, one per region."""

    pools: dict[int, np.ndarray]
    weights: dict[int, np.ndarray]
    capacity: int = 200
    history: list[float] = field(default_factory=list)

    def size(self, region: int) -> int:
        p = self.pools.get(region)
        return 0 if p is None else len(p)

    def probabilities(self, region: int) -> np.ndarray:
        w = self.weights[region]
        return w / w.sum()

    def sample(self, region: int, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(self.size(region), size=n, p=self.probabilities(region))
        return self.pools[region][idx]

    def add(self, region: int, state: np.ndarray, weight: float = 1.0) -> None:
        s = np.asarray(state, dtype=float)[None]
        if region in self.pools and len(self.pools[region]):
            self.pools[region] = np.vstack([self.pools[region], s])
            self.weights[region] = np.append(self.weights[region], weight)
        else:
            self.pools[region] = s
            self.weights[region] = np.array([weight])

    def copy(self) -> "RegionDistribution":
        return RegionDistribution({k: v.copy() for k, v in self.pools.items()},
                                  {k: v.copy() for k, v in self.weights.items()},
                                  self.capacity, list(self.history))

    @classmethod
    def empty(cls, capacity: int = 200) -> "RegionDistribution":
        return cls({}, {}, capacity)

    def to_dict(self) -> dict:
        return {"capacity": self.capacity, "history": self.history,
                "pools": {str(k): {"states": v.tolist(), "weights": self.weights[k].tolist()}
                          for k, v in sorted(self.pools.items())}}


def initial_distribution(spec: AbstractSpec, capacity: int = 200, init_fraction: float = 0.25,
                         seed: int = 0) -> RegionDistribution:
    """Uniform pools on a small square at every region center."""
    rng = np.random.default_rng(seed)
    pools, weights = {}, {}
    for r in spec.regions:
        hw = init_fraction * r.box.half_widths
        c = np.asarray(r.center)
        pools[r.id] = rng.uniform(c - hw, c + hw, size=(capacity, 2))
        weights[r.id] = np.ones(capacity)
    return RegionDistribution(pools, weights, capacity)


def aggregate(D: RegionDistribution, D_bar: RegionDistribution, alpha: float,
              rng: np.random.Generator | None = None) -> RegionDistribution:
    """Resample every pool: ``ceil(alpha * capacity)`` states from ``D_bar``, the rest from ``D``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    rng = np.random.default_rng(0) if rng is None else rng
    cap = D.capacity
    pools, weights = {}, {}
    for r in sorted(set(D.pools) | set(D_bar.pools)):
        has_d, has_bar = D.size(r) > 0, D_bar.size(r) > 0
        if not (has_d or has_bar):
            log.warning("region %d: both pools empty, skipped", r)
            continue
        n_bar = math.ceil(alpha * cap)
        src_bar = D_bar if has_bar else D
        src_d = D if has_d else D_bar
        parts = []
        if n_bar:
            parts.append(src_bar.sample(r, n_bar, rng))
        if cap - n_bar:
            parts.append(src_d.sample(r, cap - n_bar, rng))
        pools[r] = np.vstack(parts)
        weights[r] = np.ones(cap)
    return RegionDistribution(pools, weights, cap, D.history + [alpha])


@dataclass
class HierarchicalPolicy:
    spec: AbstractSpec
    options: OptionSet
    abstract: AbstractPolicy
    horizon: int = 100

    def edge_for(self, region: int) -> tuple[int, int] | None:
        return self.abstract.edge_for(region)


@dataclass
class EpisodeResult:
    trajectory: np.ndarray
    reached_goal: bool
    discounted_reward: float
    steps: int
    entries: list[tuple[int, np.ndarray]]
    regions: list[int]


def execute_hierarchical(env, policy: HierarchicalPolicy, s0, max_option_steps: int) -> EpisodeResult:
    """Chain options from ``s0`` following the abstract policy."""
    spec = policy.spec
    s = np.asarray(s0, dtype=float)
    traj = [s.copy()]
    region = spec.region_of(s)
    regions = [] if region is None else [region]
    entries: list[tuple[int, np.ndarray]] = []
    total, elapsed = 0.0, 0
    if region == spec.goal_id:
        return EpisodeResult(np.array(traj), True, 0.0, 0, entries, regions)
    for _ in range(max_option_steps):
        edge = None if region is None else policy.edge_for(region)
        if edge is None or edge not in policy.options:
            break
        pol = policy.options[edge]
        out = run_batch(env, spec, pol.params[None], pol, s[None], edge[0], edge[1], policy.horizon,
                        float(env.geometry.room_size), record=True)
        t = int(out["steps"][0])
        traj.extend(out["traj"][0, 1:t + 1])
        total += env.gamma ** elapsed * float(out["disc"][0])
        elapsed += t
        s = out["final"][0].copy()
        term = int(out["term"][0])
        if term < 0:
            region = None
            break
        region = term
        regions.append(region)
        entries.append((region, s.copy()))
        if region == spec.goal_id:
            break
    return EpisodeResult(np.array(traj), region == spec.goal_id, total, elapsed, entries, regions)


def induce_distribution(env, policy: HierarchicalPolicy, n_episodes: int, max_option_steps: int,
                        rng: np.random.Generator, capacity: int = 200) -> RegionDistribution:
    """Entry states of every region visited by hierarchical rollouts from the start distribution."""
    D_bar = RegionDistribution.empty(capacity)
    for _ in range(n_episodes):
        s0 = env.sample_initial(rng)
        D_bar.add(policy.spec.initial_id, s0)
        ep = execute_hierarchical(env, policy, s0, max_option_steps)
        for region, state in ep.entries:
            D_bar.add(region, state)
    return D_bar


@dataclass
class EvalReport:
    success_probability: float
    mean_discounted_reward: float
    episodes: int
    env_steps: int
    successes: int = 0


def evaluate(env, policy: HierarchicalPolicy, n_episodes: int, max_option_steps: int, seed: int) -> EvalReport:
    """Runs on a forked environment so the caller's step counter is untouched."""
    ev = env.fork()
    rng = np.random.default_rng(seed)
    wins, rew = 0, 0.0
    for _ in range(n_episodes):
        ep = execute_hierarchical(ev, policy, ev.sample_initial(rng), max_option_steps)
        wins += ep.reached_goal
        rew += ep.discounted_reward
    n = max(n_episodes, 1)
    return EvalReport(wins / n, rew / n, n_episodes, ev.steps, wins)


@dataclass
class AAVIConfig:
    n_iterations: int = 5
    ars: ArsConfig = field(default_factory=ArsConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    alpha: float | str = 0.5  # constant, or "harmonic" for 1/(i+1)
    pool_capacity: int = 200
    init_fraction: float = 0.25
    induce_episodes: int = 50
    max_option_steps: int | None = None  # default 2 * |regions|
    eval_episodes: int = 100
    step_budget: int | None = None
    edge_step_limit: int | None = None  # per edge and round; None = iteration count only

    def alpha_at(self, i: int) -> float:
        if self.alpha == "harmonic":
            return 1.0 / (i + 1)
        return float(self.alpha)


@dataclass
class CurveRecord:
    iteration: int
    env_steps: int
    success_prob: float
    disc_reward: float
    wall_secs: float


@dataclass
class AAVIResult:
    options: OptionSet
    policy: HierarchicalPolicy
    curve: list[CurveRecord]
    distribution: RegionDistribution
    aggregations: int = 0


def run_aavi(env, spec: AbstractSpec, config: AAVIConfig, seed: int = 0,
             on_iteration: Callable[[int, AAVIResult], None] | None = None,
             options: OptionSet | None = None) -> AAVIResult:
    if config.n_iterations < 1:
        raise ValueError("need at least one iteration")
    t0 = time.perf_counter()
    root = np.random.SeedSequence(seed)
    opt_seed, d_seed, est_seed, ind_seed, eval_seed = (int(c.generate_state(1)[0]) for c in root.spawn(5))
    options = OptionSet.initialize(spec, opt_seed, env.max_speed) if options is None else options
    D = initial_distribution(spec, config.pool_capacity, config.init_fraction, d_seed)
    max_opt = config.max_option_steps or 2 * spec.n_regions
    horizon = config.ars.episode_horizon
    est_rng = np.random.default_rng(est_seed)
    ind_rng = np.random.default_rng(ind_seed)
    curve: list[CurveRecord] = []
    aggregations = 0
    hp = None
    last_cost = 0
    for i in range(config.n_iterations):
        if config.step_budget is not None and hp is not None and env.steps + last_cost > config.step_budget:
            log.info("stopping before iteration %d: predicted to exceed the step budget", i + 1)
            break
        before = env.steps
        for k, edge in enumerate(spec.edges):
            if D.size(edge[0]) == 0:
                log.warning("no start states for %s; option not trained", edge)
                continue
            task = SubMdpTask(spec, edge[0], edge[1], D.pools[edge[0]], D.weights[edge[0]])
            train_option(env, task, options[edge], config.ars,
                         seed=np.random.SeedSequence([seed, i, k]), step_limit=config.edge_step_limit)
        adp = estimate_expected(env, spec, options, D, config.estimation.m_starts,
                                config.estimation.m_rollouts, horizon, est_rng)
        vi = expected_vi(adp)
        abstract = extract_policy(vi.Q, adp.sources, adp.available, provenance="expected", edges=spec.edges)
        hp = HierarchicalPolicy(spec, options, abstract, horizon)
        last_cost = env.steps - before
        if i + 1 < config.n_iterations:
            D_bar = induce_distribution(env, hp, config.induce_episodes, max_opt, ind_rng, D.capacity)
            for r in spec.regions:
                if D_bar.size(r.id) == 0:
                    log.debug("region %d unvisited; pool kept", r.id)
            D = aggregate(D, D_bar, config.alpha_at(i + 1), ind_rng)
            aggregations += 1
        rep = evaluate(env, hp, config.eval_episodes, max_opt, eval_seed + i)
        curve.append(CurveRecord(i + 1, env.steps, rep.success_probability, rep.mean_discounted_reward,
                                 time.perf_counter() - t0))
        result = AAVIResult(options, hp, curve, D, aggregations)
        if on_iteration is not None:
            on_iteration(i + 1, result)
    return AAVIResult(options, hp, curve, D, aggregations)
