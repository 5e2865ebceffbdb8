"""Monte-Carlo estimation of option-level transition and reward tables.

Every option is tied to one abstract edge, so tables are indexed by option
(row) and destination region (column); the source region of a row is
``sources[row]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .abstraction import AbstractSpec
from .env import Box, ConfigurationError, InvalidInputError
from .options import OptionSet
from .policy import run_batch


@dataclass(frozen=True)
class RolloutOutcome:
    start: tuple[float, ...]
    region: int | None
    steps: int
    reward: float

    def transition_value(self, gamma: float, region: int) -> float:
        return gamma ** self.steps if self.region == region else 0.0


@dataclass
class EstimationConfig:
    horizon: int = 100
    grid: int = 4
    m_rollouts: int = 1
    m_starts: int = 20


@dataclass
class _Tables:
    gamma: float
    n_regions: int
    sources: np.ndarray
    targets: np.ndarray
    available: np.ndarray

    @property
    def n_options(self) -> int:
        return len(self.sources)


@dataclass
class IntervalADP(_Tables):
    T_inf: np.ndarray = None
    T_sup: np.ndarray = None
    R_inf: np.ndarray = None
    R_sup: np.ndarray = None
    counts: np.ndarray = None

    def save(self, path: str | Path) -> None:
        eps_T, eps_R = epsilons(self)
        lines = [f"# gamma {self.gamma!r}", f"# n_regions {self.n_regions}",
                 f"# eps_T {eps_T!r}", f"# eps_R {eps_R!r}",
                 "kind source option target lo hi count"]
        for o in range(self.n_options):
            if not self.available[o]:
                continue
            s, c = int(self.sources[o]), int(self.counts[o])
            for d in range(self.n_regions):
                lines.append(f"T {s} {o} {d} {self.T_inf[o, d]!r} {self.T_sup[o, d]!r} {c}")
            lines.append(f"R {s} {o} - {self.R_inf[o]!r} {self.R_sup[o]!r} {c}")
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class ExpectedADP(_Tables):
    T_D: np.ndarray = None
    R_D: np.ndarray = None
    counts: np.ndarray = None

    def save(self, path: str | Path) -> None:
        lines = [f"# gamma {self.gamma!r}", f"# n_regions {self.n_regions}",
                 "kind source option target value count"]
        for o in range(self.n_options):
            if not self.available[o]:
                continue
            s, c = int(self.sources[o]), int(self.counts[o])
            for d in range(self.n_regions):
                lines.append(f"T {s} {o} {d} {self.T_D[o, d]!r} {c}")
            lines.append(f"R {s} {o} - {self.R_D[o]!r} {c}")
        Path(path).write_text("\n".join(lines) + "\n")


def epsilons(adp: IntervalADP) -> tuple[float, float]:
    m = adp.available
    if not m.any():
        return 0.0, 0.0
    return float(np.max(adp.T_sup[m] - adp.T_inf[m])), float(np.max(adp.R_sup[m] - adp.R_inf[m]))


def start_grid(box: Box, g: int, with_center: bool = True) -> np.ndarray:
    """``g x g`` cell-centred grid inside ``box`` plus its center."""
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    ticks = [(np.arange(g) + 0.5) / g * (hi[k] - lo[k]) + lo[k] for k in range(2)]
    xx, yy = np.meshgrid(*ticks, indexing="xy")
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    if with_center:
        pts = np.vstack([pts, box.center[None]])
    return pts


def _rollouts(env, spec: AbstractSpec, options: OptionSet, edge: tuple[int, int], starts: np.ndarray,
              horizon: int) -> list[RolloutOutcome]:
    hook = getattr(env, "option_rollouts", None)
    if hook is not None:
        return hook(spec, options, edge, starts, horizon)
    pol = options[edge]
    rows = np.repeat(pol.params[None], len(starts), axis=0)
    out = run_batch(env, spec, rows, pol, starts, edge[0], edge[1], horizon,
                    float(getattr(env.geometry, "room_size", 1.0)))
    return [
        RolloutOutcome(tuple(map(float, s)), None if r < 0 else int(r), int(t), float(d))
        for s, r, t, d in zip(starts, out["term"], out["steps"], out["disc"])
    ]


def rollout_option(env, spec: AbstractSpec, options: OptionSet, edge: tuple[int, int], start,
                   horizon: int = 100) -> RolloutOutcome:
    start = np.asarray(start, dtype=float)
    if not np.all(np.isfinite(start)):
        raise InvalidInputError("non-finite start state")
    if not spec.regions[edge[0]].box.contains(start):
        raise InvalidInputError(f"start {start} is outside source region {edge[0]}")
    return _rollouts(env, spec, options, tuple(edge), start[None], horizon)[0]


def _per_start_values(env, spec, options, edge, starts, m_rollouts, horizon):
    """Per-start mean transition row and reward over ``m_rollouts`` repeats."""
    starts = np.repeat(np.asarray(starts, dtype=float), m_rollouts, axis=0)
    outs = _rollouts(env, spec, options, edge, starts, horizon)
    T = np.zeros((len(outs), spec.n_regions))
    R = np.zeros(len(outs))
    for i, o in enumerate(outs):
        if o.region is not None:
            T[i, o.region] = env.gamma ** o.steps
        R[i] = o.reward
    k = len(outs) // m_rollouts
    return T.reshape(k, m_rollouts, -1).mean(1), R.reshape(k, m_rollouts).mean(1)


def _frame(spec: AbstractSpec, options: OptionSet, gamma: float) -> dict:
    return dict(gamma=float(gamma), n_regions=spec.n_regions, sources=spec.edge_sources(),
                targets=spec.edge_targets(), available=options.available(spec))


def estimate_interval(env, spec: AbstractSpec, options: OptionSet,
                      starts_per_region: Mapping[int, np.ndarray] | None = None,
                      m_rollouts: int = 1, horizon: int = 100, grid: int = 4) -> IntervalADP:
    """Min/max over start states of per-start option values.

    Default starts are a ``grid x grid`` lattice plus the center of each region.
    """
    frame = _frame(spec, options, env.gamma)
    n_opt = spec.n_edges
    T_inf = np.zeros((n_opt, spec.n_regions))
    T_sup = np.zeros_like(T_inf)
    R_inf = np.zeros(n_opt)
    R_sup = np.zeros(n_opt)
    counts = np.zeros(n_opt, dtype=np.int64)
    for o, edge in enumerate(spec.edges):
        if not frame["available"][o]:
            continue
        if starts_per_region is None:
            starts = start_grid(spec.regions[edge[0]].box, grid)
        else:
            starts = np.atleast_2d(np.asarray(starts_per_region.get(edge[0], []), dtype=float))
        if starts.size == 0:
            raise ConfigurationError(f"no start states for region {edge[0]}")
        T, R = _per_start_values(env, spec, options, edge, starts, m_rollouts, horizon)
        T_inf[o], T_sup[o] = T.min(0), T.max(0)
        R_inf[o], R_sup[o] = R.min(), R.max()
        counts[o] = len(starts)
    return IntervalADP(**frame, T_inf=T_inf, T_sup=T_sup, R_inf=R_inf, R_sup=R_sup, counts=counts)


def estimate_expected(env, spec: AbstractSpec, options: OptionSet, D, m_starts: int = 20,
                      m_rollouts: int = 1, horizon: int = 100,
                      rng: np.random.Generator | None = None) -> ExpectedADP:
    """Sample means of option values over ``m_starts`` draws from each ``D_s``."""
    rng = np.random.default_rng(0) if rng is None else rng
    frame = _frame(spec, options, env.gamma)
    n_opt = spec.n_edges
    T_D = np.zeros((n_opt, spec.n_regions))
    R_D = np.zeros(n_opt)
    counts = np.zeros(n_opt, dtype=np.int64)
    for o, edge in enumerate(spec.edges):
        if not frame["available"][o]:
            continue
        if D.size(edge[0]) == 0:
            raise ConfigurationError(f"empty start pool for region {edge[0]}")
        starts = D.sample(edge[0], m_starts, rng)
        T, R = _per_start_values(env, spec, options, edge, starts, m_rollouts, horizon)
        T_D[o], R_D[o] = T.mean(0), R.mean()
        counts[o] = len(starts)
    return ExpectedADP(**frame, T_D=T_D, R_D=R_D, counts=counts)
