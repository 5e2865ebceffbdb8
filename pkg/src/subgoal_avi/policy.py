"""MLP option policies and the random-search (ARS V2-t) trainer."""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .abstraction import AbstractSpec
from .env import ConfigurationError, InvalidInputError, RoomsEnv

HIDDEN = (30, 30)
STD_FLOOR = 1e-2


@dataclass
class Normalizer:
    """Running per-dimension mean/variance of observations."""

    dim: int = 2
    count: float = 0.0
    mean: np.ndarray = field(default=None)
    m2: np.ndarray = field(default=None)
    enabled: bool = True

    def __post_init__(self) -> None:
        self.mean = np.zeros(self.dim) if self.mean is None else np.asarray(self.mean, dtype=float)
        self.m2 = np.zeros(self.dim) if self.m2 is None else np.asarray(self.m2, dtype=float)

    @property
    def var(self) -> np.ndarray:
        if self.count < 2:
            return np.ones(self.dim)
        return self.m2 / self.count

    @property
    def std(self) -> np.ndarray:
        return np.maximum(np.sqrt(self.var), STD_FLOOR)

    def snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        """(mean, std) actually applied to observations."""
        if not self.enabled or self.count < 2:
            return np.zeros(self.dim), np.ones(self.dim)
        return self.mean.copy(), self.std

    def merge(self, s_sum: np.ndarray, s_sumsq: np.ndarray, n: int) -> None:
        """Fold batch sums into the running moments (parallel Welford)."""
        if n <= 0:
            return
        b_mean = s_sum / n
        b_m2 = np.maximum(s_sumsq - n * b_mean * b_mean, 0.0)
        tot = self.count + n
        delta = b_mean - self.mean
        self.mean = self.mean + delta * (n / tot)
        self.m2 = self.m2 + b_m2 + delta * delta * (self.count * n / tot)
        self.count = tot

    def observe(self, states: np.ndarray) -> None:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        self.merge(states.sum(0), (states * states).sum(0), len(states))

    def copy(self) -> "Normalizer":
        return Normalizer(self.dim, self.count, self.mean.copy(), self.m2.copy(), self.enabled)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "count": self.count, "mean": self.mean.tolist(),
                "m2": self.m2.tolist(), "enabled": self.enabled}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(int(d["dim"]), float(d["count"]), np.array(d["mean"]), np.array(d["m2"]), bool(d["enabled"]))


@dataclass
class MlpPolicy:
    """input -> 30 -> 30 -> 2 tanh network with (speed, heading) squashing.

    Parameters live in one flat vector laid out W1, b1, W2, b2, W3, b3 with
    ``W`` stored row-major as (fan_in, fan_out).
    """

    params: np.ndarray
    in_dim: int = 2
    hidden: tuple[int, int] = HIDDEN
    out_dim: int = 2
    max_speed: float = 1.0
    normalizer: Normalizer = field(default=None)

    def __post_init__(self) -> None:
        self.params = np.ascontiguousarray(np.asarray(self.params, dtype=float))
        if self.params.shape != (self.n_params,):
            raise ConfigurationError(f"expected {self.n_params} parameters, got {self.params.shape}")
        if self.normalizer is None:
            self.normalizer = Normalizer(self.in_dim)

    @property
    def sizes(self) -> tuple[int, int, int, int]:
        return (self.in_dim, self.hidden[0], self.hidden[1], self.out_dim)

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        a, h1, h2, o = self.sizes
        return [(a, h1), (h1,), (h1, h2), (h2,), (h2, o), (o,)]

    @property
    def n_params(self) -> int:
        return sum(math.prod(s) for s in self.shapes)

    @classmethod
    def zeros(cls, in_dim: int = 2, max_speed: float = 1.0) -> "MlpPolicy":
        p = cls(np.zeros(_count(in_dim)), in_dim=in_dim, max_speed=max_speed)
        return p

    @classmethod
    def initialize(cls, rng: np.random.Generator, in_dim: int = 2, max_speed: float = 1.0) -> "MlpPolicy":
        """Scaled Gaussian hidden layers, zero output layer."""
        pol = cls.zeros(in_dim, max_speed)
        views = pol.layers()
        for W in (views[0], views[2]):
            W[...] = rng.standard_normal(W.shape) / math.sqrt(W.shape[0])
        return pol

    def layers(self) -> list[np.ndarray]:
        out, o = [], 0
        for s in self.shapes:
            n = math.prod(s)
            out.append(self.params[o:o + n].reshape(s))
            o += n
        return out

    def copy(self) -> "MlpPolicy":
        return MlpPolicy(self.params.copy(), self.in_dim, self.hidden, self.out_dim, self.max_speed,
                         self.normalizer.copy())

    # serialization -----------------------------------------------------------
    def save(self, path: str | Path) -> None:
        path = Path(path)
        shapes = self.shapes
        header = struct.pack("<4sI", b"MLP1", len(shapes))
        for s in shapes:
            header += struct.pack("<II", s[0], s[1] if len(s) > 1 else 1)
        path.write_bytes(header + self.params.astype("<f8").tobytes())
        side = {"max_speed": self.max_speed, "normalizer": self.normalizer.to_dict()}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(side, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MlpPolicy":
        path = Path(path)
        try:
            raw = path.read_bytes()
            side = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot load policy {path}: {exc}") from None
        magic, n = struct.unpack_from("<4sI", raw, 0)
        if magic != b"MLP1" or n != 6:
            raise ConfigurationError(f"{path}: not a policy file")
        dims = [struct.unpack_from("<II", raw, 8 + 8 * i) for i in range(n)]
        off = 8 + 8 * n
        params = np.frombuffer(raw[off:], dtype="<f8").astype(float)
        in_dim, h1 = dims[0]
        h2, out = dims[2][1], dims[4][1]
        return cls(params, in_dim, (h1, h2), out, float(side["max_speed"]), Normalizer.from_dict(side["normalizer"]))


def _count(in_dim: int, hidden: tuple[int, int] = HIDDEN, out_dim: int = 2) -> int:
    h1, h2 = hidden
    return in_dim * h1 + h1 + h1 * h2 + h2 + h2 * out_dim + out_dim


def squash(u: np.ndarray, max_speed: float) -> np.ndarray:
    """Map raw network outputs to ``(v, theta)`` with v in [0, max_speed], theta in [-pi, pi)."""
    u = np.asarray(u, dtype=float)
    v = max_speed * 0.5 * (np.tanh(u[..., 0]) + 1.0)
    th = math.pi * u[..., 1]
    th = th - 2 * math.pi * np.floor((th + math.pi) / (2 * math.pi))
    return np.stack([v, th], axis=-1)


def act(policy: MlpPolicy, s: Sequence[float], normalizer: Normalizer | None = None) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("non-finite state")
    norm = policy.normalizer if normalizer is None else normalizer
    mean, std = norm.snapshot()
    W1, b1, W2, b2, W3, b3 = policy.layers()
    h = np.tanh(((s - mean) / std) @ W1 + b1)
    h = np.tanh(h @ W2 + b2)
    return squash(h @ W3 + b3, policy.max_speed)


def shaped_return(trajectory: np.ndarray, target_center: Sequence[float], distance_scale: float,
                  horizon: int | None = None) -> float:
    """Negative summed distance of every successor state to the target center.

    With ``horizon`` set, an episode that ended early is charged its final
    distance for each remaining step, as if it sat in an absorbing state.
    """
    traj = np.asarray(trajectory, dtype=float)
    if traj.ndim != 2 or len(traj) < 1:
        raise InvalidInputError("trajectory must be a nonempty (T+1, dim) array")
    c = np.asarray(target_center, dtype=float)
    d = np.linalg.norm(traj[1:] - c, axis=1) / distance_scale
    total = -float(d.sum())
    if horizon is not None and len(traj) - 1 < horizon:
        total -= (horizon - (len(traj) - 1)) * float(np.linalg.norm(traj[-1] - c)) / distance_scale
    return total


@dataclass
class ArsConfig:
    step_size: float = 0.3
    noise: float = 0.05
    n_directions: int = 30
    top_b: int = 15
    iterations_per_round: int = 300
    episode_horizon: int = 100
    distance_scale: float | None = None  # None: the environment's room size
    normalize: bool = True

    def __post_init__(self) -> None:
        if not (0 < self.top_b <= self.n_directions):
            raise ConfigurationError("need 0 < top_b <= n_directions")
        if self.step_size <= 0 or self.noise < 0:
            raise ConfigurationError("step_size must be > 0 and noise >= 0")
        if self.iterations_per_round < 0 or self.episode_horizon < 1:
            raise ConfigurationError("bad iteration count or horizon")


@dataclass
class SubMdpTask:
    """Reach ``target`` from states of ``source``; entering any other region ends the episode."""

    spec: AbstractSpec
    source: int
    target: int
    starts: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        if (self.source, self.target) not in self.spec.edges:
            raise ConfigurationError(f"({self.source}, {self.target}) is not an edge")
        self.starts = np.atleast_2d(np.asarray(self.starts, dtype=float))
        if len(self.starts) == 0 or self.starts.shape[1] == 0:
            raise ConfigurationError("empty start pool")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            self.weights = w / w.sum()

    @property
    def target_center(self) -> np.ndarray:
        return np.asarray(self.spec.regions[self.target].center)

    def sample_starts(self, rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(len(self.starts), size=n, p=self.weights)
        return self.starts[idx]


@dataclass
class TrainStats:
    mean_return: float
    env_steps: int
    iterations: int
    updates: int
    returns: list[float] = field(default_factory=list)


def _distance_scale(env: RoomsEnv, cfg: ArsConfig) -> float:
    if cfg.distance_scale is not None:
        return cfg.distance_scale
    return float(getattr(getattr(env, "geometry", None), "room_size", 1.0))


def run_batch(env: RoomsEnv, spec: AbstractSpec, param_rows: np.ndarray, policy: MlpPolicy,
              starts: np.ndarray, source: int, target: int, horizon: int, distance_scale: float,
              normalizer: tuple[np.ndarray, np.ndarray] | None = None, record: bool = False) -> dict:
    """Run option episodes for a batch of parameter vectors and charge ``env.steps``."""
    mean, std = policy.normalizer.snapshot() if normalizer is None else normalizer
    out = _kernels.run_episodes(
        np.ascontiguousarray(np.atleast_2d(param_rows), dtype=float), policy.sizes,
        np.ascontiguousarray(mean, dtype=float), np.ascontiguousarray(std, dtype=float),
        np.ascontiguousarray(starts, dtype=float), env.walls, env.goal, spec.boxes_array(),
        int(source), np.asarray(spec.regions[target].center, dtype=float), int(horizon),
        float(env.gamma), float(env.max_speed), float(env.contact_epsilon), float(distance_scale),
        True, record,
    )
    env.steps += int(out["steps"].sum())
    return out


def train_option(env: RoomsEnv, task: SubMdpTask, policy: MlpPolicy, config: ArsConfig,
                 seed: int | np.random.SeedSequence = 0, iterations: int | None = None,
                 step_limit: int | None = None) -> TrainStats:
    """Run ARS V2-t iterations in place on ``policy``.

    ``step_limit`` stops early once this call has consumed that many
    simulator steps.
    """
    rng = np.random.default_rng(seed)
    iters = config.iterations_per_round if iterations is None else iterations
    n, b = config.n_directions, config.top_b
    scale = _distance_scale(env, config)
    policy.normalizer.enabled = config.normalize
    steps0 = env.steps
    history: list[float] = []
    updates = 0
    done = 0
    for _ in range(iters):
        if step_limit is not None and env.steps - steps0 >= step_limit:
            break
        done += 1
        delta = rng.standard_normal((n, policy.n_params))
        starts = task.sample_starts(rng, n)
        rows = np.concatenate([policy.params + config.noise * delta, policy.params - config.noise * delta])
        out = run_batch(env, task.spec, rows, policy, np.concatenate([starts, starts]),
                        task.source, task.target, config.episode_horizon, scale)
        r = out["shaped"]
        r_plus, r_minus = r[:n], r[n:]
        order = np.argsort(-np.maximum(r_plus, r_minus), kind="stable")[:b]
        sigma = float(np.std(np.concatenate([r_plus[order], r_minus[order]])))
        if sigma > 0:
            step = (r_plus[order] - r_minus[order]) @ delta[order]
            policy.params = policy.params + config.step_size / (b * sigma) * step
            updates += 1
        if config.normalize:
            policy.normalizer.merge(out["state_sum"], out["state_sumsq"], out["state_count"])
        history.append(float(r.mean()))
    return TrainStats(history[-1] if history else float("nan"), env.steps - steps0, done, updates, history)


def evaluate_option(env: RoomsEnv, task: SubMdpTask, policy: MlpPolicy, horizon: int,
                    starts: np.ndarray | None = None) -> dict:
    """Unperturbed episodes from the given (or pooled) starts."""
    starts = task.starts if starts is None else np.atleast_2d(starts)
    rows = np.repeat(policy.params[None], len(starts), axis=0)
    out = run_batch(env, task.spec, rows, policy, starts, task.source, task.target, horizon,
                    float(env.geometry.room_size))
    out["success"] = float(np.mean(out["term"] == task.target))
    return out
