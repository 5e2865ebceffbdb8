"""Continuous room-navigation environments with kinematic dynamics.

The state is a planar position, the action is ``(speed, heading)``. Walls are
zero-thickness axis-aligned segments; motion stops just short of the first
wall or obstacle it would cross. The goal box is an absorbing sink and the
reward is 1 exactly on the step that enters it.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels


class ConfigurationError(ValueError):
    """Raised for unknown names, malformed config files and bad parameters."""


class InvalidInputError(ValueError):
    """Raised for non-finite states/actions or states outside their region."""


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``[lo, hi]`` in the plane."""

    lo: tuple[float, float]
    hi: tuple[float, float]

    def __post_init__(self) -> None:
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 2 or len(hi) != 2:
            raise ConfigurationError("boxes are two dimensional")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ConfigurationError(f"empty box lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def around(cls, center: Sequence[float], half_width: float) -> "Box":
        cx, cy = center
        return cls((cx - half_width, cy - half_width), (cx + half_width, cy + half_width))

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lo) + np.asarray(self.hi)) / 2.0

    @property
    def half_widths(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / 2.0

    def contains(self, p: Sequence[float]) -> bool:
        return (self.lo[0] <= p[0] <= self.hi[0]) and (self.lo[1] <= p[1] <= self.hi[1])

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return (
            (pts[..., 0] >= self.lo[0]) & (pts[..., 0] <= self.hi[0])
            & (pts[..., 1] >= self.lo[1]) & (pts[..., 1] <= self.hi[1])
        )

    def intersects(self, other: "Box") -> bool:
        """True when the closed boxes share at least one point."""
        return all(self.lo[k] <= other.hi[k] and other.lo[k] <= self.hi[k] for k in range(2))

    def shrink(self, margin: float) -> "Box":
        return Box((self.lo[0] + margin, self.lo[1] + margin), (self.hi[0] - margin, self.hi[1] - margin))

    def as_array(self) -> np.ndarray:
        return np.array([self.lo[0], self.lo[1], self.hi[0], self.hi[1]], dtype=float)

    def edges(self) -> list[tuple[float, float, float, float]]:
        (x0, y0), (x1, y1) = self.lo, self.hi
        return [(x0, y0, x1, y0), (x0, y1, x1, y1), (x0, y0, x0, y1), (x1, y0, x1, y1)]


Room = tuple[int, int]  # (row from bottom, column from left)
Door = tuple[Room, Room]


def _canonical_door(a: Room, b: Room) -> Door:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class RoomGeometry:
    grid_rows: int
    grid_cols: int
    room_size: float
    doorway_width: float
    doors: tuple[Door, ...]
    start_box: Box
    goal_box: Box
    obstacle_boxes: tuple[Box, ...] = ()
    wall_segments: tuple[tuple[float, float, float, float], ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ConfigurationError("grid dimensions must be positive")
        if self.room_size <= 0 or not 0 < self.doorway_width < self.room_size:
            raise ConfigurationError("need room_size > 0 and 0 < doorway_width < room_size")
        for a, b in self.doors:
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
                raise ConfigurationError(f"door between non-adjacent rooms {a} {b}")
            for r, c in (a, b):
                if not (0 <= r < self.grid_rows and 0 <= c < self.grid_cols):
                    raise ConfigurationError(f"door references room outside grid: {(r, c)}")
        if not self.wall_segments:
            object.__setattr__(self, "wall_segments", tuple(self._build_walls()))

    @property
    def width(self) -> float:
        return self.grid_cols * self.room_size

    @property
    def height(self) -> float:
        return self.grid_rows * self.room_size

    def room_box(self, room: Room) -> Box:
        r, c = room
        s = self.room_size
        return Box((c * s, r * s), ((c + 1) * s, (r + 1) * s))

    def room_center(self, room: Room) -> np.ndarray:
        return self.room_box(room).center

    def door_center(self, door: Door) -> np.ndarray:
        (r0, c0), (r1, c1) = door
        s = self.room_size
        if r0 == r1:  # horizontal neighbours share a vertical wall
            return np.array([max(c0, c1) * s, (r0 + 0.5) * s])
        return np.array([(c0 + 0.5) * s, max(r0, r1) * s])

    def room_of(self, p: Sequence[float]) -> Room:
        s = self.room_size
        c = min(max(int(p[0] // s), 0), self.grid_cols - 1)
        r = min(max(int(p[1] // s), 0), self.grid_rows - 1)
        return (r, c)

    def _build_walls(self) -> list[tuple[float, float, float, float]]:
        s, half = self.room_size, self.doorway_width / 2.0
        doors = {_canonical_door(*d) for d in self.doors}
        walls: list[tuple[float, float, float, float]] = []
        # vertical lines x = c*s, one segment per row, split at doors
        for c in range(self.grid_cols + 1):
            x = c * s
            for r in range(self.grid_rows):
                y0, y1 = r * s, (r + 1) * s
                door = 0 < c < self.grid_cols and _canonical_door((r, c - 1), (r, c)) in doors
                if door:
                    mid = (r + 0.5) * s
                    walls += [(x, y0, x, mid - half), (x, mid + half, x, y1)]
                else:
                    walls.append((x, y0, x, y1))
        for r in range(self.grid_rows + 1):
            y = r * s
            for c in range(self.grid_cols):
                x0, x1 = c * s, (c + 1) * s
                door = 0 < r < self.grid_rows and _canonical_door((r - 1, c), (r, c)) in doors
                if door:
                    mid = (c + 0.5) * s
                    walls += [(x0, y, mid - half, y), (mid + half, y, x1, y)]
                else:
                    walls.append((x0, y, x1, y))
        for box in self.obstacle_boxes:
            walls += box.edges()
        return walls

    def walls_array(self) -> np.ndarray:
        return np.ascontiguousarray(np.array(self.wall_segments, dtype=float).reshape(-1, 4))

    def inside_workspace(self, p: Sequence[float], tol: float = 0.0) -> bool:
        return -tol <= p[0] <= self.width + tol and -tol <= p[1] <= self.height + tol

    def inside_obstacle(self, p: Sequence[float]) -> bool:
        """Strict interior test; the obstacle boundary counts as free space."""
        return any(b.lo[0] < p[0] < b.hi[0] and b.lo[1] < p[1] < b.hi[1] for b in self.obstacle_boxes)


def all_doors(rows: int, cols: int) -> tuple[Door, ...]:
    doors: list[Door] = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                doors.append(((r, c), (r, c + 1)))
            if r + 1 < rows:
                doors.append(((r, c), (r + 1, c)))
    return tuple(doors)


@dataclass
class RoomsEnv:
    """Deterministic room navigation MDP.

    ``steps`` counts every simulated transition, whichever code path produced
    it; it is the single source of truth for sample budgets.
    """

    name: str
    geometry: RoomGeometry
    gamma: float = 0.95
    max_speed: float = 1.0
    contact_epsilon: float = 1e-6
    seed: int = 0
    state_dim: int = 2
    action_dim: int = 2
    steps: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in [0, 1)")
        if self.max_speed <= 0:
            raise ConfigurationError("max_speed must be positive")
        self.rng = np.random.default_rng(self.seed)
        self._walls = self.geometry.walls_array()
        self._goal = self.geometry.goal_box.as_array()

    # read-only views handed to the kernels
    @property
    def walls(self) -> np.ndarray:
        return self._walls

    @property
    def goal(self) -> np.ndarray:
        return self._goal

    @property
    def start_box(self) -> Box:
        return self.geometry.start_box

    @property
    def goal_box(self) -> Box:
        return self.geometry.goal_box

    def fork(self, seed: int | None = None) -> "RoomsEnv":
        """Independent copy with a fresh step counter (used for evaluation)."""
        return replace(self, seed=self.seed if seed is None else seed, steps=0)

    def sample_initial(self, rng: np.random.Generator | None = None, n: int | None = None) -> np.ndarray:
        rng = self.rng if rng is None else rng
        b = self.geometry.start_box
        size = (2,) if n is None else (n, 2)
        return rng.uniform(b.lo, b.hi, size=size)

    def in_goal(self, s: Sequence[float]) -> bool:
        return self.geometry.goal_box.contains(s)

    def _check(self, s, a) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=float)
        a = np.asarray(a, dtype=float)
        if s.shape[-1] != 2 or a.shape[-1] != 2:
            raise InvalidInputError("states and actions are two dimensional")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(a))):
            raise InvalidInputError("non-finite state or action")
        return s, a

    def step_many(self, s: np.ndarray, a: np.ndarray, count: bool = True) -> np.ndarray:
        s, a = self._check(s, a)
        s2 = np.ascontiguousarray(np.atleast_2d(s))
        a2 = np.ascontiguousarray(np.atleast_2d(a))
        out = _kernels.step_batch(s2, a2, self._walls, self._goal, self.max_speed, self.contact_epsilon)
        if count:
            self.steps += len(s2)
        return out.reshape(s.shape)

    def step(self, s: Sequence[float], a: Sequence[float]) -> np.ndarray:
        return self.step_many(np.asarray(s, dtype=float), np.asarray(a, dtype=float))

    def reward(self, s: Sequence[float], a: Sequence[float]) -> float:
        s, a = self._check(s, a)
        if self.in_goal(s):
            return 0.0
        return 1.0 if self.in_goal(self.step_many(s, a, count=False)) else 0.0


# Default layouts ------------------------------------------------------------

ROOM_SIZE = 8.0
DOORWAY_WIDTH = 2.0
OBSTACLE_HALF_WIDTH_FRACTION = 0.35


def default_geometry(name: str, room_size: float = ROOM_SIZE, doorway_width: float = DOORWAY_WIDTH,
                     obstacle_half_width: float | None = None) -> RoomGeometry:
    """Geometry for one of the named layouts.

    Start: a doorway-sized square at the bottom-left room center. Goal: a
    doorway-sized square in the top-right room, shifted toward that room's
    lower doorway so that the approach through the room below is the
    shortest one.
    """
    if name in ("nine_rooms", "nine_rooms_obstacle"):
        n = 3
    elif name == "sixteen_rooms":
        n = 4
    else:
        raise ConfigurationError(f"unknown environment {name!r}")
    s, half = room_size, doorway_width / 2.0
    start = Box.around(((0.5) * s, (0.5) * s), half)
    top = n - 1
    goal_center = ((top + 0.75) * s, (top + 0.4375) * s)
    goal = Box.around(goal_center, half)
    obstacles: tuple[Box, ...] = ()
    if name == "nine_rooms_obstacle":
        hw = OBSTACLE_HALF_WIDTH_FRACTION * s if obstacle_half_width is None else obstacle_half_width
        if not 0 < hw < s / 2 - half:
            raise ConfigurationError("obstacle must fit inside the middle room without covering doorways")
        obstacles = (Box.around((1.5 * s, 1.5 * s), hw),)
    return RoomGeometry(
        grid_rows=n, grid_cols=n, room_size=s, doorway_width=doorway_width,
        doors=all_doors(n, n), start_box=start, goal_box=goal, obstacle_boxes=obstacles,
    )


ENV_NAMES = ("nine_rooms", "sixteen_rooms", "nine_rooms_obstacle")
_FLOAT_KEYS = ("room_size", "doorway_width", "obstacle_half_width", "gamma", "max_speed", "contact_epsilon")


def build_env(name: str, config: dict | None = None, seed: int = 0) -> RoomsEnv:
    """Build a named environment; ``config`` overrides geometry and dynamics keys."""
    if name not in ENV_NAMES:
        raise ConfigurationError(f"unknown environment {name!r}; expected one of {ENV_NAMES}")
    cfg = dict(config or {})
    unknown = set(cfg) - set(_FLOAT_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown geometry keys: {sorted(unknown)}")
    try:
        cfg = {k: float(v) for k, v in cfg.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad geometry value: {exc}") from None
    geom = default_geometry(
        name,
        room_size=cfg.get("room_size", ROOM_SIZE),
        doorway_width=cfg.get("doorway_width", DOORWAY_WIDTH),
        obstacle_half_width=cfg.get("obstacle_half_width"),
    )
    return RoomsEnv(
        name=name, geometry=geom,
        gamma=cfg.get("gamma", 0.95),
        max_speed=cfg.get("max_speed", 1.0),
        contact_epsilon=cfg.get("contact_epsilon", 1e-6),
        seed=seed,
    )


def read_geometry_overrides(path: str | Path, section: str = "env") -> dict:
    """Read ``key = value`` pairs from ``[section]`` of an INI-style file."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigurationError(f"cannot read config file {path}")
    if not parser.has_section(section):
        return {}
    return {k: v for k, v in parser.items(section) if k in _FLOAT_KEYS}


def micro_step(env: RoomsEnv, s: Iterable[float], a: Iterable[float], substeps: int = 100000) -> np.ndarray:
    """Brute-force reference: advance in tiny increments and stop before a crossing.

    Only used by tests; accurate to ``speed / substeps``.
    """
    s = np.asarray(s, dtype=float)
    v, th = float(np.clip(a[0], 0, env.max_speed)), float(a[1])
    if env.in_goal(s):
        return s.copy()
    d = np.array([math.cos(th), math.sin(th)]) * v / substeps
    p = s.copy()
    for _ in range(substeps):
        q = p + d
        if _crosses_any(env.walls, p, q):
            return p
        p = q
    return p


def _crosses_any(walls: np.ndarray, p: np.ndarray, q: np.ndarray) -> bool:
    for x1, y1, x2, y2 in walls:
        if x1 == x2:
            if (p[0] <= x1 <= q[0] and q[0] > p[0]) or (p[0] >= x1 >= q[0] and q[0] < p[0]):
                t = (x1 - p[0]) / (q[0] - p[0])
                y = p[1] + t * (q[1] - p[1])
                if y1 <= y <= y2:
                    return True
        else:
            if (p[1] <= y1 <= q[1] and q[1] > p[1]) or (p[1] >= y1 >= q[1] and q[1] < p[1]):
                t = (y1 - p[1]) / (q[1] - p[1])
                x = p[0] + t * (q[0] - p[0])
                if x1 <= x <= x2:
                    return True
    return False
