"""Subgoal regions, abstract edge graphs and the region layouts used in experiments."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .env import Box, ConfigurationError, Door, RoomsEnv, _canonical_door


@dataclass(frozen=True)
class SubgoalRegion:
    id: int
    box: Box
    center: tuple[float, float]

    def __post_init__(self) -> None:
        c = tuple(float(v) for v in self.center)
        object.__setattr__(self, "center", c)
        if not self.box.contains(c):
            raise ConfigurationError(f"region {self.id}: center {c} outside its box")

    @classmethod
    def from_box(cls, rid: int, box: Box) -> "SubgoalRegion":
        return cls(rid, box, tuple(box.center))


@dataclass(frozen=True)
class AbstractSpec:
    regions: tuple[SubgoalRegion, ...]
    edges: tuple[tuple[int, int], ...]
    initial_id: int
    goal_id: int
    name: str = "custom"
    labels: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "edges", tuple(sorted({(int(a), int(b)) for a, b in self.edges})))

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def boxes_array(self) -> np.ndarray:
        return np.ascontiguousarray(np.stack([r.box.as_array() for r in self.regions]))

    def edge_sources(self) -> np.ndarray:
        return np.array([a for a, _ in self.edges], dtype=np.int64)

    def edge_targets(self) -> np.ndarray:
        return np.array([b for _, b in self.edges], dtype=np.int64)

    def edge_index(self, src: int, dst: int) -> int:
        try:
            return self.edges.index((src, dst))
        except ValueError:
            raise KeyError(f"no edge {src}->{dst}") from None

    def out_edges(self, rid: int) -> list[int]:
        return [i for i, (a, _) in enumerate(self.edges) if a == rid]

    def region_of(self, p) -> int | None:
        for r in self.regions:
            if r.box.contains(p):
                return r.id
        return None

    def label(self, rid: int) -> str:
        return self.labels[rid] if self.labels else str(rid)

    def with_endpoints(self, initial_id: int, goal_id: int) -> "AbstractSpec":
        """Same regions, new start/goal; edges out of the new goal are dropped."""
        edges = [e for e in self.edges if e[0] != goal_id]
        return AbstractSpec(self.regions, tuple(edges), initial_id, goal_id, self.name, self.labels)

    # serialization -----------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "initial_id": self.initial_id,
            "goal_id": self.goal_id,
            "regions": [
                {"id": r.id, "lo": list(r.box.lo), "hi": list(r.box.hi), "center": list(r.center),
                 **({"label": self.labels[r.id]} if self.labels else {})}
                for r in self.regions
            ],
            "edges": [list(e) for e in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AbstractSpec":
        try:
            regions = tuple(
                SubgoalRegion(int(r["id"]), Box(tuple(r["lo"]), tuple(r["hi"])), tuple(r["center"]))
                for r in d["regions"]
            )
            labels = tuple(r.get("label", str(r["id"])) for r in d["regions"]) if any(
                "label" in r for r in d["regions"]) else ()
            return cls(regions, tuple(tuple(e) for e in d["edges"]), int(d["initial_id"]),
                       int(d["goal_id"]), d.get("name", "custom"), labels)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"malformed spec: {exc}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "AbstractSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot load spec {path}: {exc}") from None


@dataclass
class ValidationReport:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        return "valid" if self.ok else "\n".join(self.violations)


def boxes_disjoint(a: Box, b: Box) -> bool:
    return not a.intersects(b)


def validate(spec: AbstractSpec) -> ValidationReport:
    v: list[str] = []
    ids = [r.id for r in spec.regions]
    if ids != list(range(len(ids))):
        v.append(f"region ids must be 0..{len(ids) - 1} in order, got {ids}")
    known = set(ids)
    for i, a in enumerate(spec.regions):
        for b in spec.regions[i + 1:]:
            if not boxes_disjoint(a.box, b.box):
                v.append(f"regions {a.id} and {b.id} overlap")
    for src, dst in spec.edges:
        if src not in known or dst not in known:
            v.append(f"edge {src}->{dst} references an unknown region")
        if src == dst:
            v.append(f"self edge at region {src}")
        if src == spec.goal_id:
            v.append(f"edge {src}->{dst} leaves the goal region")
    if spec.initial_id not in known:
        v.append(f"initial region {spec.initial_id} unknown")
    if spec.goal_id not in known:
        v.append(f"goal region {spec.goal_id} unknown")
    if spec.initial_id == spec.goal_id:
        v.append("initial and goal regions coincide")
    return ValidationReport(v)


# Layouts ---------------------------------------------------------------------

# Labelling of the 3x3 layout: start 3, goal 9, doorways numbered so the
# southern route reads 1, 2, 5, 8 and the diagonal one 1, 4, 7.
_NINE_ROOM_DOOR_IDS: dict[Door, int] = {
    ((0, 0), (1, 0)): 0,
    ((0, 0), (0, 1)): 1,
    ((0, 1), (0, 2)): 2,
    ((0, 1), (1, 1)): 4,
    ((0, 2), (1, 2)): 5,
    ((1, 0), (1, 1)): 6,
    ((1, 1), (1, 2)): 7,
    ((1, 2), (2, 2)): 8,
    ((1, 0), (2, 0)): 10,
    ((1, 1), (2, 1)): 11,
    ((2, 0), (2, 1)): 12,
    ((2, 1), (2, 2)): 13,
}


def _require_rooms(env: RoomsEnv) -> None:
    if not hasattr(env, "geometry"):
        raise ConfigurationError("region layouts need a rooms environment")


def doorway_spec(env: RoomsEnv) -> AbstractSpec:
    """One doorway-sized square per doorway plus start and goal squares."""
    _require_rooms(env)
    g = env.geometry
    doors = sorted(_canonical_door(*d) for d in g.doors)
    half = g.doorway_width / 2.0
    standard = g.grid_rows == 3 and g.grid_cols == 3 and set(doors) == set(_NINE_ROOM_DOOR_IDS)
    if standard:
        ids = dict(_NINE_ROOM_DOOR_IDS)
        start_id, goal_id = 3, 9
    else:
        ids = {d: i + 1 for i, d in enumerate(doors)}
        start_id, goal_id = 0, len(doors) + 1
    n = len(doors) + 2
    boxes: dict[int, Box] = {start_id: g.start_box, goal_id: g.goal_box}
    rooms_of: dict[int, set] = {start_id: {g.room_of(g.start_box.center)}, goal_id: {g.room_of(g.goal_box.center)}}
    labels = [""] * n
    labels[start_id], labels[goal_id] = "start", "goal"
    for d in doors:
        rid = ids[d]
        boxes[rid] = Box.around(g.door_center(d), half)
        rooms_of[rid] = {d[0], d[1]}
        labels[rid] = f"door{d[0][0]}{d[0][1]}-{d[1][0]}{d[1][1]}"
    regions = tuple(SubgoalRegion.from_box(i, boxes[i]) for i in range(n))
    edges = [
        (a, b) for a in range(n) for b in range(n)
        if a != b and a != goal_id and rooms_of[a] & rooms_of[b]
    ]
    return AbstractSpec(regions, tuple(edges), start_id, goal_id, "doorways", tuple(labels))


def _room_graph_spec(env: RoomsEnv, box_for_room, name: str) -> AbstractSpec:
    g = env.geometry
    rooms = [(r, c) for r in range(g.grid_rows) for c in range(g.grid_cols)]
    rid = {room: i for i, room in enumerate(rooms)}
    start_room = g.room_of(g.start_box.center)
    goal_room = g.room_of(g.goal_box.center)
    regions = []
    for room in rooms:
        if room == goal_room:
            box = g.goal_box
        elif room == start_room and name == "room_centers":
            box = g.start_box
        else:
            box = box_for_room(room)
        regions.append(SubgoalRegion.from_box(rid[room], box))
    edges = []
    for a, b in g.doors:
        for x, y in ((a, b), (b, a)):
            if x != goal_room:
                edges.append((rid[x], rid[y]))
    labels = tuple(f"room{r}{c}" for r, c in rooms)
    return AbstractSpec(tuple(regions), tuple(edges), rid[start_room], rid[goal_room], name, labels)


def room_center_spec(env: RoomsEnv) -> AbstractSpec:
    """A doorway-sized square at each room center; goal room uses the goal square."""
    _require_rooms(env)
    g = env.geometry
    half = g.doorway_width / 2.0
    return _room_graph_spec(env, lambda room: Box.around(g.room_center(room), half), "room_centers")


FULL_ROOM_MARGIN = 0.5


def full_room_spec(env: RoomsEnv, margin: float = FULL_ROOM_MARGIN) -> AbstractSpec:
    """Each room box shrunk by ``margin``; the goal room is represented by the goal square."""
    _require_rooms(env)
    g = env.geometry
    return _room_graph_spec(env, lambda room: g.room_box(room).shrink(margin), "full_rooms")


def _knn(points: np.ndarray, queries: np.ndarray, k: int, exclude_self: bool) -> list[list[int]]:
    out = []
    for i, q in enumerate(queries):
        d = np.hypot(points[:, 0] - q[0], points[:, 1] - q[1])
        if exclude_self:
            d[i] = np.inf
        order = np.argsort(d, kind="stable")
        out.append([int(j) for j in order[:k]])
    return out


def random_spec(env: RoomsEnv, n_points: int = 20, k_neighbors: int = 7, region_half_width: float = 1.0,
                seed: int = 0, max_retries: int = 200) -> AbstractSpec:
    """Random square regions wired to their k nearest neighbours (symmetrised)."""
    _require_rooms(env)
    if n_points < 2 or not 0 < k_neighbors < n_points:
        raise ConfigurationError("need n_points >= 2 and 0 < k_neighbors < n_points")
    g = env.geometry
    rng = np.random.default_rng(seed)
    taken = [g.start_box, g.goal_box]
    boxes: list[Box] = []
    for _ in range(n_points):
        hw = region_half_width
        while True:
            placed = None
            for _ in range(max_retries):
                c = rng.uniform((hw, hw), (g.width - hw, g.height - hw))
                if g.inside_obstacle(c):
                    continue
                b = Box.around(c, hw)
                if all(not b.intersects(t) for t in taken):
                    placed = b
                    break
            if placed is not None:
                break
            hw *= 0.8
            if hw < 1e-3:
                raise ConfigurationError("cannot place random regions without overlap")
        boxes.append(placed)
        taken.append(placed)
    centers = np.array([b.center for b in boxes])
    edges = set()
    for i, nbrs in enumerate(_knn(centers, centers, k_neighbors, True)):
        for j in nbrs:
            edges.add((i, j))
            edges.add((j, i))
    start_id, goal_id = n_points, n_points + 1
    for j in _knn(centers, g.start_box.center[None], k_neighbors, False)[0]:
        edges.add((start_id, j))
        edges.add((j, start_id))
    for j in _knn(centers, g.goal_box.center[None], k_neighbors, False)[0]:
        edges.add((j, goal_id))
    regions = tuple(SubgoalRegion.from_box(i, b) for i, b in enumerate(boxes + [g.start_box, g.goal_box]))
    labels = tuple([f"p{i}" for i in range(n_points)] + ["start", "goal"])
    return AbstractSpec(regions, tuple(edges), start_id, goal_id, "random", labels)


def knn_edges(centers: Iterable, k: int) -> set[tuple[int, int]]:
    """Directed k-nearest-neighbour edges (not symmetrised); exposed for tests."""
    pts = np.asarray(list(centers), dtype=float)
    return {(i, j) for i, nbrs in enumerate(_knn(pts, pts, k, True)) for j in nbrs}


def build_spec(env: RoomsEnv, kind: str, **kw) -> AbstractSpec:
    if kind == "doorways":
        return doorway_spec(env)
    if kind == "room_centers":
        return room_center_spec(env)
    if kind == "full_rooms":
        return full_room_spec(env)
    if kind == "random":
        return random_spec(env, **kw)
    raise ConfigurationError(f"unknown region layout {kind!r}")
