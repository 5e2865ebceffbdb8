"""Exact ground truth on small deterministic gridworlds.

Cells are addressed ``(row, col)``; the continuous coordinate of a cell is
its center ``(col + 0.5, row + 0.5)`` so that region boxes and sampled start
states can be shared with the continuous estimation code. Regions are
rectangles of cells.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .abstraction import AbstractSpec, SubgoalRegion
from .avi import AbstractPolicy, check_contraction, extract_policy, interval_vi, suboptimality_bound
from .env import Box, ConfigurationError
from .estimation import IntervalADP, RolloutOutcome, epsilons

ACTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))  # up, down, right, left in (drow, dcol)
Rect = tuple[int, int, int, int]  # row0, col0, row1, col1 inclusive


@dataclass
class TabularInstance:
    height: int
    width: int
    blocked: np.ndarray
    rects: list[Rect]
    edges: list[tuple[int, int]]
    initial_id: int
    goal_id: int
    gamma: float
    cells: list[tuple[int, int]] = field(init=False)
    index: dict[tuple[int, int], int] = field(init=False)
    next: np.ndarray = field(init=False)
    region_of: np.ndarray = field(init=False)
    spec: AbstractSpec = field(init=False)

    def __post_init__(self) -> None:
        self.blocked = np.asarray(self.blocked, dtype=bool)
        self.cells = [(r, c) for r in range(self.height) for c in range(self.width) if not self.blocked[r, c]]
        self.index = {rc: i for i, rc in enumerate(self.cells)}
        n = len(self.cells)
        self.region_of = np.full(n, -1, dtype=np.int64)
        for k, (r0, c0, r1, c1) in enumerate(self.rects):
            for r in range(r0, r1 + 1):
                for c in range(c0, c1 + 1):
                    i = self.index.get((r, c))
                    if i is None:
                        raise ConfigurationError(f"region {k} covers a blocked cell {(r, c)}")
                    if self.region_of[i] >= 0:
                        raise ConfigurationError(f"regions {self.region_of[i]} and {k} overlap")
                    self.region_of[i] = k
        self.next = np.empty((n, len(ACTIONS)), dtype=np.int64)
        for i, (r, c) in enumerate(self.cells):
            for a, (dr, dc) in enumerate(ACTIONS):
                j = self.index.get((r + dr, c + dc), i)
                self.next[i, a] = i if self.region_of[i] == self.goal_id else j
        regions = tuple(SubgoalRegion.from_box(k, self.rect_box(rect)) for k, rect in enumerate(self.rects))
        self.spec = AbstractSpec(regions, tuple(self.edges), self.initial_id, self.goal_id, "tabular")

    # geometry helpers --------------------------------------------------------
    @staticmethod
    def rect_box(rect: Rect) -> Box:
        r0, c0, r1, c1 = rect
        return Box((c0 + 0.25, r0 + 0.25), (c1 + 0.75, r1 + 0.75))

    @property
    def n_states(self) -> int:
        return len(self.cells)

    def coord(self, i: int) -> np.ndarray:
        r, c = self.cells[i]
        return np.array([c + 0.5, r + 0.5])

    def state_at(self, p) -> int:
        return self.index[(int(np.floor(p[1])), int(np.floor(p[0])))]

    def members(self, region: int) -> np.ndarray:
        return np.flatnonzero(self.region_of == region)

    def is_goal(self, i: int) -> bool:
        return self.region_of[i] == self.goal_id

    def reward(self, i: int, a: int) -> float:
        return 1.0 if (not self.is_goal(i) and self.is_goal(self.next[i, a])) else 0.0

    # option execution ----------------------------------------------------------
    def run_option(self, table: np.ndarray, source: int, i: int, horizon: int | None = None):
        """Follow ``table`` from state ``i`` until entering a non-source region.

        Returns ``(terminal_state or None, steps, discounted_reward)``. A
        deterministic run that has not terminated after ``n_states`` steps
        never will.
        """
        cap = self.n_states + 1 if horizon is None else horizon
        s, g, rew = i, 1.0, 0.0
        for t in range(1, cap + 1):
            a = int(table[s])
            rew += g * self.reward(s, a)
            g *= self.gamma
            s = int(self.next[s, a])
            reg = self.region_of[s]
            if reg >= 0 and reg != source:
                return s, t, rew
        return None, cap, rew

    def option_rollouts(self, spec, options, edge, starts, horizon):
        """Estimation hook: lets the sampling estimators run on this instance."""
        out = []
        for p in np.atleast_2d(starts):
            i = self.state_at(p)
            term, t, rew = self.run_option(options[edge], edge[0], i, horizon)
            region = None if term is None else int(self.region_of[term])
            out.append(RolloutOutcome(tuple(map(float, p)), region, t, rew))
        return out

    # serialization ---------------------------------------------------------------
    def to_dict(self) -> dict:
        rows = ["".join("#" if self.blocked[r, c] else "." for c in range(self.width))
                for r in range(self.height)]
        return {"height": self.height, "width": self.width, "gamma": self.gamma, "rows": rows,
                "rects": [list(r) for r in self.rects], "edges": [list(e) for e in self.edges],
                "initial_id": self.initial_id, "goal_id": self.goal_id}

    @classmethod
    def from_dict(cls, d: dict) -> "TabularInstance":
        blocked = np.array([[ch == "#" for ch in row] for row in d["rows"]], dtype=bool)
        return cls(int(d["height"]), int(d["width"]), blocked, [tuple(r) for r in d["rects"]],
                   [tuple(e) for e in d["edges"]], int(d["initial_id"]), int(d["goal_id"]), float(d["gamma"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TabularInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class OracleOptions:
    """Edge -> action table over all states."""

    tables: dict[tuple[int, int], np.ndarray]

    def __getitem__(self, edge) -> np.ndarray:
        return self.tables[tuple(edge)]

    def __contains__(self, edge) -> bool:
        return tuple(edge) in self.tables

    def available(self, spec: AbstractSpec) -> np.ndarray:
        return np.array([e in self.tables for e in spec.edges], dtype=bool)


def shortest_path_options(inst: TabularInstance) -> OracleOptions:
    """Per edge, the policy reaching the target in the fewest steps.

    Cells of any region other than the source end the option, so they are
    never passed through. Ties go to the lowest action index; states that
    cannot reach the target take action 0.
    """
    tables = {}
    n = inst.n_states
    preds: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        for a in range(len(ACTIONS)):
            preds[inst.next[i, a]].append(i)
    for src, dst in inst.spec.edges:
        dist = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
        q = deque()
        for i in inst.members(dst):
            dist[i] = 0
            q.append(i)
        while q:
            x = q.popleft()
            for p in preds[x]:
                reg = inst.region_of[p]
                if reg >= 0 and reg != src:
                    continue  # an option passing through p would already have stopped
                if dist[p] > dist[x] + 1:
                    dist[p] = dist[x] + 1
                    q.append(p)
        table = np.zeros(n, dtype=np.int64)
        for i in range(n):
            best = None
            for a in range(len(ACTIONS)):
                d = dist[inst.next[i, a]]
                if best is None or d < best:
                    best, table[i] = d, a
        tables[(src, dst)] = table
    return OracleOptions(tables)


def _outcomes(inst: TabularInstance, options: OracleOptions):
    """(edge index, state) -> (terminal state or None, steps, reward)."""
    res = {}
    for o, edge in enumerate(inst.spec.edges):
        if edge not in options:
            continue
        for i in inst.members(edge[0]):
            res[(o, int(i))] = inst.run_option(options[edge], edge[0], int(i))
    return res


def exact_option_vi(inst: TabularInstance, options: OracleOptions, tol: float = 1e-15,
                    max_iters: int = 1_000_000) -> tuple[np.ndarray, dict]:
    """Optimal values over option policies on region states (NaN elsewhere)."""
    outs = _outcomes(inst, options)
    V = np.where(inst.region_of >= 0, 0.0, np.nan)
    by_state: dict[int, list[int]] = {}
    for (o, i) in outs:
        by_state.setdefault(i, []).append(o)
    Q: dict[tuple[int, int], float] = {}
    for _ in range(max_iters):
        Vn = V.copy()
        for i, opts in by_state.items():
            best = 0.0
            for o in opts:
                term, t, rew = outs[(o, i)]
                q = rew + (inst.gamma ** t * V[term] if term is not None else 0.0)
                Q[(i, o)] = q
                best = q if q > best else best
            Vn[i] = best
        diff = np.nanmax(np.abs(Vn - V)) if np.any(inst.region_of >= 0) else 0.0
        V = Vn
        if diff <= tol:
            break
    return V, Q


def exact_tables(inst: TabularInstance, options: OracleOptions) -> IntervalADP:
    spec = inst.spec
    outs = _outcomes(inst, options)
    n_opt, n_reg = spec.n_edges, spec.n_regions
    T_inf = np.zeros((n_opt, n_reg))
    T_sup = np.zeros((n_opt, n_reg))
    R_inf = np.zeros(n_opt)
    R_sup = np.zeros(n_opt)
    counts = np.zeros(n_opt, dtype=np.int64)
    avail = options.available(spec)
    for o, edge in enumerate(spec.edges):
        if not avail[o]:
            continue
        members = inst.members(edge[0])
        T = np.zeros((len(members), n_reg))
        R = np.zeros(len(members))
        for k, i in enumerate(members):
            term, t, rew = outs[(o, int(i))]
            if term is not None:
                T[k, inst.region_of[term]] = inst.gamma ** t
            R[k] = rew
        T_inf[o], T_sup[o] = T.min(0), T.max(0)
        R_inf[o], R_sup[o] = R.min(), R.max()
        counts[o] = len(members)
    return IntervalADP(inst.gamma, n_reg, spec.edge_sources(), spec.edge_targets(), avail,
                       T_inf=T_inf, T_sup=T_sup, R_inf=R_inf, R_sup=R_sup, counts=counts)


def exact_policy_value(inst: TabularInstance, options: OracleOptions,
                       policy: AbstractPolicy) -> tuple[np.ndarray, float]:
    """Value of the hierarchical policy on region states, and its mean over initial states."""
    spec = inst.spec
    V = np.where(inst.region_of >= 0, 0.0, np.nan)
    for i0 in np.flatnonzero(inst.region_of >= 0):
        s, elapsed, total = int(i0), 0, 0.0
        seen = set()
        while True:
            reg = int(inst.region_of[s])
            if reg == spec.goal_id or s in seen:
                break
            seen.add(s)
            o = policy.option_for(reg)
            if o is None or spec.edges[o] not in options:
                break
            term, t, rew = inst.run_option(options[spec.edges[o]], reg, s)
            total += inst.gamma ** elapsed * rew
            if term is None:
                break
            elapsed += t
            s = int(term)
        V[i0] = total
    J = float(np.mean(V[inst.members(spec.initial_id)]))
    return V, J


def concrete_vi(inst: TabularInstance, tol: float = 1e-15, max_iters: int = 1_000_000) -> np.ndarray:
    """Optimal state values over all (primitive) policies."""
    n = inst.n_states
    R = np.array([[inst.reward(i, a) for a in range(len(ACTIONS))] for i in range(n)])
    V = np.zeros(n)
    for _ in range(max_iters):
        Vn = np.max(R + inst.gamma * V[inst.next], axis=1)
        d = float(np.max(np.abs(Vn - V)))
        V = Vn
        if d <= tol:
            break
    return V


def optimal_J(inst: TabularInstance) -> float:
    return float(np.mean(concrete_vi(inst)[inst.members(inst.initial_id)]))


# Lemma checks ----------------------------------------------------------------------

@dataclass
class LemmaReport:
    """Outcome of the abstraction bounds on one instance; ``*_ok`` is None when not applicable."""

    n_regions: int
    gamma: float
    eps_T: float
    eps_R: float
    contracts: bool
    bound: float
    sandwich_ok: bool
    gap_ok: bool | None
    option_gap_ok: bool | None
    concrete_gap_ok: bool | None
    decay_ok: bool
    worst_sandwich: float
    worst_gap: float
    worst_decay: float


def _decay_slack(residuals: list[float], factor: float, floor: float) -> float:
    """Largest ``r_{k+1}/r_k - factor`` over steps whose residual is above ``floor``."""
    worst = -np.inf
    for a, b in zip(residuals, residuals[1:]):
        if a > floor:
            worst = max(worst, b / a - factor)
    return float(worst)


def check_lemmas(inst: TabularInstance, options: OracleOptions | None = None, tol: float = 1e-9,
                 vi_tol: float = 1e-13, decay_floor: float = 1e-10, decay_tol: float = 1e-12,
                 concrete: bool = False) -> LemmaReport:
    """Compare interval value iteration on exact tables against enumerated ground truth.

    Checks that the lower/upper abstract values bracket the best option
    values of every member state, that their gap and the conservative
    policy's loss respect the closed-form bound, and that the recorded
    residuals shrink at the contraction rate. With ``concrete`` the loss is
    also measured against plain value iteration over primitive actions.
    Residual ratios are only taken while the residual exceeds
    ``decay_floor``; below that they measure rounding noise.
    """
    options = shortest_path_options(inst) if options is None else options
    spec = inst.spec
    V_opt, _ = exact_option_vi(inst, options)
    adp = exact_tables(inst, options)
    vi = interval_vi(adp, tol=vi_tol)
    eps_T, eps_R = epsilons(adp)
    n = spec.n_regions
    contracts, factor = check_contraction(n, eps_T, inst.gamma)
    bound = suboptimality_bound(n, eps_T, eps_R, inst.gamma)
    worst_s = -np.inf
    for r in range(n):
        m = inst.members(r)
        if vi.converged_inf:
            worst_s = max(worst_s, float(vi.V_inf[r] - V_opt[m].min()))
        if vi.converged_sup:
            worst_s = max(worst_s, float(V_opt[m].max() - vi.V_sup[r]))
    gap_ok = option_ok = concrete_ok = None
    worst_g = -np.inf
    # every row of either table sums to at most the factor, so the rate applies
    # whether or not the assumption holds; an expanding upper run is cut off
    worst_d = max(_decay_slack(vi.residuals_inf, factor, decay_floor),
                  _decay_slack(vi.residuals_sup, factor, decay_floor))
    decay_ok = worst_d <= decay_tol
    if contracts:
        gap = vi.V_sup - vi.V_inf
        worst_g = float(np.max(gap - bound))
        gap_ok = worst_g <= tol
        pol = extract_policy(vi.Q_inf, adp.sources, adp.available, provenance="conservative", edges=spec.edges)
        _, J = exact_policy_value(inst, options, pol)
        J_opt = float(np.mean(V_opt[inst.members(spec.initial_id)]))
        option_ok = J >= J_opt - bound - tol
        if concrete:
            concrete_ok = J >= optimal_J(inst) - bound - tol
    return LemmaReport(n, inst.gamma, eps_T, eps_R, contracts, bound, bool(worst_s <= tol), gap_ok, option_ok,
                       concrete_ok, decay_ok, float(worst_s), float(worst_g), float(worst_d))


# Instance generators ---------------------------------------------------------------

def random_instance(seed: int, max_states: int = 200, gamma: float | None = None) -> TabularInstance:
    """Random gridworld with rectangular regions and a random edge subset."""
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        h = int(rng.integers(3, 13))
        w = int(rng.integers(3, min(16, max_states // h) + 1))
        if h * w > max_states:
            continue
        blocked = rng.random((h, w)) < rng.uniform(0.0, 0.25)
        n_reg = int(rng.integers(2, 7))
        rects: list[Rect] = []
        used = np.zeros((h, w), dtype=bool)
        for _ in range(200):
            if len(rects) == n_reg:
                break
            rh, rw = int(rng.integers(1, 3)), int(rng.integers(1, 3))
            r0, c0 = int(rng.integers(0, h - rh + 1)), int(rng.integers(0, w - rw + 1))
            block = (slice(r0, r0 + rh), slice(c0, c0 + rw))
            if blocked[block].any() or used[block].any():
                continue
            used[block] = True
            rects.append((r0, c0, r0 + rh - 1, c0 + rw - 1))
        if len(rects) < 2:
            continue
        p_edge = rng.uniform(0.4, 1.0)
        goal = 1
        edges = [(a, b) for a in range(len(rects)) for b in range(len(rects))
                 if a != b and a != goal and rng.random() < p_edge]
        g = float(rng.uniform(0.3, 0.95)) if gamma is None else gamma
        return TabularInstance(h, w, blocked, rects, edges, 0, goal, g)
    raise RuntimeError("could not generate an instance")


def singleton_instance(seed: int, gamma: float | None = None) -> TabularInstance:
    """Random instance whose regions are single cells (an exactly Markov abstraction)."""
    base = random_instance(seed, gamma=gamma)
    rects = [(r0, c0, r0, c0) for (r0, c0, _, _) in base.rects]
    return TabularInstance(base.height, base.width, base.blocked, rects, base.edges,
                           base.initial_id, base.goal_id, base.gamma)


def bottleneck_instance(seed: int, gamma: float | None = None) -> TabularInstance:
    """Rooms separated by walls; every doorway cell is its own region.

    Any path from the start room to the goal room crosses doorway cells, so
    the regions are bottlenecks by construction.
    """
    rng = np.random.default_rng(seed)
    nr, nc = int(rng.integers(1, 3)), int(rng.integers(2, 4))
    m = int(rng.integers(2, 5))  # interior cells per room side
    h, w = nr * (m + 1) + 1, nc * (m + 1) + 1
    blocked = np.ones((h, w), dtype=bool)
    for R in range(nr):
        for C in range(nc):
            r0, c0 = R * (m + 1) + 1, C * (m + 1) + 1
            blocked[r0:r0 + m, c0:c0 + m] = False
    # spanning tree over rooms plus random extra doors
    rooms = [(R, C) for R in range(nr) for C in range(nc)]
    adj = [((R, C), (R, C + 1)) for R in range(nr) for C in range(nc - 1)] + \
          [((R, C), (R + 1, C)) for R in range(nr - 1) for C in range(nc)]
    order = rng.permutation(len(adj))
    parent = {r: r for r in rooms}

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    doors = []
    for k in order:
        a, b = adj[k]
        if find(a) != find(b):
            parent[find(a)] = find(b)
            doors.append((a, b))
        elif rng.random() < 0.5:
            doors.append((a, b))
    rects: list[Rect] = []
    room_members: dict[tuple[int, int], list[int]] = {r: [] for r in rooms}
    for a, b in doors:
        (R0, C0), (R1, C1) = a, b
        off = int(rng.integers(0, m))
        if R0 == R1:
            cell = (R0 * (m + 1) + 1 + off, C1 * (m + 1))
        else:
            cell = (R1 * (m + 1), C0 * (m + 1) + 1 + off)
        blocked[cell] = False
        room_members[a].append(len(rects))
        room_members[b].append(len(rects))
        rects.append((cell[0], cell[1], cell[0], cell[1]))

    def place(room, size):
        R, C = room
        for _ in range(100):
            rh, rw = size
            r0 = R * (m + 1) + 1 + int(rng.integers(0, m - rh + 1))
            c0 = C * (m + 1) + 1 + int(rng.integers(0, m - rw + 1))
            cand = (r0, c0, r0 + rh - 1, c0 + rw - 1)
            # keep door-adjacent cells free so doorways stay reachable
            if all(not _touches(cand, d) for d in rects):
                return cand
        return None

    start_room, goal_room = rooms[0], rooms[-1]
    start = place(start_room, (int(rng.integers(1, min(2, m - 1) + 1)), int(rng.integers(1, 3))))
    goal = place(goal_room, (1, int(rng.integers(1, 3))))
    if start is None or goal is None:
        return bottleneck_instance(seed + 7919, gamma)
    start_id, goal_id = len(rects), len(rects) + 1
    rects += [start, goal]
    room_members[start_room].append(start_id)
    room_members[goal_room].append(goal_id)
    edges = set()
    for members in room_members.values():
        for a in members:
            for b in members:
                if a != b and a != goal_id:
                    edges.add((a, b))
    g = float(rng.uniform(0.3, 0.8)) if gamma is None else gamma
    return TabularInstance(h, w, blocked, rects, sorted(edges), start_id, goal_id, g)


def _touches(a: Rect, b: Rect) -> bool:
    """True if rectangles overlap or are 4-adjacent."""
    return not (a[2] + 1 < b[0] or b[2] + 1 < a[0] or a[3] + 1 < b[1] or b[3] + 1 < a[1]) and not (
        (a[2] + 1 == b[0] or b[2] + 1 == a[0]) and (a[3] + 1 == b[1] or b[3] + 1 == a[1]))
