"""Value iteration over abstract decision processes and the associated bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .estimation import ExpectedADP, IntervalADP


DIVERGED = 1e150  # values this large mean the recursion is expanding


class StructuralError(ValueError):
    """A region was asked for a policy choice but has no options."""


@dataclass
class VIResult:
    V: np.ndarray
    Q: np.ndarray
    iterations: int
    converged: bool
    residuals: list[float] = field(default_factory=list)


@dataclass
class IntervalVIResult:
    V_inf: np.ndarray
    V_sup: np.ndarray
    Q_inf: np.ndarray
    Q_sup: np.ndarray
    iterations: int
    converged: bool
    residuals_inf: list[float] = field(default_factory=list)
    residuals_sup: list[float] = field(default_factory=list)
    converged_inf: bool = False
    converged_sup: bool = False


def _backup(T: np.ndarray, R: np.ndarray, V: np.ndarray, sources: np.ndarray, avail: np.ndarray,
            n_regions: int) -> tuple[np.ndarray, np.ndarray]:
    Q = R + T @ V
    Q = np.where(avail, Q, -np.inf)
    Vn = np.full(n_regions, -np.inf)
    np.maximum.at(Vn, sources, Q)
    Vn[~np.isfinite(Vn)] = 0.0
    return Vn, Q


def _iterate(T, R, sources, avail, n_regions, tol, max_iters):
    V = np.zeros(n_regions)
    Q = np.where(avail, R.astype(float), -np.inf)
    res: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            Vn, Q = _backup(T, R, V, sources, avail, n_regions)
            r = float(np.max(np.abs(Vn - V))) if n_regions else 0.0
        res.append(r)
        V = Vn
        if r < tol:
            converged = True
            break
        if not math.isfinite(r) or float(np.max(np.abs(V), initial=0.0)) > DIVERGED:
            break
    return V, Q, it, converged, res


def interval_vi(adp: IntervalADP, gamma: float | None = None, tol: float = 1e-8,
                max_iters: int = 100_000) -> IntervalVIResult:
    """Decoupled lower and upper value iterations from the zero vector.

    ``gamma`` is accepted for interface symmetry; discounting is already
    folded into the transition tables.
    """
    lo = _iterate(adp.T_inf, adp.R_inf, adp.sources, adp.available, adp.n_regions, tol, max_iters)
    hi = _iterate(adp.T_sup, adp.R_sup, adp.sources, adp.available, adp.n_regions, tol, max_iters)
    return IntervalVIResult(lo[0], hi[0], lo[1], hi[1], max(lo[2], hi[2]), lo[3] and hi[3], lo[4], hi[4],
                            lo[3], hi[3])


def expected_vi(adp: ExpectedADP, gamma: float | None = None, tol: float = 1e-8,
                max_iters: int = 100_000) -> VIResult:
    V, Q, it, conv, res = _iterate(adp.T_D, adp.R_D, adp.sources, adp.available, adp.n_regions, tol, max_iters)
    return VIResult(V, Q, it, conv, res)


@dataclass
class AbstractPolicy:
    """Region id -> option index (row of the ADP tables, i.e. edge index)."""

    choice: dict[int, int]
    provenance: str = "expected"
    edges: tuple[tuple[int, int], ...] = ()

    def option_for(self, region: int) -> int | None:
        return self.choice.get(region)

    def edge_for(self, region: int) -> tuple[int, int] | None:
        o = self.choice.get(region)
        return None if o is None else self.edges[o]

    def plan(self, start: int, goal: int, max_len: int = 1000) -> list[int]:
        """Region sequence obtained by following each chosen edge's target."""
        path = [start]
        seen = {start}
        cur = start
        while cur != goal and len(path) < max_len:
            e = self.edge_for(cur)
            if e is None:
                break
            cur = e[1]
            path.append(cur)
            if cur in seen:
                break
            seen.add(cur)
        return path

    def save(self, path: str | Path, values: Sequence[Sequence[float]] | None = None) -> None:
        lines = [f"# provenance {self.provenance}", "region option source target" + (" values" if values else "")]
        regions = sorted(self.choice)
        for r in regions:
            o = self.choice[r]
            a, b = self.edges[o]
            extra = "" if values is None else " " + " ".join(repr(float(v[r])) for v in values)
            lines.append(f"{r} {o} {a} {b}{extra}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path, edges: Sequence[tuple[int, int]]) -> "AbstractPolicy":
        choice = {}
        prov = "expected"
        for line in Path(path).read_text().splitlines():
            if line.startswith("# provenance"):
                prov = line.split()[-1]
                continue
            if not line or line.startswith("#") or line.startswith("region"):
                continue
            f = line.split()
            choice[int(f[0])] = int(f[1])
        return cls(choice, prov, tuple(tuple(e) for e in edges))


def extract_policy(Q: np.ndarray, sources: np.ndarray, available: np.ndarray | None = None,
                   regions: Iterable[int] | None = None, provenance: str = "expected",
                   edges: Sequence[tuple[int, int]] = ()) -> AbstractPolicy:
    """Per-region argmax over that region's options; ties go to the lowest index."""
    Q = np.asarray(Q, dtype=float)
    sources = np.asarray(sources)
    avail = np.ones(len(Q), dtype=bool) if available is None else np.asarray(available, dtype=bool)
    wanted = sorted(set(int(s) for s in sources[avail])) if regions is None else list(regions)
    choice: dict[int, int] = {}
    for r in wanted:
        idx = np.flatnonzero((sources == r) & avail)
        if idx.size == 0:
            raise StructuralError(f"region {r} has no options")
        choice[r] = int(idx[int(np.argmax(Q[idx]))])
    return AbstractPolicy(choice, provenance, tuple(tuple(e) for e in edges))


def check_contraction(n_regions: int, epsilon_T: float, gamma: float) -> tuple[bool, float]:
    factor = gamma + n_regions * epsilon_T
    return n_regions * epsilon_T < 1.0 - gamma, factor


def suboptimality_bound(n_regions: int, epsilon_T: float, epsilon_R: float, gamma: float) -> float:
    """Gap between the conservative policy and the best option policy; inf if not contracting."""
    holds, factor = check_contraction(n_regions, epsilon_T, gamma)
    if not holds:
        return math.inf
    return ((1 - gamma) * epsilon_R + n_regions * epsilon_T) / ((1 - gamma) * (1 - factor))
