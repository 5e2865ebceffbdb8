"""A set of option policies, one per abstract edge."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .abstraction import AbstractSpec
from .env import ConfigurationError
from .policy import MlpPolicy


@dataclass
class OptionSet:
    """Maps edge ``(source, target)`` to the policy realising it."""

    policies: dict[tuple[int, int], MlpPolicy] = field(default_factory=dict)

    @classmethod
    def initialize(cls, spec: AbstractSpec, seed: int, max_speed: float = 1.0) -> "OptionSet":
        ss = np.random.SeedSequence(seed)
        children = ss.spawn(spec.n_edges)
        return cls({e: MlpPolicy.initialize(np.random.default_rng(c), max_speed=max_speed)
                    for e, c in zip(spec.edges, children)})

    def __contains__(self, edge) -> bool:
        return tuple(edge) in self.policies

    def __getitem__(self, edge) -> MlpPolicy:
        return self.policies[tuple(edge)]

    def available(self, spec: AbstractSpec) -> np.ndarray:
        """Boolean mask over ``spec.edges``; warns once about missing options."""
        mask = np.array([e in self.policies for e in spec.edges], dtype=bool)
        if not mask.all():
            missing = [e for e, m in zip(spec.edges, mask) if not m]
            warnings.warn(f"no option for edges {missing}; they are dropped", stacklevel=2)
        return mask

    def copy(self) -> "OptionSet":
        return OptionSet({e: p.copy() for e, p in self.policies.items()})

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        index = []
        for (a, b), pol in sorted(self.policies.items()):
            name = f"option_{a}_{b}.bin"
            pol.save(d / name)
            index.append({"source": a, "target": b, "file": name})
        (d / "options.json").write_text(json.dumps(index, indent=1) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "OptionSet":
        d = Path(directory)
        try:
            index = json.loads((d / "options.json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot load options from {d}: {exc}") from None
        return cls({(int(r["source"]), int(r["target"])): MlpPolicy.load(d / r["file"]) for r in index})
