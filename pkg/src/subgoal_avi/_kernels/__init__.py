"""Rollout kernel backend selection.

The compiled extension is preferred; the numpy module is used when the
extension is missing or when ``SUBGOAL_AVI_BACKEND=python`` is set.
"""
from __future__ import annotations

import os

from . import _rollout_py

_compiled = None
if os.environ.get("SUBGOAL_AVI_BACKEND", "").lower() != "python":
    try:
        from . import _rollout as _compiled  # type: ignore[attr-defined]
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None

_impl = _compiled if _compiled is not None else _rollout_py
BACKEND = "cython" if _compiled is not None else "python"

step_batch = _impl.step_batch
run_episodes = _impl.run_episodes


def available_backends() -> dict:
    """Map backend name to module for every importable implementation."""
    out = {"python": _rollout_py}
    if _compiled is not None:
        out["cython"] = _compiled
    else:
        try:
            from . import _rollout as mod  # type: ignore[attr-defined]

            out["cython"] = mod
        except ImportError:
            pass
    return out
