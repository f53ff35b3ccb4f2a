"""Per-goal design optimisation through a frozen surrogate, plus the
goal -> design callables used by evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..nn import Mlp
from ..optim import BfgsConfig, bfgs_minimize

log = logging.getLogger(__name__)


@dataclass
class DoResult:
    design: np.ndarray
    objective: float
    initial_objective: float
    iterations: int
    termination: str
    warning: bool  # True when the line search gave up early


def direct_optimize(task, goal, decoder: Mlp, reg_weight=None, config: BfgsConfig | None = None) -> DoResult:
    """BFGS on the design (or its pre-sigmoid variables) for one goal.

    Returns the best iterate seen, which is never worse than the start.
    """
    kw = {} if reg_weight is None else {"reg_weight": reg_weight}
    x0, objective, to_design = task.do_problem(goal, decoder, **kw)
    f0, _ = objective(x0)
    best = [f0, np.array(x0, dtype=np.float64)]

    def track(x, f, g):
        if f < best[0]:
            best[0], best[1] = f, x.copy()

    res = bfgs_minimize(objective, x0, config or BfgsConfig(), callback=track)
    if res.f_opt < best[0]:
        best = [res.f_opt, res.x_opt]
    warn = res.termination == "line_search_failed"
    if warn:
        log.warning("line search failed after %d iterations; returning best iterate", res.iterations)
    return DoResult(to_design(best[1]), float(best[0]), float(f0), res.iterations, res.termination, warn)


def encoder_method(task, encoder: Mlp):
    return lambda goal: task.encode(encoder, goal)


def do_method(task, decoder: Mlp, reg_weight=None, config: BfgsConfig | None = None):
    return lambda goal: direct_optimize(task, goal, decoder, reg_weight, config).design


def identity_method(goal):
    """Use the goal itself as the design (fiber task: no compensation)."""
    return np.array(goal, dtype=np.float64)
