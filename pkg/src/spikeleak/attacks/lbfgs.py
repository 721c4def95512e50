"""Limited-memory BFGS with a backtracking Armijo line search.

Operates on flat float64 vectors. The objective returns ``(value, gradient)``.
An optional projection (box clamping) is applied to every trial point, and
sufficient decrease is measured along the projected step so accepted steps
never increase the objective.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import torch

Objective = Callable[[torch.Tensor], tuple]

CURVATURE_EPS = 1e-10


@dataclass
class LBFGSState:
    history: int = 100
    lr: float = 1.0
    max_line_search: int = 25
    c1: float = 1e-4
    s: deque = field(default_factory=deque)
    y: deque = field(default_factory=deque)
    f: float | None = None
    g: torch.Tensor | None = None
    evaluations: int = 0
    stalled: bool = False

    def reset(self) -> None:
        """Forget curvature pairs and the cached objective value."""
        self.s.clear()
        self.y.clear()
        self.f = None
        self.g = None

    def invalidate(self) -> None:
        """The iterate was changed externally; re-evaluate before the next step."""
        self.f = None
        self.g = None


def two_loop_direction(g: torch.Tensor, s_hist, y_hist) -> torch.Tensor:
    """Quasi-Newton direction ``-H g`` from the stored (s, y) pairs.

    With no pairs this is plain steepest descent. The initial Hessian
    approximation is scaled by ``s'y / y'y`` of the newest pair.
    """
    q = -g.clone()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / torch.dot(y, s)
        a = rho * torch.dot(s, q)
        q -= a * y
        alphas.append((a, rho))
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= torch.dot(s, y) / torch.dot(y, y)
    for (s, y), (a, rho) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * torch.dot(y, q)
        q += (a - b) * s
    return q


def lbfgs_step(
    objective: Objective,
    x: torch.Tensor,
    state: LBFGSState,
    project: Callable[[torch.Tensor], torch.Tensor] | None = None,
) -> torch.Tensor:
    """Take one L-BFGS iteration from ``x`` and return the new iterate.

    If the line search exhausts ``max_line_search`` halvings the step is zero,
    ``x`` is returned unchanged and ``state.stalled`` is set.
    """
    if state.f is None:
        state.f, state.g = objective(x)
        state.evaluations += 1
    f, g = state.f, state.g
    state.stalled = False

    d = two_loop_direction(g, state.s, state.y)
    gd = float(torch.dot(g, d))
    if gd >= 0:
        # stale curvature produced an ascent direction
        state.s.clear()
        state.y.clear()
        d = -g
        gd = float(torch.dot(g, d))
    if gd == 0:
        state.stalled = True
        return x

    if state.s:
        t = state.lr
    else:
        # no curvature information yet: unit-length steepest-descent step
        t = state.lr / float(torch.linalg.vector_norm(g))

    for _ in range(state.max_line_search):
        x_new = x + t * d
        if project is not None:
            x_new = project(x_new)
        step = x_new - x
        f_new, g_new = objective(x_new)
        state.evaluations += 1
        decrease = min(float(torch.dot(g, step)), 0.0)
        if f_new <= f + state.c1 * decrease and f_new == f_new:
            break
        t *= 0.5
    else:
        state.stalled = True
        return x

    yv = g_new - g
    if float(torch.dot(step, yv)) > CURVATURE_EPS:
        state.s.append(step)
        state.y.append(yv)
        while len(state.s) > state.history:
            state.s.popleft()
            state.y.popleft()
    state.f, state.g = f_new, g_new
    return x_new
