"""Trust-region local search producing feasible prices with good revenue.

Each step maximizes the linearized revenue ``g @ p`` over the intersection
of an l1 ball around the current point, the price box and ``A p >= b``.
Improving steps are accepted and the radius is reset; failed steps shrink
the radius tenfold until two consecutive values agree within ``theta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lp import LinearProgram, LpStatus, solve_lp
from .model import MixedLogitInstance, expected_revenue, revenue_gradient


@dataclass(frozen=True)
class LocalSearchConfig:
    theta: float = 1e-8
    initial_radius: float = 1.0
    radius_shrink: float = 0.1
    min_radius: float = 1e-9
    seed: int = 0
    max_steps: int = 200_000

    def __post_init__(self):
        if not (self.theta > 0 and self.initial_radius > 0 and self.min_radius > 0):
            raise ValueError("theta, initial_radius and min_radius must be positive")
        if not (0 < self.radius_shrink < 1):
            raise ValueError("radius_shrink must lie in (0, 1)")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


@dataclass
class LocalSearchResult:
    """Outcome of one search; unpacks as ``(prices, value)``."""

    prices: np.ndarray
    value: float
    n_steps: int = 0
    accepted_values: list = field(default_factory=list)
    converged: bool = False

    def __iter__(self):
        return iter((self.prices, self.value))


class InfeasibleRegion(ValueError):
    """The box has no point satisfying ``A p >= b``."""


def _bounds(inst, lb, ub):
    lb = inst.price_lb if lb is None else np.asarray(lb, dtype=float)
    ub = inst.price_ub if ub is None else np.asarray(ub, dtype=float)
    return lb, ub


def trust_region_lp(g, p_k, r, lb, ub, A=None, b=None) -> LinearProgram:
    """LP over ``(p, s)``: max ``g p`` s.t. ``s >= |p - p_k|``, ``sum s <= r``, box, ``A p >= b``."""
    g = np.asarray(g, dtype=float)
    p_k = np.asarray(p_k, dtype=float)
    m = g.size
    eye = np.eye(m)
    rows = [np.hstack([-eye, eye]), np.hstack([eye, eye]), np.hstack([np.zeros(m), np.ones(m)])[None]]
    senses = [">="] * m + [">="] * m + ["<="]
    rhs = [-p_k, p_k, [r]]
    if A is not None and A.shape[0]:
        rows.append(np.hstack([A, np.zeros((A.shape[0], m))]))
        senses += [">="] * A.shape[0]
        rhs.append(b)
    return LinearProgram(
        objective=np.concatenate([g, np.zeros(m)]),
        A=np.vstack(rows),
        senses=senses,
        rhs=np.concatenate([np.ravel(x) for x in rhs]),
        lb=np.concatenate([lb, np.zeros(m)]),
        ub=np.concatenate([ub, np.full(m, np.inf)]),
    )


def _greedy_step(g, p_k, r, lb, ub):
    # without A-rows the LP is a fractional knapsack: spend the radius on the
    # coordinates with the largest |g| first
    p = p_k.copy()
    budget = r
    for i in np.argsort(-np.abs(g), kind="stable"):
        if budget <= 0 or g[i] == 0:
            break
        room = ub[i] - p[i] if g[i] > 0 else p[i] - lb[i]
        move = min(budget, max(room, 0.0))
        p[i] += move if g[i] > 0 else -move
        budget -= move
    return p


def trust_region_step(inst: MixedLogitInstance, p_k, r: float, lb=None, ub=None,
                      gradient=None, use_lp: bool = False) -> np.ndarray:
    """Maximizer of the linearized revenue inside the l1 trust region.

    ``lb``/``ub`` override the instance box (node boxes in branch-and-bound).
    Without linear constraints a closed-form greedy solution is used unless
    ``use_lp`` is set.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    lb, ub = _bounds(inst, lb, ub)
    p_k = np.asarray(p_k, dtype=float)
    g = revenue_gradient(inst, p_k) if gradient is None else np.asarray(gradient, dtype=float)
    if inst.A is None and not use_lp:
        return _greedy_step(g, p_k, r, lb, ub)
    sol = solve_lp(trust_region_lp(g, p_k, r, lb, ub, inst.A, inst.b))
    if sol.status == LpStatus.INFEASIBLE:
        raise InfeasibleRegion("trust-region LP infeasible; start point is not feasible")
    if sol.status != LpStatus.OPTIMAL:
        raise ArithmeticError(f"trust-region LP failed: {sol.status.value} {sol.message}")
    return np.clip(sol.x[: g.size], lb, ub)


def random_feasible_point(inst: MixedLogitInstance, rng: np.random.Generator, lb=None, ub=None,
                          max_tries: int = 10_000) -> np.ndarray:
    """Uniform draw from the box, rejected until ``A p >= b`` holds.

    When rejection keeps failing (thin polytopes) a feasible vertex from an LP
    with a random objective is returned instead.  Raises ``InfeasibleRegion``
    when the box misses the polytope entirely.
    """
    lb, ub = _bounds(inst, lb, ub)
    if inst.A is None:
        return rng.uniform(lb, ub)
    for _ in range(max_tries):
        p = rng.uniform(lb, ub)
        if inst.is_feasible(p, tol=0.0):
            return p
    lp = LinearProgram(rng.normal(size=lb.size), inst.A, [">="] * inst.A.shape[0], inst.b, lb, ub)
    sol = solve_lp(lp)
    if sol.status != LpStatus.OPTIMAL:
        raise InfeasibleRegion("no point of the box satisfies the linear constraints")
    return np.clip(sol.x, lb, ub)


def local_search(inst: MixedLogitInstance, config: Optional[LocalSearchConfig] = None, p0=None,
                 lb=None, ub=None, rng: Optional[np.random.Generator] = None) -> LocalSearchResult:
    """Run the trust-region search from ``p0`` or from a random feasible point.

    ``rng`` overrides ``config.seed`` for the random start.  The returned point
    is the best one seen; ``converged`` tells whether the stop came from the
    ``theta`` test rather than the radius floor or the step budget.
    """
    cfg = config or LocalSearchConfig()
    lb, ub = _bounds(inst, lb, ub)
    if p0 is None:
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        p_best = random_feasible_point(inst, rng, lb, ub)
    else:
        p_best = np.asarray(p0, dtype=float).copy()
        if not inst.is_feasible(p_best, lb=lb, ub=ub):
            raise ValueError("starting point is not feasible")
    f_best = expected_revenue(inst, p_best)
    accepted = [f_best]
    r0 = cfg.initial_radius
    r = r0
    f_trial = np.inf
    steps = 0
    converged = False
    while True:
        if abs(f_trial - f_best) <= cfg.theta:
            converged = True
            break
        if r < cfg.min_radius or steps >= cfg.max_steps:
            break
        p_trial = trust_region_step(inst, p_best, r, lb, ub)
        f_trial = expected_revenue(inst, p_trial)
        steps += 1
        while f_trial > f_best and steps < cfg.max_steps:
            p_best, f_best = p_trial, f_trial
            accepted.append(f_best)
            r = r0
            p_trial = trust_region_step(inst, p_best, r, lb, ub)
            f_trial = expected_revenue(inst, p_trial)
            steps += 1
        if f_trial > f_best:
            p_best, f_best = p_trial, f_trial
            accepted.append(f_best)
        r *= cfg.radius_shrink
    return LocalSearchResult(p_best, f_best, steps, accepted, converged)
