"""Budgeted recommendation rates maximising mean feed diversity.

The equilibrium is affine in the recommendation rates and mean diversity is
a concave quadratic of the equilibrium, so mean diversity is concave in the
rates and projected gradient ascent over the per-user budget simplices finds
the global maximum. The equilibrium is eliminated (solved for) instead of
being carried as a decision variable.

Internally each user's rates are written ``x[n] = total[n] * share[n]`` with
``share[n]`` on the unit simplex. In these coordinates the injection into the
fixed-point map is simply ``budget * share``, which keeps the problem well
scaled whatever the activity levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import (
    DEFAULT_TOL,
    build_operator,
    fixed_point,
    solve_equilibrium,
    solve_with_recommendations,
)
from .graph import ActivityRates, NewsfeedState, RecommendationPolicy, UserGraph, leader_activity
from .metrics import diversity


@dataclass(frozen=True)
class OptimizerConfig:
    budget: float
    max_iter: int = 2000
    tol: float = 1e-8
    step: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    expand: float = 1.2
    max_backtracks: int = 60
    solver_tol: float = 1e-13
    initial: str = "uniform"

    def __post_init__(self):
        if not 0.0 <= self.budget < 1.0:
            raise ValueError(f"budget must lie in [0, 1), got {self.budget}")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if not 0.0 < self.armijo < 1.0:
            raise ValueError("Armijo constant must lie in (0, 1)")
        if self.step <= 0 or self.expand < 1.0 or self.max_iter < 0 or self.tol <= 0:
            raise ValueError("invalid step-size schedule")
        if self.initial != "uniform":
            raise ValueError(f"unknown initial policy rule {self.initial!r}")


@dataclass
class OptimizationTrace:
    objective: list = field(default_factory=list)
    step: list = field(default_factory=list)
    pg_norm: list = field(default_factory=list)
    status: str = "running"

    @property
    def iterations(self):
        return len(self.step)

    def to_dict(self):
        return {
            "status": self.status,
            "iterations": self.iterations,
            "mean_diversity": list(self.objective),
            "step": list(self.step),
            "projected_gradient_norm": list(self.pg_norm),
        }


def budget_total(graph: UserGraph, rates: ActivityRates, budget: float, user: int | None = None):
    """Recommendation rate each user must receive so that a ``budget`` share of their feed input is curated."""
    if not 0.0 <= budget < 1.0:
        raise ValueError(f"budget must lie in [0, 1), got {budget}")
    c = leader_activity(graph, rates)
    if user is not None:
        c = c[user]
    if np.any(np.asarray(c) <= 0):
        raise ValueError("inactive leader set")
    return budget / (1.0 - budget) * c


def project_budget_simplex(v, total):
    """Euclidean projection onto ``{x >= 0, sum(x) = total}``, row-wise for 2-D input.

    Sort-and-threshold method: after sorting descending, the active prefix is
    the longest one whose running threshold stays below its smallest entry.
    """
    v = np.asarray(v, dtype=float)
    one_d = v.ndim == 1
    rows = np.atleast_2d(v)
    total = np.broadcast_to(np.asarray(total, dtype=float), (rows.shape[0],))
    if np.any(total < 0):
        raise ValueError("simplex total must be nonnegative")
    u = -np.sort(-rows, axis=1)
    css = np.cumsum(u, axis=1) - total[:, None]
    k = np.arange(1, rows.shape[1] + 1)
    active = np.maximum(np.count_nonzero(u - css / k > 0, axis=1), 1)
    theta = css[np.arange(rows.shape[0]), active - 1] / active
    out = np.maximum(rows - theta[:, None], 0.0)
    return out[0] if one_d else out


def _diversity_grad(p):
    s = p.shape[1]
    return s / (s - 1) * (1.0 - 2.0 * p)


def gradient(policy: RecommendationPolicy, graph: UserGraph, rates: ActivityRates, tol=1e-13,
             max_iter=100_000) -> np.ndarray:
    """Derivative of mean diversity with respect to every recommendation rate ``x[n, s]``.

    Uses the adjoint of the equilibrium map: one transposed solve per party
    (batched), scaled by each user's rate-to-equilibrium injection factor.
    """
    op = build_operator(graph, rates, policy.budget)
    state = solve_with_recommendations(graph, rates, policy, tol=tol, max_iter=max_iter)
    seed = _diversity_grad(state.p) / graph.n_users
    adj, *_ = fixed_point(op.coefficients.T.tocsr(), seed, seed, tol=tol, max_iter=max_iter)
    return adj * op.injection[:, None]


def _relative_solve(matrix, rhs, start, rel_tol, max_iter):
    scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
    if scale == 0.0 and (start is None or not np.any(start)):
        return np.zeros_like(rhs)
    if start is None:
        start = np.zeros_like(rhs)
    sol, *_ = fixed_point(matrix, rhs, start, tol=max(rel_tol * scale, 1e-300), max_iter=max_iter)
    return sol


def maximize_diversity(graph: UserGraph, rates: ActivityRates, cfg: OptimizerConfig, max_solver_iter=100_000):
    """Projected gradient ascent with Armijo backtracking on mean diversity.

    Returns ``(policy, state, trace)``. The policy meets the per-user budget
    exactly; when the iteration cap is hit the best iterate is returned with
    ``trace.status == "max_iter"``.
    """
    n, s = graph.n_users, graph.n_parties
    trace = OptimizationTrace()
    if cfg.budget == 0.0:
        state = solve_equilibrium(graph, rates, tol=DEFAULT_TOL, max_iter=max_solver_iter)
        trace.objective.append(float(diversity(state.p).mean()))
        trace.status = "zero_budget"
        return RecommendationPolicy.zeros(n, s, 0.0), state, trace

    B = cfg.budget
    op = build_operator(graph, rates, B)
    total = B / (1.0 - B) * op.leader_activity
    coeff = op.coefficients
    coeff_t = coeff.T.tocsr()

    share = np.full((n, s), 1.0 / s)
    p = _relative_solve(coeff, op.constant + B * share, np.full((n, s), 1.0 / s), cfg.solver_tol, max_solver_iter)
    objective = float(diversity(p).sum())
    adj = None
    step = cfg.step
    trace.objective.append(objective / n)
    trace.status = "max_iter"

    for _ in range(cfg.max_iter):
        seed = _diversity_grad(p)
        adj = _relative_solve(coeff_t, seed, adj if adj is not None else seed, cfg.solver_tol, max_solver_iter)
        grad = B * adj
        pg = float(np.max(np.abs(share - project_budget_simplex(share + grad, 1.0))))
        trace.pg_norm.append(pg)
        if pg <= cfg.tol:
            trace.status = "converged"
            break

        for _ in range(cfg.max_backtracks + 1):
            cand = project_budget_simplex(share + step * grad, 1.0)
            d = cand - share
            dp = _relative_solve(coeff, B * d, None, cfg.solver_tol, max_solver_iter)
            # exact change of the summed diversity for the step dp
            gain = float(s / (s - 1) * np.sum(dp * (1.0 - 2.0 * p - dp)))
            if gain >= cfg.armijo * float(np.sum(grad * d)):
                break
            step *= cfg.backtrack
        else:
            trace.status = "stalled"
            break

        share, p = cand, p + dp
        objective += gain
        trace.objective.append(objective / n)
        trace.step.append(step)
        step *= cfg.expand

    policy = RecommendationPolicy(total[:, None] * share, B)
    state = solve_with_recommendations(
        graph, rates, policy, tol=DEFAULT_TOL, max_iter=max_solver_iter, start=np.clip(p, 0.0, 1.0)
    )
    state.meta["optimizer_status"] = trace.status
    state.meta["non_unique_policy_note"] = (
        "the equilibrium and mean diversity are unique; the rates attaining them may not be"
    )
    return policy, state, trace


def no_diffusion_mix(p0: NewsfeedState, policy: RecommendationPolicy) -> NewsfeedState:
    """Feed composition if recommended items were never re-shared.

    Each feed becomes ``(1 - B) * p0 + B * shares`` where ``shares`` is the
    user's normalised recommendation mix.
    """
    if p0.shape != policy.rates.shape:
        raise ValueError("state and policy shapes differ")
    B = policy.budget
    if B == 0.0:
        return NewsfeedState(p0.p, p0.valid, meta={"model": "no_diffusion", "budget": 0.0})
    nu = policy.shares()
    if np.isnan(nu[p0.valid]).any():
        raise ValueError("policy has users with no recommendations")
    mixed = (1.0 - B) * p0.p + B * nu
    return NewsfeedState(mixed, p0.valid, meta={"model": "no_diffusion", "budget": B})


def optimize_no_diffusion(p0: NewsfeedState, graph: UserGraph, rates: ActivityRates, budget: float):
    """Best policy when recommendations are assumed never to spread.

    Each user's problem decouples: maximising the diversity of
    ``(1 - B) p0 + B nu`` over ``nu`` on the simplex is minimising
    ``|nu + (1 - B) / B * p0|``, i.e. a simplex projection.
    """
    totals = budget_total(graph, rates, budget)
    n, s = p0.shape
    if budget == 0.0:
        return RecommendationPolicy.zeros(n, s, 0.0)
    base = np.where(p0.valid[:, None], p0.p, 1.0 / s)
    nu = project_budget_simplex(-(1.0 - budget) / budget * base, 1.0)
    return RecommendationPolicy(totals[:, None] * nu, budget)


def budget_sweep(graph, rates, budgets, cfg_kwargs=None):
    """Optimise for each budget; returns ``{budget: (policy, state, trace)}``."""
    cfg_kwargs = dict(cfg_kwargs or {})
    return {b: maximize_diversity(graph, rates, OptimizerConfig(budget=b, **cfg_kwargs)) for b in budgets}


def relative_gain(values: dict) -> dict:
    """Improvement over the zero-budget value per unit of budget, for every positive budget."""
    base = values[0.0] if 0.0 in values else values[min(values)]
    return {b: (v - base) / b for b, v in sorted(values.items()) if b > 0 and not math.isnan(v)}
