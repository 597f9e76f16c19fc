"""Steady-state feed composition as the fixed point of a sparse affine map.

For every party ``s`` the equilibrium column ``p[:, s]`` satisfies::

    p_s = A p_s + b_s + (1 - B) / c * x_s

with ``c[n]`` the total activity of ``n``'s leaders,
``A[n, k] = (1 - B) * repost[k] / c[n]`` for each leader ``k`` of ``n``,
``b_s[n] = (1 - B) * sum_k selfpost_by_party[k, s] / c[n]`` and ``x`` the
recommendation rates. ``B = 0`` and ``x = 0`` give the plain model without
recommendations. All parties share ``A``, so the ``S`` systems are iterated
together as one ``N x S`` block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import (
    ActivityRates,
    InactiveLeaderError,
    NewsfeedState,
    RecommendationPolicy,
    UserGraph,
    leader_activity,
)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
NEGATIVE_SLACK = 1e-12


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class LinearOperator:
    coefficients: sp.csr_matrix
    constant: np.ndarray
    budget: float
    leader_activity: np.ndarray

    @property
    def n_users(self):
        return self.constant.shape[0]

    @property
    def injection(self) -> np.ndarray:
        """Factor mapping recommendation rates into the fixed-point map."""
        return (1.0 - self.budget) / self.leader_activity

    def apply(self, p, extra=None):
        out = self.coefficients @ p + self.constant
        if extra is not None:
            out = out + extra
        return out


def build_operator(graph: UserGraph, rates: ActivityRates, budget: float = 0.0) -> LinearOperator:
    if not 0.0 <= budget < 1.0:
        raise ValueError(f"budget must lie in [0, 1), got {budget}")
    if rates.n_users != graph.n_users or rates.n_parties != graph.n_parties:
        raise ValueError("rates do not match the graph")
    c = leader_activity(graph, rates)
    if np.any(c <= 0):
        raise InactiveLeaderError("inactive leader set")
    scale = (1.0 - budget) / c
    coeff = (sp.diags(scale) @ graph.leaders @ sp.diags(rates.repost)).tocsr()
    coeff.eliminate_zeros()
    const = scale[:, None] * (graph.leaders @ rates.selfpost_by_party)
    return LinearOperator(coeff, np.asarray(const), float(budget), c)


def spectral_bound(op: LinearOperator) -> float:
    """Largest row sum of the coefficient matrix (bounds its spectral radius)."""
    if op.coefficients.nnz == 0:
        return 0.0
    return float(np.asarray(op.coefficients.sum(axis=1)).max())


def iteration_bound(bound: float, tol: float) -> float:
    """Iterations the sup-norm stopping rule can need from a start within distance 1."""
    if bound <= 0:
        return 2.0
    if bound >= 1:
        return math.inf
    return math.log(tol) / math.log(bound) + 2


def fixed_point(matrix, rhs, start, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, record=False):
    """Iterate ``p <- matrix @ p + rhs`` until the sup-norm update drops below ``tol``.

    Returns ``(p, iterations, residual, history)``; ``history`` lists the
    update norms when ``record`` is set.
    """
    p = np.array(start, dtype=float)
    history = []
    delta = math.inf
    for it in range(1, max_iter + 1):
        nxt = matrix @ p + rhs
        delta = float(np.max(np.abs(nxt - p))) if p.size else 0.0
        p = nxt
        if record:
            history.append(delta)
        if delta < tol:
            return p, it, delta, history
    raise ConvergenceError("fixed-point iteration did not converge", delta, max_iter)


def _finish(p, consistent):
    low = p.min() if p.size else 0.0
    if low < -NEGATIVE_SLACK:
        raise ValueError(f"equilibrium has negative entry {low:.3e}")
    if low < 0:
        p = np.maximum(p, 0.0)
        if consistent:
            p = p / p.sum(axis=1, keepdims=True)
    return p


def solve_equilibrium(graph, rates, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, trace=False) -> NewsfeedState:
    """Equilibrium feed composition without recommendations, by power iteration from ``1/S``."""
    op = build_operator(graph, rates, 0.0)
    start = np.full(op.constant.shape, 1.0 / graph.n_parties)
    p, iters, residual, history = fixed_point(op.coefficients, op.constant, start, tol, max_iter, trace)
    meta = {
        "iterations": iters,
        "residual": residual,
        "spectral_bound": spectral_bound(op),
        "budget": 0.0,
        "budget_consistent": True,
    }
    if trace:
        meta["residuals"] = history
    return NewsfeedState(_finish(p, True), meta=meta)


def budget_gap(policy: RecommendationPolicy, graph: UserGraph, rates: ActivityRates) -> np.ndarray:
    """Per-user difference between the recommended rate and the budget target."""
    target = policy.budget / (1.0 - policy.budget) * leader_activity(graph, rates)
    return policy.rates.sum(axis=1) - target


def is_budget_consistent(policy, graph, rates, tol=1e-9) -> bool:
    target = policy.budget / (1.0 - policy.budget) * leader_activity(graph, rates)
    return bool(np.all(np.abs(budget_gap(policy, graph, rates)) <= tol * np.maximum(1.0, target)))


def solve_with_recommendations(
    graph, rates, policy, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, trace=False, start=None
) -> NewsfeedState:
    """Equilibrium feed composition under a recommendation policy.

    Budget-inconsistent policies are solved as given and flagged in
    ``meta["budget_consistent"]``; their rows do not sum to one and are not
    renormalised.
    """
    if policy.rates.shape != (graph.n_users, graph.n_parties):
        raise ValueError("policy shape does not match graph")
    op = build_operator(graph, rates, policy.budget)
    rhs = op.constant + op.injection[:, None] * policy.rates
    if start is None:
        start = np.full(rhs.shape, 1.0 / graph.n_parties)
    p, iters, residual, history = fixed_point(op.coefficients, rhs, start, tol, max_iter, trace)
    gap = budget_gap(policy, graph, rates)
    consistent = is_budget_consistent(policy, graph, rates)
    meta = {
        "iterations": iters,
        "residual": residual,
        "spectral_bound": spectral_bound(op),
        "budget": policy.budget,
        "budget_consistent": consistent,
        "max_budget_gap": float(np.max(np.abs(gap))) if gap.size else 0.0,
    }
    if trace:
        meta["residuals"] = history
    return NewsfeedState(_finish(p, consistent), meta=meta)


def solver_trace(state: NewsfeedState) -> dict:
    """JSON-ready view of the solver metadata stored on a state."""
    keys = ("iterations", "residual", "spectral_bound", "budget", "budget_consistent", "max_budget_gap", "residuals")
    return {k: state.meta[k] for k in keys if k in state.meta}
