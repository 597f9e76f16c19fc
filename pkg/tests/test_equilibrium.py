import math

import numpy as np
import pytest

from conftest import random_instance, random_policy
from echofeed.equilibrium import (
    ConvergenceError,
    build_operator,
    fixed_point,
    iteration_bound,
    solve_equilibrium,
    solve_with_recommendations,
    spectral_bound,
)
from echofeed.graph import ActivityRates, InactiveLeaderError, RecommendationPolicy, UserGraph
from oracles import dense_equilibrium


def no_repost_instance():
    graph = UserGraph.from_edges(("a", "b", "c"), [(0,), (1,), (2,), (0,)],
                                 [(0, 1), (0, 2), (1, 2), (2, 3), (3, 0), (1, 3)])
    rates = ActivityRates.from_party_rates(
        [[0.3, 0.1, 0.0], [0.0, 2.0, 0.5], [0.2, 0.2, 0.2], [1.0, 0.0, 0.0]], [0.0] * 4)
    return graph, rates


@pytest.mark.parametrize("budget, expected", [(0.5, 0.25), (0.0, 0.5)])
def test_operator_k2_coefficient(k2, budget, expected):
    op = build_operator(*k2, budget)
    assert op.coefficients[0, 1] == pytest.approx(expected, abs=1e-15)
    assert op.coefficients[0, 0] == 0.0
    assert spectral_bound(op) == pytest.approx(expected, abs=1e-15)


def test_operator_without_reposts_is_zero():
    op = build_operator(*no_repost_instance())
    assert op.coefficients.nnz == 0
    assert spectral_bound(op) == 0.0


def test_operator_rejects_inactive_leaders():
    graph = UserGraph.from_edges(("a", "b"), [(0,), (1,)], [(0, 1), (1, 0)])
    rates = ActivityRates.from_party_rates([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0])
    with pytest.raises(InactiveLeaderError, match="inactive leader set"):
        build_operator(graph, rates)


def test_operator_rejects_full_budget(k2):
    with pytest.raises(ValueError):
        build_operator(*k2, 1.0)


def test_k2_equilibrium(k2):
    state = solve_equilibrium(*k2)
    np.testing.assert_allclose(state.p[:, 0], [1 / 3, 2 / 3], atol=1e-10)
    np.testing.assert_allclose(state.row_sums(), 1.0, atol=1e-12)


def test_no_repost_closed_form():
    graph, rates = no_repost_instance()
    F = graph.leaders.toarray()
    expected = (F @ rates.selfpost_by_party) / (F @ rates.selfpost)[:, None]
    np.testing.assert_allclose(solve_equilibrium(graph, rates).p, expected, atol=1e-12)


def test_identical_uniform_selfposts_give_uniform_feeds():
    graph, _ = random_instance(4, n_max=40, s_max=4)
    s = graph.n_parties
    rng = np.random.default_rng(0)
    rates = ActivityRates.from_party_rates(np.full((graph.n_users, s), 0.4), rng.uniform(0, 2, graph.n_users))
    np.testing.assert_allclose(solve_equilibrium(graph, rates).p, 1.0 / s, atol=1e-10)


def test_k2_recommendations_even_mix(k2):
    policy = RecommendationPolicy([[1.5, 0.5], [0.5, 1.5]], 0.5)
    state = solve_with_recommendations(*k2, policy)
    np.testing.assert_allclose(state.p, 0.5, atol=1e-10)
    assert state.meta["budget_consistent"]


def test_k2_recommendations_small_budget(k2):
    policy = RecommendationPolicy([[0.5, 0.0], [0.0, 0.5]], 0.2)
    state = solve_with_recommendations(*k2, policy)
    np.testing.assert_allclose(state.p[:, 0], [3 / 7, 4 / 7], atol=1e-10)
    np.testing.assert_allclose(state.p, dense_equilibrium(*k2, 0.2, policy.rates), atol=1e-10)


def test_zero_policy_matches_plain_solve():
    graph, rates = random_instance(11, n_max=60)
    plain = solve_equilibrium(graph, rates)
    rec = solve_with_recommendations(graph, rates, RecommendationPolicy.zeros(graph.n_users, graph.n_parties, 0.0))
    np.testing.assert_allclose(rec.p, plain.p, atol=1e-10)


def _residual(graph, rates, state, budget=0.0, x=None):
    op = build_operator(graph, rates, budget)
    extra = None if x is None else op.injection[:, None] * x
    return float(np.max(np.abs(state.p - op.apply(state.p, extra))))


@pytest.mark.parametrize("seed", range(6))
def test_random_instances_against_dense_solve(seed):
    graph, rates = random_instance(100 + seed, n_max=120)
    tol = 1e-10
    state = solve_equilibrium(graph, rates, tol=tol)
    np.testing.assert_allclose(state.p, dense_equilibrium(graph, rates), atol=1e-8, rtol=0)
    assert _residual(graph, rates, state) <= 10 * tol
    assert state.p.min() >= 0
    np.testing.assert_allclose(state.row_sums(), 1.0, atol=1e-9)

    budget = [0.02, 0.1, 0.3, 0.7, 0.05, 0.5][seed]
    policy = random_policy(graph, rates, budget, seed)
    rec = solve_with_recommendations(graph, rates, policy, tol=tol)
    np.testing.assert_allclose(rec.p, dense_equilibrium(graph, rates, budget, policy.rates), atol=1e-8, rtol=0)
    assert _residual(graph, rates, rec, budget, policy.rates) <= 10 * tol
    assert rec.p.min() >= 0
    np.testing.assert_allclose(rec.row_sums(), 1.0, atol=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_iteration_count_within_contraction_bound(seed):
    graph, rates = random_instance(200 + seed, n_max=100)
    tol = 1e-10
    state = solve_equilibrium(graph, rates, tol=tol, trace=True)
    bound = state.meta["spectral_bound"]
    assert bound < 1
    assert state.meta["iterations"] <= iteration_bound(bound, tol)
    assert state.meta["iterations"] <= math.log(tol) / math.log(bound) + 1
    res = state.meta["residuals"]
    # successive updates shrink at least by the contraction factor
    assert all(b <= bound * a + 1e-15 for a, b in zip(res, res[1:]))


def test_inconsistent_budget_flagged_not_normalised(k2):
    policy = RecommendationPolicy([[3.0, 0.0], [0.0, 0.0]], 0.5)
    state = solve_with_recommendations(*k2, policy)
    assert not state.meta["budget_consistent"]
    assert state.meta["max_budget_gap"] == pytest.approx(2.0)
    np.testing.assert_allclose(state.p, dense_equilibrium(*k2, 0.5, policy.rates), atol=1e-10)
    assert abs(state.row_sums() - 1.0).max() > 0.1


def test_convergence_error_carries_residual(k2):
    with pytest.raises(ConvergenceError) as info:
        solve_equilibrium(*k2, max_iter=3)
    assert info.value.iterations == 3
    assert info.value.residual > 0


def test_fixed_point_history():
    import scipy.sparse as sp

    m = sp.csr_matrix(np.array([[0.0, 0.5], [0.5, 0.0]]))
    p, iters, res, hist = fixed_point(m, np.array([0.5, 0.5]), np.zeros(2), tol=1e-12, record=True)
    np.testing.assert_allclose(p, [1.0, 1.0], atol=1e-11)
    assert len(hist) == iters and hist[-1] == res < 1e-12
