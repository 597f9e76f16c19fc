import numpy as np
import pytest

from echofeed.graph import ActivityRates, UserGraph
from echofeed.synthetic import SyntheticSpec, generate


def make_k2():
    """Two users following each other, each posting only about their own party."""
    graph = UserGraph.from_edges(("a", "b"), [(0,), (1,)], [(0, 1), (1, 0)], user_ids=("1", "2"))
    rates = ActivityRates.from_party_rates([[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0])
    return graph, rates


@pytest.fixture
def k2():
    return make_k2()


def random_instance(seed, n_max=200, s_max=5):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, n_max + 1))
    s = int(rng.integers(2, s_max + 1))
    p_intra = float(rng.uniform(0.05, 0.5))
    p_inter = float(rng.uniform(0.0, p_intra))
    spec = SyntheticSpec(n, s, p_intra=p_intra, p_inter=p_inter, seed=seed,
                         selfpost_range=(0.05, 1.0), repost_range=(0.0, 3.0))
    return generate(spec)


def random_policy(graph, rates, budget, seed):
    from echofeed.graph import RecommendationPolicy
    from echofeed.optimizer import budget_total

    rng = np.random.default_rng(seed)
    shares = rng.dirichlet(np.ones(graph.n_parties), size=graph.n_users)
    return RecommendationPolicy(budget_total(graph, rates, budget)[:, None] * shares, budget)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
