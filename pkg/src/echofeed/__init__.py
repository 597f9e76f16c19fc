"""Newsfeed equilibrium, echo-chamber metrics and diversity-maximising recommendations."""

__version__ = "0.1.0"

from .equilibrium import (  # noqa: E402
    ConvergenceError,
    LinearOperator,
    build_operator,
    solve_equilibrium,
    solve_with_recommendations,
    spectral_bound,
)
from .estimation import ReplayConfig, compute_echo_profile, estimate_rates, replay_empirical  # noqa: E402
from .graph import (  # noqa: E402
    ActivityRates,
    DatasetError,
    EventLog,
    NewsfeedState,
    PartySet,
    RecommendationPolicy,
    UserGraph,
    largest_scc,
    load_dataset,
    load_graph,
    preprocess,
    validate,
)
from .metrics import aggregate, compare, phi  # noqa: E402
from .optimizer import (  # noqa: E402
    OptimizerConfig,
    budget_total,
    gradient,
    maximize_diversity,
    no_diffusion_mix,
    optimize_no_diffusion,
    project_budget_simplex,
)
from .simulator import SimConfig, convergence_sweep, simulate  # noqa: E402
from .synthetic import SyntheticSpec, generate  # noqa: E402
