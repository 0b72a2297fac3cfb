"""Active sensing under stochastic deadlines: forward solver and preference inference."""

from .forward import (
    ConvergenceError,
    Lookahead,
    SolvedPolicy,
    TerminationMap,
    acquisition_q,
    bellman_apply,
    decision_q,
    generalized_q,
    gl_q,
    im_q,
    optimal_acquisition,
    optimal_decision,
    solve_optimal,
    surprise,
    suspense,
    termination_set,
)
from .inverse import (
    Lattice,
    PolicyCache,
    PosteriorChain,
    PosteriorModel,
    PriorSpec,
    compare_criteria,
    log_posterior,
    map_estimate,
    mcmc_sample,
    neighbor,
    replay_beliefs,
)
from .problem import (
    Criterion,
    DecisionProblem,
    Episode,
    Preferences,
    Step,
    empirical_risk,
    episode_loss,
    validate_episode,
    validate_preferences,
    validate_problem,
)
from .recognition import continual_update, mean_hazard, survival_prob, terminal_update
from .simplex import SimplexGrid, build_grid, interpolate
from .simulate import (
    EpisodeDataset,
    Strategy,
    average_risk,
    boltzmann_policy,
    simulate_dataset,
    simulate_episode,
)

__version__ = "0.1.0"
