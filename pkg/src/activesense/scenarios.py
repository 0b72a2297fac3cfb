"""Reference problem instances used by the tests, the acceptance suite and the CLI.

The dynamics (outcome laws, hazards, costs) are choices made for this package;
only the qualitative structure and the preference weights marked as such
follow the reference scenarios.
"""

from __future__ import annotations

import numpy as np

from .problem import Criterion, DecisionProblem, Preferences


def _binary(prob_one):
    prob_one = np.asarray(prob_one, dtype=float)
    return np.stack([1.0 - prob_one, prob_one], axis=-1)


def three_hypothesis_screening() -> tuple[DecisionProblem, Preferences]:
    """Three hypotheses, one targeted test per hypothesis and one per pair.

    Single-hypothesis tests are sharp but slow (higher deadline hazard); pair
    tests separate two hypotheses, say nothing about the third, and are fast.
    Accuracy and breach weights both increase from the first hypothesis to the
    third.
    """
    names = ("theta1", "theta2", "theta3")
    tests = ("lambda1", "lambda2", "lambda3", "lambda12", "lambda13", "lambda23")
    hi, lo = 0.9, 0.1
    pos = np.array(
        [
            # lambda1 lambda2 lambda3 lambda12 lambda13 lambda23
            [hi, lo, lo, 0.8, 0.8, 0.5],
            [lo, hi, lo, 0.2, 0.5, 0.8],
            [lo, lo, hi, 0.5, 0.2, 0.2],
        ]
    )
    p = np.array(
        [
            [0.08, 0.08, 0.08, 0.02, 0.02, 0.02],
            [0.08, 0.08, 0.08, 0.02, 0.02, 0.02],
            [0.08, 0.08, 0.08, 0.02, 0.02, 0.02],
        ]
    )
    c = np.full(6, 0.01)
    problem = DecisionProblem(_binary(pos), p, c, np.full(3, 1 / 3), names, tests)
    prefs = Preferences(
        eta_a=[0.2, 0.4, 0.6],
        eta_b=[0.4, 0.6, 0.8],
        eta_c=np.ones(6),
    )
    return problem, prefs


def four_hypothesis_tree() -> tuple[DecisionProblem, Preferences]:
    """Four hypotheses in two pairs: a top-level test splits the pairs, two tests split within."""
    names = ("theta1", "theta2", "theta3", "theta4")
    tests = ("lambda0", "lambda12", "lambda34")
    hi, lo = 0.85, 0.15
    pos = np.array(
        [
            [hi, hi, 0.5],
            [hi, lo, 0.5],
            [lo, 0.5, hi],
            [lo, 0.5, lo],
        ]
    )
    p = np.full((4, 3), 0.03)
    # the specialised within-pair tests cost more than the screening split
    c = np.array([0.02, 0.15, 0.15])
    problem = DecisionProblem(_binary(pos), p, c, np.full(4, 0.25), names, tests)
    prefs = Preferences(eta_a=np.ones(4), eta_b=np.ones(4), eta_c=np.ones(3))
    return problem, prefs


def two_hypothesis_single_test() -> tuple[DecisionProblem, Preferences]:
    """Two hypotheses, one noisy binary test whose deadline hazard depends on the truth.

    Preferences: accuracy weights (0.25, 0.75), equal breach weights, cost weight 0.5.
    """
    q = _binary([[0.25], [0.75]])
    p = np.array([[0.05], [0.10]])
    c = np.array([0.1])
    problem = DecisionProblem(q, p, c, np.array([0.5, 0.5]), ("theta1", "theta2"), ("lambda1",))
    prefs = Preferences(eta_a=[0.25, 0.75], eta_b=[0.5, 0.5], eta_c=[0.5], rho=10.0)
    return problem, prefs


def two_identical_tests() -> tuple[DecisionProblem, Preferences]:
    """Two interchangeable tests; any systematic preference between them is a cost-weight bias.

    The returned preferences are the unbiased agent's.
    """
    q1 = _binary([0.2, 0.8])
    q = np.stack([q1, q1], axis=1)
    p = np.full((2, 2), 0.05)
    c = np.array([0.1, 0.1])
    problem = DecisionProblem(q, p, c, np.array([0.5, 0.5]), ("theta1", "theta2"), ("lambda1", "lambda2"))
    prefs = Preferences(eta_a=[0.5, 0.5], eta_b=[0.5, 0.5], eta_c=[0.5, 0.5], rho=10.0)
    return problem, prefs


def biased_cost_preferences() -> Preferences:
    """Agent for :func:`two_identical_tests` that weighs the second test's cost twice the first's."""
    return Preferences(eta_a=[0.5, 0.5], eta_b=[0.5, 0.5], eta_c=[0.25, 0.5], rho=10.0)


def greedy_threshold_agent() -> tuple[DecisionProblem, Preferences]:
    """Greedy look-ahead agent that demands more evidence before declaring the second hypothesis.

    Same setting as :func:`two_hypothesis_single_test` but with a sharper
    test, so that a one-step look-ahead sees enough value in testing for the
    threshold weights to move its stopping points.
    """
    base, _ = two_hypothesis_single_test()
    problem = DecisionProblem(_binary([[0.1], [0.9]]), base.p, base.c, base.mu0, base.theta_names, base.lambda_names)
    prefs = Preferences(
        eta_a=[1.0, 1.0],
        eta_b=[1.0, 1.0],
        eta_c=[1.0],
        # must stay below eta_c c + eta_b p at each vertex or the agent never decides
        eta_d=[0.0, 0.18],
        criterion=Criterion.GREEDY,
        rho=30.0,
    )
    return problem, prefs


SCENARIOS = {
    "screening3": three_hypothesis_screening,
    "tree4": four_hypothesis_tree,
    "single-test": two_hypothesis_single_test,
    "identical-tests": two_identical_tests,
    "greedy-threshold": greedy_threshold_agent,
}
