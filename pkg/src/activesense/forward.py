"""Forward active sensing: value iteration, Q-factors and policy geometry.

Values live on a :class:`~activesense.simplex.SimplexGrid`; posteriors that
fall between grid points are evaluated by piecewise-linear interpolation. The
posterior table for a fixed set of beliefs does not depend on the preference
weights, so it is precomputed once (:class:`Lookahead`) and every Bellman sweep
reduces to a gather plus a weighted sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, log
from typing import Optional, Union

import numpy as np

from .problem import Criterion, DecisionProblem, Preferences
from .recognition import outcome_table
from .simplex import SimplexGrid

DEFAULT_RESOLUTION = 60
DEFAULT_TOL = 1e-8
_CAP_MARGIN = 10


class ConvergenceError(RuntimeError):
    """Value iteration hit its iteration cap before reaching the tolerance."""


class InTerminationSet(ValueError):
    """An acquisition was requested at a belief where deciding is optimal."""


# -- belief-set look-ahead -------------------------------------------------


class Lookahead:
    """One-step outcome structure for a batch of beliefs, independent of preferences.

    Parameters
    ----------
    problem : DecisionProblem
    grid : SimplexGrid
        Grid on which continuation values are stored.
    mus : array, shape (M, K)
        Beliefs at which Q-factors will be evaluated.
    """

    def __init__(self, problem: DecisionProblem, grid: SimplexGrid, mus):
        mus = np.atleast_2d(np.asarray(mus, dtype=float))
        self.problem = problem
        self.grid = grid
        self.mus = mus
        joint, post, hazard = outcome_table(problem, mus)
        self.joint = joint  # (L, W, M)
        self.post = post  # (L, W, M, K)
        self.hazard = hazard  # (L, M)
        L, W, M, K = post.shape
        idx, wt = grid.locate(post.reshape(-1, K))
        self.idx = idx.reshape(L, W, M, K)
        self.coef = wt.reshape(L, W, M, K) * joint[..., None]

    def __len__(self) -> int:
        return self.mus.shape[0]

    def continuation(self, v_alive: np.ndarray) -> np.ndarray:
        """``sum_w P(survive, w) V(posterior_w, 1)`` as an (M, L) array."""
        return np.einsum("lwms,lwms->ml", v_alive[self.idx], self.coef)

    def dead_continuation(self, v_dead: np.ndarray) -> np.ndarray:
        """``p_bar * V(terminal posterior, 0)`` from a tabulated dead-process value, (M, L)."""
        L, M = self.hazard.shape
        K = self.mus.shape[1]
        w = self.problem.p.T[:, None, :] * self.mus[None, :, :]  # (L, M, K)
        total = w.sum(axis=-1)
        post = w / np.where(total > 0, total, 1.0)[..., None]
        idx, wt = self.grid.locate(post.reshape(-1, K))
        vals = (np.asarray(v_dead, dtype=float)[idx] * wt).sum(axis=-1).reshape(L, M)
        return (self.hazard * vals).T

    def deadline_term(self, eta_b: np.ndarray) -> np.ndarray:
        """``sum_theta eta_b p mu``: expected breach penalty of each acquisition, (M, L)."""
        return (self.mus * eta_b) @ self.problem.p

    def cost_term(self, prefs: Preferences) -> np.ndarray:
        return prefs.eta_c * self.problem.c

    def decision_q(self, prefs: Preferences) -> np.ndarray:
        return decision_q_batch(prefs, self.mus)

    def optimal_acq_q(self, prefs: Preferences, v_alive: np.ndarray) -> np.ndarray:
        return self.cost_term(prefs) + self.deadline_term(prefs.eta_b) + self.continuation(v_alive)

    def greedy_acq_q(self, prefs: Preferences) -> np.ndarray:
        if prefs.eta_d is None:
            raise ValueError("the greedy look-ahead criterion needs eta_d")
        dec_next = best_decision_value(prefs, self.post)  # (L, W, M)
        expected = np.einsum("lwm,lwm->ml", dec_next, self.joint)
        bonus = -(self.mus @ prefs.eta_d)
        return self.cost_term(prefs) + bonus[:, None] + self.deadline_term(prefs.eta_b) + expected

    def infomax_acq_q(self, prefs: Preferences) -> np.ndarray:
        weights = prefs.eta_b if prefs.weighted_entropy else None
        h_now = entropy(self.mus, weights)
        h_next = entropy(self.post, weights)  # (L, W, M)
        gain = h_now[:, None] - np.einsum("lwm,lwm->ml", h_next, self.joint)
        return self.cost_term(prefs) - gain

    def acquisition_q(self, prefs: Preferences, policy: Optional["SolvedPolicy"] = None) -> np.ndarray:
        if prefs.criterion is Criterion.OPTIMAL:
            if policy is None:
                raise ValueError("the optimal criterion needs a solved policy")
            return self.optimal_acq_q(prefs, policy.v_alive)
        if prefs.criterion is Criterion.GREEDY:
            return self.greedy_acq_q(prefs)
        return self.infomax_acq_q(prefs)

    def generalized_q(self, prefs: Preferences, policy: Optional["SolvedPolicy"] = None) -> np.ndarray:
        """Alive-state Q-factors, acquisitions then decisions, shape (M, L + K)."""
        return np.concatenate([self.acquisition_q(prefs, policy), self.decision_q(prefs)], axis=1)


def entropy(mus, weights=None) -> np.ndarray:
    """Shannon entropy (nats) over the last axis, optionally weighted per hypothesis."""
    mus = np.asarray(mus, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(mus > 0, -mus * np.log(mus), 0.0)
    if weights is not None:
        terms = terms * np.asarray(weights, dtype=float)
    return terms.sum(axis=-1)


def decision_q_batch(prefs: Preferences, mus) -> np.ndarray:
    """Alive decision Q-factors for a batch of beliefs, shape (..., K)."""
    mus = np.asarray(mus, dtype=float)
    weighted = mus * prefs.eta_a
    return weighted.sum(axis=-1, keepdims=True) - weighted


def best_decision_value(prefs: Preferences, mus) -> np.ndarray:
    weighted = np.asarray(mus, dtype=float) * prefs.eta_a
    return weighted.sum(axis=-1) - weighted.max(axis=-1)


# -- single-belief Q-factors -----------------------------------------------


def decision_q(problem: DecisionProblem, prefs: Preferences, mu, nu: int, theta_hat: int):
    """Risk of committing to ``theta_hat`` now (breach penalty if the process is dead)."""
    mu = np.asarray(mu)
    if not nu:
        return (prefs.eta_b * mu).sum()
    wrong = np.ones(problem.n_theta, dtype=bool)
    wrong[theta_hat] = False
    return (prefs.eta_a[wrong] * mu[wrong]).sum()


def dead_value(prefs: Preferences, mu):
    """Closed-form value of a dead process: the breach penalty is already locked in."""
    return (prefs.eta_b * np.asarray(mu)).sum()


ValueTables = Union["SolvedPolicy", tuple]


def _tables(tables: ValueTables) -> tuple[SimplexGrid, np.ndarray, Optional[np.ndarray]]:
    if isinstance(tables, SolvedPolicy):
        return tables.grid, tables.v_alive, None
    if len(tables) == 2:
        grid, v_alive = tables
        return grid, np.asarray(v_alive, dtype=float), None
    grid, v_alive, v_dead = tables
    return grid, np.asarray(v_alive, dtype=float), np.asarray(v_dead, dtype=float)


def acquisition_q(problem: DecisionProblem, prefs: Preferences, value_tables: ValueTables, mu, nu: int, lam: int) -> float:
    """Risk-to-go of acquisition ``lam`` with continuation values from ``value_tables``.

    ``value_tables`` is a :class:`SolvedPolicy`, a ``(grid, v_alive)`` pair, or
    a ``(grid, v_alive, v_dead)`` triple. Without a dead-process table the
    closed form ``sum(eta_b * mu)`` is used.
    """
    mu = np.asarray(mu, dtype=float)
    cost = float(prefs.eta_c[lam] * problem.c[lam])
    grid, v_alive, v_dead = _tables(value_tables)
    if not nu:
        dead = dead_value(prefs, mu) if v_dead is None else grid.interpolate(v_dead, mu)
        return float(dead) + cost
    la = Lookahead(problem, grid, mu)
    if v_dead is None:
        return float(la.optimal_acq_q(prefs, v_alive)[0, lam])
    q = la.cost_term(prefs) + la.dead_continuation(v_dead) + la.continuation(v_alive)
    return float(q[0, lam])


def optimal_decision(prefs: Preferences, mu) -> int:
    """Hypothesis with the largest accuracy-weighted belief (lowest index on ties)."""
    return int(np.argmax(prefs.eta_a * np.asarray(mu, dtype=float)))


def gl_q(problem: DecisionProblem, prefs: Preferences, mu, nu: int, lam: int) -> float:
    """Greedy look-ahead Q-factor: one acquisition, then the best immediate decision."""
    if prefs.eta_d is None:
        raise ValueError("the greedy look-ahead criterion needs eta_d")
    mu = np.asarray(mu, dtype=float)
    cost = float(prefs.eta_c[lam] * problem.c[lam])
    bonus = -float(prefs.eta_d @ mu)
    if not nu:
        return cost + bonus + float(dead_value(prefs, mu))
    la = Lookahead(problem, SimplexGrid(problem.n_theta, 1), mu)
    return float(la.greedy_acq_q(prefs)[0, lam])


def im_q(problem: DecisionProblem, prefs: Preferences, mu, nu: int, lam: int) -> float:
    """Infomax Q-factor: cost minus entropy-based surprise."""
    mu = np.asarray(mu, dtype=float)
    cost = float(prefs.eta_c[lam] * problem.c[lam])
    if not nu:
        weights = prefs.eta_b if prefs.weighted_entropy else None
        hazard = float(problem.p[:, lam] @ mu)
        return cost - hazard * float(entropy(mu, weights))
    la = Lookahead(problem, SimplexGrid(problem.n_theta, 1), mu)
    return float(la.infomax_acq_q(prefs)[0, lam])


def generalized_q(
    criterion,
    problem: DecisionProblem,
    prefs: Preferences,
    policy: Optional["SolvedPolicy"],
    mu,
    nu: int = 1,
) -> np.ndarray:
    """Q-factors of every action under ``criterion``: acquisitions first, then decisions."""
    criterion = Criterion.parse(criterion)
    if criterion is not prefs.criterion:
        prefs = prefs.replace(criterion=criterion)
    mu = np.asarray(mu, dtype=float)
    if criterion is Criterion.OPTIMAL and policy is None:
        raise ValueError("the optimal criterion needs a solved policy")
    dec = [decision_q(problem, prefs, mu, nu, k) for k in range(problem.n_theta)]
    if criterion is Criterion.OPTIMAL:
        acq = [acquisition_q(problem, prefs, policy, mu, nu, lam) for lam in range(problem.n_lambda)]
    elif criterion is Criterion.GREEDY:
        acq = [gl_q(problem, prefs, mu, nu, lam) for lam in range(problem.n_lambda)]
    else:
        acq = [im_q(problem, prefs, mu, nu, lam) for lam in range(problem.n_lambda)]
    return np.array(acq + [float(d) for d in dec])


# -- value iteration -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SolvedPolicy:
    """Converged optimal values and Q-factors on a grid.

    ``q_acq`` has shape (points, L) and ``q_dec`` shape (points, K), both for a
    living process.
    """

    grid: SimplexGrid
    v_alive: np.ndarray
    v_dead: np.ndarray
    q_acq: np.ndarray
    q_dec: np.ndarray
    gamma: float
    residual: float
    iterations: int
    prefs: Preferences
    tol: float

    @property
    def criterion(self) -> Criterion:
        return Criterion.OPTIMAL

    def value(self, mu, nu: int = 1) -> float:
        if not nu:
            return float(dead_value(self.prefs, mu))
        return self.grid.interpolate(self.v_alive, np.asarray(mu, dtype=float))

    def q_star(self) -> np.ndarray:
        """Aggregate acquisition Q-factor (best acquisition) per grid point."""
        return self.q_acq.min(axis=1)

    def q_bar(self) -> np.ndarray:
        """Aggregate decision Q-factor (best decision) per grid point."""
        return self.q_dec.min(axis=1)


def bellman_apply(
    problem: DecisionProblem,
    prefs: Preferences,
    V,
    grid: Optional[SimplexGrid] = None,
    lookahead: Optional[Lookahead] = None,
    v_dead=None,
) -> np.ndarray:
    """One sweep of the optimal Bellman operator on the alive table.

    ``V`` is the alive value table on ``grid``. The dead branch uses its closed
    form unless a tabulated ``v_dead`` is supplied.
    """
    if lookahead is None:
        if grid is None:
            raise ValueError("bellman_apply needs a grid or a prepared look-ahead")
        lookahead = Lookahead(problem, grid, grid.points)
    V = np.asarray(V, dtype=float)
    if v_dead is None:
        q_acq = lookahead.optimal_acq_q(prefs, V)
    else:
        q_acq = lookahead.cost_term(prefs) + lookahead.dead_continuation(v_dead) + lookahead.continuation(V)
    q_dec = lookahead.decision_q(prefs)
    return np.minimum(q_acq.min(axis=1), q_dec.min(axis=1))


def iteration_cap(gamma: float, tol: float, first_step: float) -> int:
    """Sweeps needed for a gamma-contraction to shrink ``first_step`` below ``tol``."""
    if first_step <= tol:
        return 1 + _CAP_MARGIN
    return int(ceil(log(tol / first_step) / log(gamma))) + 1 + _CAP_MARGIN


def solve_optimal(
    problem: DecisionProblem,
    prefs: Preferences,
    G: int = DEFAULT_RESOLUTION,
    tol: float = DEFAULT_TOL,
    *,
    grid: Optional[SimplexGrid] = None,
    lookahead: Optional[Lookahead] = None,
    v_init=None,
    max_iter: Optional[int] = None,
) -> SolvedPolicy:
    """Successive approximation of the optimal value function from ``V = 0``.

    Raises
    ------
    ConvergenceError
        If the residual is still above ``tol`` after the contraction-derived
        iteration cap (or ``max_iter``).
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    if prefs.criterion is not Criterion.OPTIMAL:
        prefs = prefs.replace(criterion=Criterion.OPTIMAL, eta_d=None)
    gamma = problem.gamma
    if not gamma < 1:
        raise ConvergenceError("deadline hazards must be positive for value iteration to contract")
    if lookahead is None:
        grid = grid if grid is not None else SimplexGrid(problem.n_theta, G)
        lookahead = Lookahead(problem, grid, grid.points)
    grid = lookahead.grid
    q_dec = lookahead.decision_q(prefs)
    best_dec = q_dec.min(axis=1)
    static = lookahead.cost_term(prefs) + lookahead.deadline_term(prefs.eta_b)
    V = np.zeros(len(grid)) if v_init is None else np.array(v_init, dtype=float)
    cap = max_iter
    iterations = 0
    while True:
        q_acq = static + lookahead.continuation(V)
        V_new = np.minimum(q_acq.min(axis=1), best_dec)
        residual = float(np.max(np.abs(V_new - V)))
        V = V_new
        iterations += 1
        if cap is None:
            cap = iteration_cap(gamma, tol, residual)
        if residual <= tol:
            break
        if iterations >= cap:
            raise ConvergenceError(
                f"value iteration stalled: residual {residual:.3e} > tol {tol:.1e} after {iterations} sweeps (gamma={gamma:.6f})"
            )
    return policy_from_values(problem, prefs, lookahead, V, residual, iterations, tol)


def policy_from_values(
    problem: DecisionProblem,
    prefs: Preferences,
    lookahead: Lookahead,
    v_alive,
    residual: float,
    iterations: int,
    tol: float,
) -> SolvedPolicy:
    """Assemble the Q-tables for a converged alive value table on ``lookahead.grid``."""
    v_alive = np.asarray(v_alive, dtype=float)
    grid = lookahead.grid
    return SolvedPolicy(
        grid=grid,
        v_alive=v_alive,
        v_dead=grid.points @ prefs.eta_b,
        q_acq=lookahead.optimal_acq_q(prefs, v_alive),
        q_dec=lookahead.decision_q(prefs),
        gamma=problem.gamma,
        residual=residual,
        iterations=iterations,
        prefs=prefs,
        tol=tol,
    )


# -- termination geometry --------------------------------------------------

CONTINUE = "continue"
TERMINATE = "terminate"


@dataclass(frozen=True, eq=False)
class TerminationMap:
    """Per grid point: whether to stop, and which action the optimal strategy takes."""

    grid: SimplexGrid
    terminate: np.ndarray
    decision: np.ndarray
    acquisition: np.ndarray

    def region(self, theta_hat: int) -> np.ndarray:
        """Grid indices where the optimal strategy stops and declares ``theta_hat``."""
        return np.flatnonzero(self.terminate & (self.decision == theta_hat))

    def label(self, i: int) -> tuple[str, int]:
        if self.terminate[i]:
            return TERMINATE, int(self.decision[i])
        return CONTINUE, int(self.acquisition[i])

    def labels(self) -> list[str]:
        """Compact action labels such as ``"T0"`` or ``"C3"``."""
        return [("T" if t else "C") + str(int(d if t else a)) for t, d, a in zip(self.terminate, self.decision, self.acquisition)]


def termination_set(policy: SolvedPolicy, nu: int = 1) -> TerminationMap:
    """Label every grid point Terminate when no acquisition strictly beats deciding."""
    q_bar = policy.q_bar()
    decision = np.argmin(policy.q_dec, axis=1)
    if not nu:
        # a dead process pays its breach penalty whatever it does; acquiring only adds cost
        n = len(q_bar)
        return TerminationMap(policy.grid, np.ones(n, dtype=bool), decision, np.zeros(n, dtype=int))
    q_star = policy.q_star()
    acquisition = np.argmin(policy.q_acq, axis=1)
    return TerminationMap(policy.grid, q_star >= q_bar, decision, acquisition)


# -- surprise and suspense ---------------------------------------------------


def _uncertainty(policy: SolvedPolicy, mu, nu: int) -> float:
    return policy.value(mu, nu)


def surprise(problem: DecisionProblem, policy, mu, nu: int, lam: int) -> float:
    """Current uncertainty minus survival-weighted expected posterior uncertainty.

    ``policy`` supplies the uncertainty function: a :class:`SolvedPolicy` uses
    its optimal value, while any callable ``U(mu, nu)`` is used directly.
    """
    mu = np.asarray(mu, dtype=float)
    U = policy.value if isinstance(policy, SolvedPolicy) else policy
    hazard = float(problem.p[:, lam] @ mu)
    if not nu:
        return float(U(mu, 0)) * hazard
    _, post, _ = outcome_table(problem, mu[None, :])
    joint = (((1 - problem.p[:, lam]) * problem.q[:, lam, :].T) * mu).sum(axis=1)
    expected = sum(float(joint[w]) * float(U(post[lam, w, 0], 1)) for w in range(problem.n_omega) if joint[w] > 0)
    return float(U(mu, 1)) - expected


def suspense(problem: DecisionProblem, prefs: Preferences, mu, lam: int) -> float:
    """Breach-weighted probability of surviving acquisition ``lam``."""
    mu = np.asarray(mu)
    total = (prefs.eta_b * mu).sum()
    if not total > 0:
        raise ValueError("suspense is undefined when the breach weights vanish on the belief's support")
    return 1 - (prefs.eta_b * problem.p[:, lam] * mu).sum() / total


def decomposed_acquisition_q(problem: DecisionProblem, policy: SolvedPolicy, mu, lam: int) -> float:
    """Optimal acquisition Q-factor rebuilt from surprise and suspense."""
    prefs = policy.prefs
    mu = np.asarray(mu, dtype=float)
    return (
        policy.value(mu, 1)
        - surprise(problem, policy, mu, 1, lam)
        + (1 - suspense(problem, prefs, mu, lam)) * float(prefs.eta_b @ mu)
        + float(prefs.eta_c[lam] * problem.c[lam])
    )


def optimal_acquisition(policy: SolvedPolicy, problem: DecisionProblem, prefs: Optional[Preferences], mu, form: str = "direct") -> int:
    """Best acquisition at a continuation belief, lowest index on ties.

    ``form="decomposed"`` ranks acquisitions through surprise and suspense
    instead of the direct Q-factors; both must agree.
    """
    prefs = policy.prefs if prefs is None else prefs
    mu = np.asarray(mu, dtype=float)
    if form == "direct":
        q = np.array([acquisition_q(problem, prefs, policy, mu, 1, lam) for lam in range(problem.n_lambda)])
    elif form == "decomposed":
        q = np.array([decomposed_acquisition_q(problem, policy, mu, lam) for lam in range(problem.n_lambda)])
    else:
        raise ValueError(f"unknown form {form!r}")
    dec = best_decision_value(prefs, mu)
    if q.min() >= dec:
        raise InTerminationSet("deciding is optimal at this belief; use optimal_decision")
    return int(np.argmin(q))


# -- export ---------------------------------------------------------------


def policy_table(policy: SolvedPolicy, problem: DecisionProblem) -> tuple[list[str], list[list]]:
    """Header and rows describing the solved policy at every grid point."""
    tmap = termination_set(policy)
    header = (
        [f"mu_{name}" for name in problem.theta_names]
        + ["v_alive", "v_dead"]
        + [f"q_acq_{name}" for name in problem.lambda_names]
        + [f"q_dec_{name}" for name in problem.theta_names]
        + ["label", "action"]
    )
    rows = []
    for i in range(len(policy.grid)):
        kind, index = tmap.label(i)
        action = problem.theta_names[index] if kind == TERMINATE else problem.lambda_names[index]
        rows.append(
            [f"{x:.12g}" for x in policy.grid.points[i]]
            + [repr(float(policy.v_alive[i])), repr(float(policy.v_dead[i]))]
            + [repr(float(x)) for x in policy.q_acq[i]]
            + [repr(float(x)) for x in policy.q_dec[i]]
            + [kind, action]
        )
    return header, rows
