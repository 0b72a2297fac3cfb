"""Bayesian recognition model: belief updates under survival and stoppage.

The update functions accept object arrays of ``fractions.Fraction`` as well as
floats, so the worked examples can be checked in exact arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .problem import DecisionProblem


class ImpossibleObservation(ValueError):
    """The observed outcome has zero probability under every supported hypothesis."""


@dataclass(frozen=True, eq=False)
class BeliefState:
    mu: np.ndarray
    nu: int = 1


def _normalize(w):
    total = w.sum()
    out = w / total
    if out.dtype != object:
        out = out / out.sum()
    return out


def continual_update(problem: DecisionProblem, mu, lam: int, omega: int) -> np.ndarray:
    """Posterior after acquisition ``lam`` survived the deadline and returned ``omega``."""
    mu = np.asarray(mu)
    w = (1 - problem.p[:, lam]) * problem.q[:, lam, omega] * mu
    if not w.sum() > 0:
        raise ImpossibleObservation(
            f"outcome {omega} of acquisition {lam} is impossible under the current belief"
        )
    return _normalize(w)


def terminal_update(problem: DecisionProblem, mu, lam: int) -> np.ndarray:
    """Posterior after the deadline fired during acquisition ``lam``."""
    mu = np.asarray(mu)
    w = problem.p[:, lam] * mu
    if not w.sum() > 0:
        raise ImpossibleObservation(f"deadline under acquisition {lam} has zero probability")
    return _normalize(w)


def mean_hazard(problem: DecisionProblem, mu, lam: int):
    """Belief-weighted deadline probability of acquisition ``lam``."""
    return (problem.p[:, lam] * np.asarray(mu)).sum()


# p-bar under the name used by callers that think in terms of survival odds;
# survival itself is ``1 - survival_prob(...)``.
survival_prob = mean_hazard


def update(problem: DecisionProblem, mu, lam: int, nu_prev: int, nu_now: int, omega: Optional[int] = None):
    """Full posterior transition including the dead-process branch."""
    if not nu_prev:
        return np.asarray(mu)
    if nu_now:
        if omega is None:
            raise ValueError("an outcome is required when the process survives")
        return continual_update(problem, mu, lam, omega)
    return terminal_update(problem, mu, lam)


@dataclass(frozen=True, eq=False)
class DecompositionState:
    """Martingale part plus continual and terminal compensators of the posterior."""

    mu_tilde: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @classmethod
    def initial(cls, mu0) -> "DecompositionState":
        mu0 = np.asarray(mu0)
        zero = mu0 * 0
        return cls(mu0.copy(), zero, zero.copy())

    @property
    def posterior(self) -> np.ndarray:
        return self.mu_tilde + self.alpha + self.beta


def compensator_increments(problem: DecisionProblem, mu_prev, lam: int, nu_prev: int, nu_now: int):
    mu_prev = np.asarray(mu_prev)
    pbar = mean_hazard(problem, mu_prev, lam)
    dev = problem.p[:, lam] - pbar
    d_alpha = mu_prev * 0
    d_beta = mu_prev * 0
    if nu_prev and nu_now:
        d_alpha = -mu_prev * dev / (1 - pbar)
    elif nu_prev and not nu_now:
        d_beta = mu_prev * dev / pbar
    return d_alpha, d_beta


def step_decomposition(
    state: DecompositionState,
    problem: DecisionProblem,
    mu_prev,
    lam: int,
    nu_prev: int,
    nu_now: int,
    omega: Optional[int] = None,
) -> DecompositionState:
    """Advance the martingale/compensator split by one step."""
    if nu_prev and nu_now and omega is None:
        raise ValueError("an outcome is required when the process survives")
    d_alpha, d_beta = compensator_increments(problem, mu_prev, lam, nu_prev, nu_now)
    alpha = state.alpha + d_alpha
    beta = state.beta + d_beta
    mu_now = update(problem, mu_prev, lam, nu_prev, nu_now, omega)
    return DecompositionState(mu_now - alpha - beta, alpha, beta)


def outcome_table(problem: DecisionProblem, mus: np.ndarray):
    """Vectorized one-step look-ahead for a batch of beliefs.

    Returns ``(joint, post, hazard)`` where ``joint[l, w, m]`` is the probability
    of surviving acquisition ``l`` and seeing outcome ``w`` from belief ``m``,
    ``post[l, w, m]`` the matching continual posterior (the prior itself where
    the outcome is impossible), and ``hazard[l, m]`` the mean deadline hazard.
    """
    mus = np.asarray(mus, dtype=float)
    surv = (1.0 - problem.p).T  # (L, K)
    q = np.transpose(problem.q, (1, 2, 0))  # (L, W, K)
    w = surv[:, None, None, :] * q[:, :, None, :] * mus[None, None, :, :]
    joint = w.sum(axis=-1)
    safe = np.where(joint > 0, joint, 1.0)
    post = w / safe[..., None]
    impossible = joint <= 0
    if np.any(impossible):
        post = np.where(impossible[..., None], mus[None, None, :, :], post)
    post = post / post.sum(axis=-1, keepdims=True)
    hazard = mus @ problem.p  # (M, L)
    return joint, post, hazard.T
