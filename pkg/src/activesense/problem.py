"""Decision problems, preference weights, episodes and the realized loss."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

SUM_TOL = 1e-12


class Criterion(str, enum.Enum):
    OPTIMAL = "optimal"
    GREEDY = "greedy_lookahead"
    INFOMAX = "infomax"

    @classmethod
    def parse(cls, value: "Criterion | str") -> "Criterion":
        if isinstance(value, Criterion):
            return value
        aliases = {
            "optimal": cls.OPTIMAL,
            "opt": cls.OPTIMAL,
            "*": cls.OPTIMAL,
            "greedy_lookahead": cls.GREEDY,
            "greedy": cls.GREEDY,
            "gl": cls.GREEDY,
            "infomax": cls.INFOMAX,
            "im": cls.INFOMAX,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown criterion {value!r}") from None


def _as_array(x, ndim: int) -> np.ndarray:
    # object arrays (e.g. Fractions) are kept as-is so exact arithmetic survives
    arr = np.asarray(x)
    if arr.dtype != object:
        arr = arr.astype(float)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class DecisionProblem:
    """Hypotheses, acquisitions and outcomes with their known dynamics.

    ``q[theta, lam, omega]`` is the outcome law, ``p[theta, lam]`` the per-step
    deadline hazard and ``c[lam]`` the fixed acquisition cost.
    """

    q: np.ndarray
    p: np.ndarray
    c: np.ndarray
    mu0: np.ndarray
    theta_names: tuple[str, ...] = ()
    lambda_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "q", _as_array(self.q, 3))
        object.__setattr__(self, "p", _as_array(self.p, 2))
        object.__setattr__(self, "c", _as_array(self.c, 1))
        object.__setattr__(self, "mu0", _as_array(self.mu0, 1))
        n_theta, n_lambda, _ = self.q.shape
        if self.p.shape != (n_theta, n_lambda):
            raise ValueError(f"p has shape {self.p.shape}, expected {(n_theta, n_lambda)}")
        if self.c.shape != (n_lambda,):
            raise ValueError(f"c has shape {self.c.shape}, expected {(n_lambda,)}")
        if self.mu0.shape != (n_theta,):
            raise ValueError(f"mu0 has shape {self.mu0.shape}, expected {(n_theta,)}")
        if not self.theta_names:
            object.__setattr__(self, "theta_names", tuple(f"theta{i + 1}" for i in range(n_theta)))
        if not self.lambda_names:
            object.__setattr__(self, "lambda_names", tuple(f"lambda{i + 1}" for i in range(n_lambda)))
        if len(self.theta_names) != n_theta or len(self.lambda_names) != n_lambda:
            raise ValueError("name lists do not match the table dimensions")

    @property
    def n_theta(self) -> int:
        return self.q.shape[0]

    @property
    def n_lambda(self) -> int:
        return self.q.shape[1]

    @property
    def n_omega(self) -> int:
        return self.q.shape[2]

    @property
    def n_actions(self) -> int:
        return self.n_lambda + self.n_theta

    @property
    def gamma(self) -> float:
        """Contraction factor ``1 - min p`` of the Bellman operator."""
        return float(1.0 - np.min(self.p))

    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "q": np.asarray(self.q, dtype=float).tolist(),
                "p": np.asarray(self.p, dtype=float).tolist(),
                "c": np.asarray(self.c, dtype=float).tolist(),
                "mu0": np.asarray(self.mu0, dtype=float).tolist(),
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def validate_problem(problem: DecisionProblem) -> list[str]:
    """Return every violated invariant of ``problem``; empty means valid."""
    report = []
    q = np.asarray(problem.q, dtype=float)
    p = np.asarray(problem.p, dtype=float)
    c = np.asarray(problem.c, dtype=float)
    mu0 = np.asarray(problem.mu0, dtype=float)
    for name, arr in (("q", q), ("p", p), ("c", c), ("mu0", mu0)):
        if not np.all(np.isfinite(arr)):
            report.append(f"{name}: non-finite entries")
    for th in range(problem.n_theta):
        for lam in range(problem.n_lambda):
            row = q[th, lam]
            if np.any(row < 0) or np.any(row > 1):
                report.append(f"q[{th},{lam}]: entries outside [0,1]")
            if abs(row.sum() - 1.0) > SUM_TOL:
                report.append(f"q[{th},{lam}]: sums to {row.sum():.15g}, not 1")
            if not 0.0 < p[th, lam] < 1.0:
                report.append(
                    f"p[{th},{lam}] = {p[th, lam]:g} is not strictly inside (0,1); "
                    "contraction of the Bellman operator is not guaranteed"
                )
    if np.any(c < 0):
        report.append("c: negative acquisition cost")
    if np.any(mu0 < 0):
        report.append("mu0: negative entries")
    if abs(mu0.sum() - 1.0) > SUM_TOL:
        report.append(f"mu0: sums to {mu0.sum():.15g}, not 1")
    return report


@dataclass(frozen=True, eq=False)
class Preferences:
    """Preference weights, strategy criterion and inverse temperature."""

    eta_a: np.ndarray
    eta_b: np.ndarray
    eta_c: np.ndarray
    eta_d: Optional[np.ndarray] = None
    criterion: Criterion = Criterion.OPTIMAL
    rho: float = 10.0
    weighted_entropy: bool = False

    def __post_init__(self):
        object.__setattr__(self, "eta_a", _as_array(self.eta_a, 1))
        object.__setattr__(self, "eta_b", _as_array(self.eta_b, 1))
        object.__setattr__(self, "eta_c", _as_array(self.eta_c, 1))
        if self.eta_d is not None:
            object.__setattr__(self, "eta_d", _as_array(self.eta_d, 1))
        object.__setattr__(self, "criterion", Criterion.parse(self.criterion))
        object.__setattr__(self, "rho", float(self.rho))

    def scaled(self, k: float) -> "Preferences":
        return Preferences(
            self.eta_a * k,
            self.eta_b * k,
            self.eta_c * k,
            None if self.eta_d is None else self.eta_d * k,
            self.criterion,
            self.rho,
            self.weighted_entropy,
        )

    def replace(self, **changes) -> "Preferences":
        fields = dict(
            eta_a=self.eta_a,
            eta_b=self.eta_b,
            eta_c=self.eta_c,
            eta_d=self.eta_d,
            criterion=self.criterion,
            rho=self.rho,
            weighted_entropy=self.weighted_entropy,
        )
        fields.update(changes)
        return Preferences(**fields)

    def key(self) -> tuple:
        """Hashable identity of everything a forward solve depends on."""
        d = () if self.eta_d is None else tuple(np.round(self.eta_d, 12))
        return (
            self.criterion.value,
            tuple(np.round(self.eta_a, 12)),
            tuple(np.round(self.eta_b, 12)),
            tuple(np.round(self.eta_c, 12)),
            d,
            self.weighted_entropy,
        )


def validate_preferences(prefs: Preferences, problem: DecisionProblem) -> list[str]:
    report = []
    k, m = problem.n_theta, problem.n_lambda
    for name, arr, size in (("eta_a", prefs.eta_a, k), ("eta_b", prefs.eta_b, k), ("eta_c", prefs.eta_c, m)):
        if arr.shape != (size,):
            report.append(f"{name}: length {arr.shape[0]}, expected {size}")
        elif not np.all(np.isfinite(arr)) or np.any(arr < 0):
            report.append(f"{name}: weights must be finite and non-negative")
    if prefs.criterion is Criterion.GREEDY:
        if prefs.eta_d is None:
            report.append("eta_d: required by the greedy look-ahead criterion")
        elif prefs.eta_d.shape != (k,):
            report.append(f"eta_d: length {prefs.eta_d.shape[0]}, expected {k}")
        elif not np.all(np.isfinite(prefs.eta_d)) or np.any(prefs.eta_d < 0):
            report.append("eta_d: weights must be finite and non-negative")
    elif prefs.eta_d is not None:
        report.append("eta_d: only meaningful for the greedy look-ahead criterion")
    if not prefs.rho >= 0:
        report.append("rho: inverse temperature must be non-negative")
    return report


ACQUIRE = "acquire"
DECIDE = "decide"


@dataclass(frozen=True)
class Step:
    kind: str
    index: int
    outcome: Optional[int] = None
    survived: bool = True

    @property
    def is_acquire(self) -> bool:
        return self.kind == ACQUIRE


@dataclass(frozen=True, eq=False)
class Episode:
    """One decision episode: acquisitions, their outcomes, and the end state."""

    prior: np.ndarray
    steps: tuple[Step, ...]
    truth: Optional[int] = None
    episode_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "prior", np.asarray(self.prior, dtype=float))
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def tau(self) -> int:
        return len(self.steps)

    @property
    def decision(self) -> Optional[int]:
        if self.steps and self.steps[-1].kind == DECIDE:
            return self.steps[-1].index
        return None

    @property
    def breached(self) -> bool:
        return bool(self.steps) and not self.steps[-1].survived

    def without_truth(self) -> "Episode":
        return Episode(self.prior, self.steps, None, self.episode_id)

    def __eq__(self, other):
        if not isinstance(other, Episode):
            return NotImplemented
        return (
            self.steps == other.steps
            and self.truth == other.truth
            and self.episode_id == other.episode_id
            and np.array_equal(self.prior, other.prior)
        )


def validate_episode(episode: Episode, problem: DecisionProblem) -> list[str]:
    report = []
    steps = episode.steps
    if episode.prior.shape != (problem.n_theta,):
        report.append(f"prior has length {episode.prior.shape[0]}, expected {problem.n_theta}")
    elif abs(episode.prior.sum() - 1.0) > 1e-9 or np.any(episode.prior < 0):
        report.append("prior is not a distribution")
    if not steps:
        report.append("episode has no steps")
        return report
    for t, step in enumerate(steps):
        last = t == len(steps) - 1
        if step.kind == ACQUIRE:
            if not 0 <= step.index < problem.n_lambda:
                report.append(f"step {t}: acquisition index {step.index} out of range")
            if step.survived:
                if step.outcome is None or not 0 <= step.outcome < problem.n_omega:
                    report.append(f"step {t}: surviving acquisition needs an outcome in range")
                if last:
                    report.append(f"step {t}: episode ends on a surviving acquisition")
            else:
                if not last:
                    report.append(f"step {t}: deadline breach before the final step")
                if step.outcome is not None:
                    report.append(f"step {t}: breached acquisition cannot carry an outcome")
        elif step.kind == DECIDE:
            if not last:
                report.append(f"step {t}: decision before the final step")
            if not 0 <= step.index < problem.n_theta:
                report.append(f"step {t}: decision index {step.index} out of range")
            if not step.survived or step.outcome is not None:
                report.append(f"step {t}: decision steps survive and carry no outcome")
        else:
            report.append(f"step {t}: unknown action kind {step.kind!r}")
    if episode.truth is not None and not 0 <= episode.truth < problem.n_theta:
        report.append(f"truth index {episode.truth} out of range")
    return report


@dataclass(frozen=True)
class LossBreakdown:
    accuracy: float
    deadline: float
    cost: float

    @property
    def total(self) -> float:
        return self.accuracy + self.deadline + self.cost


def episode_loss(
    episode: Episode, truth: int, prefs: Preferences, problem: DecisionProblem
) -> LossBreakdown:
    """Realized loss of one episode under ``prefs`` when ``truth`` holds."""
    if not 0 <= truth < problem.n_theta:
        raise IndexError(f"truth index {truth} out of range for {problem.n_theta} hypotheses")
    accuracy = deadline = 0.0
    decision = episode.decision
    if episode.breached:
        deadline = float(prefs.eta_b[truth])
    elif decision is not None and decision != truth:
        accuracy = float(prefs.eta_a[truth])
    cost = sum(
        float(prefs.eta_c[s.index] * problem.c[s.index]) for s in episode.steps if s.is_acquire
    )
    return LossBreakdown(accuracy, deadline, cost)


def empirical_risk(
    dataset: Iterable[tuple[Episode, int]], prefs: Preferences, problem: DecisionProblem
) -> float:
    losses = [episode_loss(ep, truth, prefs, problem).total for ep, truth in dataset]
    if not losses:
        raise ValueError("empirical risk of an empty dataset is undefined")
    return float(np.mean(losses))


def uniform_prior(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def as_belief(mu: Sequence[float]) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    return mu / mu.sum()
