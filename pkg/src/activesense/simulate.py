"""Boltzmann behavioral agents: episode simulation and Monte-Carlo risk."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .forward import DEFAULT_RESOLUTION, Lookahead, SolvedPolicy, solve_optimal
from .problem import (
    ACQUIRE,
    DECIDE,
    Criterion,
    DecisionProblem,
    Episode,
    Preferences,
    Step,
    episode_loss,
)
from .simplex import SimplexGrid

DEFAULT_T_MAX = 1000
PRIOR_MODES = ("fixed", "uniform")


class EpisodeLimitError(RuntimeError):
    """An episode ran past the step limit without deciding or breaching."""


def boltzmann_policy(q_values, rho: float) -> np.ndarray:
    """Action probabilities proportional to ``exp(-rho * Q)``.

    ``rho = inf`` puts all mass on the first minimizer.
    """
    q = np.asarray(q_values, dtype=float)
    if np.isinf(rho):
        out = np.zeros_like(q)
        np.put_along_axis(out, np.argmin(q, axis=-1)[..., None], 1.0, axis=-1)
        return out
    z = -rho * q
    z = z - z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class Strategy:
    """A criterion with its preferences and inverse temperature, plus the solved policy if optimal."""

    prefs: Preferences
    policy: Optional[SolvedPolicy] = None

    @property
    def criterion(self) -> Criterion:
        return self.prefs.criterion

    @property
    def rho(self) -> float:
        return self.prefs.rho

    def prepared(self, problem: DecisionProblem, G: int = DEFAULT_RESOLUTION) -> "Strategy":
        if self.criterion is Criterion.OPTIMAL and self.policy is None:
            return replace(self, policy=solve_optimal(problem, self.prefs, G))
        return self

    def q_values(self, problem: DecisionProblem, mus) -> np.ndarray:
        """Generalized Q-factors at a batch of living beliefs, shape (M, L + K)."""
        grid = self.policy.grid if self.policy is not None else SimplexGrid(problem.n_theta, 1)
        return Lookahead(problem, grid, mus).generalized_q(self.prefs, self.policy)


@dataclass(frozen=True, eq=False)
class EpisodeDataset:
    """Simulated or logged episodes tied to the problem that generated them."""

    episodes: tuple[Episode, ...]
    fingerprint: str
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.episodes)

    def __iter__(self):
        return iter(self.episodes)

    def truths(self) -> list[Optional[int]]:
        return [ep.truth for ep in self.episodes]

    def without_truth(self) -> "EpisodeDataset":
        """Projection that inference operates on: the latent truths are dropped."""
        return EpisodeDataset(tuple(ep.without_truth() for ep in self.episodes), self.fingerprint, dict(self.metadata))

    def labelled(self) -> list[tuple[Episode, int]]:
        return [(ep, ep.truth) for ep in self.episodes]


class _UniformStreams:
    """Per-episode uniform draws, buffered so a batch advances in lockstep."""

    def __init__(self, rngs: list[np.random.Generator], chunk: int = 32):
        self.rngs = rngs
        self.chunk = chunk
        self.buf = np.empty((len(rngs), chunk))
        self.pos = np.full(len(rngs), chunk)

    def draw(self, rows: np.ndarray, k: int = 1) -> np.ndarray:
        out = np.empty((len(rows), k))
        for j in range(k):
            empty = rows[self.pos[rows] >= self.chunk]
            for r in empty:
                self.buf[r] = self.rngs[r].random(self.chunk)
                self.pos[r] = 0
            out[:, j] = self.buf[rows, self.pos[rows]]
            self.pos[rows] += 1
        return out[:, 0] if k == 1 else out


def _categorical(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    idx = (u[:, None] * cdf[:, -1:] >= cdf).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def _simulate_batch(
    problem: DecisionProblem,
    strategy: Strategy,
    rngs: list[np.random.Generator],
    prior_mode: str,
    t_max: int,
    priors: Optional[np.ndarray] = None,
    truths: Optional[np.ndarray] = None,
    id_offset: int = 0,
) -> list[Episode]:
    if prior_mode not in PRIOR_MODES:
        raise ValueError(f"prior_mode must be one of {PRIOR_MODES}")
    n = len(rngs)
    K, L = problem.n_theta, problem.n_lambda
    streams = _UniformStreams(rngs)
    rows = np.arange(n)
    if priors is None:
        if prior_mode == "uniform":
            e = -np.log1p(-streams.draw(rows, K))
            priors = e / e.sum(axis=1, keepdims=True)
        else:
            priors = np.tile(np.asarray(problem.mu0, dtype=float), (n, 1))
    priors = np.atleast_2d(np.asarray(priors, dtype=float))
    u_truth = streams.draw(rows)
    if truths is None:
        truths = _categorical(priors, u_truth)
    truths = np.asarray(truths, dtype=int)
    mus = priors.copy()
    steps: list[list[Step]] = [[] for _ in range(n)]
    active = rows.copy()
    for _ in range(t_max):
        if len(active) == 0:
            break
        q = strategy.q_values(problem, mus[active])
        probs = boltzmann_policy(q, strategy.rho)
        u = streams.draw(active, 3)
        actions = _categorical(probs, u[:, 0])
        still = []
        for j, ep in enumerate(active):
            a = int(actions[j])
            th = truths[ep]
            if a >= L:
                steps[ep].append(Step(DECIDE, a - L))
                continue
            if u[j, 1] < problem.p[th, a]:
                steps[ep].append(Step(ACQUIRE, a, None, False))
                w = problem.p[:, a] * mus[ep]
                mus[ep] = w / w.sum()
                continue
            omega = int(_categorical(problem.q[th, a][None, :], u[j, 2:3])[0])
            steps[ep].append(Step(ACQUIRE, a, omega, True))
            w = (1 - problem.p[:, a]) * problem.q[:, a, omega] * mus[ep]
            mus[ep] = w / w.sum()
            still.append(ep)
        active = np.array(still, dtype=int)
    if len(active):
        raise EpisodeLimitError(f"{len(active)} episode(s) exceeded t_max={t_max} steps")
    return [Episode(priors[i], tuple(steps[i]), int(truths[i]), id_offset + i) for i in range(n)]


def simulate_episode(
    problem: DecisionProblem,
    strategy: Strategy,
    rng: np.random.Generator,
    t_max: int = DEFAULT_T_MAX,
    prior=None,
    truth: Optional[int] = None,
    episode_id: int = 0,
) -> Episode:
    """Run one episode; ``prior`` defaults to the problem's ``mu0`` and ``truth`` is drawn from it."""
    strategy = strategy.prepared(problem)
    priors = None if prior is None else np.asarray(prior, dtype=float)[None, :]
    truths = None if truth is None else np.array([truth])
    return _simulate_batch(problem, strategy, [rng], "fixed", t_max, priors, truths, episode_id)[0]


def episode_streams(seed: int, n: int, start: int = 0) -> list[np.random.Generator]:
    """Independent generators keyed by ``(seed, episode index)``."""
    return [np.random.default_rng([seed, i]) for i in range(start, start + n)]


def simulate_dataset(
    problem: DecisionProblem,
    strategy: Strategy,
    N: int,
    seed: int,
    prior_mode: str = "fixed",
    t_max: int = DEFAULT_T_MAX,
    batch_size: int = 2048,
) -> EpisodeDataset:
    """``N`` independent episodes; episode ``i`` depends only on ``(seed, i)``."""
    if N < 0:
        raise ValueError("N must be non-negative")
    strategy = strategy.prepared(problem)
    episodes: list[Episode] = []
    for start in range(0, N, batch_size):
        size = min(batch_size, N - start)
        episodes += _simulate_batch(problem, strategy, episode_streams(seed, size, start), prior_mode, t_max, id_offset=start)
    prefs = strategy.prefs
    metadata = {
        "seed": seed,
        "N": N,
        "prior_mode": prior_mode,
        "criterion": prefs.criterion.value,
        "rho": prefs.rho,
        "eta_a": prefs.eta_a.tolist(),
        "eta_b": prefs.eta_b.tolist(),
        "eta_c": prefs.eta_c.tolist(),
        "eta_d": None if prefs.eta_d is None else prefs.eta_d.tolist(),
    }
    if strategy.policy is not None:
        metadata["grid_resolution"] = strategy.policy.grid.resolution
    return EpisodeDataset(tuple(episodes), problem.fingerprint(), metadata)


@dataclass(frozen=True)
class RiskEstimate:
    mean: float
    stderr: float
    n: int

    def __float__(self) -> float:
        return self.mean


def loss_samples(dataset: EpisodeDataset, prefs_true: Preferences, problem: DecisionProblem) -> np.ndarray:
    return np.array([episode_loss(ep, ep.truth, prefs_true, problem).total for ep in dataset])


def risk_estimate(
    problem: DecisionProblem,
    strategy: Strategy,
    prefs_true: Preferences,
    N: int,
    seed: int,
    prior_mode: str = "fixed",
) -> RiskEstimate:
    """Mean ground-truth loss of ``strategy`` with its Monte-Carlo standard error."""
    if N < 1:
        raise ValueError("N must be at least 1")
    data = simulate_dataset(problem, strategy, N, seed, prior_mode)
    losses = loss_samples(data, prefs_true, problem)
    se = float(losses.std(ddof=1) / np.sqrt(N)) if N > 1 else float("nan")
    return RiskEstimate(float(losses.mean()), se, N)


def average_risk(problem, strategy, prefs_true, N, seed, prior_mode="fixed") -> float:
    return risk_estimate(problem, strategy, prefs_true, N, seed, prior_mode).mean
