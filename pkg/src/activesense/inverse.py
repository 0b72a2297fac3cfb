"""Posterior inference over strategy criterion, preference weights and inverse temperature.

Preference weights live on a lattice with step ``r`` in ``[0, 1]`` per
coordinate; the inverse temperature takes values on a finite grid. Lattice
points are stored as integer index tuples ``(eta indices..., rho index)`` so
that every coordinate is an exact multiple of the resolution.
"""

from __future__ import annotations

import hashlib
import os
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .forward import (
    DEFAULT_RESOLUTION,
    DEFAULT_TOL,
    Lookahead,
    SolvedPolicy,
    policy_from_values,
    solve_optimal,
)
from .problem import ACQUIRE, Criterion, DecisionProblem, Episode, Preferences
from .recognition import BeliefState, ImpossibleObservation, continual_update
from .simplex import SimplexGrid

DEFAULT_RHO_GRID = (0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0)
DEFAULT_SAMPLES = 1000
DEFAULT_BURN_IN = 300
CACHE_ENV = "ACTIVESENSE_CACHE_DIR"
GREEDY_ACCURACY_SENTINEL = 1.0


class DataInconsistency(ValueError):
    """An episode cannot have been generated by the problem (bad index or impossible outcome)."""

    def __init__(self, message: str, episode_index: Optional[int] = None):
        super().__init__(message)
        self.episode_index = episode_index


# -- preference layouts ------------------------------------------------------


def eta_layout(kappa, n_theta: int, n_lambda: int) -> list[tuple[str, int]]:
    """Weight blocks walked by the sampler for ``kappa``, in coordinate order."""
    kappa = Criterion.parse(kappa)
    if kappa is Criterion.GREEDY:
        return [("eta_b", n_theta), ("eta_c", n_lambda), ("eta_d", n_theta)]
    return [("eta_a", n_theta), ("eta_b", n_theta), ("eta_c", n_lambda)]


def axis_names(kappa, n_theta: int, n_lambda: int) -> list[str]:
    return [f"{name}[{i}]" for name, size in eta_layout(kappa, n_theta, n_lambda) for i in range(size)]


def prefs_from_vector(kappa, eta, n_theta: int, n_lambda: int, rho: float, weighted_entropy: bool = False) -> Preferences:
    """Embed a criterion-specific weight vector into full preferences.

    Blocks the criterion does not use are filled with a sentinel: unit accuracy
    weights for the greedy look-ahead criterion.
    """
    kappa = Criterion.parse(kappa)
    eta = np.asarray(eta, dtype=float)
    blocks = {}
    pos = 0
    for name, size in eta_layout(kappa, n_theta, n_lambda):
        blocks[name] = eta[pos : pos + size]
        pos += size
    if pos != len(eta):
        raise ValueError(f"weight vector has length {len(eta)}, expected {pos} for {kappa.value}")
    if kappa is Criterion.GREEDY:
        blocks["eta_a"] = np.full(n_theta, GREEDY_ACCURACY_SENTINEL)
    return Preferences(criterion=kappa, rho=rho, weighted_entropy=weighted_entropy, **blocks)


def vector_from_prefs(prefs: Preferences) -> np.ndarray:
    layout = eta_layout(prefs.criterion, len(prefs.eta_b), len(prefs.eta_c))
    return np.concatenate([getattr(prefs, name) for name, _ in layout])


# -- lattice ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Lattice:
    """Finite search space for ``(eta, rho)`` under one criterion.

    ``fixed`` pins selected weight axes (by position in the criterion layout)
    to a lattice index; pinned axes are excluded from the walk.
    """

    kappa: Criterion
    n_theta: int
    n_lambda: int
    resolution: float = 0.05
    rho_grid: tuple[float, ...] = DEFAULT_RHO_GRID
    fixed: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kappa", Criterion.parse(self.kappa))
        frac = Fraction(self.resolution).limit_denominator(10**6)
        if frac <= 0 or frac.numerator != 1:
            raise ValueError(f"resolution {self.resolution} must divide 1 exactly")
        object.__setattr__(self, "rho_grid", tuple(float(x) for x in self.rho_grid))
        rg = np.asarray(self.rho_grid)
        if len(rg) < 1 or np.any(rg <= 0) or np.any(np.diff(rg) <= 0):
            raise ValueError("rho grid must be positive and strictly increasing")
        object.__setattr__(self, "fixed", dict(self.fixed))
        for axis, idx in self.fixed.items():
            if not 0 <= axis < self.dim or not 0 <= idx <= self.steps:
                raise ValueError(f"fixed axis {axis} -> {idx} is off the lattice")

    @property
    def steps(self) -> int:
        """Number of resolution steps spanning ``[0, 1]``."""
        return Fraction(self.resolution).limit_denominator(10**6).denominator

    @property
    def dim(self) -> int:
        return sum(size for _, size in eta_layout(self.kappa, self.n_theta, self.n_lambda))

    @property
    def free_axes(self) -> list[int]:
        return [i for i in range(self.dim) if i not in self.fixed]

    @property
    def axis_names(self) -> list[str]:
        return axis_names(self.kappa, self.n_theta, self.n_lambda)

    @property
    def n_eta_points(self) -> int:
        return (self.steps + 1) ** len(self.free_axes)

    def __len__(self) -> int:
        return self.n_eta_points * len(self.rho_grid)

    def contains(self, point) -> bool:
        point = tuple(point)
        if len(point) != self.dim + 1:
            return False
        eta, r = point[:-1], point[-1]
        if not 0 <= r < len(self.rho_grid):
            return False
        if any(not 0 <= e <= self.steps for e in eta):
            return False
        return all(eta[a] == i for a, i in self.fixed.items())

    def eta(self, point) -> np.ndarray:
        return np.asarray(point[:-1], dtype=float) / self.steps

    def rho(self, point) -> float:
        return self.rho_grid[point[-1]]

    def prefs(self, point, weighted_entropy: bool = False) -> Preferences:
        return prefs_from_vector(self.kappa, self.eta(point), self.n_theta, self.n_lambda, self.rho(point), weighted_entropy)

    def random_point(self, rng: np.random.Generator) -> tuple[int, ...]:
        eta = [self.fixed.get(a, int(rng.integers(0, self.steps + 1))) for a in range(self.dim)]
        return tuple(eta) + (int(rng.integers(0, len(self.rho_grid))),)

    def moves(self, point) -> list[tuple[int, ...]]:
        """Feasible single-axis, single-step moves from ``point``."""
        out = []
        for axis in self.free_axes + [self.dim]:
            upper = self.steps if axis < self.dim else len(self.rho_grid) - 1
            for delta in (-1, 1):
                v = point[axis] + delta
                if 0 <= v <= upper:
                    moved = list(point)
                    moved[axis] = v
                    out.append(tuple(moved))
        return out

    def points(self, eta_levels: Optional[Sequence[int]] = None) -> Iterable[tuple[int, ...]]:
        """All lattice points in lexicographic order, or the sub-lattice on ``eta_levels``."""
        levels = list(range(self.steps + 1)) if eta_levels is None else sorted(set(eta_levels))
        axes = [[self.fixed[a]] if a in self.fixed else levels for a in range(self.dim)]
        axes.append(list(range(len(self.rho_grid))))
        return product(*axes)

    def nearest(self, eta, rho) -> tuple[int, ...]:
        idx = [self.fixed.get(a, int(round(float(x) * self.steps))) for a, x in enumerate(eta)]
        r = int(np.argmin(np.abs(np.log(np.asarray(self.rho_grid)) - np.log(rho))))
        return tuple(min(max(i, 0), self.steps) for i in idx) + (r,)


# -- priors -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Log-priors over criteria, weights given the criterion, and inverse temperature.

    The default weight and temperature priors are uniform over the lattice of
    the criterion being scored; custom log-prior callables receive a lattice
    and a point.
    """

    kappa: Mapping[Criterion, float] = field(
        default_factory=lambda: {c: 1.0 / len(Criterion) for c in Criterion}
    )
    log_eta: Optional[Callable[[Lattice, tuple], float]] = None
    log_rho: Optional[Callable[[Lattice, tuple], float]] = None

    def __post_init__(self):
        probs = {Criterion.parse(k): float(v) for k, v in self.kappa.items()}
        total = sum(probs.values())
        if abs(total - 1.0) > 1e-9 or any(v < 0 for v in probs.values()):
            raise ValueError("criterion prior must be a probability distribution")
        object.__setattr__(self, "kappa", probs)

    @classmethod
    def dirac(cls, kappa) -> "PriorSpec":
        return cls({Criterion.parse(kappa): 1.0})

    @classmethod
    def uniform_over(cls, criteria: Iterable) -> "PriorSpec":
        criteria = [Criterion.parse(c) for c in criteria]
        return cls({c: 1.0 / len(criteria) for c in criteria})

    def log_kappa(self, kappa) -> float:
        p = self.kappa.get(Criterion.parse(kappa), 0.0)
        return float(np.log(p)) if p > 0 else -np.inf

    def log_prior(self, lattice: Lattice, point) -> float:
        lk = self.log_kappa(lattice.kappa)
        le = self.log_eta(lattice, point) if self.log_eta else -np.log(lattice.n_eta_points)
        lr = self.log_rho(lattice, point) if self.log_rho else -np.log(len(lattice.rho_grid))
        return float(lk + le + lr)


# -- policy cache ---------------------------------------------------------------


class PolicyCache:
    """Bounded LRU store of solved policies, safe to share between threads.

    When ``directory`` is set (or the ``ACTIVESENSE_CACHE_DIR`` environment
    variable names one) converged value tables are also persisted as ``.npy``
    files and reloaded bit-for-bit.
    """

    def __init__(self, maxsize: int = 4096, directory: Optional[str] = None):
        self.maxsize = maxsize
        self.directory = directory if directory is not None else os.environ.get(CACHE_ENV) or None
        self._store: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._store)

    def _disk_path(self, problem: DecisionProblem, key) -> Optional[str]:
        if not self.directory:
            return None
        digest = hashlib.sha256(repr((problem.fingerprint(), key)).encode()).hexdigest()[:32]
        return os.path.join(self.directory, f"policy-{digest}.npy")

    def get(self, problem: DecisionProblem, prefs: Preferences, lookahead: Lookahead, tol: float = DEFAULT_TOL) -> SolvedPolicy:
        key = (problem.fingerprint(), prefs.key(), lookahead.grid.resolution, tol)
        with self._lock:
            hit = self._store.get(key)
            if hit is not None:
                self._store.move_to_end(key)
                self.hits += 1
                return hit
            self.misses += 1
        policy = self._load_or_solve(problem, prefs, lookahead, tol, key)
        with self._lock:
            existing = self._store.setdefault(key, policy)
            self._store.move_to_end(key)
            while len(self._store) > self.maxsize:
                self._store.popitem(last=False)
        return existing

    def _load_or_solve(self, problem, prefs, lookahead, tol, key) -> SolvedPolicy:
        path = self._disk_path(problem, key)
        if path and os.path.exists(path):
            record = np.load(path)
            return policy_from_values(problem, prefs, lookahead, record[2:], float(record[0]), int(record[1]), tol)
        policy = solve_optimal(problem, prefs, tol=tol, lookahead=lookahead)
        if path:
            os.makedirs(self.directory, exist_ok=True)
            tmp = f"{path}.{os.getpid()}.{threading.get_ident()}.tmp"
            with open(tmp, "wb") as fh:
                np.save(fh, np.concatenate([[policy.residual, policy.iterations], policy.v_alive]))
            os.replace(tmp, path)
        return policy


# -- belief replay --------------------------------------------------------------


def replay_beliefs(problem: DecisionProblem, episode: Episode) -> list[BeliefState]:
    """Beliefs at which the agent chose each logged action (the prior for a step-less episode)."""
    mu = np.asarray(episode.prior)
    if mu.shape != (problem.n_theta,):
        raise DataInconsistency(f"prior has length {mu.shape[0]}, expected {problem.n_theta}")
    beliefs = [BeliefState(mu, 1)]
    for t, step in enumerate(episode.steps[:-1]):
        if step.kind != ACQUIRE or not step.survived or step.outcome is None:
            raise DataInconsistency(f"step {t}: only surviving acquisitions may precede the final step")
        if not 0 <= step.index < problem.n_lambda or not 0 <= step.outcome < problem.n_omega:
            raise DataInconsistency(f"step {t}: action or outcome index out of range")
        try:
            mu = continual_update(problem, mu, step.index, step.outcome)
        except ImpossibleObservation as exc:
            raise DataInconsistency(f"step {t}: {exc}") from None
        beliefs.append(BeliefState(mu, 1))
    return beliefs


def action_index(problem: DecisionProblem, step) -> int:
    """Column of ``step`` in the generalized Q-vector (acquisitions first)."""
    if step.kind == ACQUIRE:
        if not 0 <= step.index < problem.n_lambda:
            raise DataInconsistency(f"acquisition index {step.index} out of range")
        return step.index
    if not 0 <= step.index < problem.n_theta:
        raise DataInconsistency(f"decision index {step.index} out of range")
    return problem.n_lambda + step.index


@dataclass(frozen=True, eq=False)
class CompiledData:
    """Every (belief, chosen action) pair in a dataset, with its one-step look-ahead."""

    beliefs: np.ndarray
    actions: np.ndarray
    episode_of: np.ndarray
    lookahead: Lookahead
    n_episodes: int

    @classmethod
    def build(cls, problem: DecisionProblem, episodes: Iterable[Episode], grid: SimplexGrid) -> "CompiledData":
        beliefs, actions, owner = [], [], []
        n = 0
        for n, ep in enumerate(episodes, start=1):
            try:
                states = replay_beliefs(problem, ep)
                acts = [action_index(problem, s) for s in ep.steps]
            except DataInconsistency as exc:
                raise DataInconsistency(f"episode {n - 1}: {exc}", n - 1) from None
            states = states[: len(acts)]
            beliefs += [s.mu for s in states]
            actions += acts
            owner += [n - 1] * len(acts)
        mus = np.array(beliefs, dtype=float).reshape(-1, problem.n_theta)
        return cls(mus, np.array(actions, dtype=int), np.array(owner, dtype=int), Lookahead(problem, grid, mus), n)

    def __len__(self) -> int:
        return len(self.actions)


def _logsumexp(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True)))[..., 0]


def data_log_likelihood(q: np.ndarray, actions: np.ndarray, rhos) -> np.ndarray:
    """Softmax log-likelihood of the chosen actions for each inverse temperature in ``rhos``."""
    rhos = np.atleast_1d(np.asarray(rhos, dtype=float))
    if len(actions) == 0:
        return np.zeros(len(rhos))
    chosen = q[np.arange(len(actions)), actions]
    out = np.empty(len(rhos))
    for i, rho in enumerate(rhos):
        out[i] = -np.sum(rho * chosen + _logsumexp(-rho * q))
    return out


class PosteriorModel:
    """Unnormalized log-posterior over one criterion's lattice for a fixed dataset.

    Belief replay and the preference-independent look-ahead are done once;
    each new weight vector costs one forward solve (optimal criterion only)
    and one pass over the data, shared across every inverse temperature.
    """

    def __init__(
        self,
        problem: DecisionProblem,
        dataset,
        lattice: Lattice,
        priors: Optional[PriorSpec] = None,
        policy_cache: Optional[PolicyCache] = None,
        G: int = DEFAULT_RESOLUTION,
        tol: float = DEFAULT_TOL,
        weighted_entropy: bool = False,
    ):
        episodes = [ep.without_truth() for ep in dataset]
        self.problem = problem
        self.lattice = lattice
        self.priors = priors if priors is not None else PriorSpec()
        self.cache = policy_cache if policy_cache is not None else PolicyCache()
        self.tol = tol
        self.weighted_entropy = weighted_entropy
        grid = SimplexGrid(problem.n_theta, G if lattice.kappa is Criterion.OPTIMAL else 1)
        self.data = CompiledData.build(problem, episodes, grid)
        self._grid_lookahead = Lookahead(problem, grid, grid.points) if lattice.kappa is Criterion.OPTIMAL else None
        self._by_eta: dict[tuple, np.ndarray] = {}
        self._lock = threading.Lock()

    def q_values(self, point) -> np.ndarray:
        prefs = self.lattice.prefs(point, self.weighted_entropy)
        policy = None
        if self.lattice.kappa is Criterion.OPTIMAL:
            policy = self.cache.get(self.problem, prefs, self._grid_lookahead, self.tol)
        return self.data.lookahead.generalized_q(prefs, policy)

    def data_terms(self, point) -> np.ndarray:
        """Data log-likelihood at ``point``'s weights for every grid temperature."""
        eta_key = tuple(point[:-1])
        with self._lock:
            hit = self._by_eta.get(eta_key)
        if hit is not None:
            return hit
        q = self.q_values(point)
        terms = data_log_likelihood(q, self.data.actions, self.lattice.rho_grid)
        with self._lock:
            self._by_eta.setdefault(eta_key, terms)
        return terms

    def __call__(self, point) -> float:
        point = tuple(int(x) for x in point)
        if not self.lattice.contains(point):
            raise ValueError(f"{point} is not on the lattice")
        return self.priors.log_prior(self.lattice, point) + float(self.data_terms(point)[point[-1]])


def log_posterior(
    problem: DecisionProblem,
    dataset,
    kappa,
    eta,
    rho: float,
    priors: Optional[PriorSpec] = None,
    policy_cache: Optional[PolicyCache] = None,
    lattice: Optional[Lattice] = None,
    G: int = DEFAULT_RESOLUTION,
    tol: float = DEFAULT_TOL,
) -> float:
    """Unnormalized log-posterior of ``(kappa, eta, rho)`` given ``dataset``.

    ``eta`` is the criterion's weight vector (see :func:`eta_layout`); it need
    not lie on a lattice. Prior terms use ``lattice`` (default: resolution
    0.05 and the default temperature grid) for their normalization.
    """
    kappa = Criterion.parse(kappa)
    lattice = lattice or Lattice(kappa, problem.n_theta, problem.n_lambda)
    priors = priors if priors is not None else PriorSpec()
    prefs = prefs_from_vector(kappa, eta, problem.n_theta, problem.n_lambda, rho)
    grid = SimplexGrid(problem.n_theta, G if kappa is Criterion.OPTIMAL else 1)
    data = CompiledData.build(problem, [ep.without_truth() for ep in dataset], grid)
    policy = None
    if kappa is Criterion.OPTIMAL:
        cache = policy_cache if policy_cache is not None else PolicyCache()
        policy = cache.get(problem, prefs, Lookahead(problem, grid, grid.points), tol)
    q = data.lookahead.generalized_q(prefs, policy)
    term = float(data_log_likelihood(q, data.actions, [rho])[0])
    point = lattice.nearest(vector_from_prefs(prefs), rho)
    return priors.log_prior(lattice, point) + term


# -- sampling -----------------------------------------------------------------


def neighbor(lattice: Lattice, point, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniform draw among the feasible one-step moves from ``point``."""
    moves = lattice.moves(tuple(point))
    return moves[int(rng.integers(len(moves)))]


@dataclass(frozen=True, eq=False)
class PosteriorChain:
    """States visited by the lattice sampler, including burn-in."""

    lattice: Lattice
    points: np.ndarray
    log_post: np.ndarray
    accepted: np.ndarray
    burn_in: int
    seed: Optional[int]

    @property
    def acceptance_count(self) -> int:
        return int(self.accepted.sum())

    @property
    def acceptance_rate(self) -> float:
        return self.acceptance_count / max(len(self.accepted), 1)

    @property
    def retained(self) -> np.ndarray:
        return self.points[self.burn_in :]

    def etas(self, retained: bool = True) -> np.ndarray:
        pts = self.retained if retained else self.points
        return pts[:, :-1] / self.lattice.steps

    def rhos(self, retained: bool = True) -> np.ndarray:
        pts = self.retained if retained else self.points
        return np.asarray(self.lattice.rho_grid)[pts[:, -1]]

    def frequencies(self) -> dict[tuple, float]:
        pts = [tuple(int(v) for v in row) for row in self.retained]
        out: dict[tuple, float] = {}
        for p in pts:
            out[p] = out.get(p, 0) + 1
        return {k: v / len(pts) for k, v in out.items()}

    def coordinate(self, name: str, retained: bool = True) -> np.ndarray:
        return self.etas(retained)[:, self.lattice.axis_names.index(name)]


def mcmc_sample(
    problem: DecisionProblem,
    dataset,
    kappa,
    priors: Optional[PriorSpec] = None,
    lattice: Optional[Lattice] = None,
    n_samples: int = DEFAULT_SAMPLES,
    burn_in: int = DEFAULT_BURN_IN,
    rng=None,
    policy_cache: Optional[PolicyCache] = None,
    *,
    model: Optional[PosteriorModel] = None,
    start=None,
    hastings: bool = True,
) -> PosteriorChain:
    """Metropolis random walk on the lattice.

    The chain starts at a uniformly drawn lattice point and records the state
    after each of ``n_samples`` transitions; the first ``burn_in`` are kept in
    the chain but excluded from :attr:`PosteriorChain.retained`. With
    ``hastings`` the acceptance ratio includes the ratio of neighbourhood sizes,
    which keeps the target exact at the lattice boundary.
    """
    if not n_samples > burn_in >= 0:
        raise ValueError("need n_samples > burn_in >= 0")
    seed = rng if isinstance(rng, (int, np.integer)) or rng is None else None
    rng = np.random.default_rng(rng)
    if model is None:
        lattice = lattice or Lattice(kappa, problem.n_theta, problem.n_lambda)
        model = PosteriorModel(problem, dataset, lattice, priors, policy_cache)
    lattice = model.lattice
    if Criterion.parse(kappa) is not lattice.kappa:
        raise ValueError("criterion does not match the lattice")
    current = tuple(start) if start is not None else lattice.random_point(rng)
    current_lp = model(current)
    current_n = len(lattice.moves(current))
    points = np.empty((n_samples, lattice.dim + 1), dtype=int)
    logs = np.empty(n_samples)
    accepted = np.zeros(n_samples, dtype=bool)
    for i in range(n_samples):
        proposal = neighbor(lattice, current, rng)
        try:
            prop_lp = model(proposal)
        except Exception as exc:
            raise type(exc)(f"at lattice point {proposal}: {exc}") from exc
        prop_n = len(lattice.moves(proposal))
        delta = prop_lp - current_lp
        if hastings:
            delta += np.log(current_n) - np.log(prop_n)
        if np.log(rng.random()) < delta:
            current, current_lp, current_n = proposal, prop_lp, prop_n
            accepted[i] = True
        points[i] = current
        logs[i] = current_lp
    return PosteriorChain(lattice, points, logs, accepted, burn_in, seed)


def map_estimate(
    problem: DecisionProblem,
    dataset,
    kappa,
    priors: Optional[PriorSpec] = None,
    lattice: Optional[Lattice] = None,
    policy_cache: Optional[PolicyCache] = None,
    *,
    model: Optional[PosteriorModel] = None,
    chains: Sequence[PosteriorChain] = (),
    sweep_levels: Optional[Sequence[float]] = (0.0, 0.5, 1.0),
) -> tuple[np.ndarray, float, float]:
    """Lattice MAP: coarse sweep plus visited chain states, then greedy hill-climb.

    Returns ``(eta, rho, log_posterior)``. Ties go to the lexicographically
    smallest lattice point.
    """
    if model is None:
        lattice = lattice or Lattice(kappa, problem.n_theta, problem.n_lambda)
        model = PosteriorModel(problem, dataset, lattice, priors, policy_cache)
    point, value = map_point(model, chains, sweep_levels)
    lattice = model.lattice
    return lattice.eta(point), lattice.rho(point), value


def _better(a_val, a_pt, b_val, b_pt) -> bool:
    return a_val > b_val or (a_val == b_val and a_pt < b_pt)


def map_point(model: PosteriorModel, chains: Sequence[PosteriorChain] = (), sweep_levels=(0.0, 0.5, 1.0)) -> tuple[tuple, float]:
    lattice = model.lattice
    seeds: set[tuple] = set()
    if sweep_levels is not None:
        levels = [int(round(x * lattice.steps)) for x in sweep_levels]
        seeds.update(lattice.points(levels))
    for chain in chains:
        seeds.update(tuple(int(v) for v in row) for row in chain.points)
    if not seeds:
        raise ValueError("MAP search needs a sweep or at least one chain")
    best_pt, best_val = None, -np.inf
    for pt in sorted(seeds):
        val = model(pt)
        if best_pt is None or _better(val, pt, best_val, best_pt):
            best_pt, best_val = pt, val
    while True:
        step_pt, step_val = best_pt, best_val
        for nb in sorted(lattice.moves(best_pt)):
            val = model(nb)
            if val > best_val and _better(val, nb, step_val, step_pt):
                step_pt, step_val = nb, val
        if step_pt == best_pt:
            return best_pt, best_val
        best_pt, best_val = step_pt, step_val


def compare_criteria(
    problem: DecisionProblem,
    dataset,
    priors: PriorSpec,
    lattices: Mapping,
    chains: Optional[Mapping] = None,
    policy_cache: Optional[PolicyCache] = None,
    sweep_levels=(0.0, 0.5, 1.0),
) -> dict[Criterion, float]:
    """MAP log-posterior (criterion prior included) for every criterion the prior supports."""
    cache = policy_cache if policy_cache is not None else PolicyCache()
    scores = {}
    for kappa, lattice in lattices.items():
        kappa = Criterion.parse(kappa)
        if not np.isfinite(priors.log_kappa(kappa)):
            continue
        model = PosteriorModel(problem, dataset, lattice, priors, cache)
        chain_list = []
        if chains and kappa in chains:
            chain_list = chains[kappa] if isinstance(chains[kappa], (list, tuple)) else [chains[kappa]]
        scores[kappa] = map_point(model, chain_list, sweep_levels)[1]
    return scores


def split_rhat(samples: Sequence[np.ndarray]) -> float:
    """Split-chain potential scale reduction of a scalar statistic across chains."""
    halves = []
    for s in samples:
        s = np.asarray(s, dtype=float)
        n = len(s) // 2
        if n < 2:
            raise ValueError("each chain needs at least four retained draws")
        halves += [s[:n], s[n : 2 * n]]
    x = np.array(halves)
    m, n = x.shape
    means = x.mean(axis=1)
    w = x.var(axis=1, ddof=1).mean()
    b = n * means.var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else float("inf")
    var_plus = (n - 1) / n * w + b / n
    return float(np.sqrt(var_plus / w))


def exact_posterior(model: PosteriorModel) -> dict[tuple, float]:
    """Brute-force normalized posterior over every lattice point (small lattices only)."""
    pts = list(model.lattice.points())
    if len(pts) > 100_000:
        raise ValueError("lattice too large for exhaustive normalization")
    logs = np.array([model(p) for p in pts])
    w = np.exp(logs - logs.max())
    w /= w.sum()
    return dict(zip(pts, w))
