"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v -s`` (or
``python3 tests/test_acceptance.py``); the collected lines are repeated in the
pytest terminal summary.
"""

import time
from fractions import Fraction as F

import numpy as np
import pytest

from activesense.forward import (
    Lookahead,
    acquisition_q,
    bellman_apply,
    decomposed_acquisition_q,
    solve_optimal,
    termination_set,
)
from activesense.inverse import Lattice, PosteriorModel, PriorSpec, exact_posterior, map_estimate, mcmc_sample
from activesense.problem import DecisionProblem, Preferences
from activesense.recognition import (
    compensator_increments,
    continual_update,
    mean_hazard,
    terminal_update,
)
from activesense.scenarios import (
    biased_cost_preferences,
    greedy_threshold_agent,
    three_hypothesis_screening,
    two_hypothesis_single_test,
    two_identical_tests,
)
from activesense.simplex import SimplexGrid
from activesense.simulate import Strategy, loss_samples, simulate_dataset

from oracles import (
    count_convexity_violations,
    expectimax,
    expectimax_horizon,
    martingale_expectation,
    random_two_hypothesis_instance,
)

RESULTS: list[str] = []


def report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS.append(line)
    print("\n" + line)
    assert ok, line


@pytest.fixture(scope="module")
def screening60():
    problem, prefs = three_hypothesis_screening()
    return problem, prefs, solve_optimal(problem, prefs, 60)


def accuracy_ratio(eta):
    eta = np.atleast_2d(eta)
    total = eta[:, 0] + eta[:, 1]
    return np.where(total > 0, eta[:, 1] / np.where(total > 0, total, 1), 0.5)


def test_criterion_01_expectimax_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    G = 200
    worst_gap, worst_slack = 0.0, np.inf
    failures = 0
    for i in range(20):
        problem, prefs = random_two_hypothesis_instance(rng, 1 + i % 2)
        pol = solve_optimal(problem, prefs, G, 1e-10)
        want, _ = expectimax(problem, prefs, problem.mu0, expectimax_horizon(problem, prefs, 1e-7))
        gap = abs(pol.value(problem.mu0) - want)
        allowed = 1e-6 + 2 / G * pol.grid.lipschitz(pol.v_alive)
        failures += gap > allowed
        worst_gap = max(worst_gap, gap)
        worst_slack = min(worst_slack, allowed - gap)
    elapsed = time.perf_counter() - start
    report(
        1, "value iteration vs expectimax", failures == 0 and elapsed < 60,
        f"20 instances, {failures} outside tolerance, max |diff| {worst_gap:.2e}, min headroom {worst_slack:.2e}, {elapsed:.1f}s",
    )


def test_criterion_02_contraction():
    problem, prefs = three_hypothesis_screening()
    grid = SimplexGrid(3, 60)
    la = Lookahead(problem, grid, grid.points)
    rng = np.random.default_rng(7)
    violations, worst = 0, 0.0
    for _ in range(200):
        scale = 10 ** rng.uniform(-3, 1)
        v1, v2 = rng.normal(size=(2, len(grid))) * scale
        if rng.random() < 0.5:  # nearby pairs as well as unrelated ones
            v2 = v1 + rng.normal(size=len(grid)) * scale * 1e-3
        lhs = np.max(np.abs(bellman_apply(problem, prefs, v1, lookahead=la) - bellman_apply(problem, prefs, v2, lookahead=la)))
        rhs = problem.gamma * np.max(np.abs(v1 - v2))
        violations += lhs > rhs
        worst = max(worst, lhs / rhs)
    report(2, "Bellman contraction", violations == 0, f"200 pairs on {len(grid)} points, {violations} violations, max ratio/gamma {worst / problem.gamma:.3f}")


def test_criterion_03_recognition():
    rng = np.random.default_rng(3)
    closure = martingale = 0.0
    for _ in range(300):
        pos = rng.uniform(0.01, 0.99, (3, 2))
        problem = DecisionProblem(np.stack([pos, 1 - pos], -1), rng.uniform(0.01, 0.99, (3, 2)), np.ones(2), np.full(3, 1 / 3))
        mu = rng.dirichlet(np.ones(3))
        lam = int(rng.integers(2))
        for post in (continual_update(problem, mu, lam, 0), continual_update(problem, mu, lam, 1), terminal_update(problem, mu, lam)):
            closure = max(closure, abs(post.sum() - 1), float(-post.min()))
        martingale = max(martingale, float(np.abs(martingale_expectation(problem, mu, lam) - mu).max()))

    half = np.array([F(1, 2), F(1, 2)], dtype=object)

    def exact(p):
        q = np.array([[[F(4, 5), F(1, 5)]], [[F(2, 5), F(3, 5)]]], dtype=object)
        return DecisionProblem(q, np.array([[p[0]], [p[1]]], dtype=object), np.array([F(1)], dtype=object), half)

    worked = (
        list(continual_update(exact((F(1, 10), F(3, 10))), half, 0, 0)) == [F(18, 25), F(7, 25)]
        and list(terminal_update(exact((F(1, 10), F(3, 10))), half, 0)) == [F(1, 4), F(3, 4)]
        and mean_hazard(exact((F(1, 10), F(3, 10))), half, 0) == F(1, 5)
    )
    flat = exact((F(3, 10), F(3, 10)))
    mu = np.array([F(2, 5), F(3, 5)], dtype=object)
    degenerate = all(
        x == 0 for nu in (0, 1) for inc in compensator_increments(flat, mu, 0, 1, nu) for x in inc
    )
    ok = closure <= 1e-12 and martingale <= 1e-10 and worked and degenerate
    report(
        3, "recognition model", ok,
        f"closure err {closure:.1e}, martingale err {martingale:.1e}, worked examples exact={worked}, exogenous increments zero={degenerate}",
    )


def test_criterion_04_termination_geometry(screening60):
    start = time.perf_counter()
    problem, prefs, pol = screening60
    tmap = termination_set(pol)
    vertices = all(tmap.terminate[i] and tmap.decision[i] == k for k, i in enumerate(pol.grid.vertex_indices()))
    slack = 2 * max(pol.grid.lipschitz(pol.q_star()), pol.grid.lipschitz(pol.q_bar())) / pol.grid.resolution
    violations = count_convexity_violations(pol, tmap, slack)
    sizes = [len(tmap.region(k)) for k in range(3)]
    elapsed = time.perf_counter() - start
    ok = vertices and violations == 0 and sizes[2] >= sizes[0] and elapsed < 60
    report(4, "termination geometry", ok, f"vertices terminate={vertices}, convexity violations {violations}, region sizes {sizes}, {elapsed:.1f}s")


def test_criterion_05_surprise_suspense_identity(screening60):
    problem, prefs, pol = screening60
    tmap = termination_set(pol)
    worst, n = 0.0, 0
    for i in np.flatnonzero(~tmap.terminate):
        mu = pol.grid.points[i]
        for lam in range(problem.n_lambda):
            direct = acquisition_q(problem, prefs, pol, mu, 1, lam)
            worst = max(worst, abs(direct - decomposed_acquisition_q(problem, pol, mu, lam)))
            n += 1
    report(5, "surprise/suspense identity", worst <= 1e-9 and n > 0, f"{n} (point, test) pairs, max |diff| {worst:.1e}")


def test_criterion_06_preference_recovery():
    start = time.perf_counter()
    problem, prefs = two_hypothesis_single_test()
    data = simulate_dataset(problem, Strategy(prefs), 300, 0, "uniform").without_truth()
    lattice = Lattice("optimal", 2, 1, resolution=0.05)
    model = PosteriorModel(problem, data, lattice, PriorSpec.dirac("optimal"))
    chain = mcmc_sample(problem, data, "optimal", n_samples=1000, burn_in=300, rng=0, model=model)
    eta, rho, _ = map_estimate(problem, data, "optimal", model=model, chains=[chain])
    map_ratio = float(accuracy_ratio(eta)[0])
    median = float(np.median(accuracy_ratio(chain.etas())))
    ok = 0.65 <= map_ratio <= 0.85 and 0.60 <= median <= 0.90
    report(
        6, "preference recovery", ok,
        f"MAP eta={np.round(eta, 2).tolist()} rho={rho}, MAP ratio {map_ratio:.3f}, posterior median ratio {median:.3f}, "
        f"acceptance {chain.acceptance_rate:.2f}, {time.perf_counter() - start:.1f}s",
    )


def test_criterion_07_bias_detection():
    problem, unbiased = two_identical_tests()
    out = {}
    for label, prefs, n, seed in (("biased", biased_cost_preferences(), 300, 0), ("unbiased", unbiased, 1000, 1)):
        data = simulate_dataset(problem, Strategy(prefs), n, seed, "uniform").without_truth()
        chain = mcmc_sample(problem, data, "optimal", PriorSpec.dirac("optimal"), Lattice("optimal", 2, 2), 1000, 300, rng=0)
        eta_c = chain.etas()[:, 4:6]
        out[label] = float(np.mean(eta_c[:, 0] < eta_c[:, 1]))
    ok = out["biased"] > 0.8 and 0.2 <= out["unbiased"] <= 0.8
    report(7, "bias detection", ok, f"P(eta_c1 < eta_c2): biased {out['biased']:.3f}, unbiased {out['unbiased']:.3f}")


def test_criterion_08_effective_preferences():
    problem, prefs = greedy_threshold_agent()
    data = simulate_dataset(problem, Strategy(prefs), 300, 0, "uniform").without_truth()
    model = PosteriorModel(problem, data, Lattice("optimal", 2, 1), PriorSpec.dirac("optimal"))
    chain = mcmc_sample(problem, data, "optimal", n_samples=1000, burn_in=300, rng=0, model=model)
    eta, rho, _ = map_estimate(problem, data, "optimal", model=model, chains=[chain])
    report(8, "effective preferences", eta[0] > eta[1], f"greedy agent eta_d={prefs.eta_d.tolist()}, optimal-criterion MAP eta={np.round(eta, 2).tolist()} rho={rho}")


def test_criterion_09_sampler_stationarity():
    problem, prefs = two_hypothesis_single_test()
    data = simulate_dataset(problem, Strategy(prefs), 20, 9, "uniform").without_truth()
    # eta_a free on {0, 1/3, 2/3, 1}^2, other weights pinned; 16 x 4 = 64 points
    lattice = Lattice("optimal", 2, 1, resolution=1 / 3, rho_grid=(1.0, 3.0, 10.0, 30.0), fixed={2: 2, 3: 2, 4: 2})
    model = PosteriorModel(problem, data, lattice, PriorSpec.dirac("optimal"), G=30)
    exact = exact_posterior(model)
    chain = mcmc_sample(problem, data, "optimal", n_samples=21000, burn_in=1000, rng=0, model=model)
    freq = chain.frequencies()
    tv = 0.5 * sum(abs(freq.get(p, 0.0) - w) for p, w in exact.items())
    report(9, "sampler stationarity", len(lattice) <= 64 and tv < 0.05, f"{len(lattice)} points, 20000 retained steps, TV {tv:.4f}")


def test_criterion_10_risk_optimality():
    problem, prefs = two_hypothesis_single_test()
    truth = prefs.replace(rho=np.inf)
    perturbed = []
    for name, i in (("eta_a", 0), ("eta_a", 1), ("eta_b", 0), ("eta_c", 0)):
        for delta in (-0.2, 0.2):
            values = getattr(truth, name).copy()
            values[i] = max(values[i] + delta, 0.0)
            perturbed.append((f"{name}[{i}]{delta:+.1f}", truth.replace(**{name: values})))

    def losses(p):
        data = simulate_dataset(problem, Strategy(p, solve_optimal(problem, p, 60)), 10_000, 0, "uniform")
        return loss_samples(data, truth, problem)

    base = losses(truth)
    worse = []
    for label, p in perturbed:
        diff = losses(p) - base  # common random numbers: same seed, same truths and priors
        se = diff.std(ddof=1) / np.sqrt(len(diff))
        if diff.mean() < -2 * se:
            worse.append(f"{label} ({diff.mean():.4f} +- {se:.4f})")
    report(
        10, "risk optimality", not worse,
        f"true-weight risk {base.mean():.4f}; perturbations beating it by > 2 SE: {worse or 'none'}",
    )


def test_criterion_11_concavity(screening60):
    problem, prefs, pol = screening60
    grid = pol.grid
    rng = np.random.default_rng(11)
    slack = 2 * grid.lipschitz(pol.v_alive) / grid.resolution
    belief_violations = checked = 0
    while checked < 500:
        i, j = rng.integers(len(grid), size=2)
        total = grid.counts[i] + grid.counts[j]
        if np.any(total % 2):
            continue
        mid = grid.index_of(total // 2)
        belief_violations += pol.v_alive[mid] < 0.5 * (pol.v_alive[i] + pol.v_alive[j]) - slack
        checked += 1

    single, _ = two_hypothesis_single_test()
    tol = 1e-10
    eta_violations = 0
    for _ in range(50):
        e1, e2 = rng.uniform(0, 1, size=(2, 5))
        mk = lambda e: Preferences(e[:2], e[2:4], e[4:])
        v1, v2, vm = (solve_optimal(single, mk(e), 60, tol).value(single.mu0) for e in (e1, e2, (e1 + e2) / 2))
        eta_violations += vm < 0.5 * (v1 + v2) - 2 * tol
    report(
        11, "concavity", belief_violations == 0 and eta_violations == 0,
        f"belief midpoints: {belief_violations}/500 violations (slack {slack:.1e}); weight midpoints: {eta_violations}/50 violations (slack {2 * tol:.0e})",
    )


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
