from math import log

import numpy as np
import pytest

from activesense.forward import generalized_q, solve_optimal
from activesense.inverse import (
    DataInconsistency,
    Lattice,
    PolicyCache,
    PosteriorModel,
    PriorSpec,
    compare_criteria,
    data_log_likelihood,
    exact_posterior,
    log_posterior,
    map_estimate,
    map_point,
    mcmc_sample,
    neighbor,
    prefs_from_vector,
    replay_beliefs,
    split_rhat,
    vector_from_prefs,
)
from activesense.problem import ACQUIRE, DECIDE, Criterion, Episode, Step
from activesense.recognition import continual_update
from activesense.scenarios import greedy_threshold_agent, two_hypothesis_single_test
from activesense.simulate import Strategy, simulate_dataset


@pytest.fixture(scope="module")
def single_test():
    return two_hypothesis_single_test()


@pytest.fixture(scope="module")
def small_data(single_test):
    problem, prefs = single_test
    return simulate_dataset(problem, Strategy(prefs), 30, 4, "uniform").without_truth()


def episode(prior, *steps):
    return Episode(np.asarray(prior, dtype=float), tuple(steps))


class TestReplay:
    def test_beliefs_before_each_step(self, single_test):
        problem, _ = single_test
        ep = episode([0.5, 0.5], Step(ACQUIRE, 0, 1), Step(ACQUIRE, 0, 1), Step(DECIDE, 1))
        beliefs = replay_beliefs(problem, ep)
        assert len(beliefs) == 3
        np.testing.assert_allclose(beliefs[1].mu, [0.25 * 0.95 / (0.25 * 0.95 + 0.75 * 0.9), 0.75 * 0.9 / (0.25 * 0.95 + 0.75 * 0.9)])
        np.testing.assert_allclose(beliefs[2].mu, continual_update(problem, beliefs[1].mu, 0, 1))

    def test_stepless_episode_yields_prior(self, single_test):
        problem, _ = single_test
        beliefs = replay_beliefs(problem, episode([0.3, 0.7]))
        assert len(beliefs) == 1
        np.testing.assert_array_equal(beliefs[0].mu, [0.3, 0.7])

    def test_breach_mid_episode_is_inconsistent(self, single_test):
        problem, _ = single_test
        ep = episode([0.5, 0.5], Step(ACQUIRE, 0, None, survived=False), Step(DECIDE, 0))
        with pytest.raises(DataInconsistency):
            replay_beliefs(problem, ep)

    def test_out_of_range_action_names_episode(self, single_test):
        problem, _ = single_test
        bad = [episode([0.5, 0.5], Step(DECIDE, 0)), episode([0.5, 0.5], Step(ACQUIRE, 3, 0), Step(DECIDE, 0))]
        with pytest.raises(DataInconsistency) as info:
            PosteriorModel(problem, bad, Lattice("optimal", 2, 1), G=10)
        assert info.value.episode_index == 1

    def test_impossible_outcome(self):
        from activesense.problem import DecisionProblem

        problem = DecisionProblem([[[1.0, 0.0]], [[1.0, 0.0]]], [[0.1], [0.1]], [1.0], [0.5, 0.5])
        with pytest.raises(DataInconsistency):
            replay_beliefs(problem, episode([0.5, 0.5], Step(ACQUIRE, 0, 1), Step(DECIDE, 0)))


class TestLikelihood:
    def test_zero_temperature_is_uniform_choice(self):
        q = np.random.default_rng(0).normal(size=(7, 3))
        actions = np.array([0, 2, 1, 1, 0, 2, 2])
        assert data_log_likelihood(q, actions, [0.0])[0] == pytest.approx(-7 * log(3))

    def test_row_shifts_cancel(self):
        rng = np.random.default_rng(1)
        q = rng.normal(size=(9, 4))
        actions = rng.integers(0, 4, 9)
        shifted = q + rng.normal(size=(9, 1)) * 10
        np.testing.assert_allclose(
            data_log_likelihood(q, actions, [0.3, 3.0, 30.0]), data_log_likelihood(shifted, actions, [0.3, 3.0, 30.0]), rtol=1e-10
        )

    def test_empty_dataset_gives_the_prior(self, single_test):
        problem, _ = single_test
        lat = Lattice("optimal", 2, 1)
        lp = log_posterior(problem, [], "optimal", [0.25, 0.75, 0.5, 0.5, 0.5], 10.0, lattice=lat, G=10)
        assert lp == pytest.approx(log(1 / 3) - log(21**5) - log(9))

    def test_uniform_prior_cancels_in_differences(self, single_test, small_data):
        problem, _ = single_test
        lat = Lattice("optimal", 2, 1)
        a, b = [0.25, 0.75, 0.5, 0.5, 0.5], [0.5, 0.5, 0.5, 0.5, 1.0]
        for priors in (PriorSpec(), PriorSpec.dirac("optimal")):
            d = log_posterior(problem, small_data, "optimal", a, 3.0, priors, lattice=lat, G=10) - log_posterior(
                problem, small_data, "optimal", b, 3.0, priors, lattice=lat, G=10
            )
            assert d == pytest.approx(
                log_posterior(problem, small_data, "optimal", a, 3.0, PriorSpec(), lattice=lat, G=10)
                - log_posterior(problem, small_data, "optimal", b, 3.0, PriorSpec(), lattice=lat, G=10)
            )

    def test_zero_prior_criterion_is_excluded(self, single_test, small_data):
        problem, _ = single_test
        lp = log_posterior(problem, small_data, "infomax", [0.5] * 5, 1.0, PriorSpec.dirac("optimal"), G=10)
        assert lp == -np.inf

    def test_model_agrees_with_direct_evaluation(self, single_test, small_data):
        problem, _ = single_test
        lat = Lattice("optimal", 2, 1)
        model = PosteriorModel(problem, small_data, lat, G=10)
        pt = (5, 15, 10, 10, 10, 6)
        direct = log_posterior(problem, small_data, "optimal", lat.eta(pt), lat.rho(pt), lattice=lat, G=10)
        assert model(pt) == pytest.approx(direct, rel=1e-12)


class TestLayout:
    def test_greedy_vector_round_trip(self):
        prefs = prefs_from_vector("greedy_lookahead", [0.1, 0.2, 0.3, 0.0, 0.4], 2, 1, 2.0)
        np.testing.assert_array_equal(prefs.eta_a, [1.0, 1.0])
        np.testing.assert_array_equal(prefs.eta_d, [0.0, 0.4])
        np.testing.assert_allclose(vector_from_prefs(prefs), [0.1, 0.2, 0.3, 0.0, 0.4])

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            prefs_from_vector("optimal", [0.1] * 4, 2, 1, 1.0)

    def test_lattice_size(self):
        lat = Lattice("optimal", 2, 1, resolution=0.25, fixed={0: 1})
        assert lat.steps == 4 and lat.n_eta_points == 5**4 and len(lat) == 5**4 * 9
        assert len(list(lat.points())) == len(lat)

    def test_bad_resolution(self):
        with pytest.raises(ValueError):
            Lattice("optimal", 2, 1, resolution=0.3)


class TestNeighbourhood:
    def test_interior_has_two_moves_per_axis(self):
        lat = Lattice("optimal", 2, 1)
        assert len(lat.moves((3, 4, 5, 6, 7, 4))) == 2 * 6

    def test_corner_has_one_move_per_axis(self):
        lat = Lattice("optimal", 2, 1)
        assert len(lat.moves((0, 0, 0, 0, 0, 0))) == 6
        assert len(lat.moves((20, 20, 20, 20, 20, 8))) == 6

    def test_fixed_axes_never_move(self):
        lat = Lattice("optimal", 2, 1, fixed={1: 3, 4: 0})
        rng = np.random.default_rng(0)
        pt = lat.random_point(rng)
        for _ in range(200):
            pt = neighbor(lat, pt, rng)
            assert pt[1] == 3 and pt[4] == 0 and lat.contains(pt)


class FlatModel:
    """Stand-in posterior that is constant over the lattice."""

    def __init__(self, lattice):
        self.lattice = lattice

    def __call__(self, point):
        return 0.0


class TestSampler:
    def test_flat_target_accepts_almost_everything(self):
        lat = Lattice("optimal", 2, 1)
        chain = mcmc_sample(None, [], "optimal", n_samples=2000, burn_in=0, rng=0, model=FlatModel(lat))
        assert chain.acceptance_rate > 0.9

    def test_flat_target_without_correction_is_biased_toward_corners(self):
        lat = Lattice("optimal", 1, 1, resolution=0.5, rho_grid=(1.0, 2.0))
        for hastings, uniform in ((True, True), (False, False)):
            chain = mcmc_sample(None, [], "optimal", n_samples=40000, burn_in=0, rng=1, model=FlatModel(lat), hastings=hastings)
            freq = chain.frequencies()
            tv = 0.5 * sum(abs(freq.get(p, 0.0) - 1 / len(lat)) for p in lat.points())
            assert (tv < 0.03) is uniform

    def test_reproducible(self, single_test, small_data):
        problem, _ = single_test
        lat = Lattice("optimal", 2, 1, fixed={0: 5, 1: 15})
        model = PosteriorModel(problem, small_data, lat, G=10)
        a = mcmc_sample(problem, small_data, "optimal", n_samples=60, burn_in=10, rng=3, model=model)
        b = mcmc_sample(problem, small_data, "optimal", n_samples=60, burn_in=10, rng=3, model=model)
        np.testing.assert_array_equal(a.points, b.points)
        assert len(a.retained) == 50

    def test_burn_in_must_leave_samples(self, single_test):
        problem, _ = single_test
        with pytest.raises(ValueError):
            mcmc_sample(problem, [], "optimal", n_samples=5, burn_in=5)

    def test_matches_exact_posterior_on_tiny_lattice(self, single_test, small_data):
        problem, _ = single_test
        lat = Lattice("optimal", 2, 1, resolution=0.5, rho_grid=(1.0, 10.0), fixed={0: 1, 1: 2, 2: 1, 3: 1})
        model = PosteriorModel(problem, small_data, lat, G=10)
        exact = exact_posterior(model)
        chain = mcmc_sample(problem, small_data, "optimal", n_samples=20000, burn_in=500, rng=5, model=model)
        freq = chain.frequencies()
        tv = 0.5 * sum(abs(freq.get(p, 0.0) - w) for p, w in exact.items())
        assert tv < 0.05


def oracle_log_posterior(problem, episodes, eta_a, eta_b, eta_c, rho, n_lattice):
    """Per-step softmax over the optimal Q-vector, replaying beliefs one update at a time."""
    from activesense.problem import Preferences

    prefs = Preferences(eta_a, eta_b, eta_c, rho=rho)
    pol = solve_optimal(problem, prefs, 10)
    total = -log(n_lattice)
    for ep in episodes:
        mu = np.asarray(ep.prior, dtype=float)
        for step in ep.steps:
            q = generalized_q("optimal", problem, prefs, pol, mu)
            a = step.index if step.kind == ACQUIRE else problem.n_lambda + step.index
            z = -rho * q
            total += z[a] - (z.max() + log(np.exp(z - z.max()).sum()))
            if step.kind == ACQUIRE and step.survived:
                mu = continual_update(problem, mu, step.index, step.outcome)
    return total


def test_four_point_posterior_matches_oracle(single_test, small_data):
    problem, _ = single_test
    lat = Lattice("optimal", 2, 1, resolution=1.0, rho_grid=(1.0, 10.0), fixed={0: 0, 1: 1, 2: 1, 3: 1})
    model = PosteriorModel(problem, small_data, lat, PriorSpec.dirac("optimal"), G=10)
    assert len(lat) == 4
    for pt in lat.points():
        eta = lat.eta(pt)
        want = oracle_log_posterior(problem, small_data, eta[:2], eta[2:4], eta[4:], lat.rho(pt), 4)
        assert model(pt) == pytest.approx(want, rel=1e-9)
    exact = exact_posterior(model)
    assert sum(exact.values()) == pytest.approx(1.0)


class TestMap:
    def test_flat_posterior_picks_the_origin(self):
        lat = Lattice("optimal", 2, 1, resolution=0.5)
        assert map_point(FlatModel(lat)) == ((0, 0, 0, 0, 0, 0), 0.0)

    def test_result_is_a_local_maximum(self, single_test, small_data):
        problem, _ = single_test
        lat = Lattice("optimal", 2, 1, resolution=0.25)
        model = PosteriorModel(problem, small_data, lat, G=10)
        pt, val = map_point(model)
        assert all(model(nb) <= val for nb in lat.moves(pt))
        eta, rho, value = map_estimate(problem, small_data, "optimal", model=model)
        np.testing.assert_array_equal(eta, lat.eta(pt))
        assert rho == lat.rho(pt) and value == val

    def test_needs_a_starting_set(self):
        with pytest.raises(ValueError):
            map_point(FlatModel(Lattice("optimal", 2, 1)), sweep_levels=None)

    def test_dirac_prior_scores_only_its_criterion(self, single_test, small_data):
        problem, _ = single_test
        lattices = {
            c: Lattice(c, 2, 1, resolution=0.5) for c in (Criterion.OPTIMAL, Criterion.GREEDY, Criterion.INFOMAX)
        }
        scores = compare_criteria(problem, small_data, PriorSpec.dirac("greedy_lookahead"), lattices)
        assert list(scores) == [Criterion.GREEDY]
        both = compare_criteria(problem, small_data, PriorSpec.uniform_over(["greedy_lookahead", "infomax"]), lattices)
        assert set(both) == {Criterion.GREEDY, Criterion.INFOMAX}


class TestPolicyCache:
    def test_memory_hit_returns_the_same_policy(self, single_test):
        problem, prefs = single_test
        cache = PolicyCache()
        model = PosteriorModel(problem, [], Lattice("optimal", 2, 1), policy_cache=cache, G=10)
        pt = (5, 15, 10, 10, 10, 6)
        q1 = model.q_values(pt)
        q2 = model.q_values(pt)
        assert cache.hits == 1 and cache.misses == 1
        np.testing.assert_array_equal(q1, q2)

    def test_disk_cache_reloads_bit_for_bit(self, single_test, small_data, tmp_path, monkeypatch):
        problem, _ = single_test
        monkeypatch.setenv("ACTIVESENSE_CACHE_DIR", str(tmp_path))
        lat = Lattice("optimal", 2, 1)
        pt = (5, 15, 10, 10, 10, 6)
        fresh = PosteriorModel(problem, small_data, lat, G=10)
        first = fresh.q_values(pt)
        assert len(list(tmp_path.glob("*.npy"))) == 1
        reloaded = PosteriorModel(problem, small_data, lat, G=10)
        np.testing.assert_array_equal(reloaded.q_values(pt), first)
        assert reloaded.cache.misses == 1

    def test_bounded(self, single_test):
        problem, _ = single_test
        cache = PolicyCache(maxsize=2)
        model = PosteriorModel(problem, [], Lattice("optimal", 2, 1), policy_cache=cache, G=5)
        for i in range(4):
            model.q_values((i, 0, 0, 0, 0, 0))
        assert len(cache) == 2


class TestRhat:
    def test_agreeing_chains(self):
        rng = np.random.default_rng(0)
        assert split_rhat([rng.normal(size=500) for _ in range(4)]) < 1.02

    def test_disagreeing_chains(self):
        rng = np.random.default_rng(1)
        assert split_rhat([rng.normal(size=500), rng.normal(size=500) + 3]) > 1.5

    def test_too_short(self):
        with pytest.raises(ValueError):
            split_rhat([np.zeros(3)])


def test_greedy_data_prefers_the_greedy_criterion():
    problem, prefs = greedy_threshold_agent()
    data = simulate_dataset(problem, Strategy(prefs), 300, 0, "uniform").without_truth()
    lattices = {c: Lattice(c, 2, 1) for c in (Criterion.OPTIMAL, Criterion.GREEDY)}
    scores = compare_criteria(problem, data, PriorSpec.uniform_over(lattices), lattices)
    assert scores[Criterion.GREEDY] >= scores[Criterion.OPTIMAL]
