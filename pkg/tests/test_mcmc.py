"""Birth-death subset sampler: proposals, acceptance, chains."""

import itertools
import math

import numpy as np
import pytest

from specmix.mcmc import (McmcConfig, McmcState, Proposal,
                          acceptance_probability, energy, propose, run_rjmcmc)
from specmix.solver import SolverConfig, unmix_batch
from specmix.types import SpectralLibrary

from .oracles import subset_target_distribution, total_variation


def make_pool(rng, n=10, bands=12, classes=("a", "b")):
    spectra = rng.random((n, bands))
    labels = [classes[i % len(classes)] for i in range(n)]
    return SpectralLibrary.from_arrays(spectra, labels)


def planted_scene(rng, pool, members=(3, 7), n_pixels=12):
    weights = rng.dirichlet(np.ones(len(members)), size=n_pixels)
    return weights @ pool.spectra[list(members)]


class TestEnergy:
    def test_perfect_reconstruction_is_zero(self):
        rng = np.random.default_rng(1)
        pool = make_pool(rng)
        pixels = pool.spectra[[2, 5, 2]]
        assert energy(pool, [2, 5], pixels) < 1e-12

    def test_single_atom_forced_coefficient(self):
        rng = np.random.default_rng(2)
        pool = make_pool(rng, n=1)
        x = rng.random(12)
        expected = float(np.linalg.norm(x - pool.spectra[0]))
        assert energy(pool, [0], x.reshape(1, -1)) == pytest.approx(expected,
                                                                    rel=1e-12)

    def test_matches_stacked_solver_recomputation(self):
        rng = np.random.default_rng(3)
        pool = make_pool(rng)
        subset = (1, 4, 6, 8)
        pixels = planted_scene(rng, pool, members=subset, n_pixels=20) \
            + rng.normal(0, 0.01, (20, 12))
        got = energy(pool, subset, pixels, McmcConfig(sparsity=7))
        results = unmix_batch(pool.subset(list(subset)), pixels,
                              SolverConfig(sparsity=7))
        expected = math.sqrt(sum(r.residual_norm ** 2 for r in results))
        assert got == pytest.approx(expected, rel=1e-9)

    def test_empty_subset_rejected(self):
        pool = make_pool(np.random.default_rng(4))
        with pytest.raises(ValueError, match="nonempty"):
            energy(pool, [], np.ones((1, 12)))

    def test_out_of_range_rejected(self):
        pool = make_pool(np.random.default_rng(5))
        with pytest.raises(ValueError, match="range"):
            energy(pool, [10], np.ones((1, 12)))


class TestPropose:
    def test_forced_birth_at_k1(self):
        rng = np.random.default_rng(6)
        state = McmcState((4,), 0.0, 1.0, 0)
        for _ in range(50):
            prop = propose(state, 10, rng)
            assert prop.kind == "birth"
            assert prop.kind_prob == 1.0
            assert prop.index != 4

    def test_forced_death_at_bound(self):
        rng = np.random.default_rng(7)
        state = McmcState((0, 1, 2), 0.0, 1.0, 0)
        for _ in range(50):
            prop = propose(state, 10, rng, max_elements=3)
            assert prop.kind == "death"
            assert prop.kind_prob == 1.0
            assert prop.index in (0, 1, 2)

    def test_interior_frequencies(self):
        rng = np.random.default_rng(8)
        subset = (0, 3, 5)  # K=3, P=10, 7 unused
        state = McmcState(subset, 0.0, 1.0, 0)
        births = 0
        index_counts = {}
        trials = 100_000
        for _ in range(trials):
            prop = propose(state, 10, rng)
            assert prop.kind_prob == 0.5
            if prop.kind == "birth":
                births += 1
                index_counts[prop.index] = index_counts.get(prop.index, 0) + 1
        assert births / trials == pytest.approx(0.5, abs=0.01)
        # each of the 7 unused indices uniform within 3 standard errors
        per_index = births / 7
        se = math.sqrt(births * (1 / 7) * (6 / 7))
        for idx in set(range(10)) - set(subset):
            assert abs(index_counts.get(idx, 0) - per_index) < 3 * se


class TestAcceptanceProbability:
    def test_huge_lambda_accepts_birth(self):
        cfg = McmcConfig(prior_lambda=1e12, max_elements=50)
        prob = acceptance_probability(0.0, Proposal("birth", 9, 0.5), 5, 20,
                                      cfg, 1.0)
        assert prob == 1.0

    def test_all_factors_cancel(self):
        # lambda = K+1 and P-K = K+1 make the birth ratio exactly 1
        k = 2
        cfg = McmcConfig(prior_lambda=3.0, max_elements=5)
        prob = acceptance_probability(0.0, Proposal("birth", 0, 0.5), k, 5,
                                      cfg, 0.5)
        assert prob == pytest.approx(1.0)

    def test_death_formula_by_hand(self):
        cfg = McmcConfig(prior_lambda=2.0, max_elements=150)
        prob = acceptance_probability(0.2, Proposal("death", 0, 0.5), 3, 8,
                                      cfg, 0.7)
        expected = min(1.0, math.exp(-0.2 / 0.7) * (3 / 2.0) * (0.5 / 0.5)
                       * 3 / (8 - 3 + 1))
        assert prob == pytest.approx(expected, rel=1e-12)

    def test_birth_into_bound_uses_forced_reverse(self):
        # the reverse move from the bound is a forced death (prob 1, not 0.5)
        cfg = McmcConfig(prior_lambda=0.4, max_elements=5)
        prob = acceptance_probability(0.0, Proposal("birth", 0, 0.5), 4, 9,
                                      cfg, 1.0)
        expected = (0.4 / 5.0) * (1.0 / 0.5) * (9 - 4) / 5.0
        assert prob == pytest.approx(expected, rel=1e-12)

    def test_always_in_unit_interval(self):
        rng = np.random.default_rng(9)
        cfg = McmcConfig(prior_lambda=5.0, max_elements=12)
        for _ in range(200):
            k = int(rng.integers(1, 12))
            kind = "birth" if (k == 1 or (k < 12 and rng.random() < 0.5)) \
                else "death"
            kp = 1.0 if (k == 1 and kind == "birth") or \
                (k == 12 and kind == "death") else 0.5
            prob = acceptance_probability(float(rng.normal()),
                                          Proposal(kind, 0, kp), k, 12, cfg,
                                          float(rng.uniform(1e-3, 10)))
            assert 0.0 <= prob <= 1.0

    def test_extreme_temperature_no_overflow(self):
        cfg = McmcConfig(prior_lambda=2.0, max_elements=50)
        assert acceptance_probability(-5.0, Proposal("birth", 0, 0.5), 3, 10,
                                      cfg, 1e-300) == 1.0
        assert acceptance_probability(5.0, Proposal("birth", 0, 0.5), 3, 10,
                                      cfg, 1e-300) == 0.0


class TestRunRjmcmc:
    def test_trivial_zero_energy_pool(self):
        rng = np.random.default_rng(10)
        pool = make_pool(rng, n=3)
        pixels = np.tile(pool.spectra[0], (5, 1))
        cfg = McmcConfig(prior_lambda=1.0, max_elements=3, iterations=2000,
                         initial_temperature=1.0, seed=0)
        best, trace = run_rjmcmc(pool, pixels, cfg)
        assert trace.best_energy < 1e-9
        assert 0 in trace.best_subset

    def test_planted_pair_found_and_matches_exhaustive(self):
        rng = np.random.default_rng(11)
        pool = make_pool(rng, n=10)
        pixels = planted_scene(rng, pool, members=(3, 7), n_pixels=12)
        cfg = McmcConfig(prior_lambda=2.0, max_elements=5, iterations=10000,
                         initial_temperature="auto", cooling_factor=0.995,
                         seed=1)
        best, trace = run_rjmcmc(pool, pixels, cfg)
        assert trace.best_subset == (3, 7)
        assert best.source_ids == (pool.source_ids[3], pool.source_ids[7])
        exhaustive = min(
            energy(pool, s, pixels, cfg)
            for size in range(1, 5)
            for s in itertools.combinations(range(10), size))
        assert trace.best_energy <= exhaustive + 1e-9

    def test_zero_iterations_returns_initial(self):
        rng = np.random.default_rng(12)
        pool = make_pool(rng, n=6)
        pixels = rng.random((4, 12))
        cfg = McmcConfig(prior_lambda=3.0, max_elements=6, iterations=0,
                         initial_temperature=1.0, seed=3)
        best, trace = run_rjmcmc(pool, pixels, cfg)
        assert len(trace) == 1
        assert trace.moves[0] == "init"
        assert trace.best_subset == trace.subset_table[0]
        assert len(best) == len(trace.best_subset)

    def test_deterministic_trace(self):
        rng = np.random.default_rng(13)
        pool = make_pool(rng, n=8)
        pixels = rng.random((6, 12))
        cfg = McmcConfig(prior_lambda=3.0, max_elements=6, iterations=500,
                         seed=21)
        _, a = run_rjmcmc(pool, pixels, cfg)
        _, b = run_rjmcmc(pool, pixels, cfg)
        np.testing.assert_array_equal(a.energies, b.energies)
        np.testing.assert_array_equal(a.subset_ids, b.subset_ids)
        assert a.to_csv() == b.to_csv()
        assert a.subset_table == b.subset_table

    def test_invariants_along_trace(self):
        rng = np.random.default_rng(14)
        pool = make_pool(rng, n=9)
        pixels = rng.random((5, 12))
        cfg = McmcConfig(prior_lambda=4.0, max_elements=6, iterations=400,
                         initial_temperature=2.0, cooling_factor=0.99, seed=5)
        _, trace = run_rjmcmc(pool, pixels, cfg)
        assert trace.subset_sizes.min() >= 1
        assert trace.subset_sizes.max() <= 6
        assert (trace.temperatures[1:] < trace.temperatures[:-1]).all()
        assert (trace.temperatures > 0).all()
        assert trace.best_energy == trace.energies.min()
        running = np.minimum.accumulate(trace.energies)
        assert (running[1:] <= running[:-1] + 1e-15).all()

    def test_cached_energies_match_fresh(self):
        rng = np.random.default_rng(15)
        pool = make_pool(rng, n=7)
        pixels = rng.random((4, 12))
        cfg = McmcConfig(prior_lambda=3.0, max_elements=5, iterations=300,
                         seed=6)
        _, trace = run_rjmcmc(pool, pixels, cfg)
        for i in range(0, len(trace), 100):
            subset = trace.subset_table[trace.subset_ids[i]]
            fresh = energy(pool, subset, pixels, cfg)
            assert trace.energies[i] == pytest.approx(fresh, rel=1e-9)

    def test_class_coverage_flag(self):
        rng = np.random.default_rng(16)
        pool = make_pool(rng, n=8, classes=("x", "y"))
        pixels = rng.random((4, 12))
        cfg = McmcConfig(prior_lambda=2.0, max_elements=6, iterations=600,
                         seed=7, require_class_coverage=True)
        _, trace = run_rjmcmc(pool, pixels, cfg)
        for subset in trace.subset_table:
            classes = {pool.class_ids[i] for i in subset}
            assert classes == {"x", "y"}

    def test_single_atom_pool_is_pinned(self):
        rng = np.random.default_rng(17)
        pool = make_pool(rng, n=1)
        pixels = rng.random((3, 12))
        cfg = McmcConfig(prior_lambda=1.0, max_elements=1, iterations=50,
                         initial_temperature=1.0, seed=8)
        best, trace = run_rjmcmc(pool, pixels, cfg)
        assert trace.best_subset == (0,)
        assert set(trace.moves[1:]) == {"none"}
        assert (trace.subset_sizes == 1).all()

    def test_trace_csv_shape(self):
        rng = np.random.default_rng(18)
        pool = make_pool(rng, n=5)
        pixels = rng.random((3, 12))
        cfg = McmcConfig(prior_lambda=2.0, max_elements=4, iterations=20,
                         seed=9)
        _, trace = run_rjmcmc(pool, pixels, cfg)
        lines = trace.to_csv().strip().split("\n")
        assert lines[0] == "step,K,energy,temperature,move,accepted"
        assert len(lines) == 22
        parts = lines[1].split(",")
        assert parts[0] == "0" and parts[4] == "init"

    def test_config_validation(self):
        with pytest.raises(ValueError):
            McmcConfig(prior_lambda=0.0)
        with pytest.raises(ValueError):
            McmcConfig(cooling_factor=0.0)
        with pytest.raises(ValueError):
            McmcConfig(cooling_factor=1.5)
        with pytest.raises(ValueError):
            McmcConfig(initial_temperature=-1.0)
        McmcConfig(cooling_factor=1.0)  # fixed temperature is legal


class TestStationaryDistribution:
    def test_fixed_temperature_matches_enumeration(self):
        rng = np.random.default_rng(19)
        pool = make_pool(rng, n=6, bands=8)
        pixels = rng.random((5, 8))
        temperature = 0.5
        cfg = McmcConfig(prior_lambda=3.0, max_elements=6, iterations=200_000,
                         initial_temperature=temperature, cooling_factor=1.0,
                         seed=20)
        _, trace = run_rjmcmc(pool, pixels, cfg)

        energies = {}
        for size in range(1, 7):
            for s in itertools.combinations(range(6), size):
                energies[s] = energy(pool, s, pixels, cfg)
        target = subset_target_distribution(energies, 3.0, temperature)

        burn = 20_000
        ids = trace.subset_ids[burn:]
        counts = np.bincount(ids, minlength=len(trace.subset_table))
        empirical = {subset: counts[sid] / ids.size
                     for sid, subset in enumerate(trace.subset_table)}
        assert total_variation(empirical, target) < 0.08
