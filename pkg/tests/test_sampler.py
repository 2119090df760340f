import math

import numpy as np
import pytest

from conftest import make_comparisons, random_levels
from multilink.comparison import Pairs
from multilink.likelihood import DirichletHyper, ModelParams, pair_loglik_ratio
from multilink.partition import MultifilePartition
from multilink.prior import ClusterCountPrior, ClusterSizePrior, PriorConfig, log_prior_density
from multilink.sampler import (GibbsConfig, GibbsState, PosteriorSamples, gibbs_iteration, init_random_matching,
                               init_singletons, reference_sweep, run_chain)


def _duplicates_instance(seed=0):
    """Three files (the middle one with duplicates) and a transitive candidate set."""
    rng = np.random.default_rng(seed)
    sizes, dup = (3, 4, 3), (True, False, True)
    file_of = np.repeat(np.arange(3), sizes)
    block = rng.integers(0, 3, len(file_of))
    cands = {(i, j) for i in range(len(file_of)) for j in range(i + 1, len(file_of))
             if block[i] == block[j] and not (file_of[i] == file_of[j] and dup[file_of[i]])}
    data = make_comparisons(sizes, dup, random_levels(rng, (2, 3, 4), 0.1), (2, 3, 4), candidates=cands)
    prior = PriorConfig((ClusterSizePrior("point"), ClusterSizePrior("poisson", 1.0, 3), ClusterSizePrior("point")),
                        ClusterCountPrior.negbin_for(10))
    return data, prior, cands


def _random_params(rng, data, scale=2.0):
    shape = data.totals.shape
    m = rng.dirichlet(np.full(shape[-1], scale), size=shape[:2])
    u = rng.dirichlet(np.full(shape[-1], scale), size=shape[:2])
    return ModelParams(m, u)


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("flat", [False, True])
def test_kernel_matches_reference_sweep(seed, flat):
    data, prior, _ = _duplicates_instance(seed)
    if flat:
        prior = PriorConfig(prior.sizes, prior.cluster_count, prior.alpha, flat=True)
    rng = np.random.default_rng(100 + seed)
    init = init_singletons(data.file_of, data.K, prior.size_bounds)
    state = GibbsState(data, prior, init)
    ref = init.copy()
    for _ in range(60):
        L = pair_loglik_ratio(data, _random_params(rng, data, 0.5))
        order = rng.permutation(data.r)
        u = rng.random(data.r)
        state.sweep(L, order, u)
        reference_sweep(ref, data, prior, L, order, u)
        assert np.array_equal(state.canonical(), ref.canonical())
        state.check_counts()
        n_h, _ = ref.recompute()
        assert np.array_equal(state.n_h, n_h) and state.n == ref.n


def test_constraints_preserved():
    data, prior, cands = _duplicates_instance(3)
    s = run_chain(GibbsConfig(iterations=300, burn_in=0, seed=4, checkpoint_every=10), data, prior)
    for z in s.labels:
        C = MultifilePartition.from_labels(z, data.file_of, data.K, prior.size_bounds)
        assert C.is_valid()
        for a in range(data.r):
            for b in range(a + 1, data.r):
                if z[a] == z[b]:
                    assert (a, b) in cands


def test_determinism_and_storage():
    data, prior, _ = _duplicates_instance(5)
    cfg = GibbsConfig(iterations=50, burn_in=10, seed=8)
    a = run_chain(cfg, data, prior)
    b = run_chain(cfg, data, prior)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.n_trace, b.n_trace)
    assert a.T == 40 and len(a.n_trace) == 50
    assert a.iterations[0] == 11
    one = run_chain(GibbsConfig(iterations=11, burn_in=10, seed=1), data, prior)
    assert one.T == 1
    kept = run_chain(GibbsConfig(iterations=50, burn_in=10, thin=5, trace="kept"), data, prior)
    assert kept.T == 8 and len(kept.n_trace) == 8
    assert kept.iterations.tolist() == list(range(11, 51, 5))


def test_samples_round_trip(tmp_path):
    data, prior, _ = _duplicates_instance(6)
    s = run_chain(GibbsConfig(iterations=20, burn_in=5, keep_params=True), data, prior)
    assert s.m_trace.shape[0] == s.T
    s.write_samples(tmp_path / "s.txt")
    s.write_trace(tmp_path / "t.txt")
    back = PosteriorSamples.read(tmp_path / "s.txt", data.file_of, tmp_path / "t.txt")
    assert np.array_equal(back.labels, s.labels) and np.array_equal(back.n_trace, s.n_trace)
    first = (tmp_path / "s.txt").read_text().splitlines()[0].split()
    assert first[0] == "1" and len(first) == data.r


def test_init_strategies():
    data, prior, cands = _duplicates_instance(7)
    C = init_singletons(data.file_of, data.K)
    assert C.n == data.r and C.n_h[[1, 2, 4]].sum() == data.r
    empty = Pairs(np.zeros(0, np.int64), np.zeros(0, np.int64))
    rng = np.random.default_rng(0)
    assert init_random_matching(data.file_of, data.K, empty, rng).n == data.r
    support = PriorConfig(prior.sizes, ClusterCountPrior(upper=data.r), prior.alpha)
    for _ in range(1000):
        C = init_random_matching(data.file_of, data.K, data.candidates, rng, prior.size_bounds)
        assert C.is_valid()
        assert log_prior_density(C, support) > -math.inf
        z = C.labels
        assert all((a, b) in cands for a in range(data.r) for b in range(a + 1, data.r) if z[a] == z[b])


def test_random_matching_chain_runs():
    data, prior, _ = _duplicates_instance(8)
    s = run_chain(GibbsConfig(iterations=30, burn_in=5, init="random-matching", random_order=True,
                              single_model=True), data, prior)
    assert s.T == 25


def test_flat_prior_equal_likelihood_targets_equiprobable():
    data = make_comparisons((1, 1), (True, True), lambda i, j: [0], [2])
    prior = PriorConfig.duplicate_free(2, flat=True)
    rng = np.random.default_rng(2)
    joins, N = 0, 4000
    for u in rng.random(N):
        state = GibbsState(data, prior, init_singletons(data.file_of, 2, [1, 1]))
        state.sweep(np.zeros(1), np.array([1]), np.array([u]))
        joins += state.n == 1
    assert abs(joins / N - 0.5) < 4 * math.sqrt(0.25 / N)


def test_state_validation():
    data, prior, cands = _duplicates_instance(9)
    outside = next((a, b) for a in range(data.r) for b in range(a + 1, data.r)
                   if (a, b) not in cands and data.file_of[a] != data.file_of[b])
    z = np.arange(data.r)
    z[outside[1]] = z[outside[0]]
    with pytest.raises(ValueError, match="candidate"):
        GibbsState(data, prior, MultifilePartition.from_labels(z, data.file_of, data.K))
    loose = PriorConfig((ClusterSizePrior("poisson", 1.0, 3),) * 3)
    with pytest.raises(ValueError, match="duplicate-free"):
        GibbsState(data, loose, init_singletons(data.file_of, data.K))


@pytest.mark.parametrize("kw", [dict(iterations=10, burn_in=10), dict(thin=0), dict(init="kmeans"),
                                dict(trace="some")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        GibbsConfig(**kw)


def test_gibbs_iteration_returns_params():
    data, prior, _ = _duplicates_instance(10)
    state = GibbsState(data, prior, init_singletons(data.file_of, data.K, prior.size_bounds))
    p = gibbs_iteration(state, DirichletHyper(), np.random.default_rng(0))
    assert p.m.shape == data.totals.shape and np.all(p.m > 0)
