"""Sampler unit checks: conditionals, attributions, conjugate counts, chains."""

import math

import numpy as np
import pytest

from gchmm.gibbs import (ChainConfig, ChainSummary, SourceMatrix, alpha_posterior,
                         beta_posterior, gamma_posterior, posterior_state_marginals,
                         rate_log_tables, run_chain, sample_sources,
                         sample_state_general, source_distribution,
                         state_conditional, theta_posterior)
from gchmm.graph import DynamicGraph
from gchmm.model import MISSING, ObservationMatrix
from gchmm.oracle import TinyInstance, enumerate_posterior
from gchmm.sis import (PROB_CAP, BetaPriors, EmissionParams, SISParams,
                       log_emission, log_joint_states, sis_events)


def path_graph(num_nodes, num_steps):
    step = [(n, n + 1) for n in range(num_nodes - 1)]
    return DynamicGraph(num_nodes, [list(step) for _ in range(num_steps)])


def brute_conditional(n, t, states, observations, graph, params, emission):
    """Conditional by evaluating the full joint at both values of one site."""
    weights = []
    for x in (0, 1):
        Z = states.copy()
        Z[n, t] = x
        lj = log_joint_states(Z, graph, params) + log_emission(observations, Z, emission)
        weights.append(lj)
    hi = max(weights)
    w = [math.exp(v - hi) for v in weights]
    return w[1] / (w[0] + w[1])


def test_conditional_is_half_for_a_coin_flip_site():
    # Isolated node, no reading, no successor: the conditional reduces to the
    # incoming transition, which is alpha vs 1 - alpha.
    graph = DynamicGraph(1, [[], []])
    params = SISParams(alpha=0.5, beta=0.2, gamma=0.3)
    obs = ObservationMatrix(np.full((1, 2, 1), MISSING, dtype=np.int8))
    states = np.zeros((1, 2), dtype=np.int8)
    emission = EmissionParams(np.array([[0.3], [0.7]]))
    p1 = state_conditional(0, 1, states, obs, graph, params, emission)
    assert p1 == pytest.approx(0.5, abs=1e-15)


def test_conditional_matches_joint_ratio_on_random_sites():
    rng = np.random.default_rng(91)
    for trial in range(25):
        N = int(rng.integers(2, 5))
        T = int(rng.integers(3, 6))
        edges = [[(u, v) for u in range(N) for v in range(u + 1, N)
                  if rng.random() < 0.5] for _ in range(T)]
        graph = DynamicGraph(N, edges)
        params = SISParams(alpha=float(rng.uniform(0.02, 0.3)),
                           beta=float(rng.uniform(0.02, 0.2)),
                           gamma=float(rng.uniform(0.1, 0.9)))
        emission = EmissionParams(rng.uniform(0.05, 0.95, size=(2, 2)))
        obs_values = rng.integers(0, 2, size=(N, T, 2)).astype(np.int8)
        obs_values[rng.random(obs_values.shape) < 0.25] = MISSING
        obs = ObservationMatrix(obs_values)
        states = rng.integers(0, 2, size=(N, T)).astype(np.int8)
        states[:, 0] = 0
        n = int(rng.integers(0, N))
        t = int(rng.integers(1, T))
        fast = state_conditional(n, t, states, obs, graph, params, emission)
        slow = brute_conditional(n, t, states, obs, graph, params, emission)
        assert fast == pytest.approx(slow, abs=1e-10), f"trial {trial} site ({n},{t})"


def test_conditional_refuses_the_pinned_column():
    graph = DynamicGraph(1, [[], []])
    params = SISParams(alpha=0.1, beta=0.1, gamma=0.5)
    obs = ObservationMatrix(np.zeros((1, 2, 1), dtype=np.int8))
    with pytest.raises(ValueError):
        state_conditional(0, 0, np.zeros((1, 2), dtype=np.int8), obs, graph,
                          params, EmissionParams(np.array([[0.2], [0.8]])))


def test_linear_rate_tables_cap_instead_of_overflowing():
    # Inference keeps the additive form usable even when alpha + k*beta passes
    # one by capping the probability just below it.
    params = SISParams(alpha=0.4, beta=0.35, gamma=0.5)
    lg_inf, lg_stay, _, _ = rate_log_tables(params, max_degree=3, form="linear")
    assert lg_inf[0] == pytest.approx(math.log(0.4))
    assert lg_inf[2] == pytest.approx(math.log(PROB_CAP))  # 0.4 + 0.7 caps
    assert np.isfinite(lg_inf).all()
    assert lg_stay[2] == pytest.approx(math.log1p(-PROB_CAP))


def test_source_distribution_hand_values():
    # Node 0 gets infected with two infectious contacts. With alpha == beta
    # all three channels are equally likely; with the contagious parameters
    # and three contacts the outside weight is 0.005 / 0.140.
    X = np.array([[0, 1], [1, 1], [1, 1]], dtype=np.int8)
    graph = DynamicGraph(3, [[(0, 1), (0, 2)], []])
    probs, infectious = source_distribution(0, 0, X, graph,
                                            SISParams(alpha=0.1, beta=0.1, gamma=0.5))
    np.testing.assert_allclose(probs, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)
    assert infectious == [1, 2]

    X4 = np.array([[0, 1], [1, 1], [1, 1], [1, 1]], dtype=np.int8)
    g4 = DynamicGraph(4, [[(0, 1), (0, 2), (0, 3)], []])
    probs4, _ = source_distribution(0, 0, X4, g4,
                                    SISParams(alpha=0.005, beta=0.045, gamma=0.3))
    assert probs4[0] == pytest.approx(0.005 / 0.14, abs=1e-15)


def test_source_distribution_rejects_non_infections():
    X = np.array([[0, 0], [1, 1]], dtype=np.int8)
    graph = DynamicGraph(2, [[(0, 1)], []])
    with pytest.raises(ValueError):
        source_distribution(0, 0, X, graph, SISParams(alpha=0.1, beta=0.1, gamma=0.5))


def test_sampled_sources_cover_exactly_the_infections():
    rng = np.random.default_rng(7)
    N, T = 6, 8
    graph = path_graph(N, T)
    params = SISParams(alpha=0.3, beta=0.2, gamma=0.4)
    for _ in range(20):
        states = rng.integers(0, 2, size=(N, T)).astype(np.int8)
        states[:, 0] = 0
        sources = sample_sources(states, graph, params, rng)
        infections = {(n, t) for n in range(N) for t in range(T - 1)
                      if states[n, t] == 0 and states[n, t + 1] == 1}
        assert set(dict(sources.items())) == infections
        assert sources.outside_count() + sources.contact_count() == len(sources)
        for (n, t), code in sources.items():
            infectious = [m for m in graph.neighbors(n, t) if states[m, t] == 1]
            assert 1 <= code <= 1 + len(infectious)


def test_source_attribution_frequency_matches_the_weights():
    # One infection with two infectious contacts and alpha == beta: the
    # outside channel should be drawn a third of the time.
    X = np.array([[0, 1], [1, 1], [1, 1]], dtype=np.int8)
    graph = DynamicGraph(3, [[(0, 1), (0, 2)], []])
    params = SISParams(alpha=0.1, beta=0.1, gamma=0.5)
    rng = np.random.default_rng(2024)
    draws = 3000
    outside = sum(sample_sources(X, graph, params, rng).outside_count()
                  for _ in range(draws))
    se = math.sqrt((1 / 3) * (2 / 3) / draws)
    assert abs(outside / draws - 1 / 3) < 3 * se


def test_conjugate_shapes_from_a_hand_counted_fixture():
    # X: node 0 infected at t1, recovers at t3; node 1 infected at t2.
    # Susceptible steps 3, contact pairs 1 (node 1 next to infectious node 0
    # at t1), infectious steps 3, recoveries 1.
    X = np.array([[0, 1, 1, 0], [0, 0, 1, 1]], dtype=np.int8)
    graph = path_graph(2, 4)
    priors = BetaPriors()
    sources = SourceMatrix({(0, 0): 1, (1, 1): 2})
    assert alpha_posterior(X, sources, priors) == (2.0, 3.0)
    assert beta_posterior(X, sources, graph, priors) == (2.0, 1.0)
    assert gamma_posterior(X, priors) == (2.0, 3.0)


def test_theta_shapes_from_a_hand_counted_fixture():
    # Single node: susceptible at t0 reads 1, infectious at t1 reads 0, at t2
    # reads 1, the t3 reading is missing.
    X = np.array([[0, 1, 1, 0]], dtype=np.int8)
    obs = ObservationMatrix(np.array([[[1], [0], [1], [-1]]], dtype=np.int8))
    a, b = theta_posterior(X, obs, h=1.0)
    np.testing.assert_array_equal(a, [[2.0], [2.0]])
    np.testing.assert_array_equal(b, [[1.0], [2.0]])


def test_conjugate_shapes_equal_brute_lattice_counts():
    rng = np.random.default_rng(58)
    priors = BetaPriors(a=2.0, b=5.0, a1=1.5, b1=3.0, a2=1.0, b2=1.0)
    for _ in range(10):
        N = int(rng.integers(2, 6))
        T = int(rng.integers(3, 8))
        edges = [[(u, v) for u in range(N) for v in range(u + 1, N)
                  if rng.random() < 0.4] for _ in range(T)]
        graph = DynamicGraph(N, edges)
        X = rng.integers(0, 2, size=(N, T)).astype(np.int8)
        X[:, 0] = 0
        sources = sample_sources(X, graph, SISParams(alpha=0.2, beta=0.2, gamma=0.5), rng)

        susc = sum(1 for n in range(N) for t in range(T - 1) if X[n, t] == 0)
        pairs = sum(1 for n in range(N) for t in range(T - 1) if X[n, t] == 0
                    for m in graph.neighbors(n, t) if X[m, t] == 1)
        inf_steps = sum(1 for n in range(N) for t in range(T - 1) if X[n, t] == 1)
        recov = sum(1 for n in range(N) for t in range(T - 1)
                    if X[n, t] == 1 and X[n, t + 1] == 0)
        outside = sum(1 for code in dict(sources.items()).values() if code == 1)
        contact = len(sources) - outside

        assert alpha_posterior(X, sources, priors) == (priors.a + outside,
                                                       priors.b + susc - outside)
        assert beta_posterior(X, sources, graph, priors) == (priors.a1 + contact,
                                                             priors.b1 + pairs - contact)
        assert gamma_posterior(X, priors) == (priors.a2 + recov,
                                              priors.b2 + inf_steps - recov)


def chain_fixture():
    graph = DynamicGraph(2, [[(0, 1)], [(0, 1)], []])
    obs = ObservationMatrix(np.array([[[0], [1], [1]], [[0], [0], [1]]], dtype=np.int8))
    return graph, obs


def test_chain_streams_are_reproducible():
    graph, obs = chain_fixture()
    config = ChainConfig(iterations=200, burn_in=50, scalar_stride=1, state_stride=5, seed=9)
    def trace():
        out = []
        for rec in run_chain(graph, obs, config):
            states = None if rec.states is None else rec.states.values.tobytes()
            out.append((rec.iteration, rec.params.alpha, rec.params.beta,
                        rec.params.gamma, rec.log_joint, states))
        return out
    first, second = trace(), trace()
    assert first == second
    assert len(first) == 150


def test_chain_record_cadence_and_pinned_column():
    graph, obs = chain_fixture()
    config = ChainConfig(iterations=10, burn_in=4, scalar_stride=2, state_stride=4, seed=1)
    records = list(run_chain(graph, obs, config))
    assert [r.iteration for r in records] == [4, 6, 8]
    assert [r.states is not None for r in records] == [True, False, True]
    for r in records:
        if r.states is not None:
            assert np.all(r.states.values[:, 0] == 0)


def test_burn_in_consuming_every_sweep_yields_no_records():
    graph, obs = chain_fixture()
    config = ChainConfig(iterations=30, burn_in=30, seed=2)
    assert list(run_chain(graph, obs, config)) == []


def test_pinned_parameters_stay_fixed_through_the_chain():
    graph, obs = chain_fixture()
    params = SISParams(alpha=0.07, beta=0.2, gamma=0.5)
    emission = EmissionParams(np.array([[0.1], [0.85]]))
    config = ChainConfig(iterations=40, burn_in=0, seed=3,
                         update_params=False, update_theta=False)
    for rec in run_chain(graph, obs, config, init_params=params, init_emission=emission):
        assert (rec.params.alpha, rec.params.beta, rec.params.gamma) == (0.07, 0.2, 0.5)
        np.testing.assert_array_equal(rec.emission.theta, emission.theta)


def test_chain_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(burn_in=11, iterations=10)
    with pytest.raises(ValueError):
        ChainConfig(scalar_stride=0)
    with pytest.raises(ValueError):
        ChainConfig(transition_form="exact")
    with pytest.raises(ValueError):
        ChainConfig(sweep_order="random-scan")
    graph, obs = chain_fixture()
    with pytest.raises(ValueError):
        list(run_chain(graph, obs, ChainConfig(update_params=False)))
    with pytest.raises(ValueError):
        list(run_chain(graph, obs, ChainConfig(update_theta=False)))
    with pytest.raises(ValueError):
        list(run_chain(graph, obs, ChainConfig(update_states=False)))


def test_conditional_accumulator_validation():
    graph, obs = chain_fixture()
    with pytest.raises(ValueError):
        list(run_chain(graph, obs, ChainConfig(iterations=10, burn_in=0),
                       conditional_acc=np.zeros((3, 3))))
    with pytest.raises(ValueError):
        list(run_chain(graph, obs,
                       ChainConfig(iterations=10, burn_in=0, update_states=False),
                       init_states=np.zeros((2, 3), dtype=np.int8),
                       conditional_acc=np.zeros((2, 3))))
    with pytest.raises(ValueError):
        posterior_state_marginals(graph, obs, ChainConfig(iterations=10, burn_in=10))
    with pytest.raises(ValueError):
        posterior_state_marginals(graph, obs, ChainConfig(iterations=10, burn_in=0),
                                  estimator="mode")


def oracle_instance():
    graph = DynamicGraph(2, [[(0, 1)], [(0, 1)], []])
    params = SISParams(alpha=0.05, beta=0.3, gamma=0.4)
    emission = EmissionParams(np.array([[0.1], [0.8]]))
    obs = ObservationMatrix(np.array([[[0], [1], [1]], [[0], [0], [1]]], dtype=np.int8))
    return graph, params, emission, obs


def test_marginal_estimators_agree_with_enumeration():
    graph, params, emission, obs = oracle_instance()
    exact = enumerate_posterior(TinyInstance(graph=graph, params=params,
                                             emission=emission, observations=obs))
    config = ChainConfig(iterations=6000, burn_in=1000, scalar_stride=1,
                         state_stride=1, seed=5, update_params=False,
                         update_theta=False)
    smooth = posterior_state_marginals(graph, obs, config, init_params=params,
                                       init_emission=emission)
    counted = posterior_state_marginals(graph, obs, config, estimator="indicator",
                                        init_params=params, init_emission=emission)
    assert np.max(np.abs(smooth - exact.marginals)) < 0.02
    assert np.max(np.abs(counted - exact.marginals)) < 0.05
    assert np.max(np.abs(smooth - counted)) < 0.05
    assert np.all(smooth[:, 0] == 0.0)


def test_general_event_sampler_agrees_with_the_epidemic_conditional():
    # The event-list sampler run on the two built-in epidemic events must draw
    # each site with the same probability as the closed-form conditional.
    graph = DynamicGraph(2, [[(0, 1)], [(0, 1)], []])
    params = SISParams(alpha=0.15, beta=0.25, gamma=0.45)
    emission = EmissionParams(np.array([[0.2], [0.75]]))
    obs = ObservationMatrix(np.array([[[1], [1], [0]], [[0], [1], [1]]], dtype=np.int8))
    states = np.array([[0, 1, 0], [0, 0, 1]], dtype=np.int8)
    events = sis_events(params)
    rng = np.random.default_rng(77)
    for (n, t) in ((0, 1), (1, 1), (0, 2), (1, 2)):
        p1 = state_conditional(n, t, states, obs, graph, params, emission)
        draws = 4000
        hits = 0
        for _ in range(draws):
            scratch = states.copy()
            hits += sample_state_general(n, t, scratch, obs, graph, events,
                                         emission.theta, rng)
        se = math.sqrt(max(p1 * (1 - p1), 1e-4) / draws)
        assert abs(hits / draws - p1) < 4 * se, f"site ({n},{t}): {hits/draws} vs {p1}"
