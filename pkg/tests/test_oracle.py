"""Exact-oracle checks: hand-worked posteriors and engine cross-validation."""

import numpy as np
import pytest

from gchmm.errors import TractabilityError
from gchmm.graph import DynamicGraph
from gchmm.model import MISSING, ObservationMatrix
from gchmm.oracle import TinyInstance, eliminate_evidence, enumerate_posterior
from gchmm.sis import EmissionParams, SISParams


def tiny(graph, params, theta, obs):
    return TinyInstance(graph=graph, params=params,
                        emission=EmissionParams(np.asarray(theta, dtype=np.float64)),
                        observations=ObservationMatrix(np.asarray(obs, dtype=np.int8)))


def random_instance(rng, num_symptoms=2):
    N = int(rng.integers(2, 4))
    T = int(rng.integers(2, 5))
    edges = []
    for _ in range(T):
        step = [(u, v) for u in range(N) for v in range(u + 1, N)
                if rng.random() < 0.5]
        edges.append(step)
    graph = DynamicGraph(N, edges)
    params = SISParams(alpha=float(rng.uniform(0.01, 0.3)),
                       beta=float(rng.uniform(0.01, 0.3)),
                       gamma=float(rng.uniform(0.1, 0.9)))
    theta = rng.uniform(0.05, 0.95, size=(2, num_symptoms))
    obs = rng.integers(0, 2, size=(N, T, num_symptoms)).astype(np.int8)
    obs[rng.random(obs.shape) < 0.3] = MISSING
    return tiny(graph, params, theta, obs)


def test_single_node_bayes_update():
    # One isolated node read once while pinned susceptible and once free. The
    # free column is the textbook two-hypothesis update:
    # P(X=1 | y=1) = a*t1 / (a*t1 + (1-a)*t0) with a=0.2, t0=0.1, t1=0.8.
    graph = DynamicGraph(1, [[], []])
    params = SISParams(alpha=0.2, beta=0.5, gamma=0.3)
    post = enumerate_posterior(tiny(graph, params, [[0.1], [0.8]], [[[0], [1]]]))
    expected = 0.2 * 0.8 / (0.2 * 0.8 + 0.8 * 0.1)
    assert abs(post.marginals[0, 1] - expected) < 1e-12
    # evidence: P(y0=0 | S) * (a*t1 + (1-a)*t0) = 0.9 * 0.24
    assert abs(post.log_evidence - np.log(0.9 * 0.24)) < 1e-12


def test_all_missing_marginals_follow_prior_recursion():
    # Without observations the evidence is 1 and the single-node marginals
    # obey p[t+1] = p[t] * (1 - gamma) + (1 - p[t]) * alpha.
    graph = DynamicGraph(1, [[], [], []])
    params = SISParams(alpha=0.15, beta=0.4, gamma=0.35)
    obs = np.full((1, 3, 1), MISSING, dtype=np.int8)
    post = enumerate_posterior(tiny(graph, params, [[0.3], [0.7]], obs))
    assert abs(post.log_evidence) < 1e-12
    p = 0.0
    for t in range(1, 3):
        p = p * (1.0 - params.gamma) + (1.0 - p) * params.alpha
        assert abs(post.marginals[0, t] - p) < 1e-12
    assert post.marginals[0, 0] == 0.0


def test_elimination_matches_enumeration_on_random_instances():
    rng = np.random.default_rng(20)
    for trial in range(12):
        inst = random_instance(rng)
        form = "linear" if trial % 2 == 0 else "exact"
        post = enumerate_posterior(inst, form=form)
        elim = eliminate_evidence(inst, form=form)
        rel = abs(post.log_evidence - elim) / max(abs(post.log_evidence), 1e-12)
        assert rel < 1e-10, f"trial {trial}: {post.log_evidence} vs {elim}"


def test_relabeling_nodes_permutes_the_posterior():
    rng = np.random.default_rng(33)
    N, T = 3, 3
    edges = [[(0, 1), (1, 2)], [(0, 2)], [(0, 1)]]
    params = SISParams(alpha=0.12, beta=0.2, gamma=0.4)
    theta = rng.uniform(0.1, 0.9, size=(2, 1))
    obs = rng.integers(0, 2, size=(N, T, 1)).astype(np.int8)
    perm = np.array([2, 0, 1])  # new label of each old node
    relabeled_edges = [[tuple(sorted((perm[u], perm[v]))) for u, v in step]
                       for step in edges]
    base = tiny(DynamicGraph(N, edges), params, theta, obs)
    obs_perm = np.empty_like(obs)
    obs_perm[perm] = obs
    twin = tiny(DynamicGraph(N, relabeled_edges), params, theta, obs_perm)
    a = enumerate_posterior(base)
    b = enumerate_posterior(twin)
    assert abs(a.log_evidence - b.log_evidence) < 1e-12
    np.testing.assert_allclose(b.marginals[perm], a.marginals, atol=1e-12)


def test_enumeration_refuses_instances_past_the_size_limits():
    params = SISParams(alpha=0.1, beta=0.1, gamma=0.5)
    theta = np.array([[0.2], [0.8]])
    with pytest.raises(TractabilityError):
        tiny(DynamicGraph(5, [[], []]), params, theta,
             np.zeros((5, 2, 1), dtype=np.int8))
    with pytest.raises(TractabilityError):
        tiny(DynamicGraph(2, [[] for _ in range(6)]), params, theta,
             np.zeros((2, 6, 1), dtype=np.int8))


def test_instance_shape_mismatches_are_rejected():
    params = SISParams(alpha=0.1, beta=0.1, gamma=0.5)
    with pytest.raises(ValueError):
        tiny(DynamicGraph(2, [[], []]), params, [[0.2], [0.8]],
             np.zeros((3, 2, 1), dtype=np.int8))
    with pytest.raises(ValueError):
        # emission table for two symptoms against single-symptom readings
        tiny(DynamicGraph(2, [[], []]), params, [[0.2, 0.3], [0.8, 0.7]],
             np.zeros((2, 2, 1), dtype=np.int8))


def test_marginals_stay_in_the_unit_interval_with_pinned_first_column():
    rng = np.random.default_rng(47)
    for _ in range(6):
        post = enumerate_posterior(random_instance(rng))
        assert np.all(post.marginals >= 0.0)
        assert np.all(post.marginals <= 1.0)
        assert np.all(post.marginals[:, 0] == 0.0)
