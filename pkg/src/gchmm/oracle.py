"""Exact posteriors by brute force, for instances small enough to enumerate.

Used to validate the Gibbs sampler: enumerate_posterior sums the joint over
every completion of the hidden states, eliminate_evidence recomputes the
evidence by sequential elimination over time columns. The two share no
traversal code, so agreement is a real cross-check of the enumeration.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import TractabilityError
from .gibbs import emission_log_tables, rate_log_tables
from .graph import DynamicGraph
from .model import ObservationMatrix
from .sis import (EmissionParams, SISParams, infection_prob_exact,
                  infection_prob_linear)

MAX_NODES = 4
MAX_STEPS = 5


@dataclass(frozen=True)
class TinyInstance:
    """A complete small inference problem with fixed parameters."""

    graph: DynamicGraph
    params: SISParams
    emission: EmissionParams
    observations: ObservationMatrix

    def __post_init__(self):
        N, T = self.graph.num_nodes, self.graph.num_steps
        if N > MAX_NODES or T > MAX_STEPS:
            raise TractabilityError(
                f"enumeration over 2^{N * (T - 1)} completions refused; "
                f"limits are {MAX_NODES} nodes and {MAX_STEPS} timesteps")
        if (self.observations.num_nodes, self.observations.num_steps) != (N, T):
            raise ValueError("observation matrix shape does not match the graph")
        if self.emission.num_symptoms != self.observations.num_symptoms:
            raise ValueError("emission table has the wrong number of symptoms")


@dataclass(frozen=True)
class PosteriorTable:
    """Exact per-site posterior P(state = 1) plus the log evidence."""

    marginals: np.ndarray
    log_evidence: float


def _logsumexp(values: np.ndarray) -> float:
    hi = np.max(values)
    if hi == float("-inf"):
        return float("-inf")
    return float(hi + np.log(np.sum(np.exp(values - hi))))


def enumerate_posterior(instance: TinyInstance, form: str = "linear") -> PosteriorTable:
    """Sum the joint over all completions (column 0 pinned all-susceptible).

    Completions run in lexicographic order of the flattened sites (node-minor,
    timestep-major). The linear transition form matches what the Gibbs sampler
    targets; the exact form is available for forward-model checks.
    """
    graph = instance.graph
    N, T = graph.num_nodes, graph.num_steps
    indptr, ids = graph.csr()
    lg_inf, lg_stay, lg_rec, lg_norec = rate_log_tables(instance.params,
                                                        graph.max_degree(), form=form)
    e0, e1 = emission_log_tables(instance.observations, instance.emission)
    logp = _kernels.enumerate_logp(N, T, indptr, ids, lg_inf, lg_stay,
                                   lg_rec, lg_norec, e0, e1)
    log_evidence = _logsumexp(logp)
    if log_evidence == float("-inf"):
        raise ValueError("the observations have zero probability under every completion")
    marginals = _kernels.marginals_from_logp(logp, N, T, log_evidence)
    return PosteriorTable(marginals=marginals, log_evidence=log_evidence)


def eliminate_evidence(instance: TinyInstance, form: str = "linear") -> float:
    """Log evidence by forward elimination over time columns.

    Independent of enumerate_posterior: works column by column over the 2^N
    joint configurations, computing transition probabilities straight from the
    infection-probability functions and the emission table.
    """
    graph = instance.graph
    params = instance.params
    theta = instance.emission.theta
    Y = instance.observations.values
    N, T = graph.num_nodes, graph.num_steps
    columns = [np.array(c, dtype=np.int8) for c in itertools.product((0, 1), repeat=N)]
    infect = infection_prob_linear if form == "linear" else infection_prob_exact

    def col_emission(col: np.ndarray, t: int) -> float:
        total = 0.0
        for n in range(N):
            for s in range(Y.shape[2]):
                y = Y[n, t, s]
                if y < 0:
                    continue
                p = theta[col[n], s] if y == 1 else 1.0 - theta[col[n], s]
                total += math.log(p) if p > 0 else float("-inf")
        return total

    def col_transition(col: np.ndarray, nxt: np.ndarray, t: int) -> float:
        total = 0.0
        for n in range(N):
            if col[n] == 1:
                p = params.gamma if nxt[n] == 0 else 1.0 - params.gamma
            else:
                k = sum(1 for m in graph.neighbors(n, t) if col[m] == 1)
                q = infect(params.alpha, params.beta, k)
                p = q if nxt[n] == 1 else 1.0 - q
            total += math.log(p) if p > 0 else float("-inf")
        return total

    forward = np.full(len(columns), float("-inf"))
    forward[0] = col_emission(columns[0], 0)  # index 0 is the all-susceptible column
    for t in range(T - 1):
        nxt_scores = np.full(len(columns), float("-inf"))
        for j, nxt in enumerate(columns):
            terms = np.array([forward[i] + col_transition(col, nxt, t)
                              for i, col in enumerate(columns)])
            nxt_scores[j] = _logsumexp(terms) + col_emission(nxt, t + 1)
        forward = nxt_scores
    return _logsumexp(forward)
