"""Two-state susceptible-infectious model on a dynamic contact graph.

State 0 is susceptible, state 1 is infectious. Between consecutive timesteps a
susceptible node is infected from outside the population with probability
alpha, and independently by each infectious contact with probability beta; an
infectious node recovers with probability gamma. Symptoms are per-state
Bernoulli emissions.

Two transition forms coexist on purpose. The exact form multiplies escape
probabilities, 1 - (1-alpha)(1-beta)^k, and drives simulation. The linear form
alpha + k*beta is the additive approximation whose decomposition into one
outside channel plus k contact channels is what makes conjugate Gibbs updates
possible, so all inference uses it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .graph import DynamicGraph, infectious_neighbor_counts
from .model import MISSING, EventSpec, ObservationMatrix

SUSCEPTIBLE = 0
INFECTIOUS = 1

# Linear infection probabilities are capped just below one so their
# complement stays strictly positive inside likelihoods.
PROB_CAP = 1.0 - 1e-9

# Inferred emission probabilities are kept away from 0 and 1 so a single
# contradicting observation can never zero out a whole chain state.
THETA_FLOOR = 1e-6


@dataclass(frozen=True)
class BetaPriors:
    """Beta prior hyperparameters: (a, b) for alpha, (a1, b1) for beta,
    (a2, b2) for gamma. Defaults are flat."""

    a: float = 1.0
    b: float = 1.0
    a1: float = 1.0
    b1: float = 1.0
    a2: float = 1.0
    b2: float = 1.0

    def __post_init__(self):
        for name in ("a", "b", "a1", "b1", "a2", "b2"):
            if getattr(self, name) <= 0:
                raise ValueError(f"prior hyperparameter {name} must be positive")


@dataclass(frozen=True)
class SISParams:
    """Infection and recovery probabilities per timestep, with their priors."""

    alpha: float
    beta: float
    gamma: float
    priors: BetaPriors = field(default_factory=BetaPriors)

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} must lie in [0, 1]")


@dataclass(frozen=True)
class EmissionParams:
    """Bernoulli symptom table theta with shape (2, S) plus the symmetric
    Beta(h, h) prior used when theta is inferred.

    theta[x][s] is the probability that symptom s is present while in state x.
    """

    theta: np.ndarray
    h: float = 1.0

    def __post_init__(self):
        theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if theta.ndim != 2 or theta.shape[0] != 2 or theta.shape[1] < 1:
            raise ValueError("theta must have shape (2, num_symptoms)")
        if theta.min() < 0 or theta.max() > 1:
            raise ValueError("theta entries must lie in [0, 1]")
        if self.h <= 0:
            raise ValueError("h must be positive")
        object.__setattr__(self, "theta", theta)

    @property
    def num_symptoms(self) -> int:
        return self.theta.shape[1]


def flip_emission(observation_error: float, h: float = 1.0) -> EmissionParams:
    """Single-symptom emission table for a noisy direct state reading.

    The symptom reports the state itself, flipped with probability
    observation_error; the entries are clamped away from 0 and 1.
    """
    e = min(max(observation_error, THETA_FLOOR), 1.0 - THETA_FLOOR)
    return EmissionParams(np.array([[e], [1.0 - e]]), h=h)


def infection_prob_exact(alpha: float, beta: float, k: int) -> float:
    """P(infection | k infectious contacts), independent escape channels."""
    return 1.0 - (1.0 - alpha) * (1.0 - beta) ** k


def infection_prob_linear(alpha: float, beta: float, k: int) -> float:
    """Additive approximation alpha + k*beta, capped just below one."""
    return min(alpha + k * beta, PROB_CAP)


def sis_events(params: SISParams) -> list[EventSpec]:
    """The three additive channels: outside infection, per-contact infection,
    recovery. Summing them per target state reproduces the linear form."""

    def infectious_contacts(n, t, states, graph):
        count = 0
        for m in graph.neighbors(n, t):
            if states[m, t] == INFECTIOUS:
                count += 1
        return count

    return [
        EventSpec("outside-infection", params.alpha, SUSCEPTIBLE, INFECTIOUS,
                  prior_a=params.priors.a, prior_b=params.priors.b),
        EventSpec("contact-infection", params.beta, SUSCEPTIBLE, INFECTIOUS,
                  counter=infectious_contacts,
                  prior_a=params.priors.a1, prior_b=params.priors.b1),
        EventSpec("recovery", params.gamma, INFECTIOUS, SUSCEPTIBLE,
                  prior_a=params.priors.a2, prior_b=params.priors.b2),
    ]


class SISKernel:
    """Transition kernel for simulate(); form chooses exact or linear infection.

    The linear form mirrors the event semantics and therefore raises
    ProbabilityOverflowError when alpha + k*beta exceeds one, instead of
    silently capping like the inference-side factors do.
    """

    def __init__(self, params: SISParams, form: str = "exact"):
        if form not in ("exact", "linear"):
            raise ValueError(f"unknown transition form {form!r}")
        self.params = params
        self.form = form
        self._events = sis_events(params)

    def step_infection(self, column: np.ndarray, t: int, graph: DynamicGraph) -> np.ndarray:
        """Vectorized per-node flip probability given the state column at t."""
        from .errors import ProbabilityOverflowError

        indptr, ids = graph.csr()
        N = len(column)
        base = t * N
        infectious = column == INFECTIOUS
        lo, hi = indptr[base], indptr[base + N]
        owner = np.repeat(np.arange(N), np.diff(indptr[base:base + N + 1]))
        k = np.bincount(owner, weights=infectious[ids[lo:hi]].astype(np.float64),
                        minlength=N).astype(np.int64)
        p = self.params
        if self.form == "exact":
            infect = 1.0 - (1.0 - p.alpha) * (1.0 - p.beta) ** k
        else:
            infect = p.alpha + k * p.beta
            if np.any(infect > 1.0):
                bad = int(np.argmax(infect > 1.0))
                raise ProbabilityOverflowError(
                    f"departure probability {infect[bad]} out of state 0 exceeds 1 at node {bad}, t {t}")
        return np.where(infectious, p.gamma, infect)

    def distribution(self, n: int, t: int, states: np.ndarray, graph: DynamicGraph) -> np.ndarray:
        from .model import transition_distribution

        if self.form == "linear":
            return transition_distribution(n, t, states, graph, self._events, 2)
        k = 0
        for m in graph.neighbors(n, t):
            if states[m, t] == INFECTIOUS:
                k += 1
        p = self.params
        if states[n, t] == INFECTIOUS:
            return np.array([p.gamma, 1.0 - p.gamma])
        q = infection_prob_exact(p.alpha, p.beta, k)
        return np.array([1.0 - q, q])


def log_joint_states(states: np.ndarray, graph: DynamicGraph, params: SISParams,
                     form: str = "linear") -> float:
    """Log-probability of a full state matrix under the transition model.

    Multiplies the per-transition factors for every node and step: gamma or
    1-gamma out of the infectious state, infection probability or its
    complement out of the susceptible state, with the infectious-contact count
    taken from the network at the departure timestep. Priors and the
    deterministic all-susceptible start column are not part of the product.
    Returns -inf when any observed transition has zero probability.
    """
    if form not in ("exact", "linear"):
        raise ValueError(f"unknown transition form {form!r}")
    X = np.ascontiguousarray(states, dtype=np.int8)
    N, T = X.shape
    if (graph.num_nodes, graph.num_steps) != (N, T):
        raise ValueError("state matrix shape does not match the graph")
    if T < 2:
        return 0.0
    K = infectious_neighbor_counts(graph, X)
    cur = X[:, :-1]
    nxt = X[:, 1:]
    k = K[:, :-1]
    if form == "linear":
        q = np.minimum(params.alpha + k * params.beta, PROB_CAP)
    else:
        q = 1.0 - (1.0 - params.alpha) * (1.0 - params.beta) ** k
    factors = np.where(
        cur == INFECTIOUS,
        np.where(nxt == SUSCEPTIBLE, params.gamma, 1.0 - params.gamma),
        np.where(nxt == INFECTIOUS, q, 1.0 - q),
    )
    if np.any(factors <= 0.0):
        return float("-inf")
    return float(np.sum(np.log(factors)))


def log_emission(observations: ObservationMatrix, states: np.ndarray,
                 emission: EmissionParams) -> float:
    """Log-likelihood of the observed symptoms given the states; missing
    entries contribute nothing. Returns -inf on a zero-probability entry."""
    X = np.ascontiguousarray(states, dtype=np.int8)
    Y = observations.values
    if Y.shape[:2] != X.shape:
        raise ValueError("observation matrix shape does not match the states")
    theta = emission.theta
    if theta.shape[1] != Y.shape[2]:
        raise ValueError("emission table has the wrong number of symptoms")
    probs = theta[X]  # (N, T, S)
    with np.errstate(divide="ignore"):
        lp = np.where(Y == 1, np.log(probs), np.log1p(-probs))
    lp = np.where(Y == MISSING, 0.0, lp)
    total = float(np.sum(lp))
    return total


def attack_rate(states: np.ndarray) -> float:
    """Fraction of the population that is ever infectious."""
    return float(np.mean(np.max(np.asarray(states), axis=1)))


def mean_infectious_duration(states: np.ndarray) -> float:
    """Average length, in timesteps, of maximal infectious runs.

    Runs still open at the final timestep count with their observed length,
    so the estimate is slightly biased low on short horizons. With recovery
    probability gamma per step the true mean is 1/gamma.
    """
    X = np.asarray(states, dtype=np.int8)
    padded = np.concatenate([np.zeros((X.shape[0], 1), dtype=np.int8), X], axis=1)
    starts = int(np.sum((padded[:, :-1] == 0) & (padded[:, 1:] == 1)))
    if starts == 0:
        return 0.0
    return float(np.sum(X)) / starts


def params_to_json(params: SISParams, emission: EmissionParams | None = None,
                   sink: str | IO[str] | None = None) -> str:
    """Serialize parameters (and optionally the emission table) to JSON."""
    doc = {
        "alpha": params.alpha,
        "beta": params.beta,
        "gamma": params.gamma,
        "priors": {
            "a": params.priors.a, "b": params.priors.b,
            "a1": params.priors.a1, "b1": params.priors.b1,
            "a2": params.priors.a2, "b2": params.priors.b2,
        },
    }
    if emission is not None:
        doc["theta"] = [[float(v) for v in row] for row in emission.theta]
        doc["h"] = emission.h
    text = json.dumps(doc, indent=2, sort_keys=True)
    if sink is not None:
        if isinstance(sink, str):
            with open(sink, "w") as fh:
                fh.write(text + "\n")
        else:
            sink.write(text + "\n")
    return text


def params_from_json(source: str | IO[str]) -> tuple[SISParams, EmissionParams | None]:
    """Inverse of params_to_json. Accepts a path, a file object or raw JSON text."""
    if isinstance(source, str):
        text = source
        if "\n" not in source and source.endswith(".json"):
            with open(source) as fh:
                text = fh.read()
    else:
        text = source.read()
    doc = json.loads(text)
    priors = BetaPriors(**doc.get("priors", {}))
    params = SISParams(doc["alpha"], doc["beta"], doc["gamma"], priors=priors)
    emission = None
    if "theta" in doc:
        emission = EmissionParams(np.asarray(doc["theta"], dtype=np.float64), h=doc.get("h", 1.0))
    return params, emission
