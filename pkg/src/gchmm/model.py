"""Coupled hidden Markov machinery shared by every model family.

A population of N agents evolves over T timesteps. Each agent carries a
discrete hidden state; agents interact only through the edges of a dynamic
graph. Transitions are described either by additive event probabilities
(rate times a local counter, summed per target state) or by a model-specific
kernel object that knows its own transition law. Observations are per-agent
binary symptom vectors with possibly missing entries.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Callable, Sequence

import numpy as np

from .errors import ProbabilityOverflowError
from .graph import DynamicGraph

MISSING = -1  # ObservationMatrix entry for "not observed"


class StateMatrix:
    """Hidden states for N agents over T timesteps.

    values is an (N, T) int8 array with entries in 0..num_states-1.
    """

    def __init__(self, values: np.ndarray, num_states: int = 2):
        values = np.ascontiguousarray(values, dtype=np.int8)
        if values.ndim != 2:
            raise ValueError("state matrix must be 2-dimensional (nodes x timesteps)")
        if num_states < 2:
            raise ValueError("need at least two states")
        if values.size and (values.min() < 0 or values.max() >= num_states):
            raise ValueError(f"state values must lie in 0..{num_states - 1}")
        self.values = values
        self.num_states = num_states

    @property
    def num_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def num_steps(self) -> int:
        return self.values.shape[1]

    def to_csv(self, sink: str | IO[str]) -> None:
        """Write rows node,t,value sorted by (node, t)."""
        if isinstance(sink, str):
            with open(sink, "w", newline="") as fh:
                self.to_csv(fh)
                return
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(("node", "t", "value"))
        for n in range(self.num_nodes):
            for t in range(self.num_steps):
                writer.writerow((n, t, int(self.values[n, t])))

    @classmethod
    def from_csv(cls, source: str | IO[str], num_states: int = 2) -> "StateMatrix":
        if isinstance(source, str):
            with open(source, newline="") as fh:
                return cls.from_csv(fh, num_states=num_states)
        reader = csv.reader(source)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["node", "t", "value"]:
            raise ValueError("state CSV must start with header node,t,value")
        entries = [(int(r[0]), int(r[1]), int(r[2])) for r in reader if r]
        if not entries:
            raise ValueError("state CSV has no rows")
        N = max(e[0] for e in entries) + 1
        T = max(e[1] for e in entries) + 1
        values = np.zeros((N, T), dtype=np.int8)
        seen = np.zeros((N, T), dtype=bool)
        for n, t, v in entries:
            values[n, t] = v
            seen[n, t] = True
        if not seen.all():
            raise ValueError("state CSV does not cover every (node, t) cell")
        return cls(values, num_states=num_states)

    def __eq__(self, other) -> bool:
        if not isinstance(other, StateMatrix):
            return NotImplemented
        return self.num_states == other.num_states and np.array_equal(self.values, other.values)


class ObservationMatrix:
    """Per-agent symptom observations: (N, T, S) int8 with entries 1 (present),
    0 (absent) or MISSING (-1, not observed)."""

    def __init__(self, values: np.ndarray):
        values = np.ascontiguousarray(values, dtype=np.int8)
        if values.ndim != 3:
            raise ValueError("observation matrix must be (nodes x timesteps x symptoms)")
        if values.size and (values.min() < MISSING or values.max() > 1):
            raise ValueError("observation entries must be -1, 0 or 1")
        self.values = values

    @property
    def num_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def num_steps(self) -> int:
        return self.values.shape[1]

    @property
    def num_symptoms(self) -> int:
        return self.values.shape[2]

    @classmethod
    def fully_missing(cls, num_nodes: int, num_steps: int, num_symptoms: int) -> "ObservationMatrix":
        return cls(np.full((num_nodes, num_steps, num_symptoms), MISSING, dtype=np.int8))

    def to_csv(self, sink: str | IO[str]) -> None:
        """Write rows node,t,s0..s{S-1}; missing cells rendered as NA."""
        if isinstance(sink, str):
            with open(sink, "w", newline="") as fh:
                self.to_csv(fh)
                return
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["node", "t"] + [f"s{s}" for s in range(self.num_symptoms)])
        for n in range(self.num_nodes):
            for t in range(self.num_steps):
                row = [n, t]
                for s in range(self.num_symptoms):
                    v = self.values[n, t, s]
                    row.append("NA" if v == MISSING else int(v))
                writer.writerow(row)

    @classmethod
    def from_csv(cls, source: str | IO[str]) -> "ObservationMatrix":
        if isinstance(source, str):
            with open(source, newline="") as fh:
                return cls.from_csv(fh)
        reader = csv.reader(source)
        header = next(reader, None)
        if header is None or len(header) < 3 or [h.strip() for h in header[:2]] != ["node", "t"]:
            raise ValueError("observation CSV must start with header node,t,s0,...")
        S = len(header) - 2
        entries = []
        for row in reader:
            if not row:
                continue
            n, t = int(row[0]), int(row[1])
            vals = [MISSING if f.strip() == "NA" else int(f) for f in row[2:]]
            if len(vals) != S:
                raise ValueError(f"row for node {n}, t {t} has {len(vals)} symptom fields, expected {S}")
            entries.append((n, t, vals))
        if not entries:
            raise ValueError("observation CSV has no rows")
        N = max(e[0] for e in entries) + 1
        T = max(e[1] for e in entries) + 1
        values = np.full((N, T, S), MISSING, dtype=np.int8)
        for n, t, vals in entries:
            values[n, t] = vals
        return cls(values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values)


# A counter inspects (node, t, states, graph) and returns how many chances the
# event has to fire, e.g. the number of infectious neighbors. Counters must
# only read states of the node's neighbors at timestep t.
Counter = Callable[[int, int, np.ndarray, DynamicGraph], float]


def unit_counter(n: int, t: int, states: np.ndarray, graph: DynamicGraph) -> float:
    return 1.0


@dataclass(frozen=True)
class EventSpec:
    """One additive transition channel: from_state -> to_state firing with
    probability rate * counter(n, t, states, graph).

    prior_a and prior_b parameterize the Beta prior used when the rate itself
    is inferred.
    """

    name: str
    rate: float
    from_state: int
    to_state: int
    counter: Counter = unit_counter
    prior_a: float = 1.0
    prior_b: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"event {self.name}: rate must lie in [0, 1]")
        if self.from_state == self.to_state:
            raise ValueError(f"event {self.name}: from_state and to_state must differ")


def transition_prob_general(n: int, t: int, target: int, states: np.ndarray,
                            graph: DynamicGraph, events: Sequence[EventSpec],
                            num_states: int = 2) -> float:
    """Probability that node n moves from states[n, t] to target between t and t+1.

    Departure probabilities are sums of rate * counter over the matching events;
    staying keeps the remaining mass. Raises ProbabilityOverflowError when the
    departure mass out of the current state exceeds one.
    """
    current = int(states[n, t])
    mass = {}
    total = 0.0
    for ev in events:
        if ev.from_state != current:
            continue
        p = ev.rate * float(ev.counter(n, t, states, graph))
        if p < 0:
            raise ValueError(f"event {ev.name}: counter returned a negative value")
        mass[ev.to_state] = mass.get(ev.to_state, 0.0) + p
        total += p
    if total > 1.0:
        raise ProbabilityOverflowError(
            f"departure probability {total} out of state {current} exceeds 1 at node {n}, t {t}")
    if target == current:
        return 1.0 - total
    return mass.get(target, 0.0)


def transition_distribution(n: int, t: int, states: np.ndarray, graph: DynamicGraph,
                            events: Sequence[EventSpec], num_states: int) -> np.ndarray:
    """Full next-state distribution for node n at time t (see transition_prob_general)."""
    current = int(states[n, t])
    probs = np.zeros(num_states)
    total = 0.0
    for ev in events:
        if ev.from_state != current:
            continue
        p = ev.rate * float(ev.counter(n, t, states, graph))
        if p < 0:
            raise ValueError(f"event {ev.name}: counter returned a negative value")
        probs[ev.to_state] += p
        total += p
    if total > 1.0:
        raise ProbabilityOverflowError(
            f"departure probability {total} out of state {current} exceeds 1 at node {n}, t {t}")
    probs[current] = 1.0 - total
    return probs


def disagreement_pair_count(n: int, t: int, states: np.ndarray, graph: DynamicGraph) -> float:
    """Number of unordered pairs of neighbors that disagree with node n.

    This is the convincing-committee count of the Sznajd opinion model: an
    agent flips when two of its disagreeing neighbors team up, so the count is
    d * (d - 1) / 2 for d disagreeing neighbors.
    """
    own = states[n, t]
    d = 0
    for m in graph.neighbors(n, t):
        if states[m, t] != own:
            d += 1
    return d * (d - 1) / 2.0


class EventKernel:
    """Transition kernel driven by a list of EventSpecs (additive form)."""

    def __init__(self, events: Sequence[EventSpec], num_states: int = 2):
        self.events = list(events)
        self.num_states = num_states
        for ev in self.events:
            if not (0 <= ev.from_state < num_states and 0 <= ev.to_state < num_states):
                raise ValueError(f"event {ev.name}: states out of range for {num_states}-state model")

    def distribution(self, n: int, t: int, states: np.ndarray, graph: DynamicGraph) -> np.ndarray:
        return transition_distribution(n, t, states, graph, self.events, self.num_states)


def simulate(graph: DynamicGraph, kernel, emission, rng: np.random.Generator,
             init: np.ndarray | None = None) -> tuple[StateMatrix, ObservationMatrix]:
    """Draw one trajectory of hidden states and a full observation matrix.

    Arguments:
        graph: dynamic contact graph fixing N and T.
        kernel: transition kernel. Either an object with a distribution(n, t,
            states, graph) method (optionally a vectorized step_infection for
            two-state epidemic kernels), or a sequence of EventSpecs.
        emission: (num_states, S) array of per-symptom Bernoulli probabilities,
            or an object exposing .theta with that shape.
        rng: numpy Generator; the trajectory is a pure function of (inputs, rng state).
        init: optional length-N initial state column, defaults to all zeros.

    Returns (StateMatrix, ObservationMatrix). Observations are drawn for every
    (node, timestep, symptom); simulation never produces missing entries.
    """
    if isinstance(kernel, (list, tuple)):
        kernel = EventKernel(kernel)
    theta = np.asarray(getattr(emission, "theta", emission), dtype=np.float64)
    if theta.ndim != 2:
        raise ValueError("emission must be a (num_states, num_symptoms) table")
    num_states = theta.shape[0]
    N, T = graph.num_nodes, graph.num_steps
    X = np.zeros((N, T), dtype=np.int8)
    if init is not None:
        init = np.asarray(init, dtype=np.int8)
        if init.shape != (N,):
            raise ValueError(f"init must have shape ({N},)")
        X[:, 0] = init

    vector_step = getattr(kernel, "step_infection", None)
    for t in range(T - 1):
        u = rng.random(N)
        if vector_step is not None:
            p_depart = vector_step(X[:, t], t, graph)  # P(flip) per node for 2-state kernels
            X[:, t + 1] = np.where(u < p_depart, 1 - X[:, t], X[:, t])
        else:
            for n in range(N):
                probs = kernel.distribution(n, t, X, graph)
                idx = int(np.searchsorted(np.cumsum(probs), u[n], side="right"))
                X[n, t + 1] = min(idx, num_states - 1)  # guard the top bin against rounding

    Y = (rng.random((N, T, theta.shape[1])) < theta[X]).astype(np.int8)
    return StateMatrix(X, num_states=num_states), ObservationMatrix(Y)
