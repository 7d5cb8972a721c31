"""Single-site Gibbs sampling for the epidemic model.

One sweep performs, in order: (1) a systematic single-site pass over every
hidden state with t >= 1, (2) attribution of each infection to the outside
world or to one infectious contact, (3) conjugate Beta draws for alpha, beta
and gamma from the attribution bookkeeping, (4) a conjugate Beta draw for
every emission table entry. The additive (linear) transition form is baked in:
it is what lets an infection split into one outside channel plus one channel
per infectious contact, which is exactly the structure the Beta updates need.

The per-site conditional multiplies only the joint factors that touch the
site: the incoming transition, the outgoing transition, the outgoing
transitions of currently susceptible neighbors (their contact counts include
the site), and the site's emission. Everything is accumulated in log space and
normalized at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import _kernels
from .errors import DegenerateWeightsError, ImpossibleEventError
from .graph import DynamicGraph
from .model import EventSpec, ObservationMatrix, StateMatrix
from .sis import PROB_CAP, THETA_FLOOR, BetaPriors, EmissionParams, SISParams

OUTSIDE_SOURCE = 1  # source code for an infection imported from outside


@dataclass(frozen=True)
class ChainConfig:
    """Sampler schedule and reproducibility knobs.

    iterations counts total sweeps including burn_in. Records are emitted
    after burn-in every scalar_stride sweeps; emitted records carry the full
    state matrix every state_stride sweeps. update_states, update_params and
    update_theta let callers pin parts of the model (fixed-parameter oracle
    comparisons, fully observed states, known emission tables).
    """

    iterations: int = 10000
    burn_in: int = 1000
    scalar_stride: int = 1
    state_stride: int = 10
    seed: int = 0
    transition_form: str = "linear"
    sweep_order: str = "systematic"
    update_states: bool = True
    update_params: bool = True
    update_theta: bool = True

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if not 0 <= self.burn_in <= self.iterations:
            raise ValueError("burn_in must lie in [0, iterations]")
        if self.scalar_stride < 1 or self.state_stride < 1:
            raise ValueError("strides must be at least 1")
        if self.transition_form != "linear":
            raise ValueError("inference requires the linear transition form; "
                             "the exact form has no additive channel decomposition")
        if self.sweep_order != "systematic":
            raise ValueError(f"unknown sweep order {self.sweep_order!r}")


class SourceMatrix:
    """Infection attributions: (node, t) -> source code.

    The support is exactly the set of infection transitions of the underlying
    state matrix. Code 1 is the outside world; code 1+j is the j-th infectious
    neighbor (1-based) of the node at that timestep, neighbors ordered by
    ascending node id.
    """

    def __init__(self, sources: dict[tuple[int, int], int]):
        self.sources = dict(sources)

    def outside_count(self) -> int:
        return sum(1 for s in self.sources.values() if s == OUTSIDE_SOURCE)

    def contact_count(self) -> int:
        return sum(1 for s in self.sources.values() if s > OUTSIDE_SOURCE)

    def __len__(self) -> int:
        return len(self.sources)

    def __getitem__(self, key: tuple[int, int]) -> int:
        return self.sources[key]

    def items(self):
        return self.sources.items()


@dataclass(frozen=True)
class SampleRecord:
    """One retained draw: parameters always, the state matrix when scheduled."""

    iteration: int
    params: SISParams
    emission: EmissionParams
    log_joint: float
    states: StateMatrix | None = None


def rate_log_tables(params: SISParams, max_degree: int,
                    form: str = "linear") -> tuple[np.ndarray, np.ndarray, float, float]:
    """Log transition factors indexed by infectious-contact count.

    Returns (log infect, log stay, log recover, log remain infectious); the
    first two are arrays over k = 0..max_degree+1 so that a hypothetical extra
    contact is always in range. Zero probabilities become -inf entries here,
    so compiled code never takes log(0) itself.
    """
    k = np.arange(max_degree + 2, dtype=np.float64)
    if form == "linear":
        q = np.minimum(params.alpha + k * params.beta, PROB_CAP)
    elif form == "exact":
        q = 1.0 - (1.0 - params.alpha) * (1.0 - params.beta) ** k
    else:
        raise ValueError(f"unknown transition form {form!r}")
    with np.errstate(divide="ignore"):
        lg_inf = np.log(q)
        lg_stay = np.log1p(-q)
        lg_rec = float(np.log(params.gamma)) if params.gamma > 0 else float("-inf")
        lg_norec = float(np.log1p(-params.gamma)) if params.gamma < 1 else float("-inf")
    return lg_inf, lg_stay, lg_rec, lg_norec


def emission_log_tables(observations: ObservationMatrix,
                        emission: EmissionParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-site emission log-likelihood under each state (missing entries are free)."""
    theta = emission.theta
    if theta.shape[1] != observations.num_symptoms:
        raise ValueError("emission table has the wrong number of symptoms")
    with np.errstate(divide="ignore"):
        log_present = np.log(theta)
        log_absent = np.log1p(-theta)
    return _kernels.emission_tables(observations.values, log_present, log_absent)


def _prepare(states: np.ndarray, observations: ObservationMatrix, graph: DynamicGraph,
             params: SISParams, emission: EmissionParams):
    X = np.ascontiguousarray(states, dtype=np.int8)
    if X.shape != (graph.num_nodes, graph.num_steps):
        raise ValueError("state matrix shape does not match the graph")
    indptr, ids = graph.csr()
    K = _kernels.build_pressure(X, indptr, ids, graph.num_nodes, graph.num_steps)
    lg_inf, lg_stay, lg_rec, lg_norec = rate_log_tables(params, graph.max_degree())
    e0, e1 = emission_log_tables(observations, emission)
    return X, K, indptr, ids, lg_inf, lg_stay, lg_rec, lg_norec, e0, e1


def state_conditional(n: int, t: int, states: np.ndarray, observations: ObservationMatrix,
                      graph: DynamicGraph, params: SISParams,
                      emission: EmissionParams) -> float:
    """P(X[n, t] = 1 | everything else), the exact single-site full conditional."""
    if t < 1:
        raise ValueError("column 0 is pinned all-susceptible and is never resampled")
    X, K, indptr, ids, lg_inf, lg_stay, lg_rec, lg_norec, e0, e1 = _prepare(
        states, observations, graph, params, emission)
    l0, l1 = _kernels.site_log_weights(X, K, n, t, indptr, ids,
                                       lg_inf, lg_stay, lg_rec, lg_norec, e0, e1)
    hi = max(l0, l1)
    if hi == float("-inf"):
        raise DegenerateWeightsError(f"both values of site ({n}, {t}) have zero probability")
    w1 = math.exp(l1 - hi)
    return w1 / (math.exp(l0 - hi) + w1)


def sample_state(n: int, t: int, states: np.ndarray, observations: ObservationMatrix,
                 graph: DynamicGraph, params: SISParams, emission: EmissionParams,
                 rng: np.random.Generator) -> int:
    """Draw a new value for one hidden site from its full conditional."""
    p1 = state_conditional(n, t, states, observations, graph, params, emission)
    return 1 if rng.random() < p1 else 0


def source_distribution(n: int, t: int, states: np.ndarray, graph: DynamicGraph,
                        params: SISParams) -> tuple[np.ndarray, list[int]]:
    """Attribution weights for the infection of node n between t and t+1.

    Returns (probs, infectious_neighbors): probs[0] is the outside probability
    (proportional to alpha), probs[1 + j] the probability of the j-th
    infectious neighbor (each proportional to beta).
    """
    X = np.asarray(states)
    if not (X[n, t] == 0 and X[n, t + 1] == 1):
        raise ValueError(f"node {n} is not infected between t {t} and {t + 1}")
    infectious = [m for m in graph.neighbors(n, t) if X[m, t] == 1]
    weights = np.concatenate(([params.alpha], np.full(len(infectious), params.beta)))
    total = weights.sum()
    if total <= 0:
        raise ImpossibleEventError(
            f"infection of node {n} at t {t} has zero probability under alpha={params.alpha}, "
            f"beta={params.beta} with {len(infectious)} infectious contacts")
    return weights / total, infectious


def sample_sources(states: np.ndarray, graph: DynamicGraph, params: SISParams,
                   rng: np.random.Generator) -> SourceMatrix:
    """Attribute every infection transition, visiting sites t-major then node-ascending."""
    X = np.ascontiguousarray(states, dtype=np.int8)
    indptr, ids = graph.csr()
    K = _kernels.build_pressure(X, indptr, ids, graph.num_nodes, graph.num_steps)
    n_events = int(np.sum((X[:, :-1] == 0) & (X[:, 1:] == 1)))
    u = rng.random(n_events)
    ev_n, ev_t, ev_src, ok = _kernels.draw_sources(X, K, indptr, ids,
                                                   params.alpha, params.beta, u)
    if ok != 0:
        raise ImpossibleEventError(
            f"an infection has zero probability under alpha={params.alpha}, beta={params.beta}")
    return SourceMatrix({(int(n), int(t)): int(s) for n, t, s in zip(ev_n, ev_t, ev_src)})


def _susceptible_steps(states: np.ndarray) -> int:
    return int(np.sum(states[:, :-1] == 0))


def _contact_pairs(states: np.ndarray, graph: DynamicGraph) -> int:
    X = np.ascontiguousarray(states, dtype=np.int8)
    indptr, ids = graph.csr()
    K = _kernels.build_pressure(X, indptr, ids, graph.num_nodes, graph.num_steps)
    return int(np.sum(K[:, :-1][X[:, :-1] == 0]))


def alpha_posterior(states: np.ndarray, sources: SourceMatrix,
                    priors: BetaPriors) -> tuple[float, float]:
    """Beta shape parameters of alpha given states and attributions.

    Successes are outside infections; the exposure is every susceptible
    node-step that has a successor column.
    """
    outside = sources.outside_count()
    susceptible = _susceptible_steps(states)
    return priors.a + outside, priors.b + susceptible - outside


def beta_posterior(states: np.ndarray, sources: SourceMatrix, graph: DynamicGraph,
                   priors: BetaPriors) -> tuple[float, float]:
    """Beta shape parameters of beta given states and attributions.

    Successes are contact infections; the exposure is every
    susceptible-infectious contact pair with a successor column.
    """
    inside = sources.contact_count()
    pairs = _contact_pairs(states, graph)
    return priors.a1 + inside, priors.b1 + pairs - inside


def gamma_posterior(states: np.ndarray, priors: BetaPriors) -> tuple[float, float]:
    """Beta shape parameters of gamma: recoveries over infectious node-steps."""
    X = np.asarray(states)
    infectious = int(np.sum(X[:, :-1] == 1))
    recoveries = int(np.sum((X[:, :-1] == 1) & (X[:, 1:] == 0)))
    return priors.a2 + recoveries, priors.b2 + infectious - recoveries


def sample_alpha(states: np.ndarray, sources: SourceMatrix, priors: BetaPriors,
                 rng: np.random.Generator) -> float:
    return float(rng.beta(*alpha_posterior(states, sources, priors)))


def sample_beta(states: np.ndarray, sources: SourceMatrix, graph: DynamicGraph,
                priors: BetaPriors, rng: np.random.Generator) -> float:
    return float(rng.beta(*beta_posterior(states, sources, graph, priors)))


def sample_gamma(states: np.ndarray, priors: BetaPriors, rng: np.random.Generator) -> float:
    return float(rng.beta(*gamma_posterior(states, priors)))


def theta_posterior(states: np.ndarray, observations: ObservationMatrix,
                    h: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-entry Beta shapes (present counts + h, absent counts + h)."""
    X = np.ascontiguousarray(states, dtype=np.int8)
    counts = _kernels.theta_counts(X, observations.values)
    return h + counts[:, :, 1].astype(np.float64), h + counts[:, :, 0].astype(np.float64)


def sample_theta(states: np.ndarray, observations: ObservationMatrix, h: float,
                 rng: np.random.Generator) -> EmissionParams:
    """Conjugate draw of the emission table, clamped away from 0 and 1."""
    a, b = theta_posterior(states, observations, h)
    theta = np.clip(rng.beta(a, b), THETA_FLOOR, 1.0 - THETA_FLOOR)
    return EmissionParams(theta, h=h)


def run_chain(graph: DynamicGraph, observations: ObservationMatrix, config: ChainConfig,
              priors: BetaPriors = BetaPriors(), h: float = 1.0,
              init_states: np.ndarray | None = None,
              init_params: SISParams | None = None,
              init_emission: EmissionParams | None = None,
              conditional_acc: np.ndarray | None = None) -> Iterator[SampleRecord]:
    """Generate posterior draws; the stream is a pure function of its arguments.

    Parameters and emission tables are initialized from their priors unless
    given. When update_params or update_theta is off, the corresponding
    initial value is required and held fixed; when update_states is off,
    init_states is required and the chain runs over sources and parameters
    only (the fully observed regime).

    conditional_acc, when given, must be a zeroed float64 (N, T) array; every
    post-burn-in sweep adds each site's conditional P(state = 1) into it, so
    dividing by the number of post-burn-in sweeps afterwards yields the
    Rao-Blackwellized marginal estimate. Accumulation draws nothing from the
    RNG, so it never changes the emitted record stream.
    """
    N, T = graph.num_nodes, graph.num_steps
    if (observations.num_nodes, observations.num_steps) != (N, T):
        raise ValueError("observation matrix shape does not match the graph")
    S = observations.num_symptoms
    rng = np.random.default_rng(config.seed)

    if init_states is None:
        if not config.update_states:
            raise ValueError("update_states=False requires init_states")
        X = np.zeros((N, T), dtype=np.int8)
    else:
        X = np.ascontiguousarray(init_states, dtype=np.int8).copy()
        if X.shape != (N, T):
            raise ValueError(f"init_states must have shape ({N}, {T})")
        if np.any(X[:, 0] != 0):
            raise ValueError("the initial column is pinned all-susceptible")

    if init_params is not None:
        alpha, beta, gamma = init_params.alpha, init_params.beta, init_params.gamma
        priors = init_params.priors
    elif config.update_params:
        alpha = float(rng.beta(priors.a, priors.b))
        beta = float(rng.beta(priors.a1, priors.b1))
        gamma = float(rng.beta(priors.a2, priors.b2))
    else:
        raise ValueError("update_params=False requires init_params")

    if init_emission is not None:
        theta = init_emission.theta.copy()
        h = init_emission.h
        if theta.shape[1] != S:
            raise ValueError("init_emission has the wrong number of symptoms")
    elif config.update_theta:
        theta = np.clip(rng.beta(h, h, size=(2, S)), THETA_FLOOR, 1.0 - THETA_FLOOR)
    else:
        raise ValueError("update_theta=False requires init_emission")

    indptr, ids = graph.csr()
    kmax = graph.max_degree()
    Y = observations.values
    K = _kernels.build_pressure(X, indptr, ids, N, T)
    params = SISParams(alpha, beta, gamma, priors=priors)
    lg_inf, lg_stay, lg_rec, lg_norec = rate_log_tables(params, kmax)
    emission = EmissionParams(theta, h=h)
    e0, e1 = emission_log_tables(observations, emission)

    if conditional_acc is None:
        acc = np.zeros((1, 1))
    else:
        if conditional_acc.shape != (N, T):
            raise ValueError(f"conditional_acc must have shape ({N}, {T})")
        if not config.update_states:
            raise ValueError("conditional_acc needs the state pass enabled")
        acc = conditional_acc

    for it in range(config.iterations):
        if config.update_states:
            u = rng.random(N * (T - 1))
            keep = 1 if (conditional_acc is not None and it >= config.burn_in) else 0
            flag = _kernels.state_sweep(X, K, indptr, ids, lg_inf, lg_stay,
                                        lg_rec, lg_norec, e0, e1, u, acc, keep)
            if flag != 0:
                raise DegenerateWeightsError(
                    f"a site had zero weight on both values at sweep {it}; "
                    "the current parameters make the data impossible")

        susc, pairs, inf_steps, recov, n_inf = _kernels.transition_counts(X, K)

        if config.update_params:
            u2 = rng.random(n_inf)
            ev_n, ev_t, ev_src, ok = _kernels.draw_sources(X, K, indptr, ids,
                                                           alpha, beta, u2)
            if ok != 0:
                raise ImpossibleEventError(
                    f"an infection has zero probability at sweep {it} "
                    f"(alpha={alpha}, beta={beta})")
            n_out = int(np.sum(ev_src == OUTSIDE_SOURCE))
            n_in = n_inf - n_out
            alpha = float(rng.beta(priors.a + n_out, priors.b + susc - n_out))
            beta = float(rng.beta(priors.a1 + n_in, priors.b1 + pairs - n_in))
            gamma = float(rng.beta(priors.a2 + recov, priors.b2 + inf_steps - recov))
            params = SISParams(alpha, beta, gamma, priors=priors)
            lg_inf, lg_stay, lg_rec, lg_norec = rate_log_tables(params, kmax)

        if config.update_theta:
            ca, cb = theta_posterior(X, observations, h)
            theta = np.clip(rng.beta(ca, cb), THETA_FLOOR, 1.0 - THETA_FLOOR)
            emission = EmissionParams(theta, h=h)
            e0, e1 = emission_log_tables(observations, emission)

        if it >= config.burn_in and (it - config.burn_in) % config.scalar_stride == 0:
            lp, le = _kernels.log_joint_tables(X, K, lg_inf, lg_stay,
                                               lg_rec, lg_norec, e0, e1)
            states_out = None
            if (it - config.burn_in) % config.state_stride == 0:
                states_out = StateMatrix(X.copy())
            yield SampleRecord(iteration=it, params=params, emission=emission,
                               log_joint=float(lp + le), states=states_out)


class ChainSummary:
    """Streaming consumer: parameter traces, state marginals, intervals."""

    def __init__(self):
        self.alphas: list[float] = []
        self.betas: list[float] = []
        self.gammas: list[float] = []
        self.log_joints: list[float] = []
        self.state_sum: np.ndarray | None = None
        self.state_count = 0
        self.records = 0

    def add(self, record: SampleRecord) -> None:
        self.records += 1
        self.alphas.append(record.params.alpha)
        self.betas.append(record.params.beta)
        self.gammas.append(record.params.gamma)
        self.log_joints.append(record.log_joint)
        if record.states is not None:
            v = record.states.values
            if self.state_sum is None:
                self.state_sum = np.zeros(v.shape, dtype=np.float64)
            self.state_sum += v
            self.state_count += 1

    def consume(self, chain: Iterator[SampleRecord]) -> "ChainSummary":
        for record in chain:
            self.add(record)
        return self

    def state_marginals(self) -> np.ndarray:
        if self.state_count == 0:
            raise ValueError("no state matrices were recorded")
        return self.state_sum / self.state_count

    def mean(self, name: str) -> float:
        return float(np.mean(getattr(self, name + "s")))

    def interval(self, name: str, level: float = 0.95) -> tuple[float, float]:
        draws = np.asarray(getattr(self, name + "s"))
        tail = (1.0 - level) / 2.0
        return float(np.quantile(draws, tail)), float(np.quantile(draws, 1.0 - tail))


def posterior_state_marginals(graph: DynamicGraph, observations: ObservationMatrix,
                              config: ChainConfig, estimator: str = "conditional",
                              **kwargs) -> np.ndarray:
    """Posterior P(X = 1) per site.

    The conditional estimator averages each site's full-conditional
    probability over every post-burn-in sweep; it targets the same marginal
    as counting sampled ones but with far less Monte Carlo noise. The
    indicator estimator is that plain count over recorded state matrices,
    kept for cross-checks.
    """
    if estimator == "conditional":
        acc = np.zeros((observations.num_nodes, observations.num_steps))
        sweeps = config.iterations - config.burn_in
        if sweeps <= 0:
            raise ValueError("no sweeps left after burn-in to average")
        for _ in run_chain(graph, observations, config,
                           conditional_acc=acc, **kwargs):
            pass
        return acc / sweeps
    if estimator == "indicator":
        summary = ChainSummary().consume(run_chain(graph, observations, config,
                                                   **kwargs))
        return summary.state_marginals()
    raise ValueError(f"unknown estimator {estimator!r}")


def _log(p: float) -> float:
    return math.log(p) if p > 0 else float("-inf")


def sample_state_general(n: int, t: int, states: np.ndarray,
                         observations: ObservationMatrix | None, graph: DynamicGraph,
                         events: list[EventSpec], emission: np.ndarray | None,
                         rng: np.random.Generator, num_states: int = 2) -> int:
    """Single-site draw for an arbitrary additive event family.

    Same factor structure as the epidemic conditional, evaluated through the
    event list: incoming transition, own outgoing transition, neighbors'
    outgoing transitions (their counters may read this site), emission.
    """
    from .model import transition_prob_general

    T = states.shape[1]
    if not 1 <= t < T:
        raise ValueError("t must lie in 1..T-1; column 0 is pinned")
    X = states
    old = X[n, t]
    neighbor_list = graph.neighbors(n, t) if t < T - 1 else []
    logw = np.empty(num_states)
    for x in range(num_states):
        X[n, t] = x
        w = _log(transition_prob_general(n, t - 1, x, X, graph, events, num_states))
        if t < T - 1:
            w += _log(transition_prob_general(n, t, int(X[n, t + 1]), X, graph,
                                              events, num_states))
            for m in neighbor_list:
                w += _log(transition_prob_general(m, t, int(X[m, t + 1]), X, graph,
                                                  events, num_states))
        if observations is not None and emission is not None:
            for s in range(observations.num_symptoms):
                y = observations.values[n, t, s]
                if y == 1:
                    w += _log(float(emission[x, s]))
                elif y == 0:
                    w += _log(1.0 - float(emission[x, s]))
        logw[x] = w
    X[n, t] = old
    hi = logw.max()
    if hi == float("-inf"):
        raise DegenerateWeightsError(f"all values of site ({n}, {t}) have zero probability")
    probs = np.exp(logw - hi)
    probs /= probs.sum()
    return int(np.searchsorted(np.cumsum(probs), rng.random(), side="right").clip(max=num_states - 1))


def sample_event_general(states: np.ndarray, graph: DynamicGraph,
                         events: list[EventSpec],
                         rng: np.random.Generator) -> dict[tuple[int, int], int]:
    """Attribute every observed transition to one event, by index into events.

    Weights are rate * counter among the events matching the transition's
    from/to pair; a transition that no event can produce raises.
    """
    X = states
    N, T = X.shape
    attributions: dict[tuple[int, int], int] = {}
    for t in range(T - 1):
        for n in range(N):
            cur, nxt = int(X[n, t]), int(X[n, t + 1])
            if cur == nxt:
                continue
            weights = np.zeros(len(events))
            for i, ev in enumerate(events):
                if ev.from_state == cur and ev.to_state == nxt:
                    weights[i] = ev.rate * float(ev.counter(n, t, X, graph))
            total = weights.sum()
            if total <= 0:
                raise ImpossibleEventError(
                    f"transition {cur}->{nxt} of node {n} at t {t} has no active event")
            probs = np.cumsum(weights / total)
            attributions[(n, t)] = int(np.searchsorted(probs, rng.random(),
                                                       side="right").clip(max=len(events) - 1))
    return attributions


def sample_rate_general(states: np.ndarray, graph: DynamicGraph, events: list[EventSpec],
                        attributions: dict[tuple[int, int], int],
                        rng: np.random.Generator) -> list[float]:
    """Conjugate Beta draw for every event rate.

    Successes are the attributions of the event; the exposure sums its counter
    over every node-step sitting in the event's from-state with a successor
    column. Draws happen in event order.
    """
    X = states
    N, T = X.shape
    rates = []
    for i, ev in enumerate(events):
        successes = sum(1 for v in attributions.values() if v == i)
        exposure = 0.0
        for t in range(T - 1):
            for n in range(N):
                if X[n, t] == ev.from_state:
                    exposure += float(ev.counter(n, t, X, graph))
        b_post = ev.prior_b + exposure - successes
        if b_post <= 0:
            raise ValueError(
                f"event {ev.name}: exposure {exposure} cannot support {successes} successes; "
                "counters must dominate the attribution counts")
        rates.append(float(rng.beta(ev.prior_a + successes, b_post)))
    return rates
