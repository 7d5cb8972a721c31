"""Synthetic calibration benchmark: who-infects-whom recovery on held-out people.

Each synthetic series simulates the epidemic on a generated contact pattern,
reads every node's daily state through a symmetric noise channel, then hides a
fraction of the population completely. Methods score the hidden (node, day)
sites; pooled ROC curves over all series give one headline AUC per method and
configuration, with a nonparametric band from the per-series AUC spread.

Seeds are derived per (master seed, series index, stream), so configurations
that share dynamics parameters see identical epidemics and holdout sets and
differ only in the noise threshold. That pairing makes noise-level comparisons
common-random-number comparisons.
"""

from __future__ import annotations

import csv
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import (contact_feature_matrix, fit_neighbor_model,
                        integrate_sis_ode, jump_ensemble_mean, predict_neighbor_model)
from .errors import UndefinedCurveError
from .gibbs import BetaPriors, ChainConfig, posterior_state_marginals
from .graph import DynamicGraph
from .model import MISSING, ObservationMatrix, simulate
from .roc import RocCurve, rank_auc, roc
from .sis import SISKernel, SISParams, flip_emission

METHOD_GCHMM = "gchmm"
METHOD_ODE = "ode-sis"
METHOD_JUMP = "jump-sis"
METHOD_NEIGHBOR = "neighbor-count"
DEFAULT_METHODS = (METHOD_GCHMM, METHOD_ODE, METHOD_JUMP, METHOD_NEIGHBOR)

REPORT_COLUMNS = ("config_id", "method", "auc", "auc_ci_lo", "auc_ci_hi",
                  "n_series", "wall_seconds")

# seed sub-streams per series
_STREAM_PATTERN = 0
_STREAM_DYNAMICS = 1
_STREAM_HOLDOUT = 2
_STREAM_NOISE = 3
_STREAM_CHAIN = 4
_STREAM_JUMP = 5


def format_float(x: float) -> str:
    """17 significant digits, enough for exact float round-trips."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class BenchmarkConfig:
    """One benchmark cell: dynamics parameters plus the observation channel."""

    name: str
    params: SISParams
    observation_error: float
    num_series: int = 200
    num_nodes: int = 84
    series_length_days: int = 128
    holdout_fraction: float = 0.10
    mean_degree: float = 5.5
    chain_iterations: int = 10000
    chain_burn_in: int = 1000
    jump_replications: int = 200

    def __post_init__(self):
        if not 0.0 <= self.observation_error <= 1.0:
            raise ValueError("observation_error must lie in [0, 1]")
        if not 0.0 <= self.holdout_fraction <= 1.0:
            raise ValueError("holdout_fraction must lie in [0, 1]")
        if self.series_length_days < 2:
            raise ValueError("series need at least two days")


def default_configs(profile: str = "desk") -> list[BenchmarkConfig]:
    """The three shipped cells: a noisy reading, a cleaner reading of the same
    epidemic, and a more contagious epidemic read at the noisy level.

    The desk profile trims series count and sweeps to something a laptop runs
    in minutes; the full profile is the 200-series, 10000-sweep setting.
    """
    if profile == "desk":
        scale = dict(num_series=20, chain_iterations=2000, chain_burn_in=500)
    elif profile == "full":
        scale = dict(num_series=200, chain_iterations=10000, chain_burn_in=1000)
    else:
        raise ValueError(f"unknown profile {profile!r}")
    mild = SISParams(alpha=0.01, beta=0.02, gamma=0.3)
    strong = SISParams(alpha=0.005, beta=0.045, gamma=0.3)
    return [
        BenchmarkConfig(name="noisy", params=mild, observation_error=0.01, **scale),
        BenchmarkConfig(name="clean", params=mild, observation_error=0.001, **scale),
        BenchmarkConfig(name="contagious", params=strong, observation_error=0.01, **scale),
    ]


@dataclass(frozen=True)
class Series:
    """One synthesized evaluation unit.

    observed holds the noisy daily state readings, MISSING for every entry of
    a held-out node; truth is the clean simulated state matrix.
    """

    graph: DynamicGraph
    truth: np.ndarray
    observed: np.ndarray
    holdout: np.ndarray


def _stream(master_seed: int, series_index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, series_index, stream]))


def contact_pattern(num_nodes: int, num_steps: int, mean_degree: float,
                    rng: np.random.Generator, steps_per_day: int = 1,
                    jitter: float = 0.04, night_scale: float = 0.25) -> DynamicGraph:
    """Random-geometric contact snapshots around fixed home positions.

    Nodes live on the unit torus; each step they wander a Gaussian jitter from
    home and connect to everyone within the radius matching the requested mean
    degree in expectation. With steps_per_day > 1 the first third of each day
    is night: the radius shrinks by night_scale, giving the daily periodicity
    of real proximity traces.
    """
    if mean_degree < 0:
        raise ValueError("mean_degree must be non-negative")
    base = rng.random((num_nodes, 2))
    radius = math.sqrt(mean_degree / ((num_nodes - 1) * math.pi)) if num_nodes > 1 else 0.0
    night_steps = steps_per_day // 3
    edges_by_step = []
    for t in range(num_steps):
        pos = np.mod(base + rng.normal(0.0, jitter, size=(num_nodes, 2)), 1.0)
        r = radius
        if steps_per_day > 1 and t % steps_per_day < night_steps:
            r *= night_scale
        delta = np.abs(pos[:, None, :] - pos[None, :, :])
        delta = np.minimum(delta, 1.0 - delta)  # torus wraparound
        d2 = np.sum(delta * delta, axis=2)
        close = d2 < r * r
        iu = np.triu_indices(num_nodes, k=1)
        mask = close[iu]
        edges_by_step.append(list(zip(iu[0][mask].tolist(), iu[1][mask].tolist())))
    return DynamicGraph(num_nodes, edges_by_step)


def dorm_pattern(num_nodes: int, num_steps: int, mean_degree: float,
                 rng: np.random.Generator, group_size: int = 6,
                 within_weight: float = 0.70) -> DynamicGraph:
    """Clustered contact snapshots: fixed residential groups plus casual links.

    Nodes are split into contiguous groups of group_size (the last group keeps
    the remainder). Each step, every within-group pair meets with a high
    probability and every cross-group pair with a low one, chosen so the
    expected degree is mean_degree with within_weight of it inside the group.
    If the within-group budget exceeds certain contact, the excess spills into
    the casual links. The persistent groups concentrate repeated exposures the
    way shared housing does, which is what makes a member's neighbors
    informative about them.
    """
    if mean_degree < 0:
        raise ValueError("mean_degree must be non-negative")
    if group_size < 2:
        raise ValueError("groups need at least two members")
    if not 0.0 <= within_weight <= 1.0:
        raise ValueError("within_weight must lie in [0, 1]")
    group = np.arange(num_nodes) // group_size
    p_in = min(1.0, within_weight * mean_degree / (group_size - 1))
    n_cross = max(num_nodes - group_size, 1)
    p_out = min(1.0, max(0.0, (mean_degree - (group_size - 1) * p_in) / n_cross))
    iu = np.triu_indices(num_nodes, k=1)
    same = group[iu[0]] == group[iu[1]]
    p_pair = np.where(same, p_in, p_out)
    edges_by_step = []
    for _ in range(num_steps):
        mask = rng.random(p_pair.shape) < p_pair
        edges_by_step.append(list(zip(iu[0][mask].tolist(), iu[1][mask].tolist())))
    return DynamicGraph(num_nodes, edges_by_step)


def synthesize_series(config: BenchmarkConfig, series_index: int, master_seed: int,
                      holdout: bool = True) -> Series:
    """Simulate one series: states, noisy readings, and the held-out node set."""
    graph = dorm_pattern(config.num_nodes, config.series_length_days,
                         config.mean_degree, _stream(master_seed, series_index, _STREAM_PATTERN))
    kernel = SISKernel(config.params, form="exact")
    states, _ = simulate(graph, kernel, np.zeros((2, 1)),
                         _stream(master_seed, series_index, _STREAM_DYNAMICS))
    truth = states.values
    n_holdout = math.ceil(config.holdout_fraction * config.num_nodes) if holdout else 0
    held = np.zeros(config.num_nodes, dtype=bool)
    if n_holdout:
        chosen = _stream(master_seed, series_index, _STREAM_HOLDOUT).choice(
            config.num_nodes, size=n_holdout, replace=False)
        held[chosen] = True
    flips = _stream(master_seed, series_index, _STREAM_NOISE).random(truth.shape)
    observed = np.where(flips < config.observation_error, 1 - truth, truth).astype(np.int8)
    observed[held, :] = MISSING
    return Series(graph=graph, truth=truth, observed=observed, holdout=held)


def score_gchmm(series: Series, config: BenchmarkConfig, master_seed: int,
                series_index: int, priors: BetaPriors = BetaPriors(),
                infer_params: bool = True) -> np.ndarray:
    """Posterior P(infectious) per site from the Gibbs sampler.

    The noisy reading enters as a single symptom whose emission table is the
    known flip channel and stays fixed; dynamics parameters are inferred from
    the priors unless infer_params is off (then the true ones are used, the
    regime the enumeration oracle can check).
    """
    observations = ObservationMatrix(series.observed[:, :, None])
    seed = int(np.random.SeedSequence([master_seed, series_index, _STREAM_CHAIN])
               .generate_state(1, dtype=np.uint64)[0])
    chain = ChainConfig(iterations=config.chain_iterations, burn_in=config.chain_burn_in,
                        scalar_stride=1, state_stride=1, seed=seed,
                        update_params=infer_params, update_theta=False)
    init = (series.observed == 1).astype(np.int8)
    init[:, 0] = 0
    return posterior_state_marginals(
        series.graph, observations, chain, priors=priors, init_states=init,
        init_params=None if infer_params else config.params,
        init_emission=flip_emission(config.observation_error))


def population_rates(config: BenchmarkConfig, graph: DynamicGraph) -> tuple[float, float]:
    """Map per-contact probabilities onto aggregate rates: beta times the mean
    degree spread over the population, recovery unchanged."""
    return (config.params.beta * graph.mean_degree() / config.num_nodes,
            config.params.gamma)


def score_ode(series: Series, config: BenchmarkConfig) -> np.ndarray:
    """Daily population prevalence I(t)/N from the deterministic curve.

    The outside-infection channel has no population analogue here; it only
    sets the initial mass alpha * N. Every node shares the same score profile.
    """
    beta_rate, gamma_rate = population_rates(config, series.graph)
    N = config.num_nodes
    T = config.series_length_days
    i0 = config.params.alpha * N
    step = 0.01
    _, _, I = integrate_sis_ode(beta_rate, gamma_rate, N - i0, i0,
                                horizon=float(T - 1), step=step)
    idx = np.round(np.arange(T) / step).astype(np.int64)
    return I[idx] / N


def score_jump(series: Series, config: BenchmarkConfig, master_seed: int,
               series_index: int) -> np.ndarray:
    """Daily mean prevalence over jump-process replications."""
    beta_rate, gamma_rate = population_rates(config, series.graph)
    N = config.num_nodes
    i0 = max(1, round(config.params.alpha * N))
    grid = np.arange(config.series_length_days, dtype=np.float64)
    mean_i = jump_ensemble_mean(beta_rate, gamma_rate, N - i0, i0, grid,
                                config.jump_replications,
                                _stream(master_seed, series_index, _STREAM_JUMP))
    return mean_i / N


def train_neighbor_model(config: BenchmarkConfig, master_seed: int,
                         train_days: int = 1000) -> np.ndarray:
    """Fit the contact-count classifier on one long fully labeled series.

    The training series uses the same dynamics and noise channel but no
    holdout; features come from the noisy readings, labels from the truth.
    """
    train_config = replace(config, series_length_days=train_days)
    series = synthesize_series(train_config, config.num_series, master_seed, holdout=False)
    features = contact_feature_matrix(series.graph, (series.observed == 1).astype(np.int8))
    return fit_neighbor_model(features, series.truth.ravel())


def score_neighbor(series: Series, weights: np.ndarray) -> np.ndarray:
    """Classifier scores per site; held-out neighbors count as not infectious."""
    features = contact_feature_matrix(series.graph, (series.observed == 1).astype(np.int8))
    return predict_neighbor_model(weights, features).reshape(series.observed.shape)


@dataclass(frozen=True)
class BenchmarkRow:
    config_id: str
    method: str
    auc: float
    auc_ci_lo: float
    auc_ci_hi: float
    n_series: int
    wall_seconds: float
    curve: RocCurve | None = field(default=None, compare=False)


def _holdout_scores(series: Series, site_scores: np.ndarray) -> np.ndarray:
    if site_scores.ndim == 1:  # one shared population profile per day
        return np.broadcast_to(site_scores, series.truth.shape)[series.holdout, :].ravel()
    return site_scores[series.holdout, :].ravel()


def run_benchmark(configs: list[BenchmarkConfig], seed: int,
                  methods: tuple[str, ...] = DEFAULT_METHODS,
                  out_dir: str | Path | None = None,
                  threads: int = 1) -> list[BenchmarkRow]:
    """Score every (configuration, method) cell and optionally write reports.

    Writes report.csv plus one roc_<config>_<method>.csv per cell when out_dir
    is given. A configuration whose holdout set is empty is reported as
    skipped: NaN AUC columns and zero contributing series.
    """
    for method in methods:
        if method not in DEFAULT_METHODS:
            raise ValueError(f"unknown method {method!r}")
    rows: list[BenchmarkRow] = []
    for config in configs:
        series_list = [synthesize_series(config, i, seed) for i in range(config.num_series)]
        labels = [s.truth[s.holdout, :].ravel() for s in series_list]
        if sum(len(l) for l in labels) == 0:
            for method in methods:
                rows.append(BenchmarkRow(config.name, method, float("nan"), float("nan"),
                                         float("nan"), 0, 0.0))
            continue
        for method in methods:
            start = time.perf_counter()
            if method == METHOD_GCHMM:
                def one(i: int) -> np.ndarray:
                    return _holdout_scores(series_list[i],
                                           score_gchmm(series_list[i], config, seed, i))
                if threads > 1:
                    with ThreadPoolExecutor(max_workers=threads) as pool:
                        scores = list(pool.map(one, range(config.num_series)))
                else:
                    scores = [one(i) for i in range(config.num_series)]
            elif method == METHOD_ODE:
                scores = [_holdout_scores(s, score_ode(s, config)) for s in series_list]
            elif method == METHOD_JUMP:
                scores = [_holdout_scores(s, score_jump(s, config, seed, i))
                          for i, s in enumerate(series_list)]
            else:
                weights = train_neighbor_model(config, seed)
                scores = [_holdout_scores(s, score_neighbor(s, weights)) for s in series_list]
            wall = time.perf_counter() - start

            try:
                pooled = roc(np.concatenate(scores), np.concatenate(labels))
            except UndefinedCurveError:
                warnings.warn(f"{config.name}/{method}: holdout labels are a single "
                              "class, AUC is undefined")
                rows.append(BenchmarkRow(config.name, method, float("nan"), float("nan"),
                                         float("nan"), 0, wall))
                continue
            per_series = []
            for sc, lb in zip(scores, labels):
                try:
                    per_series.append(rank_auc(sc, lb))
                except UndefinedCurveError:
                    continue
            if per_series:
                lo, hi = np.percentile(per_series, [2.5, 97.5])
            else:
                lo = hi = float("nan")
            rows.append(BenchmarkRow(config.name, method, pooled.auc, float(lo), float(hi),
                                     len(per_series), wall, curve=pooled))

    if out_dir is not None:
        write_report(rows, out_dir)
    return rows


def write_report(rows: list[BenchmarkRow], out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow((row.config_id, row.method, format_float(row.auc),
                             format_float(row.auc_ci_lo), format_float(row.auc_ci_hi),
                             row.n_series, format_float(row.wall_seconds)))
    for row in rows:
        if row.curve is None:
            continue
        with open(out / f"roc_{row.config_id}_{row.method}.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("fpr", "tpr"))
            for f, t in zip(row.curve.fpr, row.curve.tpr):
                writer.writerow((format_float(f), format_float(t)))


def export_heatmap(marginals: np.ndarray, observations: ObservationMatrix,
                   steps_per_day: int, sink: str | Path) -> None:
    """Write per-(node, day) rows: posterior probability, symptom count, missing flag.

    Sub-daily marginals aggregate by mean over the day's timesteps; the
    missing flag is 1 only when every observation entry of the day is missing.
    """
    N, T = marginals.shape
    if (observations.num_nodes, observations.num_steps) != (N, T):
        raise ValueError("observation matrix shape does not match the marginals")
    days = math.ceil(T / steps_per_day)
    with open(sink, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("node", "day", "p_infectious", "symptom_count", "missing"))
        for n in range(N):
            for d in range(days):
                sl = slice(d * steps_per_day, min((d + 1) * steps_per_day, T))
                block = observations.values[n, sl, :]
                writer.writerow((n, d,
                                 format_float(float(np.mean(marginals[n, sl]))),
                                 int(np.sum(block == 1)),
                                 int(np.all(block == MISSING))))
