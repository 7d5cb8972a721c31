"""Population-level reference models.

These deliberately ignore who is in contact with whom: a deterministic ODE and
an exact stochastic jump process over aggregate counts, plus a per-individual
logistic classifier on recent contact counts. They are the comparison points
for the network-aware model, not approximations of it; the only bridge is the
usual rate mapping beta_rate = beta * mean_degree / N, gamma_rate = gamma.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import _kernels
from .graph import DynamicGraph, infectious_neighbor_counts


def integrate_sis_ode(beta_rate: float, gamma_rate: float, s0: float, i0: float,
                      horizon: float, step: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fixed-step fourth-order Runge-Kutta for dI/dt = beta*S*I - gamma*I.

    The population N = s0 + i0 is conserved by construction: only I is
    integrated and S is defined as N - I. Returns (times, S, I) on the uniform
    grid 0, step, ..., horizon.
    """
    if step <= 0 or horizon <= 0:
        raise ValueError("horizon and step must be positive")
    if s0 < 0 or i0 < 0:
        raise ValueError("initial populations must be non-negative")
    n_steps = int(round(horizon / step))
    if n_steps < 1:
        raise ValueError("horizon must cover at least one step")
    pop = float(s0 + i0)

    def rate(i: float) -> float:
        return beta_rate * (pop - i) * i - gamma_rate * i

    I = np.empty(n_steps + 1)
    I[0] = i0
    y = float(i0)
    for j in range(n_steps):
        k1 = rate(y)
        k2 = rate(y + 0.5 * step * k1)
        k3 = rate(y + 0.5 * step * k2)
        k4 = rate(y + step * k3)
        y = y + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        I[j + 1] = y
    times = np.arange(n_steps + 1) * step
    return times, pop - I, I


def endemic_level(beta_rate: float, gamma_rate: float, population: float) -> float:
    """Stable fixed point N - gamma/beta of the ODE (0 when below threshold)."""
    if beta_rate <= 0:
        return 0.0
    return max(population - gamma_rate / beta_rate, 0.0)


def simulate_jump(beta_rate: float, gamma_rate: float, s0: int, i0: int,
                  horizon: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact next-event simulation of S+I -> 2I (rate beta*S*I), I -> S (rate gamma*I).

    Returns the piecewise-constant trajectory (times, S, I) starting with the
    initial condition at time 0 and ending at the last event before the
    horizon; I = 0 is absorbing, so trajectories may end early.
    """
    if s0 < 0 or i0 < 0:
        raise ValueError("initial populations must be non-negative")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    times, S, I = _kernels.jump_path(rng, float(beta_rate), float(gamma_rate),
                                     int(s0), int(i0), float(horizon))
    times = np.concatenate(([0.0], times))
    S = np.concatenate(([s0], S))
    I = np.concatenate(([i0], I))
    return times, S, I


def jump_ensemble_mean(beta_rate: float, gamma_rate: float, s0: int, i0: int,
                       grid: np.ndarray, reps: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Mean infectious count at the grid times over independent jump runs."""
    grid = np.asarray(grid, dtype=np.float64)
    total = np.zeros(len(grid))
    for _ in range(reps):
        total += _kernels.jump_on_grid(rng, float(beta_rate), float(gamma_rate),
                                       int(s0), int(i0), grid)
    return total / reps


def contact_feature_matrix(graph: DynamicGraph, infectious_obs: np.ndarray) -> np.ndarray:
    """Per-site features: infectious contacts yesterday, today and tomorrow.

    infectious_obs is an (N, T) 0/1 indicator of who looks infectious (unknown
    statuses are simply 0). Rows are flattened node-major, site (n, t) at
    index n * T + t; out-of-range days contribute a zero count.
    """
    obs = np.ascontiguousarray(infectious_obs, dtype=np.int8)
    K = infectious_neighbor_counts(graph, obs).astype(np.float64)
    N, T = obs.shape
    yesterday = np.zeros((N, T))
    tomorrow = np.zeros((N, T))
    yesterday[:, 1:] = K[:, :-1]
    tomorrow[:, :-1] = K[:, 1:]
    return np.stack([yesterday.ravel(), K.ravel(), tomorrow.ravel()], axis=1)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def fit_neighbor_model(features: np.ndarray, labels: np.ndarray,
                       iterations: int = 3000, learning_rate: float = 0.2) -> np.ndarray:
    """Logistic score bias + w . features, fit by batch gradient ascent.

    Deterministic: weights start at zero and follow full-batch gradients of
    the mean log-likelihood. A single-class training set yields the constant
    base-rate predictor (with a warning) since no slope is identified.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("features must be (n_sites, n_features) aligned with labels")
    rate = float(np.mean(y))
    weights = np.zeros(X.shape[1] + 1)
    if rate == 0.0 or rate == 1.0:
        warnings.warn("training labels contain a single class; scores will be constant")
        clamped = min(max(rate, 1e-9), 1.0 - 1e-9)
        weights[0] = np.log(clamped / (1.0 - clamped))
        return weights
    design = np.concatenate([np.ones((len(X), 1)), X], axis=1)
    for _ in range(iterations):
        p = _sigmoid(design @ weights)
        weights += learning_rate * (design.T @ (y - p)) / len(y)
    return weights


def predict_neighbor_model(weights: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Scores in (0, 1) from a fitted weight vector."""
    X = np.asarray(features, dtype=np.float64)
    return _sigmoid(weights[0] + X @ weights[1:])
