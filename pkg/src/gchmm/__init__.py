"""Graph-coupled hidden Markov models for epidemics on dynamic contact networks.

The package covers the full loop: simulate an individual-level epidemic over a
time-varying contact graph, run Gibbs sampling to recover hidden infection
states and transmission parameters from noisy symptom reports, check the
sampler against exact enumeration on tiny instances, and compare detection
quality against population-level baselines on a synthetic benchmark.
"""

from .baselines import (endemic_level, fit_neighbor_model, integrate_sis_ode,
                        jump_ensemble_mean, predict_neighbor_model, simulate_jump)
from .bench import (BenchmarkConfig, BenchmarkRow, contact_pattern, default_configs,
                    run_benchmark, synthesize_series, write_report)
from .errors import (DegenerateWeightsError, ImpossibleEventError,
                     ProbabilityOverflowError, ProximityFormatError,
                     TractabilityError, UndefinedCurveError)
from .gibbs import (ChainConfig, ChainSummary, SampleRecord, SourceMatrix,
                    posterior_state_marginals, run_chain, sample_sources)
from .graph import DynamicGraph, dump_proximity, load_proximity
from .model import (MISSING, EventKernel, EventSpec, ObservationMatrix, StateMatrix,
                    simulate, transition_distribution, transition_prob_general)
from .oracle import PosteriorTable, TinyInstance, eliminate_evidence, enumerate_posterior
from .roc import RocCurve, rank_auc, roc
from .sis import (BetaPriors, EmissionParams, SISKernel, SISParams, attack_rate,
                  flip_emission, log_emission, log_joint_states,
                  mean_infectious_duration, params_from_json, params_to_json)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkConfig", "BenchmarkRow", "BetaPriors", "ChainConfig", "ChainSummary",
    "DegenerateWeightsError", "DynamicGraph", "EmissionParams", "EventKernel",
    "EventSpec", "ImpossibleEventError", "MISSING", "ObservationMatrix",
    "PosteriorTable", "ProbabilityOverflowError", "ProximityFormatError",
    "RocCurve", "SISKernel", "SISParams", "SampleRecord", "SourceMatrix",
    "StateMatrix", "TinyInstance", "TractabilityError", "UndefinedCurveError",
    "attack_rate", "contact_pattern", "default_configs", "dump_proximity",
    "eliminate_evidence", "endemic_level", "enumerate_posterior",
    "fit_neighbor_model", "flip_emission", "integrate_sis_ode",
    "jump_ensemble_mean", "load_proximity", "log_emission", "log_joint_states",
    "mean_infectious_duration", "params_from_json", "params_to_json",
    "posterior_state_marginals", "predict_neighbor_model", "rank_auc", "roc",
    "run_benchmark", "run_chain", "sample_sources", "simulate", "simulate_jump",
    "synthesize_series", "transition_distribution", "transition_prob_general",
    "write_report",
]
