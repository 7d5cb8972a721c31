"""Command-line interface.

Every subcommand reads an optional JSON config file whose top-level keys
mirror the global flags (seed, out, threads) plus one section per subcommand;
flags override file values. The effective merged configuration is written into
the output directory, and all outputs are pure functions of (config, seed),
with the single exception of the wall_seconds timing column in benchmark
reports.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from .baselines import integrate_sis_ode, simulate_jump
from .bench import (DEFAULT_METHODS, contact_pattern, default_configs, format_float,
                    run_benchmark)
from .errors import TractabilityError
from .gibbs import ChainConfig, ChainSummary, run_chain
from .graph import DynamicGraph, dump_proximity, load_proximity
from .model import ObservationMatrix, StateMatrix, simulate
from .oracle import TinyInstance, eliminate_evidence, enumerate_posterior
from .sis import (BetaPriors, EmissionParams, SISKernel, SISParams, attack_rate,
                  mean_infectious_duration, params_from_json)

DEFAULT_EMISSION = [[0.05], [0.95]]  # one symptom tracking the state closely


def _parse_args(argv):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="master random seed (default 0)")
    common.add_argument("--out", help="output directory (default ./out)")
    common.add_argument("--threads", type=int, help="worker cap for the benchmark (default 1)")

    parser = argparse.ArgumentParser(prog="gchmm",
                                     description="epidemic inference on dynamic contact networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="draw states and observations")
    p.add_argument("--proximity", help="contact CSV with header t,u,v")
    p.add_argument("--params", help="parameter JSON file")
    p.add_argument("--transition-form", choices=["exact", "linear"], dest="transition_form")

    p = sub.add_parser("infer", parents=[common], help="posterior sampling from symptoms")
    p.add_argument("--proximity", help="contact CSV with header t,u,v")
    p.add_argument("--observations", help="symptom CSV with header node,t,s0,...")
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", type=int, dest="burn_in")

    p = sub.add_parser("oracle-check", parents=[common],
                       help="compare the sampler against exact enumeration")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--iterations", type=int)

    p = sub.add_parser("benchmark", parents=[common], help="synthetic holdout benchmark")
    p.add_argument("--profile", choices=["desk", "full"])
    p.add_argument("--methods", help="comma-separated subset of " + ",".join(DEFAULT_METHODS))

    p = sub.add_parser("baseline-ode", parents=[common], help="integrate the population curve")
    p.add_argument("--step", type=float)

    sub.add_parser("baseline-jump", parents=[common], help="simulate the population jump process")

    return parser.parse_args(argv)


def _merge_section(file_cfg: dict, command: str, args, flag_names: list[str]) -> dict:
    section = copy.deepcopy(file_cfg.get(command, {}))
    for name in flag_names:
        value = getattr(args, name, None)
        if value is not None:
            section[name] = value
    return section


def _effective_config(args) -> dict:
    file_cfg = {}
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
    cfg = copy.deepcopy(file_cfg)
    cfg["seed"] = args.seed if args.seed is not None else file_cfg.get("seed", 0)
    cfg["out"] = args.out if args.out is not None else file_cfg.get("out", "out")
    cfg["threads"] = args.threads if args.threads is not None else file_cfg.get("threads", 1)
    flags = {
        "simulate": ["proximity", "params", "transition_form"],
        "infer": ["proximity", "observations", "iterations", "burn_in"],
        "oracle-check": ["tolerance", "iterations"],
        "benchmark": ["profile", "methods"],
        "baseline-ode": ["step"],
        "baseline-jump": [],
    }
    cfg[args.command] = _merge_section(file_cfg, args.command, args, flags[args.command])
    return cfg


def _prepare_out(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def _load_params(section: dict) -> tuple[SISParams, EmissionParams | None]:
    if "params" in section and isinstance(section["params"], str):
        with open(section["params"]) as fh:
            return params_from_json(fh)
    doc = section.get("params", {})
    priors = BetaPriors(**doc.get("priors", {}))
    params = SISParams(doc.get("alpha", 0.01), doc.get("beta", 0.02),
                       doc.get("gamma", 0.3), priors=priors)
    return params, None


def _load_emission(section: dict, fallback: EmissionParams | None) -> EmissionParams:
    if "theta" in section:
        theta = np.asarray(section["theta"], dtype=np.float64)
        return EmissionParams(theta, h=section.get("h", 1.0))
    if fallback is not None:
        return fallback
    return EmissionParams(np.asarray(DEFAULT_EMISSION, dtype=np.float64),
                          h=section.get("h", 1.0))


def _load_graph(section: dict, seed: int) -> DynamicGraph:
    if section.get("proximity"):
        return load_proximity(section["proximity"])
    contacts = section.get("contacts", {})
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    return contact_pattern(contacts.get("num_nodes", 84),
                           contacts.get("num_steps", 128),
                           contacts.get("mean_degree", 6.0),
                           rng,
                           steps_per_day=contacts.get("steps_per_day", 1))


def cmd_simulate(cfg: dict, out: Path) -> int:
    section = cfg["simulate"]
    seed = cfg["seed"]
    graph = _load_graph(section, seed)
    params, file_emission = _load_params(section)
    emission = _load_emission(section, file_emission)
    kernel = SISKernel(params, form=section.get("transition_form", "exact"))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    states, observations = simulate(graph, kernel, emission, rng)
    states.to_csv(str(out / "states.csv"))
    observations.to_csv(str(out / "observations.csv"))
    if not section.get("proximity"):
        dump_proximity(graph, str(out / "proximity.csv"))
    print(f"nodes: {graph.num_nodes}  timesteps: {graph.num_steps}")
    print(f"attack rate: {format_float(attack_rate(states.values))}")
    print(f"mean infectious duration: {format_float(mean_infectious_duration(states.values))}")
    return 0


def _expand_daily(observations: ObservationMatrix, num_steps: int,
                  steps_per_day: int) -> ObservationMatrix:
    """Replicate daily symptom rows across each day's timesteps."""
    days = observations.num_steps
    if days * steps_per_day < num_steps:
        raise ValueError(f"{days} daily rows cannot cover {num_steps} timesteps "
                         f"at {steps_per_day} steps per day")
    expanded = np.repeat(observations.values, steps_per_day, axis=1)[:, :num_steps, :]
    return ObservationMatrix(expanded)


def cmd_infer(cfg: dict, out: Path) -> int:
    section = cfg["infer"]
    if not section.get("proximity") or not section.get("observations"):
        raise ValueError("infer needs proximity and observations files")
    graph = load_proximity(section["proximity"])
    observations = ObservationMatrix.from_csv(section["observations"])
    granularity = section.get("symptom_granularity", "hourly")
    if granularity == "daily":
        observations = _expand_daily(observations, graph.num_steps,
                                     section.get("steps_per_day", 24))
    elif granularity != "hourly":
        raise ValueError(f"unknown symptom_granularity {granularity!r}")
    if observations.num_nodes < graph.num_nodes:
        padded = np.full((graph.num_nodes, observations.num_steps,
                          observations.num_symptoms), -1, dtype=np.int8)
        padded[:observations.num_nodes] = observations.values
        observations = ObservationMatrix(padded)

    priors = BetaPriors(**section.get("priors", {}))
    chain_cfg = section.get("chain", {})
    config = ChainConfig(
        iterations=section.get("iterations", chain_cfg.get("iterations", 10000)),
        burn_in=section.get("burn_in", chain_cfg.get("burn_in", 1000)),
        scalar_stride=chain_cfg.get("scalar_stride", 1),
        state_stride=chain_cfg.get("state_stride", 10),
        seed=cfg["seed"])
    save_states = chain_cfg.get("save_states", False)
    if save_states:
        (out / "states").mkdir(exist_ok=True)

    sweeps = config.iterations - config.burn_in
    if sweeps <= 0:
        raise ValueError("burn_in leaves no sweeps to average marginals over")
    acc = np.zeros((observations.num_nodes, observations.num_steps))
    summary = ChainSummary()
    with open(out / "samples.jsonl", "w") as fh:
        for record in run_chain(graph, observations, config, priors=priors,
                                h=section.get("h", 1.0), conditional_acc=acc):
            summary.add(record)
            states_file = None
            if record.states is not None and save_states:
                states_file = f"states/iter_{record.iteration:07d}.csv"
                record.states.to_csv(str(out / states_file))
            doc = {
                "iteration": record.iteration,
                "alpha": record.params.alpha,
                "beta": record.params.beta,
                "gamma": record.params.gamma,
                "theta": [[float(v) for v in row] for row in record.emission.theta],
                "log_joint": record.log_joint,
                "states_file": states_file,
            }
            fh.write(json.dumps(doc, sort_keys=True) + "\n")

    marginals = acc / sweeps
    with open(out / "marginals.csv", "w") as fh:
        fh.write("node,t,p_infectious\n")
        for n in range(graph.num_nodes):
            for t in range(graph.num_steps):
                fh.write(f"{n},{t},{format_float(marginals[n, t])}\n")

    for name in ("alpha", "beta", "gamma"):
        lo, hi = summary.interval(name)
        print(f"{name}: mean {format_float(summary.mean(name))} "
              f"95% [{format_float(lo)}, {format_float(hi)}]")
    return 0


_FIXTURE = {
    "edges": [[0, 0, 1], [1, 0, 1]],
    "num_nodes": 2,
    "num_steps": 3,
    "params": {"alpha": 0.05, "beta": 0.3, "gamma": 0.4},
    "theta": [[0.1], [0.8]],
    "observations": [[0, 1, 1], [0, 0, 1]],  # per node, per timestep, single symptom
}


def cmd_oracle_check(cfg: dict, out: Path) -> int:
    section = cfg["oracle-check"]
    layout = {**_FIXTURE, **section.get("instance", {})}
    edges_by_step = [[] for _ in range(layout["num_steps"])]
    for t, u, v in layout["edges"]:
        edges_by_step[t].append((u, v))
    graph = DynamicGraph(layout["num_nodes"], edges_by_step)
    params = SISParams(**layout["params"])
    emission = EmissionParams(np.asarray(layout["theta"], dtype=np.float64))
    obs_values = np.asarray(layout["observations"], dtype=np.int8)[:, :, None]
    observations = ObservationMatrix(obs_values)
    instance = TinyInstance(graph=graph, params=params, emission=emission,
                            observations=observations)

    exact = enumerate_posterior(instance)
    elimination = eliminate_evidence(instance)
    config = ChainConfig(iterations=section.get("iterations", 22000),
                         burn_in=section.get("burn_in", 2000),
                         scalar_stride=1, state_stride=1, seed=cfg["seed"],
                         update_params=False, update_theta=False)
    acc = np.zeros((graph.num_nodes, graph.num_steps))
    for _ in run_chain(graph, observations, config, init_params=params,
                       init_emission=emission, conditional_acc=acc):
        pass
    sampled = acc / (config.iterations - config.burn_in)
    max_err = float(np.max(np.abs(sampled - exact.marginals)))
    evidence_gap = abs(exact.log_evidence - elimination) / max(abs(exact.log_evidence), 1e-300)
    tolerance = section.get("tolerance", 0.02)
    passed = max_err <= tolerance and evidence_gap <= 1e-10

    doc = {
        "sites": int(sampled.size),
        "max_abs_error": max_err,
        "tolerance": tolerance,
        "log_evidence": exact.log_evidence,
        "elimination_log_evidence": elimination,
        "evidence_relative_gap": evidence_gap,
        "pass": passed,
    }
    with open(out / "oracle_check.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"sites: {sampled.size}  max |gibbs - exact|: {format_float(max_err)} "
          f"(tolerance {format_float(tolerance)})")
    print(f"log evidence: {format_float(exact.log_evidence)} "
          f"(elimination gap {format_float(evidence_gap)})")
    print("PASS" if passed else "FAIL")
    return 0 if passed else 1


def cmd_benchmark(cfg: dict, out: Path) -> int:
    section = cfg["benchmark"]
    profile = section.get("profile", "desk")
    methods = tuple(section["methods"].split(",")) if section.get("methods") else DEFAULT_METHODS
    configs = default_configs(profile)
    overrides = {k: section[k] for k in
                 ("num_series", "series_length_days", "holdout_fraction", "mean_degree",
                  "chain_iterations", "chain_burn_in", "num_nodes") if k in section}
    if overrides:
        from dataclasses import replace
        configs = [replace(c, **overrides) for c in configs]
    rows = run_benchmark(configs, seed=cfg["seed"], methods=methods, out_dir=out,
                         threads=cfg["threads"])
    print("config_id,method,auc,auc_ci_lo,auc_ci_hi,n_series,wall_seconds")
    for row in rows:
        print(f"{row.config_id},{row.method},{format_float(row.auc)},"
              f"{format_float(row.auc_ci_lo)},{format_float(row.auc_ci_hi)},"
              f"{row.n_series},{format_float(row.wall_seconds)}")
    return 0


def cmd_baseline_ode(cfg: dict, out: Path) -> int:
    section = cfg["baseline-ode"]
    times, S, I = integrate_sis_ode(section.get("beta", 0.002), section.get("gamma", 0.3),
                                    section.get("s0", 83.0), section.get("i0", 1.0),
                                    section.get("horizon", 128.0), section.get("step", 0.01))
    with open(out / "trajectory.csv", "w") as fh:
        fh.write("t,S,I\n")
        for t, s, i in zip(times, S, I):
            fh.write(f"{format_float(t)},{format_float(s)},{format_float(i)}\n")
    print(f"final I: {format_float(I[-1])} of N={format_float(S[0] + I[0])}")
    return 0


def cmd_baseline_jump(cfg: dict, out: Path) -> int:
    section = cfg["baseline-jump"]
    rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 2]))
    times, S, I = simulate_jump(section.get("beta", 0.002), section.get("gamma", 0.3),
                                section.get("s0", 83), section.get("i0", 1),
                                section.get("horizon", 128.0), rng)
    with open(out / "trajectory.csv", "w") as fh:
        fh.write("t,S,I\n")
        for t, s, i in zip(times, S, I):
            fh.write(f"{format_float(t)},{int(s)},{int(i)}\n")
    print(f"events: {len(times) - 1}  final I: {int(I[-1])}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "infer": cmd_infer,
    "oracle-check": cmd_oracle_check,
    "benchmark": cmd_benchmark,
    "baseline-ode": cmd_baseline_ode,
    "baseline-jump": cmd_baseline_jump,
}


def main(argv=None) -> int:
    args = _parse_args(argv)
    try:
        cfg = _effective_config(args)
        out = _prepare_out(cfg)
        return _COMMANDS[args.command](cfg, out)
    except TractabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
