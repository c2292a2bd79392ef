"""Command-line entry point: ``cascade-lab <mode> --config <path>``.

Exit status is 0 on success, 2 for configuration or input errors and 3 for
failures while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import clearing, io
from .config import MODES, ConfigError, ExperimentConfig, parse_config
from .meanfield import Method, phase_diagram
from .models import ModelSpec
from .network import (
    NodeState, complete_graph, erdos_renyi, path_graph, random_regular, ring_graph,
    run_cascade, star_graph,
)
from .stochastic import (
    SisParams, TransitionParams, converge_map, iterate_map, run_stochastic, sis_macro_step,
    voter_model,
)

log = logging.getLogger("cascade_lab")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
VM_CHUNK = 250  # replicas per independent random stream
MODE_ALIASES = {"stochastic-cascade": "stochastic"}


def _load_network(spec, seed=None):
    if isinstance(spec, Path):
        return io.read_edge_list(spec)
    n = spec["n"]
    gen = spec["generator"]
    if gen == "path":
        return path_graph(n)
    if gen == "ring":
        return ring_graph(n)
    if gen == "star":
        return star_graph(n - 1)
    if gen == "complete":
        return complete_graph(n)
    # random generators draw from their own stream so replicas stay untouched
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    if gen == "erdos_renyi":
        return erdos_renyi(n, spec["p"], rng, directed=spec["directed"])
    return random_regular(n, spec["k"], rng)


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _run_trace(cfg: ExperimentConfig):
    network = io.read_edge_list(cfg.get("network"))
    phi0, theta, theta_prime = io.read_node_file(cfg.get("nodes"), network.n)
    model = ModelSpec.from_name(cfg.get("model"), phi0=phi0)
    init = NodeState.healthy(theta, theta_prime=theta_prime)
    trace = run_cascade(model, network, init, max_steps=cfg.get("max_steps"))
    data = io.trace_to_dict(trace, kind="cascade", model=model.name)
    return [_write(cfg.output, "trace.json", io.dumps(data))]


def _run_phase(cfg: ExperimentConfig):
    kind = {"i": "constant", "ii": "load", "iii": "overload"}[cfg.get("class")]
    method = Method(cfg.get("method"), kind=kind, phi0=cfg.get("phi0"), k=cfg.get("k"))
    grid = phase_diagram(method, cfg.get("mu"), cfg.get("sigma"), tol=cfg.get("tol"),
                         max_iter=cfg.get("max_iter"), threads=cfg.threads)
    meta = {
        "schema_version": io.SCHEMA_VERSION,
        "method": method.name,
        "class": cfg.get("class"),
        "phi0": method.phi0,
        "k": method.k,
        "label": method.label(),
        "mu": {"count": len(grid.mu_values), "min": float(grid.mu_values.min()),
               "max": float(grid.mu_values.max())},
        "sigma": {"count": len(grid.sigma_values), "min": float(grid.sigma_values.min()),
                  "max": float(grid.sigma_values.max())},
        "tol": cfg.get("tol"),
        "max_iter": cfg.get("max_iter"),
        "order": "row-major, mu outer, sigma inner",
    }
    return [_write(cfg.output, "phase.csv", io.phase_csv(grid)),
            _write(cfg.output, "phase.json", io.dumps(meta))]


def _run_vm(cfg: ExperimentConfig):
    network = _load_network(cfg.get("network"), cfg.seed)
    replicas = cfg.replicas or 1
    n = network.n
    ones = int(round(cfg.get("x0") * n))
    s0 = np.zeros(n, dtype=np.int8)
    s0[:ones] = 1
    chunks = [min(VM_CHUNK, replicas - start) for start in range(0, replicas, VM_CHUNK)]
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(chunks))

    def run(args):
        size, seq = args
        return voter_model(network, s0, size, np.random.default_rng(seq),
                           max_sweeps=cfg.get("max_sweeps"))

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        runs = list(pool.map(run, zip(chunks, seeds)))

    final = np.concatenate([r.final for r in runs])
    times = np.concatenate([r.consensus_time for r in runs])
    length = max(r.x_series.shape[0] for r in runs)
    # replicas that stopped early stay at their absorbed value
    padded = [np.vstack([r.x_series, np.repeat(r.x_series[-1:], length - r.x_series.shape[0], 0)])
              for r in runs]
    series = np.hstack(padded)
    hit_one = final.min(axis=1) == 1
    p_one = float(hit_one.mean())
    summary = {
        "schema_version": io.SCHEMA_VERSION,
        "mode": "vm",
        "n": n,
        "x0": ones / n,
        "replicas": replicas,
        "seed": cfg.seed,
        "consensus_one": p_one,
        "consensus_zero": float((final.max(axis=1) == 0).mean()),
        "standard_error": float(np.sqrt(max(p_one * (1 - p_one), 0.0) / replicas)),
        "unresolved": int(np.sum(times < 0)),
        "mean_consensus_time": float(times[times >= 0].mean()) if np.any(times >= 0) else None,
    }
    return [_write(cfg.output, "vm_series.csv", io.series_csv({"X_mean": series.mean(axis=1)})),
            _write(cfg.output, "vm_summary.json", io.dumps(summary))]


def _run_sis(cfg: ExperimentConfig):
    p = SisParams(cfg.get("nu"), cfg.get("delta"), cfg.get("k"))

    def step(x):
        return sis_macro_step(x, p)

    xs = iterate_map(step, cfg.get("x0"), cfg.get("steps"))
    try:
        settled = converge_map(step, cfg.get("x0"), tol=cfg.get("tol"))
    except RuntimeError:
        settled = None
    summary = {
        "schema_version": io.SCHEMA_VERSION,
        "mode": "sis",
        "nu": p.nu, "delta": p.delta, "k": p.k,
        "nu_c": p.nu_c,
        "predicted_fixed_point": p.fixed_point(),
        "converged_x": settled,
        "final_x": xs[-1],
    }
    return [_write(cfg.output, "sis_series.csv", io.series_csv({"X": xs})),
            _write(cfg.output, "sis_summary.json", io.dumps(summary))]


def _run_stochastic(cfg: ExperimentConfig):
    network = _load_network(cfg.get("network"), cfg.seed)
    phi0, theta, theta_prime = io.read_node_file(cfg.get("nodes"), network.n)
    model = ModelSpec.from_name(cfg.get("model"), phi0=phi0)
    rule = model.fragility_rule()
    s = np.zeros(network.n, dtype=np.int8)
    bad = [i for i in cfg.get("initial_failed") if i >= network.n]
    if bad:
        raise ConfigError("initial_failed", f"node {bad[0]} out of range [0, {network.n})")
    s[cfg.get("initial_failed")] = 1
    init = NodeState(s, model.initial_load(network.n).copy(), theta, theta_prime)
    params = TransitionParams(beta=cfg.get("beta"), beta_prime=cfg.get("beta_prime"),
                              gamma=cfg.get("gamma"), gamma_prime=cfg.get("gamma_prime"))
    replicas = cfg.replicas or 1
    seeds = np.random.SeedSequence(cfg.seed).spawn(replicas)

    def run(seq):
        return run_stochastic(network, init, params, rule, cfg.get("steps"),
                              np.random.default_rng(seq))

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        traces = list(pool.map(run, seeds))
    xs = np.array([t.x_series for t in traces]).T  # (steps + 1, replicas)
    summary = {
        "schema_version": io.SCHEMA_VERSION,
        "mode": "stochastic",
        "model": model.name,
        "replicas": replicas,
        "seed": cfg.seed,
        "steps": cfg.get("steps"),
        "params": {k: (v if np.isfinite(v) else "inf") for k, v in params.__dict__.items()},
        "final_x": xs[-1].tolist(),
        "final_x_mean": float(xs[-1].mean()),
    }
    columns = {"X_mean": xs.mean(axis=1), "X_std": xs.std(axis=1)}
    return [_write(cfg.output, "stochastic_series.csv", io.series_csv(columns)),
            _write(cfg.output, "stochastic_summary.json", io.dumps(summary))]


def _run_clearing(cfg: ExperimentConfig):
    path = cfg.get("input")
    try:
        data = json.loads(Path(path).read_text())
        system = clearing.FinancialSystem.from_dict(data)
    except OSError as exc:
        raise io.InputError(f"{path}: cannot read ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise io.InputError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise io.InputError(f"{path}: malformed financial system ({exc})") from None
    problems = clearing.validate_system(system)
    if problems:
        raise io.InputError(f"{path}: " + "; ".join(problems))
    result = clearing.fictitious_default(system, tol=cfg.get("tol"))
    out = {"schema_version": io.SCHEMA_VERSION, **result.to_dict()}
    return [_write(cfg.output, "clearing.json", io.dumps(out))]


RUNNERS = {
    "trace": _run_trace,
    "phase": _run_phase,
    "vm": _run_vm,
    "sis": _run_sis,
    "stochastic": _run_stochastic,
    "clearing": _run_clearing,
}


def run_experiment(cfg: ExperimentConfig) -> list[Path]:
    """Run one configured experiment and return the files written."""
    cfg = cfg.with_overrides()  # re-checks mode-level requirements such as the seed
    return RUNNERS[cfg.mode](cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascade-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES + tuple(MODE_ALIASES):
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", help="output directory, overrides the config")
        p.add_argument("--seed", type=int)
        p.add_argument("--replicas", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    mode = MODE_ALIASES.get(args.mode, args.mode)
    try:
        cfg = parse_config(args.config)
        if cfg.mode != mode:
            raise ConfigError("mode", f"config is for '{cfg.mode}', command was '{args.mode}'",
                              args.config)
        cfg = cfg.with_overrides(seed=args.seed, replicas=args.replicas,
                                 threads=args.threads, output=args.out)
    except (ConfigError, io.InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        written = run_experiment(cfg)
    except (ConfigError, io.InputError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # report, do not dump a traceback on the user
        log.debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in written:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
