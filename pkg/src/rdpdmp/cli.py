"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 budget exhausted (partial
outputs are still written and flagged), 3 internal or runtime error. Every
error is also printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time

import numpy as np

from . import __version__
from . import analysis as an
from .config import Config, ObservableEntry, Profile, config_hash, parse_config
from .errors import (
    BudgetExceeded,
    ConfigError,
    LadderNotAdmissible,
    NetworkError,
    QuadratureTooCoarse,
    RdpdmpError,
)
from .io import (
    csv_table,
    pdmp_jumps_jsonl,
    resample_midpoints,
    resolve_out_dir,
    ssa_events_jsonl,
    trajectory_csv,
    write_outputs,
)
from .lattice import Grid, beta, discrete_laplacian, eigenpairs

EXIT_OK, EXIT_INVALID, EXIT_BUDGET, EXIT_INTERNAL = 0, 1, 2, 3
COMMANDS = ("ssa", "pdmp", "converge", "dynkin", "spectrum", "validate")

log = logging.getLogger("rdpdmp")


class _Budget(Exception):
    """Carries the outputs of a run that hit its budget."""

    def __init__(self, exc: BudgetExceeded, results: dict, summary: dict):
        super().__init__(str(exc))
        self.exc = exc
        self.results = results
        self.summary = summary


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdpdmp", description="Lattice SSA and limiting PDMP simulator")
    p.add_argument("--version", action="version", version=f"rdpdmp {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "ssa": "simulate the lattice jump process",
        "pdmp": "simulate the limiting PDMP",
        "converge": "run the (N, mu) convergence ladder against a PDMP reference",
        "dynkin": "martingale residuals of catalog cylinder functions",
        "spectrum": "eigenpairs of the discrete Laplacian",
        "validate": "validate the configuration and network only",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=name != "spectrum", help="YAML run configuration")
        sp.add_argument("--out", help="output directory (default: $RDPDMP_OUT or ./rdpdmp_out)")
        sp.add_argument("--seed", type=int, help="root seed (overrides ensemble.root_seed)")
        sp.add_argument("--replicates", type=int, help="replicate count (overrides ensemble.R)")
        sp.add_argument("--quiet", action="store_true", help="no progress output")
        if name == "spectrum":
            sp.add_argument("--N", type=int, help="lattice size when no config is given")
    return p


def _apply_overrides(cfg: Config, args) -> Config:
    ens = cfg.ensemble
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        ens = dataclasses.replace(ens, root_seed=args.seed)
    if args.replicates is not None:
        if args.replicates < 1:
            raise ConfigError("--replicates must be >= 1")
        ens = dataclasses.replace(ens, R=args.replicates)
    return dataclasses.replace(cfg, ensemble=ens)


def _init(cfg: Config) -> an.InitialCondition:
    return an.InitialCondition(cfg.initial.f0, tuple(cfg.initial.d0))


def _observable(entry: ObservableEntry) -> an.ObservableSpec:
    return an.ObservableSpec(entry.kind, entry.name, entry.f, entry.x0, entry.ell)


def default_observables(k: int) -> list[an.ObservableSpec]:
    obs = [
        an.inner_product(Profile("constant", value=1.0), "<u,1>"),
        an.inner_product(Profile("sine", mean=0.0, amplitude=1.0), "<u,sin2pix>"),
    ]
    return obs + [an.macro_count(ell) for ell in range(1, k + 1)]


def _emit(args, msg: str):
    if not args.quiet:
        print(msg)


# -- subcommands ---------------------------------------------------------------


def cmd_validate(cfg: Config, args) -> tuple[dict, dict]:
    net = cfg.build_network()
    report = {
        "valid": True,
        "reactions": len(net.reactions),
        "fast": net.fast,
        "slow": net.slow,
        "warnings": list(net.warnings),
        "network": net.to_dict(),
    }
    _emit(args, f"network valid: {len(net.reactions)} reactions, {len(net.warnings)} warnings")
    return {"validation.json": json.dumps(report, indent=2) + "\n"}, report


def cmd_spectrum(n: int, args) -> tuple[dict, dict]:
    grid = Grid(n)
    pairs = eigenpairs(grid)
    vecs = np.array([p.vector for p in pairs])
    gram = vecs @ vecs.T / n
    rows = []
    for i, p in enumerate(pairs):
        exact = beta(p.m, n)
        lap = discrete_laplacian(p.vector) + p.beta * p.vector
        off = gram[i].copy()
        off[i] -= 1.0
        rows.append({
            "m": p.m, "kind": p.kind, "beta": p.beta, "beta_formula": exact,
            "rel_error": abs(p.beta - exact) / exact if exact else abs(p.beta),
            "laplacian_residual": float(np.max(np.abs(lap))),
            "orthonormality_residual": float(np.max(np.abs(off))),
        })
    cols = ["m", "kind", "beta", "beta_formula", "rel_error", "laplacian_residual", "orthonormality_residual"]
    summary = {"N": n, "pairs": len(pairs), "max_orthonormality_residual": float(np.max(np.abs(gram - np.eye(n))))}
    _emit(args, f"{len(pairs)} eigenpairs for N={n}")
    return {"spectrum.csv": csv_table(rows, cols)}, summary


def cmd_ssa(cfg: Config, args) -> tuple[dict, dict]:
    net = cfg.build_network()
    engine = an.SsaEngine(cfg.grid.N, cfg.scale.mu, cfg.guards.positivity, cfg.budgets.max_events)
    init = _init(cfg)
    results, reps = {}, []
    seed = cfg.ensemble.root_seed
    for i in range(cfg.ensemble.R):
        try:
            tr = an.simulate_replicate(engine, net, init, cfg.horizon.T, seed, i, cfg.horizon.dt_out,
                                       wall_seconds=cfg.budgets.wall_seconds)
            exc = None
        except BudgetExceeded as e:
            tr, exc = e.partial, e
        results[f"ssa_trajectory_r{i}.csv"] = trajectory_csv(tr.times, tr.u_c, tr.D)
        results[f"ssa_events_r{i}.jsonl"] = ssa_events_jsonl(tr.events)
        reps.append({"replicate": i, "events": tr.n_events, "discrete_jumps": len(tr.events["t"]),
                     "final_t": tr.final.t, "truncated": tr.truncated, "kernel": tr.kernel})
        _emit(args, f"replicate {i}: {tr.n_events} events, final t={tr.final.t:.6g}"
                    + (" (truncated)" if tr.truncated else ""))
        if exc is not None:
            summary = {"engine": engine.label, "root_seed": seed, "replicates": reps, "truncated": True}
            results["ssa_summary.json"] = json.dumps(summary, indent=2) + "\n"
            raise _Budget(exc, results, summary)
    summary = {"engine": engine.label, "root_seed": seed, "replicates": reps, "truncated": False}
    results["ssa_summary.json"] = json.dumps(summary, indent=2) + "\n"
    return results, summary


def cmd_pdmp(cfg: Config, args) -> tuple[dict, dict]:
    net = cfg.build_network()
    engine = an.PdmpEngine(cfg.pdmp_solver.M, cfg.pdmp_solver.h, cfg.budgets.max_jumps)
    init = _init(cfg)
    gamma_d = {i: r.gamma_d for i, r in enumerate(net.reactions)}
    results, reps = {}, []
    seed = cfg.ensemble.root_seed
    for i in range(cfg.ensemble.R):
        try:
            tr = an.simulate_replicate(engine, net, init, cfg.horizon.T, seed, i, cfg.horizon.dt_out,
                                       wall_seconds=cfg.budgets.wall_seconds)
            exc = None
        except BudgetExceeded as e:
            tr, exc = e.partial, e
        sites = resample_midpoints(tr.fields, cfg.grid.N) if len(tr.times) else np.zeros((0, cfg.grid.N))
        results[f"pdmp_trajectory_r{i}.csv"] = trajectory_csv(tr.times, sites, tr.nu.reshape(len(tr.times), -1))
        results[f"pdmp_jumps_r{i}.jsonl"] = pdmp_jumps_jsonl(tr.jumps, gamma_d)
        reps.append({"replicate": i, "jumps": len(tr.jumps["t"]), "final_t": tr.final.t,
                     "truncated": tr.truncated, "clamps": tr.clamps})
        _emit(args, f"replicate {i}: {len(tr.jumps['t'])} jumps" + (" (truncated)" if tr.truncated else ""))
        if exc is not None:
            summary = {"engine": engine.label, "root_seed": seed, "replicates": reps, "truncated": True}
            results["pdmp_summary.json"] = json.dumps(summary, indent=2) + "\n"
            raise _Budget(exc, results, summary)
    summary = {"engine": engine.label, "root_seed": seed, "replicates": reps, "truncated": False}
    results["pdmp_summary.json"] = json.dumps(summary, indent=2) + "\n"
    return results, summary


def cmd_converge(cfg: Config, args, out_dir: str) -> tuple[dict, dict]:
    net = cfg.build_network()
    a = cfg.analysis
    if not a.ladder:
        raise LadderNotAdmissible("analysis.ladder is empty")
    obs = [_observable(o) for o in a.observables] or default_observables(cfg.grid.k)
    times = list(a.times) or [cfg.horizon.T]
    started = time.monotonic()
    report = an.convergence_ladder(
        net, _init(cfg), cfg.horizon.T, list(a.ladder), cfg.ensemble.R, obs, times,
        root_seed=cfg.ensemble.root_seed, guard=cfg.guards.positivity, ref_M=a.reference_M,
        ref_h=a.reference_h, ref_factor=a.reference_factor, cache_dir=f"{out_dir}/.reference_cache",
        workers=cfg.ensemble.workers,
    )
    out = report.to_dict()
    out["provenance"]["config_hash"] = config_hash(cfg)
    out["provenance"]["seconds"] = time.monotonic() - started
    v = report.verdict
    _emit(args, f"ladder verdict: {'PASS' if v['pass'] else 'FAIL' if v['pass'] is not None else 'n/a'}"
                f" ({v['passed']}/{len(v['pairs'])} pairs)")
    return {"ladder_report.json": json.dumps(out, indent=2, default=float) + "\n"}, {"verdict": v}


def cmd_dynkin(cfg: Config, args) -> tuple[dict, dict]:
    net = cfg.build_network()
    T, k = cfg.horizon.T, cfg.grid.k
    times = list(cfg.analysis.dynkin_times) or [0.25 * T, 0.5 * T, T]
    dt = min(cfg.horizon.dt_out, T / 100)
    init = _init(cfg)
    R = cfg.ensemble.R
    if R < 2:
        raise ConfigError("dynkin needs ensemble.R >= 2")
    runs = []
    if cfg.engine in ("ssa", "both"):
        runs.append(("micro", an.SsaEngine(cfg.grid.N, cfg.scale.mu, cfg.guards.positivity, cfg.budgets.max_events),
                     an.MicroGenerator(net, cfg.grid.N, cfg.scale.mu, k, cfg.guards.positivity)))
    if cfg.engine in ("pdmp", "both"):
        runs.append(("limit", an.PdmpEngine(cfg.pdmp_solver.M, cfg.pdmp_solver.h, cfg.budgets.max_jumps),
                     an.LimitGenerator(net, cfg.pdmp_solver.M, k)))
    rows = []
    for gen_name, engine, gen in runs:
        trajs = [an.simulate_replicate(engine, net, init, T, cfg.ensemble.root_seed, i, dt) for i in range(R)]
        for phi in an.cylinder_catalog(k):
            res = an.dynkin_residual(trajs, phi, gen, times)
            for t, m, se, ok in zip(res.times, res.mean, res.se, res.passes()):
                rows.append({"phi": phi.name, "generator": gen_name, "t": float(t), "mean": float(m),
                             "se": float(se), "pass": bool(ok)})
    n_pass = sum(r["pass"] for r in rows)
    _emit(args, f"dynkin residuals: {n_pass}/{len(rows)} within 3 SE")
    table = csv_table(rows, ["phi", "generator", "t", "mean", "se", "pass"])
    return {"dynkin.csv": table}, {"passed": n_pass, "cells": len(rows)}


# -- dispatch ------------------------------------------------------------------


def _error_json(exc: BaseException, code: int) -> str:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("errors", "violations", "failures", "line"):
        val = getattr(exc, attr, None)
        if val:
            if attr == "violations":
                val = [str(v) for v in val]
            payload[attr] = val
    return json.dumps(payload, default=str)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (BudgetExceeded, _Budget)):
        return EXIT_BUDGET
    if isinstance(exc, (ConfigError, NetworkError, LadderNotAdmissible, QuadratureTooCoarse)):
        return EXIT_INVALID
    return EXIT_INTERNAL


def dispatch(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = resolve_out_dir(args.out)
    cfg = None
    try:
        if args.command == "spectrum" and args.config is None:
            if args.N is None or args.N < 1:
                raise ConfigError("spectrum needs --config or a positive --N")
            n = args.N
        else:
            cfg = _apply_overrides(parse_config(args.config), args)
            n = args.N if args.command == "spectrum" and args.N else cfg.grid.N
        resolved = cfg.to_dict() if cfg is not None else None
        flags = {}
        if args.command == "validate":
            results, summary = cmd_validate(cfg, args)
        elif args.command == "spectrum":
            results, summary = cmd_spectrum(n, args)
        elif args.command == "ssa":
            results, summary = cmd_ssa(cfg, args)
        elif args.command == "pdmp":
            results, summary = cmd_pdmp(cfg, args)
        elif args.command == "converge":
            results, summary = cmd_converge(cfg, args, out_dir)
        else:
            results, summary = cmd_dynkin(cfg, args)
        write_outputs(results, out_dir, resolved, {"command": args.command, "summary": summary}, flags)
        return EXIT_OK
    except _Budget as b:
        flags = {name: {"truncated": True} for name in b.results if name.endswith(".csv")}
        write_outputs(b.results, out_dir, cfg.to_dict() if cfg else None,
                      {"command": args.command, "summary": b.summary, "truncated": True}, flags)
        print(_error_json(b.exc, EXIT_BUDGET), file=sys.stderr)
        return EXIT_BUDGET
    except Exception as exc:  # every failure becomes an exit code plus a JSON line
        code = _exit_code(exc)
        if code == EXIT_INTERNAL and not isinstance(exc, RdpdmpError):
            log.debug("internal error", exc_info=True)
        print(_error_json(exc, code), file=sys.stderr)
        return code


def main(argv=None):
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
