"""Command-line front end.

Subcommands:
    simulate <config>   one run; per-trajectory ledger CSV + summary JSON
    sweep    <config>   one estimate per sweep coordinate; CSV + plot data
    validate <config>   trajectory ensemble vs direct master-equation solution
                        plus the structural invariant suite

Exit codes: 0 success, 1 config error, 2 runtime guard failure, 3 validation
failure.  ``--seed`` / ``QTRAJ_SEED`` and ``--out`` / ``QTRAJ_OUT`` override
the config.  Floats are written with 17 significant digits so reruns with the
same seed are byte-identical, whatever the worker count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import backend
from .config import ConfigError, ExperimentConfig, load_config
from .estimator import run_pairs, summarize, sweep
from .hilbert import NearZeroNorm
from .trajectory import StepTooLarge
from .validate import (integrate_master_equation, invariant_suite, trace_distance,
                       trajectory_ensemble)

__all__ = ["main", "run_simulate", "run_sweep", "run_validate"]


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _estimate_dict(est) -> dict:
    d = {
        "mean": est.mean,
        "std_error": est.std_error,
        "zeta": est.zeta,
        "n_trajectories": est.n_trajectories,
        "n_discarded": est.n_discarded,
        "w_q95": est.w_q95,
        "reliable": est.reliable,
    }
    if est.sweep_coordinate is not None:
        d["coordinate"] = {"label": est.sweep_coordinate[0],
                           "value": est.sweep_coordinate[1]}
    return d


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    out = args.out or os.environ.get("QTRAJ_OUT") or cfg.outputs["dir"]
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _seed(cfg: ExperimentConfig, args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("QTRAJ_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"QTRAJ_SEED: not an integer: {env!r}") from exc
    return cfg.master_seed


def run_simulate(cfg: ExperimentConfig, args) -> int:
    if cfg.sweep_spec is not None:
        raise ConfigError("config has a sweep block; use the `sweep` subcommand")
    out = _out_dir(cfg, args)
    prefix = cfg.outputs["prefix"]
    seed = _seed(cfg, args)
    dump = args.dump_trajectories or bool(cfg.outputs.get("dump_trajectories"))
    model = cfg.build_model()

    outcomes = run_pairs(model, cfg.n_trajectories, cfg.dt, cfg.horizon,
                         cfg.initial_sampler(), seed, threads=args.threads,
                         want_kappa=True, collect_dump=dump)
    est = summarize(outcomes)

    rows = [(o.index, o.n_jumps, o.jump_flux, o.drift_flux, o.thermal_total,
             o.nonthermal_jump_total, o.kappa_sum, o.weight) for o in outcomes]
    _write_csv(out / f"{prefix}_ledger.csv",
               ["traj_id", "n_jumps", "jump_flux", "drift_flux", "thermal_total",
                "nonthermal_jump_total", "kappa_sum", "weight"], rows)

    summary = {"config": cfg.echo(), "seed": seed, "backend": backend.BACKEND,
               "estimate": _estimate_dict(est)}
    with open(out / f"{prefix}_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if dump:
        with open(out / f"{prefix}_trajectories.jsonl", "w", encoding="utf-8") as fh:
            for o in outcomes:
                fh.write(json.dumps(o.dump, sort_keys=True) + "\n")

    print(f"simulate: mean = {est.mean:.6f} +/- {est.std_error:.6f} "
          f"(zeta = {est.zeta:.6f}, n = {est.n_trajectories}, "
          f"discarded = {est.n_discarded})")
    print(f"wrote {out / (prefix + '_ledger.csv')}")
    return 0


def run_sweep(cfg: ExperimentConfig, args) -> int:
    spec = cfg.sweep_spec
    if spec is None:
        raise ConfigError("config has no sweep block; use the `simulate` subcommand")
    coord, values = spec
    out = _out_dir(cfg, args)
    prefix = cfg.outputs["prefix"]
    seed = _seed(cfg, args)

    points = sweep(lambda v: cfg.build_model(coord, v), values,
                   cfg.n_trajectories, cfg.dt, cfg.horizon, seed,
                   initial_sampler=cfg.initial_sampler(), label=coord,
                   threads=args.threads)

    rows = []
    plot_lines = []
    for p in points:
        if p.estimate is None:
            rows.append((p.label, p.value, "", "", "", 0, 0, p.error))
        else:
            e = p.estimate
            rows.append((p.label, p.value, e.mean, e.std_error, e.zeta,
                         e.n_trajectories, e.n_discarded, ""))
            plot_lines.append((p.value, e.mean, e.std_error))
    _write_csv(out / f"{prefix}_sweep.csv",
               ["coordinate_label", "coordinate_value", "mean", "std_error",
                "zeta", "n", "n_discarded", "error"], rows)
    with open(out / f"{prefix}_plot.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {coord}\tmean\tstd_error\n")
        for x, m, s in plot_lines:
            fh.write(f"{_fmt(x)}\t{_fmt(m)}\t{_fmt(s)}\n")

    summary = {"config": cfg.echo(), "seed": seed, "backend": backend.BACKEND,
               "points": [
                   {"label": p.label, "value": p.value, "error": p.error,
                    "estimate": None if p.estimate is None else _estimate_dict(p.estimate)}
                   for p in points]}
    with open(out / f"{prefix}_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    failed = [p for p in points if p.estimate is None]
    for p in points:
        if p.estimate is None:
            print(f"sweep {p.label}={p.value}: FAILED: {p.error}")
        else:
            print(f"sweep {p.label}={p.value}: mean = {p.estimate.mean:.6f} "
                  f"+/- {p.estimate.std_error:.6f}")
    print(f"wrote {out / (prefix + '_sweep.csv')}")
    if failed:
        first = failed[0]
        raise RuntimeError(f"{len(failed)} sweep point(s) failed; first: "
                           f"{first.label}={first.value}: {first.error}")
    return 0


def run_validate(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    prefix = cfg.outputs["prefix"]
    seed = _seed(cfg, args)
    model = cfg.build_model()
    vopts = cfg.validation
    threshold = float(vopts["trace_threshold"])
    n_samples = int(vopts["n_sample_times"])

    dt, T = cfg.dt, cfg.horizon
    n_steps = int(round(T / dt))
    sample_steps = np.unique(np.round(np.linspace(0, n_steps, n_samples)).astype(np.int64))

    rho_traj = trajectory_ensemble(model, cfg.n_trajectories, dt, T,
                                   cfg.initial_sampler(), seed, sample_steps,
                                   threads=args.threads)
    rho0 = rho_traj[0]  # exact ensemble mean of the sampled initial projectors
    _, rho_me = integrate_master_equation(model, rho0, dt, T)
    dists = [trace_distance(rho_traj[i], rho_me[s])
             for i, s in enumerate(sample_steps)]

    rows = [(s * dt, d) for s, d in zip(sample_steps, dists)]
    _write_csv(out / f"{prefix}_validation.csv", ["t", "trace_distance"], rows)

    ens_pass = max(dists) <= threshold
    checks = invariant_suite(seed)
    report = {
        "config": cfg.echo(), "seed": seed, "backend": backend.BACKEND,
        "trace_threshold": threshold,
        "max_trace_distance": max(dists),
        "ensemble_pass": ens_pass,
        "invariants": {name: {"pass": ok, "detail": detail}
                       for name, (ok, detail) in checks.items()},
    }
    all_pass = ens_pass and all(ok for ok, _ in checks.values())
    report["pass"] = all_pass
    with open(out / f"{prefix}_validation.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(f"ensemble vs master equation: max trace distance = {max(dists):.4f} "
          f"(threshold {threshold}): {'PASS' if ens_pass else 'FAIL'}")
    for name, (ok, detail) in checks.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
    if not all_pass:
        print("validation FAILED", file=sys.stderr)
        return 3
    print("validation PASS")
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qtraj",
        description="Monte-Carlo jump unraveling of Lindblad dynamics with "
                    "trajectory entropy accounting")
    parser.add_argument("--version", action="version", version="qtraj 0.1.0")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", run_simulate), ("sweep", run_sweep),
                     ("validate", run_validate)):
        p = sub.add_parser(name)
        p.add_argument("config", help="experiment config (JSON)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config master seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker thread bound (results do not depend on it)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--dump-trajectories", action="store_true",
                       help="write one JSON line per trajectory")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.fn(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (StepTooLarge, NearZeroNorm, RuntimeError, ValueError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
