"""Command line runner.

    stir-orbits run <config> [--seed S] [--workers K] [--out DIR]
    stir-orbits selftest [--inject-rng-fault]
    stir-orbits decompose <edgelist> [--out DIR]

Exit codes: 0 success (no violated verdict), 1 violated verdict or failed
selftest, 2 config parse error, 3 resource-limit (exact-oracle size caps).
Runs are deterministic functions of (config, seed); the worker count only
changes wall time because sample blocks are partitioned by index.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import fast, rng
from .config import ConfigError, ExperimentConfig, RunConfig, build_schedule, parse_config
from .estimators import (
    Estimate,
    HOLDS,
    INCONCLUSIVE,
    VIOLATED,
    BoundReport,
    check_continuous_corollary,
    check_jensen_lower,
    check_mean_orbit_identity,
    check_sublinear_tail,
    check_theorem_bound,
    config_digest,
    orbit_pgf_estimate,
    orbit_size_estimate,
)
from .graphs import greedy_matching_decomposition, load_edge_list
from .oracle import OracleSizeError
from .walks import TraceWalkConfig, escape_bracket, estimate_escape, classify_recurrence

CSV_COLUMNS = [
    "check-name",
    "config-digest",
    "n-or-t",
    "lhs-mean",
    "lhs-stderr",
    "rhs",
    "verdict",
    "samples",
    "seed",
]


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def rows_to_csv(rows: list[dict]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(col, "")) for col in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def _estimate_row(check: str, digest: str, horizon, est: Estimate, rhs=float("nan"),
                  verdict: str = "ESTIMATE") -> dict:
    return {
        "check-name": check,
        "config-digest": digest,
        "n-or-t": horizon,
        "lhs-mean": est.mean,
        "lhs-stderr": est.stderr,
        "rhs": rhs,
        "verdict": verdict,
        "samples": est.count,
        "seed": est.seed,
    }


def _walk_config(exp: ExperimentConfig, schedule, info) -> TraceWalkConfig:
    if info["kind"] in ("cutoff", "graph-cutoff"):
        return TraceWalkConfig(schedule=schedule)
    return TraceWalkConfig(kernel=schedule.segments[0].kernel, lam=info["lambda"])


def _bracket(exp: ExperimentConfig, schedule, info, seed: int):
    cfg = _walk_config(exp, schedule, info)
    radius = exp.get_int("resistance-radius", 40)
    n_max = exp.get_int("escape-horizon", 2000)
    escape_samples = exp.get_int("escape-samples", 20000)
    survival = estimate_escape(cfg, n_max, escape_samples, rng.derive_key(seed, 0xE5C))
    return escape_bracket(cfg, radius, survival)


def run_experiment(exp: ExperimentConfig, run_seed: int) -> list[dict]:
    seed = exp.get_int("seed", run_seed)
    digest = config_digest({"kind": exp.kind, "seed": seed, **exp.options})
    rows: list[dict] = []
    if exp.kind == "decompose":
        graph = load_edge_list(exp.options["graph"])
        deco = greedy_matching_decomposition(graph)
        for ci, cls in enumerate(deco.classes, start=1):
            est = Estimate(mean=float(len(cls)), stderr=0.0, count=1, seed=seed)
            row = _estimate_row("decompose-class", digest, ci, est)
            row["rhs"] = " ".join(f"{u}-{v}" for u, v in cls)
            rows.append(row)
        return rows
    if exp.kind == "oracle-suite":
        return _oracle_suite(exp, seed, digest)
    if exp.kind == "cutoff-verify":
        return _cutoff_verify(exp, seed, digest)

    schedule, info = build_schedule(exp)
    samples = exp.get_int("samples", 10000)
    if exp.kind == "orbit-stats":
        n = exp.get_int("n")
        est = orbit_size_estimate(schedule, n, samples, seed)
        rows.append(_estimate_row("mean-orbit-size", digest, n, est))
        if "p" in exp.options:
            p = exp.get_float("p")
            rows.append(
                _estimate_row(
                    "orbit-pgf", digest, n, orbit_pgf_estimate(schedule, n, p, samples, seed)
                )
            )
    elif exp.kind == "escape":
        cfg = _walk_config(exp, schedule, info)
        n_max = exp.get_int("n-max", 1000)
        est = estimate_escape(cfg, n_max, samples, seed)
        rows.append(
            _estimate_row(
                "escape-survival",
                digest,
                n_max,
                Estimate(est.escape_upper, est.escape_upper_sigma, samples, seed),
            )
        )
    elif exp.kind == "bound-check":
        n = exp.get_int("n")
        p = exp.get_float("p", 0.5)
        bracket = _bracket(exp, schedule, info, seed)
        report = check_theorem_bound(schedule, n, p, samples, bracket, seed, digest)
        rows.append(report.row())
    elif exp.kind == "jensen":
        n = exp.get_int("n")
        rows.append(check_jensen_lower(schedule, n, samples, seed, digest).row())
    elif exp.kind == "mean-identity":
        n = exp.get_int("n")
        cfg = _walk_config(exp, schedule, info)
        rows.append(
            check_mean_orbit_identity(schedule, cfg, n, samples, seed, digest).row()
        )
    elif exp.kind == "tail":
        n_list = exp.get_int_list("n-list")
        epsilon = exp.get_float("epsilon", 0.5)
        bracket = None
        if "resistance-radius" in exp.options:
            bracket = _bracket(exp, schedule, info, seed)
        for report in check_sublinear_tail(
            schedule, n_list, epsilon, samples, seed, bracket, digest
        ):
            rows.append(report.row())
    elif exp.kind == "reservoir":
        from .constructions import ReservoirConfig, verify_sandwich

        cfg = ReservoirConfig(
            kernel=schedule.segments[0].kernel,
            lam=info.get("lambda", 1.0),
            n=exp.get_int("n"),
            big_n=exp.get_int("N"),
        )
        report = verify_sandwich(cfg, samples, seed)
        verdict = HOLDS if report.lower_holds else VIOLATED
        rows.append(
            _estimate_row(
                "reservoir-lower", digest, cfg.n, report.p_empty, report.pgf.mean, verdict
            )
        )
        rows.append(
            _estimate_row(
                "reservoir-p-update",
                digest,
                cfg.n,
                Estimate(report.p_update, 0.0, report.j_intervals, seed),
                report.p_update_expected,
            )
        )
    elif exp.kind == "classify":
        cfg = _walk_config(exp, schedule, info)
        horizons = exp.get_int_list("horizons", "100,1000,10000")
        report = classify_recurrence(cfg, horizons, samples, seed)
        est = Estimate(report.survival[-1], report.survival_stderr[-1], samples, seed)
        rows.append(
            _estimate_row(
                "classify", digest, horizons[-1], est, report.esc_ratio, report.label
            )
        )
    else:
        raise ConfigError(f"unhandled kind {exp.kind!r}", exp.name, "kind")
    return rows


def _oracle_suite(exp: ExperimentConfig, seed: int, digest: str) -> list[dict]:
    from .testsuites import liggett_sweep, oracle_mc_smoke

    max_vertices = exp.get_int("max-vertices", 4)
    n_schedules = exp.get_int("schedules", 20)
    worst, cases = liggett_sweep(max_vertices, n_schedules, seed)
    verdict = HOLDS if worst <= 1e-10 else VIOLATED
    rows = [
        _estimate_row(
            "liggett-sweep",
            digest,
            max_vertices,
            Estimate(worst, 0.0, cases, seed),
            1e-10,
            verdict,
        )
    ]
    tv = oracle_mc_smoke(exp.get_int("smoke-samples", 30000), seed)
    rows.append(
        _estimate_row(
            "oracle-mc-tv",
            digest,
            1.0,
            Estimate(tv, 0.0, exp.get_int("smoke-samples", 30000), seed),
            0.03,
            HOLDS if tv < 0.03 else VIOLATED,
        )
    )
    return rows


def _cutoff_verify(exp: ExperimentConfig, seed: int, digest: str) -> list[dict]:
    from .config import parse_kernel_spec
    from .constructions import (
        build_graph_cutoff,
        build_zd_cutoff,
        verify_graph_cutoff,
        verify_zd_cutoff,
    )

    spec = exp.options.get("kernel")
    if spec is None:
        raise ConfigError("missing required key 'kernel'", exp.name, "kernel")
    _, info = parse_kernel_spec(spec, exp.name)
    samples = exp.get_int("samples", 1000)
    rows = []
    if info["kind"] == "cutoff":
        cutoff = build_zd_cutoff(info["d"])
        window = exp.get_int("window", 3 * cutoff.range_bound)
        report = verify_zd_cutoff(cutoff, info["d"], samples, seed, window)
    elif info["kind"] == "graph-cutoff":
        graph = load_edge_list(info["path"])
        cutoff = build_graph_cutoff(graph)
        report = verify_graph_cutoff(cutoff, graph, samples, seed)
    else:
        raise ConfigError("cutoff-verify needs cutoff(...) or graph-cutoff(...)",
                          exp.name, "kernel")
    if samples > 0:
        range_verdict = HOLDS if report.range_violations == 0 else VIOLATED
        cond_verdict = HOLDS if report.neighbor_conductance_positive else INCONCLUSIVE
        rows.append(
            _estimate_row(
                "cutoff-range",
                digest,
                report.range_bound,
                Estimate(report.max_range, 0.0, samples, seed),
                float(report.range_bound),
                range_verdict,
            )
        )
        rows.append(
            _estimate_row(
                "cutoff-conductance",
                digest,
                report.range_bound,
                Estimate(report.min_neighbor_count / samples, 0.0, samples, seed),
                0.0,
                cond_verdict,
            )
        )
    if report.kernel_symmetry_defect is not None:
        rows.append(
            _estimate_row(
                "cutoff-symmetry",
                digest,
                1.0,
                Estimate(report.kernel_symmetry_defect, 0.0, 1, seed),
                1e-12,
                HOLDS if report.kernel_symmetry_defect <= 1e-12 else VIOLATED,
            )
        )
    return rows


def cmd_run(args) -> int:
    try:
        run = parse_config(args.config)
    except ConfigError as exc:
        loc = f" [{exc.section}{'.' + exc.key if exc.key else ''}]" if exc.section else ""
        line = f" line {exc.line}" if exc.line else ""
        print(f"stir-orbits: config error{loc}{line}: {exc}", file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else run.seed
    workers = args.workers or run.workers or int(os.environ.get("STIR_ORBITS_WORKERS", "1"))
    fast.set_workers(workers)
    out_dir = args.out or run.out or "."
    rows: list[dict] = []
    try:
        for exp in run.experiments:
            for row in run_experiment(exp, seed):
                rows.append(row)
                print(
                    f"{row['check-name']}: {row['verdict']} "
                    f"(n-or-t={row['n-or-t']}, lhs={_fmt(row['lhs-mean'])}, "
                    f"rhs={_fmt(row['rhs'])})"
                )
    except OracleSizeError as exc:
        print(f"stir-orbits: resource limit: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"stir-orbits: config error [{exc.section}.{exc.key}]: {exc}", file=sys.stderr)
        return 2
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(rows_to_csv(rows))
    print(f"wrote {csv_path} ({len(rows)} rows)")
    return 1 if any(r["verdict"] == VIOLATED for r in rows) else 0


def cmd_decompose(args) -> int:
    graph = load_edge_list(args.edgelist)
    deco = greedy_matching_decomposition(graph)
    rows = []
    for ci, cls in enumerate(deco.classes, start=1):
        edges = " ".join(f"({u},{v})" for u, v in cls)
        print(f"E_{ci}: {edges}")
        for u, v in cls:
            rows.append(f"{ci},{u},{v}")
    print(f"classes={deco.n_classes} degree-bound={deco.degree_bound} "
          f"limit={2 * deco.degree_bound - 1}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "decompose.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("class,u,v\n" + "\n".join(rows) + "\n")
        print(f"wrote {path}")
    return 0


def cmd_selftest(args) -> int:
    from .testsuites import selftest

    if args.inject_rng_fault:
        rng.enable_rng_fault(True)
    try:
        return selftest()
    finally:
        rng.enable_rng_fault(False)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stir-orbits", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a config file of experiments")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=cmd_run)
    p_self = sub.add_parser("selftest", help="fast consistency suite")
    p_self.add_argument("--inject-rng-fault", action="store_true")
    p_self.set_defaults(func=cmd_selftest)
    p_dec = sub.add_parser("decompose", help="greedy matching decomposition")
    p_dec.add_argument("edgelist")
    p_dec.add_argument("--out", default=None)
    p_dec.set_defaults(func=cmd_decompose)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
