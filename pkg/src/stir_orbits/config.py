"""Experiment configuration: flat "key = value" text with [sections].

One section per experiment; the reserved [run] section holds shared
defaults (seed, samples, workers, out).  Parsing uses configparser, which
is exactly this format, and every numeric field is range-checked here so
the CLI can report the offending section and key.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field

from .graphs import (
    FiniteGraph,
    Kernel,
    load_edge_list,
    long_range_kernel,
    nearest_neighbor_kernel,
    unit_conductance_kernel,
)
from .schedule import Schedule, single_segment

EXPERIMENT_KINDS = {
    "orbit-stats",
    "escape",
    "bound-check",
    "jensen",
    "mean-identity",
    "tail",
    "cutoff-verify",
    "reservoir",
    "oracle-suite",
    "decompose",
    "classify",
}


class ConfigError(ValueError):
    def __init__(self, message: str, section: str = "", key: str = "", line: int = 0):
        super().__init__(message)
        self.section = section
        self.key = key
        self.line = line


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    options: dict = field(default_factory=dict)

    def get_float(self, key: str, default=None) -> float:
        raw = self.options.get(key, default)
        if raw is None:
            raise ConfigError(f"missing required key '{key}'", self.name, key)
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"bad number for '{key}': {raw}", self.name, key) from exc

    def get_int(self, key: str, default=None) -> int:
        val = self.get_float(key, default)
        if val != int(val):
            raise ConfigError(f"'{key}' must be an integer", self.name, key)
        return int(val)

    def get_int_list(self, key: str, default=None) -> list[int]:
        raw = self.options.get(key, default)
        if raw is None:
            raise ConfigError(f"missing required key '{key}'", self.name, key)
        try:
            return [int(part.strip()) for part in str(raw).split(",") if part.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad integer list for '{key}': {raw}", self.name, key) from exc


@dataclass
class RunConfig:
    seed: int
    out: str | None
    workers: int
    experiments: list[ExperimentConfig]


_KERNEL_RE = re.compile(r"^\s*([a-z-]+)\s*\(([^)]*)\)\s*$")


def parse_kernel_spec(spec: str, section: str = "") -> tuple[Kernel | None, dict]:
    """Build a kernel from its config string.

    Returns (kernel, info); cutoff specs return (None, info) because they
    carry a whole schedule, which build_schedule resolves.
    """
    match = _KERNEL_RE.match(spec)
    if not match:
        raise ConfigError(f"cannot parse kernel spec: {spec!r}", section, "kernel")
    name, raw_args = match.group(1), match.group(2)
    args = [a.strip() for a in raw_args.split(",")] if raw_args.strip() else []
    try:
        if name == "nearest-neighbor":
            return nearest_neighbor_kernel(int(args[0])), {"kind": name, "d": int(args[0])}
        if name == "long-range":
            d, alpha, r_trunc = int(args[0]), float(args[1]), int(args[2])
            return long_range_kernel(d, alpha, r_trunc), {
                "kind": name, "d": d, "alpha": alpha, "r_trunc": r_trunc,
            }
        if name == "cutoff":
            return None, {"kind": name, "d": int(args[0])}
        if name == "graph-cutoff":
            return None, {"kind": name, "path": args[0]}
        if name == "custom":
            graph = load_edge_list(args[0])
            return unit_conductance_kernel(graph), {"kind": name, "path": args[0]}
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"bad kernel arguments in {spec!r}", section, "kernel") from exc
    raise ConfigError(f"unknown kernel kind {name!r}", section, "kernel")


def build_schedule(exp: ExperimentConfig) -> tuple[Schedule, dict]:
    """Schedule plus a canonical description dict for digests."""
    spec = exp.options.get("kernel")
    if spec is None:
        raise ConfigError("missing required key 'kernel'", exp.name, "kernel")
    kernel, info = parse_kernel_spec(spec, exp.name)
    if info["kind"] == "cutoff":
        from .constructions import build_zd_cutoff

        cutoff = build_zd_cutoff(info["d"])
        return cutoff.schedule, info
    if info["kind"] == "graph-cutoff":
        from .constructions import build_graph_cutoff

        graph = load_edge_list(info["path"])
        cutoff = build_graph_cutoff(graph)
        return cutoff.schedule, info
    lam = exp.get_float("lambda", 1.0)
    info["lambda"] = lam
    return single_segment(kernel, lam), info


def parse_config(path: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep keys case-sensitive
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except configparser.Error as exc:
        line = getattr(exc, "lineno", 0) or 0
        raise ConfigError(f"parse error: {exc.message}", line=line) from exc
    run = dict(parser["run"]) if parser.has_section("run") else {}
    try:
        seed = int(run.get("seed", "1"))
        workers = int(run.get("workers", "1"))
    except ValueError as exc:
        raise ConfigError(f"bad [run] value: {exc}", "run") from exc
    experiments = []
    for section in parser.sections():
        if section == "run":
            continue
        options = dict(parser[section])
        kind = options.pop("kind", None)
        if kind is None:
            raise ConfigError("section is missing 'kind'", section, "kind")
        if kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}", section, "kind")
        experiments.append(ExperimentConfig(name=section, kind=kind, options=options))
    return RunConfig(
        seed=seed,
        out=run.get("out"),
        workers=workers,
        experiments=experiments,
    )
