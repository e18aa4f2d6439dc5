"""Experiment runner: ``coherentkey {rate,typical,code,protocol,optimize}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, fields
from importlib import metadata
from pathlib import Path

import numpy as np

from .channels import (CqqSource, ProtocolParams, TripartiteState, bell_diagonal_state, channel_to_tripartite,
                       ensemble_input, maximally_entangled_input, overlap_source, standard_channel,
                       state_to_source, tripartite_from_density)
from .codes import CodeConstructionError, build_keygen_code, code_sizes
from .config import (PROTOCOL_SCENARIOS, ConfigError, ExperimentConfig, config_dict, parse_config,
                     serialize_config)
from .entropy import coherent_information
from .optimizer import InputParameterization, maximize_rate
from .protocols import (run_entanglement_distillation, run_entanglement_generation,
                        run_entanglement_transmission, run_key_distillation, run_key_generation)
from .qmath import DimensionError, StateVector
from .typicality import typical_set

SUBCOMMANDS = ("rate", "typical", "code", "protocol", "optimize")


@dataclass
class ResultRow:
    scenario: str
    n: int
    seed: int
    rate_bits: float | None = None
    distance_to_target: float | None = None
    eve_decoupling: float | None = None
    avg_success: float | None = None
    leakage: float | None = None
    classical_bits: int | None = None
    abort_mass: float | None = None
    wall_time_ms: float | None = None
    error: str = ""


COLUMNS = [f.name for f in fields(ResultRow)]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    return str(value)


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_fmt(getattr(row, c)) for c in COLUMNS])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# building blocks from a config


def build_channel(config: ExperimentConfig):
    return standard_channel(config.channel_kind, config.channel_p)


def build_input(config: ExperimentConfig, d: int) -> StateVector:
    if config.input_kind == "ensemble":
        if len(config.input_probs) != d:
            raise ConfigError(f"input.probs: expected {d} weights")
        return ensemble_input(config.input_probs, np.eye(d))
    return maximally_entangled_input(d)


def build_source(config: ExperimentConfig) -> CqqSource:
    """The cqq source of the config, derived from the channel when one is given."""
    if config.channel_kind is not None:
        channel = build_channel(config)
        return channel_to_tripartite(channel, build_input(config, channel.d_in)).source
    if config.source_kind == "overlap":
        return overlap_source(config.source_b_overlap, config.source_e_overlap, config.source_probs)
    return state_to_source(tripartite_from_density(bell_diagonal_state(config.source_weights)))


def params_for(config: ExperimentConfig, n: int, seed: int | None = None) -> ProtocolParams:
    return ProtocolParams(n=n, delta=config.delta, epsilon=config.epsilon, rate_backoff=config.backoff,
                          seed=config.seed if seed is None else seed, m_bits=config.m_bits, s_bits=config.s_bits)


def _message(config: ExperimentConfig, M: int) -> StateVector:
    if config.message_kind == "basis":
        return StateVector(np.eye(1, M, dtype=complex).reshape(-1), (1, M), ("R", "msg"))
    return StateVector.normalized(np.eye(M, dtype=complex).reshape(-1), (M, M), ("R", "msg"))


def _sub_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# per-scenario rows


def _rate_row(config: ExperimentConfig) -> ResultRow:
    if config.channel_kind is not None:
        channel = build_channel(config)
        value = coherent_information(channel_to_tripartite(channel, build_input(config, channel.d_in)))
    else:
        value = coherent_information(TripartiteState(build_source(config)))
    return ResultRow("rate", 1, config.seed, rate_bits=value)


def _optimize_row(config: ExperimentConfig) -> tuple[ResultRow, dict]:
    channel = build_channel(config)
    param = InputParameterization(config.optimize_kind, channel.d_in)
    report = maximize_rate(channel, param, config.optimize_budget, config.seed, config.optimize_restarts)
    info = {"best_params": [float(v) for v in report.best_params], "evaluations": report.evaluations,
            "best_restart": report.best_restart}
    return ResultRow("optimize", 1, config.seed, rate_bits=report.best_value), info


def _typical_row(config: ExperimentConfig, source: CqqSource, n: int) -> ResultRow:
    tset = typical_set(source.probs, n, config.delta)
    rate = math.log2(tset.cardinality) / n if tset.cardinality else None
    return ResultRow("typical", n, config.seed, rate_bits=rate, abort_mass=1.0 - tset.mass)


def _code_row(config: ExperimentConfig, source: CqqSource, n: int) -> ResultRow:
    params = params_for(config, n)
    tset = typical_set(source.probs, n, config.delta)
    sizes = code_sizes(source, params, tset)
    codes = [build_keygen_code(source, params, sizes.M, sizes.S, _sub_seed(config.seed, i), tset=tset)
             for i in range(config.trials)]
    return ResultRow("code", n, config.seed, rate_bits=sizes.m_bits / n,
                     avg_success=float(np.mean([c.avg_success for c in codes])),
                     leakage=float(np.mean([c.max_leakage for c in codes])), abort_mass=1.0 - tset.mass)


def _protocol_row(config: ExperimentConfig, n: int) -> ResultRow:
    params = params_for(config, n)
    scenario = config.scenario
    if scenario in ("keydist", "entdist"):
        source = build_source(config)
        if scenario == "keydist":
            out = run_key_distillation(source, params, trials=config.trials)
        else:
            out = run_entanglement_distillation(source, params, trials=config.trials)
    else:
        channel = build_channel(config)
        input_state = build_input(config, channel.d_in)
        if scenario == "keygen":
            out = run_key_generation(channel, input_state, params)
        elif scenario == "entgen":
            out = run_entanglement_generation(channel, input_state, params)
        else:
            source = channel_to_tripartite(channel, input_state).source
            M = code_sizes(source, params).M
            out = run_entanglement_transmission(channel, None, _message(config, M), params, input_state)
    return ResultRow(scenario, n, config.seed, rate_bits=out.rate(), distance_to_target=out.distance_to_target,
                     eve_decoupling=out.eve_decoupling, avg_success=out.avg_success, leakage=out.leakage,
                     classical_bits=out.classical_bits_sent, abort_mass=out.abort_mass)


def run_experiment(config: ExperimentConfig, timing: bool = False) -> tuple[list[ResultRow], dict]:
    """Rows in config order plus run metadata (wall times, warnings, optimizer details).

    Rows that exceed the simulation caps carry an error message instead of
    metrics. ``wall_time_ms`` is only filled when ``timing`` is set so that
    repeated runs stay byte-identical.
    """
    rows, meta = [], {"wall_time_ms": [], "warnings": []}
    if config.scenario in ("rate", "optimize"):
        jobs = [None]
    else:
        jobs = list(config.n_list)
    source = build_source(config) if config.scenario in ("typical", "code") else None
    for n in jobs:
        start = time.perf_counter()
        try:
            if config.scenario == "rate":
                row = _rate_row(config)
            elif config.scenario == "optimize":
                row, meta["optimizer"] = _optimize_row(config)
            elif config.scenario == "typical":
                row = _typical_row(config, source, n)
            elif config.scenario == "code":
                row = _code_row(config, source, n)
            else:
                row = _protocol_row(config, n)
        except (DimensionError, CodeConstructionError, MemoryError) as exc:
            row = ResultRow(config.scenario, n if n is not None else 1, config.seed,
                            error=f"{type(exc).__name__}: {exc}")
            meta["warnings"].append(f"n={n}: {row.error}")
        elapsed = (time.perf_counter() - start) * 1e3
        meta["wall_time_ms"].append(elapsed)
        if timing:
            row.wall_time_ms = elapsed
        rows.append(row)
    return rows, meta


def derived_sizes(config: ExperimentConfig) -> list[dict]:
    """M, S and L per block length, without simulating anything."""
    if config.scenario in ("rate", "optimize"):
        return []
    source = build_source(config)
    out = []
    for n in config.n_list:
        try:
            params = params_for(config, n)
            tset = typical_set(source.probs, n, config.delta)
            sizes = code_sizes(source, params, tset)
            block = sizes.M * sizes.S
            out.append({"n": n, "M": sizes.M, "S": sizes.S, "L": tset.cardinality // block if block else 0})
        except DimensionError as exc:
            out.append({"n": n, "error": str(exc)})
    return out


# ---------------------------------------------------------------------------
# command line


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coherentkey", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "rate": "single-letter coherent information of a channel or source",
        "typical": "typical-set sizes and masses over n_list",
        "code": "sample key generation codes and report decoding success and leakage",
        "protocol": "run keygen, keydist, entgen, entdist or enttrans",
        "optimize": "maximize coherent information over channel inputs",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", type=Path, help="flat key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", type=Path, help="CSV output path (default: config 'out')")
        p.add_argument("--dry-run", action="store_true", help="validate and print code sizes M, S, L")
        p.add_argument("--timing", action="store_true", help="fill the wall_time_ms column")
    return parser


def load_config(args) -> ExperimentConfig:
    text = args.config.read_text() if args.config else ""
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out"] = str(args.out)
    if args.command != "protocol" and "scenario=" not in text.replace(" ", "") and "scenario" not in overrides:
        overrides["scenario"] = args.command
    config = parse_config(text, overrides)
    expected = PROTOCOL_SCENARIOS if args.command == "protocol" else (args.command,)
    if config.scenario not in expected:
        raise ConfigError(f"scenario {config.scenario!r} does not belong to subcommand {args.command!r}")
    return config


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.dry_run:
        print(serialize_config(config), end="")
        for entry in derived_sizes(config):
            if "error" in entry:
                print(f"n={entry['n']} error: {entry['error']}")
            else:
                print(f"n={entry['n']} M={entry['M']} S={entry['S']} L={entry['L']}")
        return 0
    try:
        rows, meta = run_experiment(config, timing=args.timing)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out = Path(config.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(rows_to_csv(rows))
    manifest = {"config": config_dict(config), "tool": "coherentkey", "version": _version(), "seed": config.seed,
                "rows": len(rows), **meta}
    out.with_name(out.stem + ".manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    for warning in meta["warnings"]:
        print(f"warning: {warning}", file=sys.stderr)
    if meta["warnings"]:
        print(f"{len(meta['warnings'])} warning(s)", file=sys.stderr)
    print(f"wrote {len(rows)} row(s) to {out}")
    return 2 if rows and all(r.error for r in rows) else 0


if __name__ == "__main__":
    sys.exit(main())
