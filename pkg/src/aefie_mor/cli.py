"""Command-line entry point.

Usage::

    aefie-mor {fom-sweep,rom,compare,export-matrices} [CONFIG] [--output-dir DIR]

The config file is INI-style (sections of ``key = value`` lines); every key
is optional. See ``configs/default.ini`` for the full list with defaults.

Exit status is 0 on success, 1 on a numerical failure and 2 on a usage or
configuration error. Set ``AEFIE_MOR_THREADS`` to bound the number of
frequency-sweep worker threads.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .analysis import (
    Comparison,
    FrequencyGrid,
    OpenCircuitError,
    fom_sweep,
    run_comparison,
    write_outputs,
)
from .fom import DEFAULT_TIME_UNIT, FomSolveError, assemble_fom, export_matrix_market
from .geometry import discretize_dipole
from .mor import Strategy
from .numerics import SingularMatrixError

log = logging.getLogger("aefie_mor")


class ConfigError(ValueError):
    pass


@dataclass
class GeometryConfig:
    length_m: float = 1.0
    radius_m: float = 1e-4
    resistivity_ohm_m: float = 1.68e-8
    n_segments: int = 499


@dataclass
class SweepConfig:
    f_min_hz: float = 0.1
    f_max_hz: float = 1e9
    n_points: int = 300
    spacing: str = "log"


@dataclass
class MorConfig:
    tolerance: float = 1e-3
    max_snapshots: int = 100
    strategies: tuple = (Strategy.MONOLITHIC, Strategy.BLOCK)


@dataclass
class SystemConfig:
    time_unit_s: float = DEFAULT_TIME_UNIT


@dataclass
class OutputConfig:
    directory: str = "out"
    export_matrices: bool = False
    # every stage is deterministic; kept so configs can state it explicitly
    deterministic: bool = True


@dataclass
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    mor: MorConfig = field(default_factory=MorConfig)
    system: SystemConfig = field(default_factory=SystemConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def grid(self) -> FrequencyGrid:
        s = self.sweep
        if s.spacing == "log":
            return FrequencyGrid.logspace(s.f_min_hz, s.f_max_hz, s.n_points)
        return FrequencyGrid.linspace(s.f_min_hz, s.f_max_hz, s.n_points)


def _convert(section, key, raw, default):
    try:
        if isinstance(default, bool):
            v = raw.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(Strategy(s.strip()) for s in raw.split(",") if s.strip())
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from None


def _validate(cfg: ExperimentConfig) -> None:
    g, s, m = cfg.geometry, cfg.sweep, cfg.mor
    for name in ("length_m", "radius_m", "resistivity_ohm_m"):
        if not getattr(g, name) > 0:
            raise ConfigError(f"geometry: {name} must be positive")
    if g.n_segments < 3:
        raise ConfigError("geometry: n_segments must be at least 3")
    if not (s.f_min_hz > 0 and s.f_max_hz > 0):
        raise ConfigError("sweep: frequencies must be positive")
    if not s.f_min_hz < s.f_max_hz:
        raise ConfigError("sweep: f_min_hz must be below f_max_hz")
    if s.n_points < 2:
        raise ConfigError("sweep: n_points must be at least 2")
    if s.spacing not in ("log", "linear"):
        raise ConfigError("sweep: spacing must be 'log' or 'linear'")
    if not 0 < m.tolerance < 1:
        raise ConfigError("mor: tolerance must lie in (0, 1)")
    if m.max_snapshots < 1:
        raise ConfigError("mor: max_snapshots must be at least 1")
    if not m.strategies:
        raise ConfigError("mor: strategies must name at least one strategy")
    if not cfg.system.time_unit_s > 0:
        raise ConfigError("system: time_unit_s must be positive")


def parse_config(path) -> ExperimentConfig:
    """Read an experiment config; missing keys keep their defaults."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(path.read_text(), source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: key outside any [section]") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{path}: line {lineno}: cannot parse {line.strip()!r}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    cfg = ExperimentConfig()
    known = {f.name: f for f in fields(ExperimentConfig)}
    for section in cp.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}]")
        target = getattr(cfg, section)
        defaults = {f.name: getattr(target, f.name) for f in fields(target)}
        for key, raw in cp.items(section):
            if key not in defaults:
                raise ConfigError(f"{section}: unknown key {key!r}")
            setattr(target, key, _convert(section, key, raw, defaults[key]))
    _validate(cfg)
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aefie-mor", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p):
        p.add_argument("config", nargs="?", help="experiment config file (defaults if omitted)")
        p.add_argument("--output-dir", help="override output.directory")
        p.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
        return p

    common(sub.add_parser("fom-sweep", help="full-order impedance sweep"))
    p = common(sub.add_parser("rom", help="greedy ROM(s) for the configured strategies"))
    p.add_argument("--strategy", action="append", choices=[s.value for s in Strategy],
                   help="restrict to this strategy (repeatable)")
    common(sub.add_parser("compare", help="FOM vs monolithic and block ROMs"))
    p = common(sub.add_parser("export-matrices", help="write R, L, P, S as Matrix Market"))
    p.add_argument("--frequency-hz", type=float, action="append", default=[],
                   help="also write A(omega) and b at this frequency (repeatable)")
    return ap


def _load(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    if args.output_dir:
        cfg.output.directory = args.output_dir
    return cfg


def _run(args) -> int:
    cfg = _load(args)
    g = cfg.geometry
    model = discretize_dipole(g.length_m, g.radius_m, g.resistivity_ohm_m, g.n_segments)
    fm = assemble_fom(model, time_unit=cfg.system.time_unit_s)
    out = Path(cfg.output.directory)

    if args.command == "export-matrices" or cfg.output.export_matrices:
        freqs = getattr(args, "frequency_hz", [])
        for p in export_matrix_market(fm, out, freqs, model.feed_segment):
            log.info("wrote %s", p)
        if args.command == "export-matrices":
            return 0

    grid = cfg.grid()
    if args.command == "fom-sweep":
        res = fom_sweep(fm, grid, model.feed_segment)
        for p in write_outputs(out, res, {}, {}):
            log.info("wrote %s", p)
        return 0

    if args.command == "compare":
        strategies = (Strategy.MONOLITHIC, Strategy.BLOCK)
    else:
        strategies = tuple(Strategy(s) for s in args.strategy) if args.strategy else cfg.mor.strategies
    comp: Comparison = run_comparison(
        model, grid, cfg.mor.tolerance, cfg.mor.max_snapshots, strategies,
        fom_matrices=fm)
    for p in comp.write_csvs(out):
        log.info("wrote %s", p)
    for s in strategies:
        if not comp.traces[s].converged:
            log.warning("%s ROM did not converge to %.1e; outputs are partial",
                        s.value, cfg.mor.tolerance)
        line = comp.summary(s)
        if args.command == "compare":
            print(line)
        else:
            log.info(line)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"aefie-mor: config error: {exc}", file=sys.stderr)
        return 2
    except (FomSolveError, SingularMatrixError, OpenCircuitError, np.linalg.LinAlgError) as exc:
        print(f"aefie-mor: numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
