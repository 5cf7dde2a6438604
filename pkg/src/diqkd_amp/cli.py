"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import __version__
from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .sweep import (COLUMNS, critical_rows, evaluate_point, header_line, max_loss_rows,
                    observables_rows, q_max_rows, run_sweep, session_time, to_csv, write_outputs)
from .verify import SCOPES, run_checks

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2
CONFIG_COMMANDS = ("rate", "observables", "sweep", "optimize", "critical-line", "max-loss", "qmax")


HELP = {
    "rate": "key rate at the first grid point with fixed parameters",
    "observables": "P_SH, omega and Q without key optimization",
    "sweep": "rate grid with plot data and figures",
    "optimize": "optimized key rate at the first grid point",
    "critical-line": "smallest block size with positive rate per efficiency",
    "max-loss": "largest tolerable channel loss",
    "qmax": "largest relay double-pair ratio keeping a positive rate",
    "verify": "closed forms against the Fock-space oracle",
    "session-time": "session duration for a signal count and clock rate",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diqkd-amp",
                                description="Finite-key DIQKD rates with qubit amplifiers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in CONFIG_COMMANDS:
        s = sub.add_parser(name, help=HELP[name])
        s.add_argument("--config", help="TOML scenario file (defaults apply when omitted)")
        s.add_argument("--out", help="output directory; print to stdout when omitted")
        s.add_argument("--seed", type=int, help="overrides run.seed")
        s.add_argument("--workers", type=int, help="overrides run.workers")
        s.add_argument("--preset", choices=("S1", "S2"), help="replace the security sets")
    v = sub.add_parser("verify", help=HELP["verify"])
    v.add_argument("--scope", choices=SCOPES + ("all",), default="all")
    t = sub.add_parser("session-time", help=HELP["session-time"])
    t.add_argument("--signals", type=float, required=True, help="expected transmitted signals")
    t.add_argument("--rate", type=float, default=1e10, help="clock rate in Hz")
    return p


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config, args.preset) if args.config else parse_config({}, args.preset)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers: must be at least 1")
        cfg = replace(cfg, workers=args.workers)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _emit(cfg, args, rows, kind, columns, x=None, y=None):
    if args.out:
        for path in write_outputs(cfg, rows, args.out, kind, columns, x, y):
            print(path)
    else:
        sys.stdout.write(to_csv(rows, columns, header_line(cfg, kind)))


def _single(cfg: ScenarioConfig, optimize: bool):
    spec = cfg.spec if optimize else replace(cfg.spec, free=())
    c = replace(cfg, spec=spec)
    return [evaluate_point((c, cfg.security[0], cfg.eta_grid[0], cfg.n_sh_grid[0],
                            cfg.loss_grid[0]))]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        results = run_checks(args.scope)
        for r in results:
            print(r.line())
        return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK
    if args.command == "session-time":
        try:
            secs = session_time(args.signals, args.rate)
        except ValueError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        print(json.dumps({"seconds": secs, "hours": secs / 3600, "days": secs / 86400}))
        return EXIT_OK
    try:
        cfg = _load(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    cmd = args.command
    if cmd in ("rate", "optimize"):
        _emit(cfg, args, _single(cfg, cmd == "optimize"), cmd, COLUMNS)
    elif cmd == "sweep":
        _emit(cfg, args, run_sweep(cfg), cmd, COLUMNS, "loss_db", "k")
    elif cmd == "observables":
        cols = ("architecture", "eta_cd", "n_sh", "loss_db", "p_sh", "omega_sh", "q_sh", "s_sh",
                "n_expected")
        _emit(cfg, args, observables_rows(cfg), cmd, cols)
    elif cmd == "critical-line":
        _emit(cfg, args, critical_rows(cfg), cmd, ("security", "eta_cd", "n_star", "unbounded", "k"))
    elif cmd == "max-loss":
        _emit(cfg, args, max_loss_rows(cfg), cmd, ("security", "eta_cd", "n_sh", "max_loss_db"))
    elif cmd == "qmax":
        _emit(cfg, args, q_max_rows(cfg), cmd, ("security", "eta_cd", "n_sh", "loss_db", "q_max"))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
