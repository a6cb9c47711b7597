"""``cqed-pairs`` command line.

Exit status: 0 success, 1 validation failure, 2 configuration error,
3 insufficient data.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, checks, lindblad, plots, sweep
from .analysis import EventClass
from .config import ConfigError, RunConfig, load_config
from .model import ParameterError
from .trajectory import StepSizeError

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3

log = logging.getLogger("cqed_pairs")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    log.info("wrote %s", path)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_validate(cfg: RunConfig) -> int:
    results = checks.run_checks()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} value={r.value:.3e} tol={r.tolerance:.0e} {r.detail}".rstrip())
    _write_csv(_out_dir(cfg) / "validate.csv", checks.CHECK_HEADER, [tuple(r) for r in results])
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def cmd_events(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    probs = sweep.run_events(cfg.params, cfg, out / "jumps.csv" if cfg.record_jumps else None)
    rows = [(c.value, *probs[c]) for c in EventClass]
    _write_csv(out / "events.csv", ("event_class", "probability", "stderr"), rows)
    for name, p, se in rows:
        print(f"{name:>10}  {p:.4f} +- {se:.4f}")
    if cfg.plots:
        plots.events_plot(out / "events.svg", {c.value: probs[c] for c in EventClass})
    return EXIT_OK


def _write_characterization(out: Path, cfg: RunConfig, counts, ch) -> None:
    row = ch.row()
    _write_csv(out / "characterize.csv", analysis.CHARACTERIZE_HEADER, [[row[k] for k in analysis.CHARACTERIZE_HEADER]])
    _write_csv(out / "rho.csv", ("index", "re", "im"), analysis.rho_rows(ch.rho))
    if counts is not None:
        _write_csv(out / "counts.csv", analysis.COUNT_HEADER, counts.rows())
    if cfg.plots:
        plots.rho_plot(out / "rho.svg", ch.rho)


def cmd_characterize(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    counts, ch = sweep.characterize(cfg.params, cfg)
    _write_characterization(out, cfg, counts, ch)
    print(f"F = {ch.fidelity:.4f} +- {ch.fidelity_err:.4f}")
    print(f"S_fixed = {ch.s_fixed:.4f} +- {ch.s_err:.4f}   S_max = {ch.s_max:.4f}")
    print(f"coincidences (smallest setting) = {ch.n_coinc}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    if not cfg.sweep:
        raise ConfigError("sweep needs sweep_x and sweep_x_values", key="sweep_x")
    out = _out_dir(cfg)
    rows = sweep.run_sweep(cfg)
    header = sweep.sweep_header(cfg)
    _write_csv(out / "sweep.csv", header, [[r[k] for k in header] for r in rows])
    failed = [r for r in rows if r["error"]]
    for r in failed:
        log.warning("point %s failed: %s", {a.name: r[a.name] for a in cfg.sweep}, r["error"])
    if cfg.plots and len(failed) < len(rows):
        plots.sweep_plot(out / "sweep.svg", [a.name for a in cfg.sweep], rows)
    print(f"{len(rows)} points, {len(failed)} failed")
    return EXIT_OK if len(failed) < len(rows) else EXIT_DATA


def cmd_oracle(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    times = cfg.oracle_times or tuple(np.linspace(0.0, cfg.params.t_total, 21))
    snaps = lindblad.evolve_density(cfg.params, times)
    rows = lindblad.snapshot_rows(snaps)
    _write_csv(out / "oracle.csv", lindblad.SNAPSHOT_HEADER, rows)
    if cfg.plots:
        plots.oracle_plot(out / "oracle.svg", lindblad.SNAPSHOT_HEADER, rows)
    return EXIT_OK


HELP = {
    "validate": "run the analytic invariant checks",
    "events": "event-class probabilities of one ensemble",
    "characterize": "tomographic fidelity and CHSH values at one point",
    "sweep": "characterize over a 1-D or 2-D parameter grid",
    "oracle": "density-matrix snapshots of the manifold populations",
}

COMMANDS = {
    "validate": cmd_validate,
    "events": cmd_events,
    "characterize": cmd_characterize,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--trajectories", type=int, help="trajectories per ensemble (overrides n_traj)")
    common.add_argument("--threads", type=int, help="worker count, 0 for all CPUs")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="cqed-pairs", description="Photon-pair generation by cavity-assisted STIRAP.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.trajectories is not None and args.trajectories < 1:
            raise ConfigError("must be at least 1", "--trajectories")
        if args.threads is not None and args.threads < 0:
            raise ConfigError("must be non-negative", "--threads")
        cfg = cfg.with_overrides(
            seed=args.seed,
            n_traj=args.trajectories,
            threads=args.threads,
            out=None if args.out is None else str(args.out),
        )
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepSizeError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except analysis.InsufficientDataError as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
