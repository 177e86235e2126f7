"""Command-line entry points: verify-tgv, train, snapshots, diag, dmd, synth."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import cases
from .config import PRESETS, RunConfig, config_to_json, parse_config, preset, with_overrides
from .diagnostics import (Grid, evaluate_snapshot, field_errors, force_coefficients,
                          surface_pressure, surface_pressure_csv, write_snapshot)
from .errors import CheckpointFormatError, ContractViolation, TrainingDivergence
from .koopman import DEFAULT_MASK, SnapshotSeries, build_state_matrix, dmd, export_mode, write_mode_table
from .network import Checkpoint, atomic_write_text, load_checkpoint, save_checkpoint
from .synthetic import LimitCycle, uniform_times
from .training import LossHistory, train

log = logging.getLogger("nspinn")

EXIT_USAGE = 2
EXIT_DIVERGED = 3


# -- shared plumbing --------------------------------------------------------


class _Run:
    """Resolved config plus where it came from and where outputs go."""

    def __init__(self, cfg: RunConfig, source_text: str | None, base: Path, out: Path):
        self.cfg = cfg
        self.source_text = source_text
        self.base = base
        self.out = out

    def echo(self):
        self.out.mkdir(parents=True, exist_ok=True)
        resolved = config_to_json(self.cfg)
        atomic_write_text(self.out / "config.json", self.source_text or resolved)
        atomic_write_text(self.out / "resolved_config.json", resolved)


def _resolve(args, default_preset: str | None) -> _Run:
    text, base = None, Path.cwd()
    if args.config:
        path = Path(args.config)
        text = path.read_text()
        cfg = parse_config(text)
        base = path.resolve().parent
    elif args.preset or default_preset:
        cfg = preset(args.preset or default_preset)
    else:
        raise ContractViolation("give --config <file> or --preset <name>")
    cfg = with_overrides(cfg, seed=args.seed, precision=args.precision, sampling_scale=args.scale)
    return _Run(cfg, text, base, Path(args.out))


def _times(args) -> list[float]:
    if args.times:
        return [float(x) for x in args.times.split(",")]
    if args.count is not None and args.dt is not None:
        return uniform_times(args.t0, args.dt, args.count)
    raise ContractViolation("give --times a,b,c or --t0/--dt/--count")


def _load_net(args):
    """Checkpointed network, at its stored precision unless --precision is given."""
    return load_checkpoint(args.checkpoint, args.precision).net


def _snapshot_series(run: _Run) -> SnapshotSeries:
    directory = Path(run.cfg.data.snapshot_dir)
    if not directory.is_absolute():
        directory = run.base / directory
    return SnapshotSeries.read_dir(directory)


def _run_training(run: _Run, resume: str | None, record_elapsed: bool):
    """Train per the config into ``run.out``; returns the final network."""
    cfg = run.cfg
    series = _snapshot_series(run) if cfg.variant == "data-driven" else None
    pool = cases.build_point_pool(cfg, series)
    problem = cases.build_problem(cfg)
    history_path = run.out / "history.csv"
    start, history = 0, LossHistory()
    if resume:
        ckpt = load_checkpoint(resume, cfg.precision)
        net, start = ckpt.net, ckpt.iteration
        if history_path.exists():
            old = LossHistory.read(history_path)
            for row in old.rows:
                if row.iteration < start:
                    history.append(row)
    else:
        net = cases.init_network(cfg)
    remaining = max(0, cfg.iterations - start)
    tcfg = cases.train_config(cfg, pool, remaining, record_elapsed)
    if remaining == 0 and not resume:
        save_checkpoint(Checkpoint(net, cfg.variant, 0, None), run.out / "ckpt_0.json")
    try:
        net, history = train(tcfg, problem, pool, net, run.out, start, history)
    except TrainingDivergence:
        history.write(history_path)
        raise
    history.write(history_path)
    return net, history


# -- commands ---------------------------------------------------------------


def cmd_verify_tgv(args) -> int:
    run = _resolve(args, "tgv-desk")
    if run.cfg.case != "tgv":
        raise ContractViolation("verify-tgv needs a tgv case config")
    run.echo()
    reference = cases.tgv_reference(run.cfg)
    history = None
    if args.analytic:
        model = reference
    elif args.checkpoint:
        model = _load_net(args)
    else:
        model, history = _run_training(run, None, args.record_elapsed)
    grid = cases.evaluation_grid(run.cfg)
    errors = field_errors(model, reference, grid, run.cfg.evaluation.times)
    lines = ["field,l2_error", *(f"{k},{v!r}" for k, v in errors.items())]
    if history is not None and history.rows:
        lines.append(f"final_total_loss,{history.rows[-1].total!r}")
    report = "\n".join(lines) + "\n"
    atomic_write_text(run.out / "tgv_report.csv", report)
    sys.stdout.write(report)
    return 0


def cmd_train(args) -> int:
    run = _resolve(args, None)
    run.echo()
    _, history = _run_training(run, args.resume, args.record_elapsed)
    if history.rows:
        last = history.rows[-1]
        print(f"iteration {last.iteration}: total loss {last.total:.6e}")
    return 0


def cmd_snapshots(args) -> int:
    run = _resolve(args, None)
    run.echo()
    net = _load_net(args)
    domain = cases.build_domain(run.cfg)
    grid = Grid.over(domain, args.nx or run.cfg.evaluation.nx, args.ny or run.cfg.evaluation.ny)
    for k, t in enumerate(_times(args)):
        snap = evaluate_snapshot(net, grid, t, derived=args.derived)
        write_snapshot(snap, run.out / f"snapshot_{k:04d}.csv")
    return 0


def cmd_diag(args) -> int:
    run = _resolve(args, None)
    run.echo()
    net = _load_net(args)
    domain = cases.build_domain(run.cfg)
    props = cases.fluid_props(run.cfg)
    rows = ["t,cd,cdp,cdf,cl"]
    for k, t in enumerate(_times(args)):
        fc = force_coefficients(net, domain, t, props, args.n_surface)
        rows.append(",".join(repr(float(x)) for x in (fc.t, fc.cd, fc.cdp, fc.cdf, fc.cl)))
        table = surface_pressure(net, domain, t, args.n_pressure)
        atomic_write_text(run.out / f"surface_pressure_{k:04d}.csv", surface_pressure_csv(table, t))
    atomic_write_text(run.out / "forces.csv", "\n".join(rows) + "\n")
    return 0


def cmd_dmd(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    series = SnapshotSeries.read_dir(args.snapshots, args.dt)
    mask = tuple(args.mask.split(","))
    X, Y = build_state_matrix(series, mask)
    modes = dmd(X, Y, series.dt, args.cutoff, diameter=args.diameter, speed=args.speed)
    write_mode_table(modes, args.radius_tol, out / "modes.csv")
    for i, mode in enumerate(modes[: args.export]):
        export_mode(mode, series.grid, out / f"mode_{i:03d}", mask)
    print(f"{len(modes)} modes from {len(series)} snapshots (dt={series.dt!r})")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    xmin, xmax, ymin, ymax = (float(v) for v in args.bounds.split(","))
    grid = Grid(args.nx, args.ny, xmin, xmax, ymin, ymax)
    gen = LimitCycle(strouhal=args.st, harmonics=args.harmonics, amplitude=args.amplitude,
                     decay=args.decay)
    seed_rng = np.random.default_rng(args.seed or 0)
    times = uniform_times(args.t0, args.dt, args.count)
    for k, t in enumerate(times):
        snap = gen.snapshot(grid, t)
        if args.noise > 0:
            for name in ("u", "v", "p"):
                arr = snap.field(name)
                setattr(snap, name, arr + args.noise * seed_rng.standard_normal(arr.shape))
        write_snapshot(snap, out / f"snapshot_{k:04d}.csv")
    return 0


# -- argument parsing -------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON run configuration")
    p.add_argument("--preset", default=d, choices=sorted(PRESETS), help="bundled configuration")
    p.add_argument("--seed", type=int, default=d)
    p.add_argument("--scale", type=float, default=d, help="pool-size scale factor")
    p.add_argument("--precision", type=int, choices=(32, 64), default=d)
    p.add_argument("--out", default=argparse.SUPPRESS if suppress else "out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def _time_flags(p):
    p.add_argument("--times", help="comma-separated times")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--dt", type=float)
    p.add_argument("--count", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nspinn", description=__doc__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        _global_flags(p, suppress=True)
        p.set_defaults(func=fn)
        return p

    p = add("verify-tgv", cmd_verify_tgv, "train or load a TGV model and report space-time errors")
    p.add_argument("--checkpoint")
    p.add_argument("--analytic", action="store_true", help="evaluate the exact solution itself")
    p.add_argument("--record-elapsed", action="store_true")

    p = add("train", cmd_train, "train a model; writes history.csv and ckpt_<iter>.json")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--record-elapsed", action="store_true",
                   help="log wall-clock seconds (history is then not byte-reproducible)")

    p = add("snapshots", cmd_snapshots, "evaluate a checkpoint on a grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--derived", action="store_true", help="also write vorticity and Q")
    _time_flags(p)

    p = add("diag", cmd_diag, "force coefficients and surface pressure")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n-surface", type=int, default=256)
    p.add_argument("--n-pressure", type=int, default=360)
    _time_flags(p)

    p = add("dmd", cmd_dmd, "dynamic mode decomposition of a snapshot directory")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--dt", type=float, help="snapshot spacing (default: inferred)")
    p.add_argument("--mask", default=",".join(DEFAULT_MASK))
    p.add_argument("--cutoff", type=float, default=1.0, help="retained energy fraction")
    p.add_argument("--radius-tol", type=float, default=1e-3)
    p.add_argument("--export", type=int, default=0, help="write fields of the N strongest modes")
    p.add_argument("--diameter", type=float, default=1.0)
    p.add_argument("--speed", type=float, default=1.0)

    p = add("synth", cmd_synth, "synthetic limit-cycle snapshots")
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--ny", type=int, default=32)
    p.add_argument("--bounds", default="-2,18,-4,4", help="xmin,xmax,ymin,ymax")
    p.add_argument("--t0", type=float, default=125.0)
    p.add_argument("--dt", type=float, default=0.2)
    p.add_argument("--count", type=int, default=76)
    p.add_argument("--st", type=float, default=0.2)
    p.add_argument("--harmonics", type=int, default=3)
    p.add_argument("--amplitude", type=float, default=0.3)
    p.add_argument("--decay", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TrainingDivergence as exc:
        where = f"; last good parameters in {exc.checkpoint}" if exc.checkpoint else ""
        print(f"error: training diverged at {exc}{where}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ContractViolation, CheckpointFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
