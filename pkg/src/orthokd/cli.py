"""Command-line entry point.

Exit codes: 0 success, 1 configuration/format/data errors (including bad
usage), 2 numeric errors and failed ``check`` runs.  Data goes to stdout
or files under ``--out``; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import _backend
from .checks import run_checks
from .distill import DiversityBoundReport
from .errors import NumericError, OrthoKDError
from .io import atomic_write_text, parse_config, write_csv, write_features
from .nets import Mlp, predict_features
from .trainer import (
    SWEEP_HEADER,
    BenchRow,
    ablation_sweep,
    bench_projectors,
    bound_csv_rows,
    distill,
    load_data,
    metrics_csv,
    train_plain,
    train_teacher,
)

log = logging.getLogger("orthokd")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--out", type=Path, default=Path("runs"), help="output directory")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="orthokd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train-teacher", help="train the teacher and save it")
    _common(p)

    p = sub.add_parser("distill", help="distil a student from a teacher")
    _common(p)
    p.add_argument("--teacher", type=Path, help="saved teacher (.npz); trained in-process if omitted")
    p.add_argument("--plain", action="store_true", help="cross-entropy only, no teacher")

    p = sub.add_parser("sweep", help="projector x normaliser x seed ablation grid")
    _common(p)
    p.add_argument("--projectors", default="orthogonal,linear,mlp,ensemble,svd_target")
    p.add_argument("--normalizers", default="none,standardize,whiten")

    p = sub.add_parser("bench", help="time forward+backward of every projector")
    p.add_argument("--out", type=Path, help="also write bench.csv here")
    p.add_argument("--d-s", type=int, default=32)
    p.add_argument("--d-t", default="256,512", help="comma-separated teacher dims")
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("check", help="run the invariant suite")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("dump-features", help="write teacher features (with labels) as feature dumps")
    _common(p)
    p.add_argument("--teacher", type=Path, help="saved teacher (.npz); trained in-process if omitted")
    p.add_argument("--inputs", action="store_true", help="dump the raw dataset instead")
    return parser


def _config(args):
    return parse_config(args.config, args.overrides)


def _teacher(args, cfg, data):
    if args.teacher is not None:
        return Mlp.load(args.teacher)
    teacher, rows = train_teacher(cfg, data)
    log.info("teacher test accuracy %.4f", rows[-1].test_acc)
    return teacher


def cmd_train_teacher(args):
    cfg = _config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    teacher, rows = train_teacher(cfg)
    teacher.save(args.out / "teacher.npz")
    atomic_write_text(args.out / "teacher_metrics.csv", metrics_csv(rows))
    atomic_write_text(args.out / "config.txt", cfg.to_text())
    print(f"teacher test accuracy {rows[-1].test_acc:.4f}")
    return 0


def cmd_distill(args):
    cfg = _config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    data = load_data(cfg)
    if args.plain:
        student, rows = train_plain(cfg, data)
        bounds = []
    else:
        result = distill(cfg, _teacher(args, cfg, data), data)
        student, rows, bounds = result.student, result.metrics, result.bounds
    student.save(args.out / "student.npz")
    atomic_write_text(args.out / "metrics.csv", metrics_csv(rows))
    atomic_write_text(args.out / "config.txt", cfg.to_text())
    if bounds:
        write_csv(args.out / "diversity.csv", DiversityBoundReport.CSV_HEADER, bound_csv_rows(bounds))
    print(f"student test accuracy {rows[-1].test_acc:.4f}")
    return 0


def cmd_sweep(args):
    cfg = _config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    rows = ablation_sweep(
        cfg,
        projectors=tuple(args.projectors.split(",")),
        normalizers=tuple(args.normalizers.split(",")),
    )
    write_csv(args.out / "sweep.csv", SWEEP_HEADER, [r.csv() for r in rows])
    print(f"{len(rows)} rows written to {args.out / 'sweep.csv'}")
    return 0


def cmd_bench(args):
    rows = []
    for d_t in (int(t) for t in args.d_t.split(",")):
        rows.extend(bench_projectors(args.d_s, d_t, args.batch, args.iters, seed=args.seed))
    lines = [r.csv() for r in rows]
    print(BenchRow.HEADER)
    for line in lines:
        print(line)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        write_csv(args.out / "bench.csv", BenchRow.HEADER, lines)
    return 0


def cmd_check(args):
    results = run_checks(args.seed)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 2


def cmd_dump_features(args):
    cfg = _config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    train, test = load_data(cfg)
    teacher = None if args.inputs else _teacher(args, cfg, (train, test))
    for name, ds in (("train", train), ("test", test)):
        z = ds.x if teacher is None else predict_features(teacher, ds.x)[0]
        path = args.out / f"{name}_features.vkdf"
        write_features(path, z, ds.y)
        print(f"{path}: {z.shape[0]}x{z.shape[1]}")
    return 0


COMMANDS = {
    "train-teacher": cmd_train_teacher,
    "distill": cmd_distill,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
    "check": cmd_check,
    "dump-features": cmd_dump_features,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    log.debug("kernel backend: %s", _backend.NAME)
    try:
        return COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except (OrthoKDError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
