"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data or contract error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import driftsim, runner
from .embedstore import save_embeddings
from .manifest import DatasetShape, read_manifest, validate_dataset, write_manifest

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _read_json(path: Path) -> dict:
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_simulate(args) -> int:
    data = _read_json(Path(args.config)) if args.config else {}
    config = driftsim.DriftConfig.from_dict(data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = driftsim.generate(config)
    write_manifest(out / "manifest.csv", ds.records)
    emb_files = {}
    for name, matrix in ds.embeddings.items():
        fname = f"embeddings_{name}.pbeb"
        save_embeddings(out / fname, matrix)
        emb_files[name] = fname
    (out / "simulation.txt").write_text(driftsim.describe(config), encoding="utf-8")
    (out / "drift_config.json").write_text(
        json.dumps(config.to_dict(), indent=1) + "\n", encoding="utf-8"
    )
    for preset in sorted(runner.PRESET_POLICIES):
        cfg = runner.preset_config(preset, "manifest.csv", emb_files, "reports", seed=config.seed)
        (out / f"{preset}.json").write_text(json.dumps(cfg, indent=1) + "\n", encoding="utf-8")
    print(out / "manifest.csv")
    for fname in emb_files.values():
        print(out / fname)
    return EXIT_OK


def cmd_run(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    config = runner.load_config(path)
    variants = [args.variant] if args.variant else list(config.embeddings)
    records, schedule = read_manifest(config.manifest_path)
    for variant in variants:
        report = runner.run_experiment(config, variant, records=records, schedule=schedule)
        paths = runner.write_report(report, config.output_dir, timings=args.timings)
        for p in paths.values():
            print(p)
    return EXIT_OK


def cmd_compare(args) -> int:
    reports = [runner.load_report(p) for p in args.reports]
    cmp = runner.compare_runs(reports)
    text = runner.emit_comparison(cmp)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
        print(args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    records, schedule = read_manifest(args.manifest)
    shape = DatasetShape(
        num_entities=args.entities,
        perspectives_per_entity=args.perspectives,
        expected_total=args.expected_total,
    )
    report = validate_dataset(records, shape)
    sys.stdout.write(f"schedule: {' '.join(schedule.labels)}\n")
    sys.stdout.write(report.format())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reidgallery", description="Gallery-update re-identification experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic drifting dataset")
    p.add_argument("--config", help="drift config JSON (defaults when omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--variant", help="only this embedding variant")
    p.add_argument("--timings", action="store_true", help="also write per-step wall-clock files")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="compare report summary means")
    p.add_argument("reports", nargs="+", help="report CSV or JSON files")
    p.add_argument("--out", help="comparison CSV path (stdout when omitted)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="report manifest completeness")
    p.add_argument("--manifest", required=True)
    p.add_argument("--entities", type=int, default=60)
    p.add_argument("--perspectives", type=int, default=3)
    p.add_argument("--expected-total", type=int, default=2696)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"reidgallery: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"reidgallery: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
