"""Command line: ``lrgae run|gen|report``.

Exit codes: 0 success, 2 invalid input (config, dataset files, no report
files), 1 failure during a run.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config, parse_synthetic
from .errors import ConfigError, GraphValidationError, LrgaeError, ParseError
from .graph import write_graph
from .runner import build_table, collect, dumps, load_reports, render_csv, render_text, run_experiment, summary_lines

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2
_INVALID = (ConfigError, ParseError, GraphValidationError)


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_run(args) -> int:
    try:
        exp = load_config(args.config)
    except FileNotFoundError as exc:
        return _fail(EXIT_INVALID, f"config: {exc}")
    except ConfigError as exc:
        return _fail(EXIT_INVALID, str(exc))
    try:
        report = run_experiment(exp)
    except FileNotFoundError as exc:
        return _fail(EXIT_INVALID, f"dataset.path: {exc}")
    except _INVALID as exc:
        return _fail(EXIT_INVALID, str(exc))
    except LrgaeError as exc:
        return _fail(EXIT_RUNTIME, str(exc))
    out = args.output or exp.model.output
    text = dumps(report)
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    else:
        sys.stdout.write(text)
    for line in summary_lines(report):
        print(line, file=sys.stderr if not out else sys.stdout)
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        data = json.loads(Path(args.spec).read_text())
        spec = parse_synthetic(data)
    except FileNotFoundError as exc:
        return _fail(EXIT_INVALID, f"spec: {exc}")
    except json.JSONDecodeError as exc:
        return _fail(EXIT_INVALID, f"spec: invalid JSON at line {exc.lineno}: {exc.msg}")
    except ConfigError as exc:
        return _fail(EXIT_INVALID, str(exc))
    g = spec.build()
    try:
        path = write_graph(g, args.out_dir)
    except OSError as exc:
        return _fail(EXIT_RUNTIME, f"cannot write {args.out_dir}: {exc}")
    print(f"wrote {g.n} nodes, {g.num_edges} edges to {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    paths = collect(args.pattern)
    if not paths:
        return _fail(EXIT_INVALID, f"report: no files match {args.pattern!r}")
    try:
        reports = load_reports(paths)
    except ConfigError as exc:
        return _fail(EXIT_INVALID, str(exc))
    header, rows = build_table(reports)
    sys.stdout.write(render_text(header, rows))
    if args.csv:
        Path(args.csv).write_text(render_csv(header, rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrgae", description="Graph autoencoder pretraining experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every seed of an experiment config")
    run.add_argument("config", help="experiment config (JSON)")
    run.add_argument("-o", "--output", help="result file (overrides the config's 'output')")
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("gen", help="write a stochastic block model dataset")
    gen.add_argument("spec", help="synthetic spec (JSON)")
    gen.add_argument("out_dir", help="dataset directory to create")
    gen.set_defaults(func=cmd_gen)

    rep = sub.add_parser("report", help="tabulate result files as mean±std")
    rep.add_argument("pattern", help="glob of result files, e.g. 'results/*.json'")
    rep.add_argument("--csv", help="also write the table as CSV to this path")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
