"""Command line entry point: ``paramcont run|suite|testbed|report``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import harness, plotting, testbed
from .continuation import read_trace_csv
from .data import DATA_DIR_ENV

CONFIG_SUFFIXES = (".cfg", ".conf", ".ini", ".txt")


def _add_overrides(p):
    p.add_argument("--task", choices=harness.TASKS)
    p.add_argument("--method", choices=harness.METHODS)
    p.add_argument("--homotopy")
    p.add_argument("--gamma", type=float)
    p.add_argument("--ds", type=float)
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--data", choices=("mnist", "synthetic"))
    p.add_argument("--data-dir", dest="data_dir",
                   help=f"MNIST IDX directory (default: ${DATA_DIR_ENV} or bundled subset)")
    p.add_argument("--out-dir", dest="out_dir")


def _overrides(args):
    return {k: getattr(args, k) for k in harness.FILE_KEYS if getattr(args, k, None) is not None}


def _config(args):
    if args.config:
        return harness.load_config(args.config, _overrides(args))
    return harness.config_from_mapping(_overrides(args))


def cmd_run(args):
    cfg = _config(args)
    row, _ = harness.run_experiment(cfg)
    print(json.dumps(asdict(row)))
    if cfg.out_dir:
        with open(Path(cfg.out_dir) / "results.jsonl", "a") as f:
            f.write(json.dumps(asdict(row)) + "\n")
    return 0 if row.status == "ok" else 1


def _write_report(rows, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = harness.summarize(rows)
    table = harness.render_table(summary)
    report = harness.compare_report(summary)
    (out_dir / "table.md").write_text(table)
    (out_dir / "report.md").write_text(report + "\n" + table)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    plotting.plot_summary(summary, out_dir / "test_loss.png")
    curves = _collect_curves(out_dir)
    for task, task_curves in curves.items():
        plotting.plot_training_curves(task_curves, out_dir / f"curves_{task}.png")
    print(table)
    print(report)


def _collect_curves(out_dir):
    """Seed-0-most runs of each config from trace CSVs in ``out_dir``."""
    curves = {}
    for path in sorted(Path(out_dir).glob("*.csv")):
        sidecar = path.with_suffix(".json")
        if not sidecar.exists():
            continue
        meta = json.loads(sidecar.read_text())
        cfg = meta.get("config", {})
        task, method, homotopy = cfg.get("task"), cfg.get("method"), cfg.get("homotopy")
        if task is None:
            continue
        label = f"{method}/{homotopy}"
        if label in curves.get(task, {}):
            continue
        if meta.get("schedule") == "standard":
            lines = path.read_text().split()[1:]
            losses = [float(line.split(",")[1]) for line in lines]
            steps = list(range(len(losses)))
        else:
            rows = read_trace_csv(path)
            steps, total = [], 0
            for r in rows:
                total += r["corrector_steps"]
                steps.append(total)
            losses = [r["loss"] for r in rows]
        curves.setdefault(task, {})[label] = (steps, losses)
    return curves


def cmd_suite(args):
    config_dir = Path(args.config_dir)
    paths = sorted(p for p in config_dir.iterdir() if p.suffix in CONFIG_SUFFIXES)
    if not paths:
        print(f"no config files in {config_dir}", file=sys.stderr)
        return 2
    overrides = _overrides(args)
    configs = [harness.load_config(p, overrides) for p in paths]
    out_dir = Path(args.out_dir or "results")
    rows, _ = harness.run_suite(configs, args.repeats, out_dir, args.jobs)
    _write_report(rows, out_dir)
    failed = [r for r in rows if r.status != "ok"]
    for r in failed:
        print(f"FAILED {r.task}/{r.method}/{r.homotopy} seed={r.seed}: {r.status}", file=sys.stderr)
    return 1 if failed else 0


def cmd_report(args):
    rows = harness.read_results(args.results)
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.results).parent
    _write_report(rows, out_dir)
    return 0


def cmd_testbed(args):
    checks, traces = testbed.oracle_checks(args.ds)
    out_dir = Path(args.out_dir or "testbed")
    for name, trace in traces.items():
        trace.to_csv(out_dir / f"fold_{name}.csv", {"problem": "fold", "ds": args.ds})
    plotting.plot_fold(traces, out_dir / "fold.png", testbed.fold_problem().known_path)
    plotting.plot_trace(traces["parc-newton"], out_dir / "fold_parc_trace.png",
                        "fold problem, PARC + Newton")
    for name, passed, detail in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return 0 if all(p for _, p, _ in checks) else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="paramcont", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a single experiment")
    p.add_argument("--config", help="key = value config file")
    _add_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", help="run every config file in a directory")
    p.add_argument("config_dir")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)
    _add_overrides(p)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("testbed", help="fold-problem oracle checks")
    p.add_argument("--ds", type=float, default=0.05)
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_testbed)

    p = sub.add_parser("report", help="aggregate a results.jsonl into report.md and figures")
    p.add_argument("results")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
