"""Experiment runner comparing standard, NPC and PARC training.

A run trains one network on MNIST 6x6 (or the synthetic stand-in) under a
fixed total budget of full-batch solver steps, evaluates the final
parameters at lam = 1 and records a :class:`ResultRow`.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .continuation import (
    ContinuationTrace,
    ParcConfig,
    npc_run,
    parc_run,
)
from .data import Dataset, load_mnist, synthetic_dataset
from .errors import ContinuationStalled, MaxStepsExceeded, ParamContError
from .homotopy import HomotopyKind, HomotopySpec
from .models import accuracy, autoencoder, classifier, init_params, loss_and_grads, make_objective
from .param_space import Normalization
from .solvers import ConvergenceCriteria, SolverConfig, run_to_convergence

log = logging.getLogger(__name__)

FILE_KEYS = ("task", "method", "homotopy", "gamma", "ds", "n_steps", "budget",
             "seed", "data", "data_dir", "out_dir")
TASKS = ("autoencoder", "classifier")
METHODS = ("standard", "npc", "parc")
DEFAULT_ACTIVATION = {"autoencoder": "sigmoid", "classifier": "relu"}
METHOD_LABEL = {"standard": "Standard (ADAM)", "npc": "NPC", "parc": "PARC"}


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "autoencoder"
    method: str = "standard"
    homotopy: str = "relu"
    gamma: float = 10.0
    ds: float = 0.05
    n_steps: int = 10
    budget: int = 2000
    seed: int = 0
    data: str = "mnist"
    data_dir: str | None = None
    out_dir: str | None = None
    # not settable from config files
    alpha: float = 1e-3
    continuation_fraction: float = 0.5
    corrector_steps: int = 25
    grad_norm_tol: float = 1e-4
    normalization_mode: str = "paper_literal"
    bootstrap_dlambda: float = 0.02
    penalty: str = "squared"
    reset_moments: bool = True
    max_parc_steps: int = 400
    n_train: int | None = 4000
    n_test: int | None = 1000
    brightness_baseline: float = 0.0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        spec = self.homotopy_spec()
        if self.method == "standard" and spec.kind is not HomotopyKind.NONE:
            raise ValueError("standard training takes a plain activation, not a homotopy")

    def homotopy_spec(self) -> HomotopySpec:
        name = self.homotopy.lower()
        if name in ("relu", "sigmoid"):
            return HomotopySpec(HomotopyKind.NONE, name)
        kind, _, act = name.partition(":")
        act = act or DEFAULT_ACTIVATION[self.task]
        return HomotopySpec(HomotopyKind(kind), act, self.brightness_baseline)

    def label(self) -> str:
        return f"{self.task}/{self.method}/{self.homotopy}"

    def to_dict(self) -> dict:
        return asdict(self)


def parse_config_text(text) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in FILE_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def config_from_mapping(values: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    kwargs = {}
    for key, raw in values.items():
        if raw is None:
            continue
        t = types[key]
        if isinstance(raw, str):
            if "int" in t:
                raw = int(raw)
            elif "float" in t:
                raw = float(raw)
            elif "bool" in t:
                raw = raw.lower() in ("1", "true", "yes")
            elif raw.lower() == "none":
                raw = None
        kwargs[key] = raw
    return replace(base or ExperimentConfig(), **kwargs)


def load_config(path, overrides=None) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text())
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_mapping(values)


@dataclass
class ResultRow:
    task: str
    method: str
    homotopy: str
    train_loss: float
    test_loss: float
    test_accuracy: float | None
    wall_seconds: float
    seed: int
    steps_used: int = 0
    final_lambda: float = 1.0
    status: str = "ok"

    def comparable(self) -> dict:
        """Row without the wall-clock field, for determinism checks."""
        d = asdict(self)
        d.pop("wall_seconds")
        return d


@dataclass
class TrainingCurve:
    losses: list = field(default_factory=list)

    @property
    def total_steps(self) -> int:
        return max(len(self.losses) - 1, 0)

    def to_csv(self, path, config=None, seed=None):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["step,loss"] + [f"{i},{v!r}" for i, v in enumerate(self.losses)]
        path.write_text("\n".join(lines) + "\n")
        path.with_suffix(".json").write_text(
            json.dumps({"schedule": "standard", "seed": seed, "config": config or {}},
                       indent=2, default=str))
        return path


def load_data(config: ExperimentConfig):
    if config.data == "mnist":
        train = load_mnist(config.data_dir, "train", config.n_train, seed=0)
        test = load_mnist(config.data_dir, "test", config.n_test, seed=0)
    elif config.data == "synthetic":
        train = synthetic_dataset(config.n_train or 4000, seed=1000, split="train")
        test = synthetic_dataset(config.n_test or 1000, seed=2000, split="test")
    else:
        raise ValueError(f"unknown data source {config.data!r}")
    return train, test


def build_model(config: ExperimentConfig):
    spec = config.homotopy_spec()
    if config.task == "autoencoder":
        return autoencoder(spec)
    return classifier(spec)


def _targets(config, ds: Dataset):
    return ds.inputs if config.task == "autoencoder" else ds.labels


def _budget_split(config):
    cont = int(config.continuation_fraction * config.budget)
    return cont, config.budget - cont


def train(config: ExperimentConfig, train_set: Dataset):
    """Train under ``config``; returns ``(theta, trace_or_curve, steps_used)``."""
    model = build_model(config)
    objective = make_objective(model, train_set.inputs, _targets(config, train_set))
    theta0 = init_params(model, "xavier_uniform", config.seed)
    solver = SolverConfig("adam", config.alpha, reset_moments=config.reset_moments)
    tol = config.grad_norm_tol

    if config.method == "standard":
        theta, diag = run_to_convergence(lambda t: objective(t, 1.0)[:2], theta0,
                                         ConvergenceCriteria(config.budget, None), solver,
                                         record_losses=True)
        return theta, TrainingCurve(diag.losses), diag.steps

    cont_budget, _ = _budget_split(config)
    if config.method == "npc":
        per_stage = cont_budget // config.n_steps
        trace = npc_run(objective, theta0, config.n_steps, solver,
                        ConvergenceCriteria(per_stage, tol),
                        final_criteria=ConvergenceCriteria(None, tol),
                        budget=config.budget)
        return trace.final.point.theta, trace, trace.total_steps

    parc_cfg = ParcConfig(ds=config.ds, gamma=config.gamma,
                          normalization_mode=Normalization(config.normalization_mode),
                          bootstrap_dlambda=config.bootstrap_dlambda,
                          max_steps=config.max_parc_steps, penalty=config.penalty)
    trace = parc_run(objective, theta0, parc_cfg, solver,
                     ConvergenceCriteria(config.corrector_steps, tol),
                     final_criteria=ConvergenceCriteria(None, tol),
                     budget=config.budget, continuation_budget=cont_budget)
    return trace.final.point.theta, trace, trace.total_steps


def evaluate(config, model, theta, train_set, test_set):
    """Train/test loss and test accuracy at lam = 1.

    Autoencoder losses are reported per pixel: the training objective sums
    squared errors over the 36 outputs of a sample, and the row divides that
    by 36.
    """
    scale = model.layer_dims[-1][1] if config.task == "autoencoder" else 1
    train_loss = loss_and_grads(model, theta, train_set.inputs, _targets(config, train_set), 1.0)[0]
    test_loss = loss_and_grads(model, theta, test_set.inputs, _targets(config, test_set), 1.0)[0]
    train_loss, test_loss = train_loss / scale, test_loss / scale
    acc = None
    if config.task == "classifier":
        acc = accuracy(model, theta, test_set.inputs, test_set.labels, 1.0)
    return train_loss, test_loss, acc


def run_experiment(config: ExperimentConfig, data=None):
    """Train and evaluate one configuration.

    Returns ``(ResultRow, trace_or_curve)``. A stalled continuation is
    recorded in ``status`` with NaN losses instead of raising. With
    ``out_dir`` set, the trace CSV and a result JSON are written there.
    """
    t0 = time.perf_counter()
    train_set, test_set = data if data is not None else load_data(config)
    model = build_model(config)
    status = "ok"
    try:
        theta, history, steps = train(config, train_set)
        train_loss, test_loss, acc = evaluate(config, model, theta, train_set, test_set)
        final_lambda = history.final.point.lam if isinstance(history, ContinuationTrace) else 1.0
    except (ContinuationStalled, MaxStepsExceeded, ParamContError) as exc:
        log.warning("%s seed=%d failed: %s", config.label(), config.seed, exc)
        history = getattr(exc, "trace", None)
        status = f"failed: {type(exc).__name__}: {exc}"
        train_loss = test_loss = float("nan")
        acc = None if config.task == "autoencoder" else float("nan")
        steps = history.total_steps if history is not None else 0
        final_lambda = history.final.point.lam if history is not None and len(history) else float("nan")
    row = ResultRow(config.task, config.method, config.homotopy, train_loss, test_loss, acc,
                    time.perf_counter() - t0, config.seed, steps, final_lambda, status)
    if config.out_dir:
        out = Path(config.out_dir)
        stem = f"{config.task}_{config.method}_{config.homotopy.replace(':', '-')}_seed{config.seed}"
        if history is not None:
            history.to_csv(out / f"{stem}.csv", config.to_dict(), config.seed)
        (out / f"{stem}.result.json").write_text(json.dumps(asdict(row), indent=2))
    return row, history


def _run_one(config):
    row, _ = run_experiment(config)
    return row


def run_suite(configs, repeats=1, out_dir=None, jobs=1):
    """Run every config with seeds ``seed + 0 .. seed + repeats - 1``.

    Returns ``(rows, summary)`` where ``summary`` has one entry per config
    with mean and standard deviation of each metric. Rows are appended to
    ``out_dir/results.jsonl`` when ``out_dir`` is given.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    runs = []
    for cfg in configs:
        for r in range(repeats):
            runs.append(replace(cfg, seed=cfg.seed + r,
                                out_dir=str(out_dir) if out_dir else cfg.out_dir))
    if jobs > 1 and len(runs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_run_one, runs))
    else:
        rows = [_run_one(c) for c in runs]
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "results.jsonl", "a") as f:
            for row in rows:
                f.write(json.dumps(asdict(row)) + "\n")
    return rows, summarize(rows)


def _mean_std(values):
    vals = np.array([v for v in values if v is not None and not math.isnan(v)], dtype=float)
    if vals.size == 0:
        return float("nan"), float("nan")
    return float(vals.mean()), float(vals.std(ddof=1)) if vals.size > 1 else 0.0


def summarize(rows):
    groups = {}
    for row in rows:
        groups.setdefault((row.task, row.method, row.homotopy), []).append(row)
    summary = []
    for (task, method, homotopy), rs in groups.items():
        entry = {"task": task, "method": method, "homotopy": homotopy, "n": len(rs),
                 "failures": sum(r.status != "ok" for r in rs)}
        for metric in ("train_loss", "test_loss", "test_accuracy"):
            vals = [getattr(r, metric) for r in rs]
            if all(v is None for v in vals):
                continue
            entry[metric], entry[metric + "_std"] = _mean_std(vals)
        summary.append(entry)
    return summary


def _order_key(entry):
    homotopy_order = ["relu", "sigmoid", "h-relu", "h-sigmoid", "h-brightness", "loss-blend"]
    h = entry["homotopy"].split(":")[0]
    return (TASKS.index(entry["task"]), METHODS.index(entry["method"]),
            homotopy_order.index(h) if h in homotopy_order else len(homotopy_order))


def _display_homotopy(name):
    return {"relu": "ReLU", "sigmoid": "Sigmoid", "h-relu": "h-ReLU",
            "h-sigmoid": "h-Sigmoid", "h-brightness": "h-Brightness",
            "loss-blend": "loss-blend"}.get(name.split(":")[0], name)


def render_table(summary) -> str:
    """Markdown tables of mean ± std per method and homotopy, one per task."""
    out = []
    for task in TASKS:
        entries = sorted((e for e in summary if e["task"] == task), key=_order_key)
        if not entries:
            continue
        has_acc = any("test_accuracy" in e for e in entries)
        header = "| Method | Homotopy | Train Loss | Test Loss |" + (" Test Accuracy |" if has_acc else "")
        out.append(f"{task}\n")
        out.append(header)
        out.append("|" + "---|" * (5 if has_acc else 4))
        last_method = None
        for e in entries:
            method = METHOD_LABEL[e["method"]] if e["method"] != last_method else ""
            last_method = e["method"]
            cells = [method, _display_homotopy(e["homotopy"]),
                     _fmt(e, "train_loss"), _fmt(e, "test_loss")]
            if has_acc:
                cells.append(_fmt(e, "test_accuracy"))
            out.append("| " + " | ".join(cells) + " |")
        out.append("")
    return "\n".join(out)


def _fmt(entry, key):
    if key not in entry or math.isnan(entry[key]):
        return "n/a"
    if entry.get("n", 1) > 1:
        return f"{entry[key]:.4f} ± {entry[key + '_std']:.4f}"
    return f"{entry[key]:.4f}"


def _baseline_for(entry, standards):
    act = entry["homotopy"].split(":")
    if act[0] in ("h-relu", "h-sigmoid"):
        want = act[0][2:]
    else:
        want = act[1] if len(act) > 1 else DEFAULT_ACTIVATION[entry["task"]]
    for s in standards:
        if s["homotopy"] == want:
            return s
    return standards[0] if standards else None


def compare_report(summary) -> str:
    """Markdown ranking of methods by mean test loss, with a win tally.

    A continuation run "wins" against the standard baseline with the same
    activation when its mean test loss is lower by more than the larger of
    the two standard deviations; a gap inside that band is "inconclusive".
    """
    lines = ["# Continuation vs standard training", ""]
    wins = total = 0
    for task in TASKS:
        entries = [e for e in summary if e["task"] == task]
        if not entries:
            continue
        lines.append(f"## {task}")
        lines.append("")
        ranked = sorted(entries, key=lambda e: (math.isnan(e.get("test_loss", math.nan)),
                                                e.get("test_loss", math.inf)))
        lines.append("Ranking by mean test loss (best first):")
        lines.append("")
        for i, e in enumerate(ranked, 1):
            extra = ""
            if "test_accuracy" in e and not math.isnan(e["test_accuracy"]):
                extra = f", accuracy {e['test_accuracy']:.4f}"
            lines.append(f"{i}. {METHOD_LABEL[e['method']]} {_display_homotopy(e['homotopy'])}: "
                         f"{e.get('test_loss', math.nan):.4f}{extra}")
        lines.append("")
        standards = [e for e in entries if e["method"] == "standard"]
        for e in entries:
            if e["method"] == "standard":
                continue
            base = _baseline_for(e, standards)
            if base is None:
                continue
            total += 1
            gap = base["test_loss"] - e["test_loss"]
            band = max(e.get("test_loss_std", 0.0), base.get("test_loss_std", 0.0))
            if math.isnan(gap):
                verdict = "failed"
            elif abs(gap) <= band and band > 0:
                verdict = "inconclusive"
            elif gap > 0:
                verdict = "beats standard"
                wins += 1
            else:
                verdict = "worse than standard"
            lines.append(f"- {METHOD_LABEL[e['method']]} {_display_homotopy(e['homotopy'])} vs "
                         f"Standard {_display_homotopy(base['homotopy'])}: {verdict} "
                         f"({e['test_loss']:.4f} vs {base['test_loss']:.4f})")
        lines.append("")
    lines.append(f"Continuation beats standard in {wins}/{total} comparisons.")
    return "\n".join(lines) + "\n"


def read_results(path):
    rows = []
    with open(path) as f:
        for line in f:
            if line.strip():
                rows.append(ResultRow(**json.loads(line)))
    return rows


def table1_configs(**kw):
    base = dict(task="autoencoder", **kw)
    return [ExperimentConfig(method="standard", homotopy="relu", **base),
            ExperimentConfig(method="standard", homotopy="sigmoid", **base),
            ExperimentConfig(method="npc", homotopy="h-relu", **base),
            ExperimentConfig(method="npc", homotopy="h-sigmoid", **base),
            ExperimentConfig(method="npc", homotopy="h-brightness", **base),
            ExperimentConfig(method="parc", homotopy="h-relu", **base),
            ExperimentConfig(method="parc", homotopy="h-sigmoid", **base),
            ExperimentConfig(method="parc", homotopy="h-brightness", **base)]


def table2_configs(**kw):
    base = dict(task="classifier", **kw)
    return [ExperimentConfig(method="standard", homotopy="relu", **base),
            ExperimentConfig(method="npc", homotopy="h-relu", **base),
            ExperimentConfig(method="npc", homotopy="h-brightness", **base),
            ExperimentConfig(method="parc", homotopy="h-relu", **base),
            ExperimentConfig(method="parc", homotopy="h-brightness", **base)]
