"""Natural-parameter and pseudo-arclength continuation over a homotopy objective.

Everything here works on an ``objective(theta, lam)`` callable returning
``(loss, grad_theta, grad_lambda)``; :func:`paramcont.models.make_objective`
builds one from a network and a dataset, and the analytic testbed builds
one from a root system.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    ContinuationStalled,
    CorrectorFailed,
    DegenerateSecant,
    MaxStepsExceeded,
    NumericalDivergence,
)
from .param_space import HomotopyPoint, Normalization, Secant, joint_diff, joint_norm, secant_from
from .solvers import ConvergenceCriteria, SolverConfig, run_to_convergence

LAMBDA_SNAP = 1e-12
TRACE_COLUMNS = ("step", "s", "lambda", "loss", "grad_norm", "corrector_steps",
                 "penalty_residual", "wall_ms")


class Schedule(str, Enum):
    NPC = "npc"
    PARC = "parc"


class Penalty(str, Enum):
    SQUARED = "squared"
    RAW = "raw"


@dataclass
class TracePoint:
    point: HomotopyPoint
    s: float
    loss: float
    grad_norm: float = float("nan")
    corrector_steps: int = 0
    penalty_residual: float = 0.0
    wall_ms: float = 0.0
    initial_loss: float = float("nan")


@dataclass
class ContinuationTrace:
    schedule_kind: Schedule
    points: list = field(default_factory=list)
    # set when the run ended on budget or step limit before reaching the target
    truncated: bool = False

    def __len__(self):
        return len(self.points)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.point.lam for p in self.points])

    @property
    def thetas(self) -> np.ndarray:
        return np.array([p.point.theta for p in self.points])

    @property
    def arclengths(self) -> np.ndarray:
        return np.array([p.s for p in self.points])

    @property
    def losses(self) -> np.ndarray:
        return np.array([p.loss for p in self.points])

    @property
    def total_steps(self) -> int:
        return sum(p.corrector_steps for p in self.points)

    @property
    def final(self) -> TracePoint:
        return self.points[-1]

    def chord_length(self) -> float:
        """Sum of joint distances between consecutive points."""
        z = np.array([p.point.as_vector() for p in self.points])
        return float(np.linalg.norm(np.diff(z, axis=0), axis=1).sum())

    def warm_start_ratios(self) -> np.ndarray:
        """Initial corrector loss over the previous accepted loss, per step."""
        out = []
        for prev, cur in zip(self.points[:-1], self.points[1:]):
            if prev.loss > 0 and np.isfinite(cur.initial_loss):
                out.append(cur.initial_loss / prev.loss)
        return np.array(out)

    def rows(self):
        for i, p in enumerate(self.points):
            yield {
                "step": i, "s": p.s, "lambda": p.point.lam, "loss": p.loss,
                "grad_norm": p.grad_norm, "corrector_steps": p.corrector_steps,
                "penalty_residual": p.penalty_residual, "wall_ms": p.wall_ms,
            }

    def to_csv(self, path, config=None, seed=None):
        """Write the trace CSV and a ``.json`` sidecar next to it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=TRACE_COLUMNS)
            writer.writeheader()
            for row in self.rows():
                writer.writerow({k: repr(v) if isinstance(v, float) else v
                                 for k, v in row.items()})
        sidecar = {
            "schedule": self.schedule_kind.value,
            "truncated": self.truncated,
            "seed": seed,
            "config": config or {},
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, default=str))
        return path


def read_trace_csv(path) -> list:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    out = []
    for row in rows:
        out.append({k: (int(v) if k in ("step", "corrector_steps") else float(v))
                    for k, v in row.items()})
    return out


@dataclass(frozen=True)
class ParcConfig:
    ds: float = 0.05
    gamma: float = 10.0
    normalization_mode: Normalization = Normalization.JOINT
    bootstrap_dlambda: float = 0.02
    max_steps: int = 200
    lambda_target: float = 1.0
    penalty: Penalty = Penalty.SQUARED
    freeze_lambda: bool = False
    # "lambda" replaces the secant by the unit lambda direction (NPC-style predictor)
    forced_secant: str | None = None
    # with forced_secant="lambda": exact lambda of every trace point, 0 first, target last
    lambda_schedule: tuple | None = None
    # treat a corrector that stops on max_steps as a failure
    strict: bool = False
    max_penalty_residual: float | None = None

    def __post_init__(self):
        if not self.ds > 0:
            raise ValueError("ds must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        object.__setattr__(self, "normalization_mode", Normalization(self.normalization_mode))
        object.__setattr__(self, "penalty", Penalty(self.penalty))
        if self.lambda_schedule is not None:
            sched = tuple(float(v) for v in self.lambda_schedule)
            if self.forced_secant != "lambda":
                raise ValueError("lambda_schedule needs forced_secant='lambda'")
            if (len(sched) < 2 or sched[0] != 0.0 or sched[-1] != self.lambda_target
                    or any(b <= a for a, b in zip(sched, sched[1:]))):
                raise ValueError("lambda_schedule must rise strictly from 0 to lambda_target")
            object.__setattr__(self, "lambda_schedule", sched)

    def as_dict(self):
        d = asdict(self)
        d["normalization_mode"] = self.normalization_mode.value
        d["penalty"] = self.penalty.value
        return d


class _Budget:
    def __init__(self, total):
        self.total = total
        self.used = 0

    def remaining(self):
        return None if self.total is None else max(self.total - self.used, 0)

    def cap(self, criteria: ConvergenceCriteria) -> ConvergenceCriteria:
        left = self.remaining()
        if left is None:
            return criteria
        steps = left if criteria.max_steps is None else min(criteria.max_steps, left)
        return ConvergenceCriteria(steps, criteria.grad_norm_tol, criteria.loss_delta_tol)

    def exhausted(self):
        return self.total is not None and self.used >= self.total


def solve_fixed_lambda(objective, theta0, lam, solver=SolverConfig(),
                       criteria=ConvergenceCriteria(), state=None):
    """Minimize ``objective(., lam)`` in theta from ``theta0``.

    Returns ``(theta, diagnostics, (loss, grad_norm))`` where the last pair is
    the task loss and theta-gradient norm at the returned theta.
    """
    last = {}

    def f(theta):
        loss, g_theta, _ = objective(theta, lam)
        last["loss"], last["gnorm"] = loss, float(np.linalg.norm(g_theta))
        return loss, g_theta

    theta, diag = run_to_convergence(f, theta0, criteria, solver, state=state)
    return theta, diag, (last["loss"], last["gnorm"])


def critical_residual(objective, point: HomotopyPoint) -> float:
    """Norm of the theta-gradient of the task loss at ``point``."""
    _, g_theta, _ = objective(point.theta, point.lam)
    return float(np.linalg.norm(g_theta))


def npc_run(objective, theta0, n_steps, solver=SolverConfig(),
            criteria=ConvergenceCriteria(), final_criteria=None,
            lambda_start=0.0, lambda_end=1.0, budget=None, accept=None):
    """Natural parameter continuation on the grid lam_l = a + l (b - a) / N.

    Each stage warm-starts from the previous stage's solution. ``accept``,
    if given, is called on every solved point; returning False stalls the
    run. ``final_criteria`` replaces ``criteria`` on the last stage, and
    ``budget`` caps the total number of solver steps.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    theta0 = np.asarray(theta0, dtype=np.float64)
    trace = ContinuationTrace(Schedule.NPC)
    budget = _Budget(budget)
    theta = theta0
    state = None
    s = 0.0
    prev = None
    for ell in range(n_steps + 1):
        lam = lambda_start + ell * (lambda_end - lambda_start) / n_steps
        crit = final_criteria if (ell == n_steps and final_criteria is not None) else criteria
        t0 = time.perf_counter()
        try:
            theta_new, diag, (loss, gnorm) = solve_fixed_lambda(
                objective, theta, lam, solver, budget.cap(crit),
                state=None if solver.reset_moments else state)
        except NumericalDivergence as exc:
            raise ContinuationStalled(f"solver diverged at lambda={lam:.6g}: {exc}",
                                      trace, ell) from exc
        budget.used += diag.steps
        point = HomotopyPoint(theta_new, lam)
        if accept is not None and not accept(point):
            raise ContinuationStalled(f"no acceptable solution at lambda={lam:.6g}", trace, ell)
        if prev is not None:
            s += joint_norm(*joint_diff(point, prev))
        trace.points.append(TracePoint(point, s, loss, gnorm, diag.steps, 0.0,
                                       1e3 * (time.perf_counter() - t0), diag.initial_loss))
        theta, state, prev = theta_new, diag.state, point
    return trace


def parc_predict(prev: HomotopyPoint, curr: HomotopyPoint, ds,
                 mode=Normalization.JOINT) -> HomotopyPoint:
    """Secant predictor: step ``ds`` from ``curr`` along the normalized secant."""
    sec = secant_from(prev, curr, mode)
    return _step(curr, sec, ds)


def _step(curr: HomotopyPoint, sec: Secant, ds) -> HomotopyPoint:
    if ds == 0:
        return HomotopyPoint(curr.theta.copy(), curr.lam)
    return HomotopyPoint(curr.theta + ds * sec.d_theta, curr.lam + ds * sec.d_lambda)


@dataclass
class CorrectorDiagnostics:
    steps: int
    reason: str
    loss: float
    grad_norm: float
    penalty_residual: float
    initial_loss: float
    state: object = None


def parc_correct(objective, predicted: HomotopyPoint, secant: Secant,
                 solver=SolverConfig(), gamma=10.0, criteria=ConvergenceCriteria(),
                 penalty=Penalty.SQUARED, freeze_lambda=False, strict=False,
                 max_penalty_residual=None, state=None):
    """Penalty corrector around a predicted point.

    Minimizes ``loss(theta, lam) + gamma * r**2`` with
    ``r = (z - z_pred) . secant`` over ``z = (theta, lam)`` (``gamma * r``
    for the raw penalty). Theta and lambda share one solver. With
    ``freeze_lambda`` only theta moves.
    """
    penalty = Penalty(penalty)
    z_pred = predicted.as_vector()
    direction = secant.as_vector()
    m = predicted.theta.size
    last = {}

    def f(z):
        theta, lam = z[:m], float(z[m])
        loss, g_theta, g_lam = objective(theta, lam)
        r = float(np.dot(z - z_pred, direction))
        last["loss"], last["gnorm"], last["r"] = loss, float(np.linalg.norm(g_theta)), r
        grad = np.append(g_theta, 0.0 if freeze_lambda else g_lam)
        if penalty is Penalty.SQUARED:
            value = loss + gamma * r * r
            pen_grad = 2.0 * gamma * r * direction
        else:
            value = loss + gamma * r
            pen_grad = gamma * direction
        if freeze_lambda:
            pen_grad = pen_grad.copy()
            pen_grad[m] = 0.0
        return value, grad + pen_grad

    z, diag = run_to_convergence(f, z_pred, criteria, solver, state=state)
    corrected = HomotopyPoint(z[:m].copy(), float(z[m]))
    out = CorrectorDiagnostics(diag.steps, diag.reason, last["loss"], last["gnorm"],
                               abs(last["r"]), diag.initial_loss, diag.state)
    if not np.all(np.isfinite(z)):
        raise NumericalDivergence("corrector produced non-finite parameters")
    if strict and diag.reason == "max_steps":
        raise CorrectorFailed(f"no convergence in {diag.steps} steps", corrected, out)
    if max_penalty_residual is not None and out.penalty_residual > max_penalty_residual:
        raise CorrectorFailed(f"penalty residual {out.penalty_residual:.3g} too large",
                              corrected, out)
    return corrected, out


def parc_run(objective, theta0, config: ParcConfig = ParcConfig(),
             solver=SolverConfig(), criteria=ConvergenceCriteria(),
             final_criteria=None, budget=None, continuation_budget=None, corrector=None):
    """Pseudo-arclength continuation from lam = 0 to ``config.lambda_target``.

    Solves at lam = 0, takes one natural step of ``bootstrap_dlambda`` to get
    the first secant, then alternates secant prediction and correction,
    adding ``ds`` to the arclength per accepted point. A final fixed-lambda
    solve pins the last point to the target. On a failed correction the step
    is retried once at ``ds / 2``; a second failure stalls the run.
    ``config.lambda_schedule`` instead fixes the lambda of every point, which
    with a zero penalty and frozen lambda turns the run into NPC on that grid.

    ``budget`` caps solver steps over the whole run. Once
    ``continuation_budget`` steps are spent the loop stops and the final
    solve at the target takes what is left.

    ``corrector(predicted, secant, criteria, state)`` may replace the
    penalty corrector; it must return ``(point, CorrectorDiagnostics)``.
    """
    cfg = config
    budget = _Budget(budget)
    trace = ContinuationTrace(Schedule.PARC)
    theta0 = np.asarray(theta0, dtype=np.float64)

    def fixed(theta, lam, crit, state=None):
        t0 = time.perf_counter()
        theta, diag, (loss, gnorm) = solve_fixed_lambda(
            objective, theta, lam, solver, budget.cap(crit), state=state)
        budget.used += diag.steps
        return TracePoint(HomotopyPoint(theta, lam), 0.0, loss, gnorm, diag.steps, 0.0,
                          1e3 * (time.perf_counter() - t0), diag.initial_loss), diag.state

    if corrector is None:
        def corrector(predicted, secant, crit, state=None):
            return parc_correct(objective, predicted, secant, solver, cfg.gamma, crit,
                                cfg.penalty, cfg.freeze_lambda, cfg.strict,
                                cfg.max_penalty_residual, state=state)

    try:
        start, state = fixed(theta0, 0.0, criteria)
        trace.points.append(start)
        boot_lam = cfg.lambda_schedule[1] if cfg.lambda_schedule else cfg.bootstrap_dlambda
        boot, state = fixed(start.point.theta, boot_lam, criteria,
                            None if solver.reset_moments else state)
    except NumericalDivergence as exc:
        raise ContinuationStalled(f"bootstrap diverged: {exc}", trace, len(trace)) from exc
    boot.s = joint_norm(*joint_diff(boot.point, start.point))
    trace.points.append(boot)

    target = cfg.lambda_target
    n_cont = 0
    while trace.final.point.lam < target - LAMBDA_SNAP:
        if budget.exhausted() or (continuation_budget is not None
                                  and budget.used >= continuation_budget):
            trace.truncated = True
            break
        if n_cont >= cfg.max_steps:
            trace.truncated = True
            raise MaxStepsExceeded(f"lambda={trace.final.point.lam:.4g} after "
                                   f"{n_cont} continuation steps", trace)
        prev, curr = trace.points[-2].point, trace.final.point
        if cfg.forced_secant == "lambda":
            secant = Secant(np.zeros_like(curr.theta), 1.0)
        else:
            try:
                secant = secant_from(prev, curr, cfg.normalization_mode)
            except DegenerateSecant as exc:
                raise ContinuationStalled(str(exc), trace, len(trace)) from exc

        ds = cfg.ds
        for attempt in range(2):
            t0 = time.perf_counter()
            if cfg.lambda_schedule:
                lam_next = cfg.lambda_schedule[len(trace)]
                predicted = HomotopyPoint(curr.theta.copy(), lam_next)
                ds = lam_next - curr.lam
            else:
                predicted = _step(curr, secant, ds)
            try:
                crit = budget.cap(criteria)
                if continuation_budget is not None:
                    left = max(continuation_budget - budget.used, 0)
                    if crit.max_steps is None or crit.max_steps > left:
                        crit = ConvergenceCriteria(left, crit.grad_norm_tol, crit.loss_delta_tol)
                point, diag = corrector(predicted, secant, crit,
                                        None if solver.reset_moments else state)
                break
            except (CorrectorFailed, NumericalDivergence) as exc:
                diag = getattr(exc, "diagnostics", None)
                if diag is not None:
                    budget.used += diag.steps
                if attempt == 1 or cfg.lambda_schedule:
                    raise ContinuationStalled(
                        f"corrector failed twice near lambda={curr.lam:.6g}: {exc}",
                        trace, len(trace)) from exc
                ds = 0.5 * ds
        budget.used += diag.steps
        state = diag.state
        trace.points.append(TracePoint(point, trace.final.s + ds, diag.loss, diag.grad_norm,
                                       diag.steps, diag.penalty_residual,
                                       1e3 * (time.perf_counter() - t0), diag.initial_loss))
        n_cont += 1

    last = trace.final
    snapped = abs(last.point.lam - target) <= LAMBDA_SNAP
    if snapped and final_criteria is None:
        last.point = HomotopyPoint(last.point.theta, target)
        return trace
    tp, _ = fixed(last.point.theta, target, final_criteria or criteria)
    if snapped:
        tp.s = last.s
        tp.corrector_steps += last.corrector_steps
        tp.initial_loss = last.initial_loss
        trace.points[-1] = tp
    else:
        tp.s = last.s + joint_norm(*joint_diff(tp.point, last.point))
        trace.points.append(tp)
    return trace
