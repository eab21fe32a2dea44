"""Low-dimensional root systems with known solution paths.

These give path following an independent ground truth: the fold problem
has a closed-form path with a single turning point, and an augmented
Newton corrector solves the pseudo-arclength system exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .continuation import (
    ContinuationTrace,
    CorrectorDiagnostics,
    ParcConfig,
    Schedule,
    TracePoint,
    parc_correct,
)
from .errors import ContinuationStalled, CorrectorFailed, DegenerateSecant, SingularSystem
from .param_space import HomotopyPoint, Secant, joint_diff, joint_norm, secant_from
from .solvers import ConvergenceCriteria, SolverConfig


@dataclass(frozen=True)
class RootProblem:
    """H(theta, lam) = 0 with ``jacobian`` of shape ``(n, n + 1)``; last column is d/dlam."""

    name: str
    residual: object
    jacobian: object
    dim: int = 1
    known_path: object = None

    def H(self, theta, lam):
        return np.atleast_1d(np.asarray(self.residual(np.atleast_1d(theta), lam), dtype=float))

    def J(self, theta, lam):
        return np.atleast_2d(np.asarray(self.jacobian(np.atleast_1d(theta), lam), dtype=float))

    def objective(self, theta, lam):
        """Least-squares loss 0.5 |H|^2 with its theta and lambda gradients."""
        h = self.H(theta, lam)
        j = self.J(theta, lam)
        g = j.T @ h
        return 0.5 * float(h @ h), g[:-1], float(g[-1])


def fold_problem() -> RootProblem:
    """theta^2 + lam - 1 = 0; branches theta = +-sqrt(1 - lam), fold at (0, 1)."""
    return RootProblem(
        "fold",
        lambda th, lam: np.array([th[0] ** 2 + lam - 1.0]),
        lambda th, lam: np.array([[2.0 * th[0], 1.0]]),
        dim=1,
        known_path=lambda lam, branch=1: branch * np.sqrt(np.maximum(1.0 - lam, 0.0)),
    )


def logistic_fixed_points() -> RootProblem:
    """Fixed points of the logistic map: lam theta (1 - theta) - theta = 0.

    Branches theta = 0 and theta = 1 - 1/lam cross at (0, 1).
    """
    return RootProblem(
        "logistic",
        lambda th, lam: np.array([lam * th[0] * (1.0 - th[0]) - th[0]]),
        lambda th, lam: np.array([[lam * (1.0 - 2.0 * th[0]) - 1.0, th[0] * (1.0 - th[0])]]),
        dim=1,
        known_path=lambda lam, branch=1: (1.0 - 1.0 / lam) if branch else 0.0 * lam,
    )


def newton_corrector(problem: RootProblem, predicted: HomotopyPoint, secant: Secant,
                     tol=1e-10, max_iters=10, history=None):
    """Newton on [H(z); (z - z_pred) . secant] = 0.

    ``history``, if a list, receives the residual norm before each iteration.
    Returns ``(point, CorrectorDiagnostics)``.
    """
    if problem.dim > 10:
        raise ValueError("dense Newton corrector is meant for dim <= 10")
    z_pred = predicted.as_vector()
    t = secant.as_vector()
    z = z_pred.copy()
    n = problem.dim
    for it in range(max_iters + 1):
        h = problem.H(z[:n], z[n])
        r = float((z - z_pred) @ t)
        res = np.append(h, r)
        norm = float(np.linalg.norm(res))
        if history is not None:
            history.append(norm)
        if np.linalg.norm(h) <= tol and abs(r) <= tol:
            diag = CorrectorDiagnostics(it, "converged", 0.5 * float(h @ h),
                                        float(np.linalg.norm(h)), abs(r), float("nan"))
            return HomotopyPoint(z[:n].copy(), z[n]), diag
        if it == max_iters:
            break
        a = np.vstack([problem.J(z[:n], z[n]), t])
        try:
            dz = np.linalg.solve(a, -res)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"augmented Jacobian singular at {z}") from exc
        z = z + dz
    best = HomotopyPoint(z[:n].copy(), z[n])
    diag = CorrectorDiagnostics(max_iters, "max_iters", 0.5 * float(h @ h),
                                float(np.linalg.norm(h)), abs(r), float("nan"))
    raise CorrectorFailed(f"Newton did not reach tol={tol:g} in {max_iters} iterations",
                          best, diag)


def newton_fixed_lambda(problem: RootProblem, theta0, lam, tol=1e-10, max_iters=10):
    """Plain Newton in theta at fixed lam, as used by natural continuation."""
    n = problem.dim
    theta = np.atleast_1d(np.asarray(theta0, dtype=float)).copy()
    for it in range(max_iters + 1):
        h = problem.H(theta, lam)
        if np.linalg.norm(h) <= tol:
            return theta, it
        if it == max_iters:
            break
        j = problem.J(theta, lam)[:, :n]
        try:
            theta = theta - np.linalg.solve(j, h)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"d H / d theta singular at lam={lam}") from exc
    raise CorrectorFailed(f"fixed-lambda Newton failed at lam={lam}",
                          HomotopyPoint(theta, lam))


def npc_run_analytic(problem: RootProblem, theta0, dlam=0.05, lambda_end=1.0,
                     tol=1e-10, max_iters=10):
    """Natural continuation with fixed-lambda Newton; stalls where d H / d theta degenerates."""
    n_steps = int(round((lambda_end) / dlam))
    trace = ContinuationTrace(Schedule.NPC)
    theta = np.atleast_1d(np.asarray(theta0, dtype=float))
    s = 0.0
    for ell in range(n_steps + 1):
        lam = ell * lambda_end / n_steps
        try:
            theta, iters = newton_fixed_lambda(problem, theta, lam, tol, max_iters)
        except (CorrectorFailed, SingularSystem) as exc:
            raise ContinuationStalled(str(exc), trace, ell) from exc
        point = HomotopyPoint(theta.copy(), lam)
        if trace.points:
            s += joint_norm(*joint_diff(point, trace.final.point))
        h = problem.H(theta, lam)
        trace.points.append(TracePoint(point, s, 0.5 * float(h @ h),
                                       float(np.linalg.norm(h)), iters))
    return trace


def parc_run_analytic(problem: RootProblem, theta0, config: ParcConfig = ParcConfig(),
                      tol=1e-10, max_iters=10, lambda_stop=None, corrector=None):
    """Pseudo-arclength continuation on a root problem.

    Starts from a root at lam = 0, bootstraps one fixed-lambda Newton step,
    then predicts along the secant and corrects with :func:`newton_corrector`
    (or ``corrector(predicted, secant)``). Runs ``config.max_steps`` steps,
    or stops once the path has turned and comes back below ``lambda_stop``;
    in that case the last point is pinned to ``lambda_stop`` exactly.
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    trace = ContinuationTrace(Schedule.PARC)
    theta, _ = newton_fixed_lambda(problem, theta0, 0.0, tol, max_iters)
    trace.points.append(TracePoint(HomotopyPoint(theta, 0.0), 0.0, 0.0,
                                   float(np.linalg.norm(problem.H(theta, 0.0)))))
    theta, it = newton_fixed_lambda(problem, theta, config.bootstrap_dlambda, tol, max_iters)
    boot = HomotopyPoint(theta, config.bootstrap_dlambda)
    trace.points.append(TracePoint(boot, joint_norm(*joint_diff(boot, trace.final.point)),
                                   0.0, float(np.linalg.norm(problem.H(theta, boot.lam))), it))
    if corrector is None:
        def corrector(predicted, secant):
            return newton_corrector(problem, predicted, secant, tol, max_iters)

    for _ in range(config.max_steps):
        prev, curr = trace.points[-2].point, trace.final.point
        try:
            sec = secant_from(prev, curr, config.normalization_mode)
        except DegenerateSecant as exc:
            raise ContinuationStalled(str(exc), trace, len(trace)) from exc
        ds = config.ds
        for attempt in range(2):
            predicted = HomotopyPoint(curr.theta + ds * sec.d_theta, curr.lam + ds * sec.d_lambda)
            try:
                point, diag = corrector(predicted, sec)
                break
            except (CorrectorFailed, SingularSystem) as exc:
                if attempt == 1:
                    raise ContinuationStalled(str(exc), trace, len(trace)) from exc
                ds *= 0.5
        h = problem.H(point.theta, point.lam)
        trace.points.append(TracePoint(point, trace.final.s + ds, 0.5 * float(h @ h),
                                       float(np.linalg.norm(h)), diag.steps,
                                       diag.penalty_residual))
        lams = trace.lambdas
        if lambda_stop is not None and point.lam < lambda_stop and lams.max() > lambda_stop:
            theta, it = newton_fixed_lambda(problem, point.theta, lambda_stop, tol, max_iters)
            end = HomotopyPoint(theta, lambda_stop)
            trace.points[-1] = TracePoint(
                end, trace.points[-2].s + joint_norm(*joint_diff(end, trace.points[-2].point)),
                0.0, float(np.linalg.norm(problem.H(theta, lambda_stop))), it)
            break
    return trace


def penalty_corrector(problem: RootProblem, gamma=10.0, alpha=0.02, grad_norm_tol=1e-11,
                      max_steps=20000):
    """First-order corrector on 0.5 |H|^2 + gamma r^2, plain gradient descent.

    Adapter so :func:`parc_run_analytic` can trace the same path with the
    penalty corrector used for networks.
    """
    solver = SolverConfig(kind="sgd", alpha=alpha)
    criteria = ConvergenceCriteria(max_steps, grad_norm_tol)

    def correct(predicted, secant):
        return parc_correct(problem.objective, predicted, secant, solver, gamma, criteria)

    return correct


def fold_arclength_exact(lam_from=0.0) -> float:
    """Arc length of lam = 1 - theta^2 between its two points at ``lam_from``, by quadrature."""
    from scipy.integrate import quad

    t = np.sqrt(1.0 - lam_from)
    value, _ = quad(lambda th: np.sqrt(1.0 + 4.0 * th * th), -t, t)
    return value


def oracle_checks(ds=0.05):
    """Run the fold-problem oracles; returns ``(name, passed, detail)`` tuples and the traces."""
    problem = fold_problem()
    cfg = ParcConfig(ds=ds, max_steps=400)
    newton = parc_run_analytic(problem, [1.0], cfg, lambda_stop=0.0)
    penalty = parc_run_analytic(problem, [1.0], cfg, lambda_stop=0.0,
                                corrector=penalty_corrector(problem))
    checks = []

    h_max = max(p.grad_norm for p in newton.points)
    checks.append(("newton trace residual |H| <= 1e-8", h_max <= 1e-8, f"max |H| = {h_max:.2e}"))

    lams = newton.lambdas
    peak = int(np.argmax(lams))
    after = np.diff(lams[peak:])
    falling = int(np.sum((after < 0) & (newton.thetas[peak + 1:, 0] < 0)))
    checks.append(("fold passed: max lambda > 0.999", bool(lams.max() > 0.999), f"{lams.max():.6f}"))
    checks.append((">= 10 steps with falling lambda on theta < 0", falling >= 10, str(falling)))

    try:
        npc = npc_run_analytic(problem, [1.0], ds)
        checks.append(("natural continuation stalls before lambda = 1", False,
                       f"reached {npc.lambdas.max():.4f}"))
        npc_trace = npc
    except ContinuationStalled as exc:
        npc_trace = exc.trace
        lmax = npc_trace.lambdas.max()
        checks.append(("natural continuation stalls before lambda = 1", bool(lmax < 1.0),
                       f"lambda max {lmax:.4f}"))

    exact = fold_arclength_exact(0.0)
    measured = newton.chord_length()
    rel = abs(measured - exact) / exact
    checks.append(("arclength within 2% of quadrature", rel < 0.02,
                   f"{measured:.5f} vs {exact:.5f} ({100 * rel:.3f}%)"))

    # the last point is pinned to lam = 0 rather than a secant step
    spacing = pseudo_arclength_spacing(newton)[:-1]
    dev = float(np.max(np.abs(spacing - ds)))
    checks.append(("projected spacing = ds +- 1e-6 (Newton)", dev <= 1e-6, f"max dev {dev:.2e}"))

    dist = np.linalg.norm(np.diff([p.point.as_vector() for p in penalty.points[1:-1]], axis=0), axis=1)
    ok = bool(np.all((dist >= 0.5 * ds) & (dist <= 1.5 * ds)))
    checks.append(("penalty spacing within ds +- 50%", ok,
                   f"[{dist.min():.4f}, {dist.max():.4f}]"))

    dev = corrector_deviation(newton, penalty, lam_max=0.9)
    checks.append(("penalty vs Newton path deviation <= 1e-3", dev <= 1e-3, f"{dev:.2e}"))
    traces = {"parc-newton": newton, "parc-penalty": penalty, "npc-newton": npc_trace}
    return checks, traces


def pseudo_arclength_spacing(trace: ContinuationTrace) -> np.ndarray:
    """Projection of each step onto the secant of the two points before it.

    Starts at the first secant step (index 2), since the start and bootstrap
    points are not secant steps.
    """
    z = np.array([p.point.as_vector() for p in trace.points])
    out = []
    for k in range(2, len(z)):
        sec = z[k - 1] - z[k - 2]
        sec /= np.linalg.norm(sec)
        out.append(float((z[k] - z[k - 1]) @ sec))
    return np.array(out)


def corrector_deviation(reference: ContinuationTrace, other: ContinuationTrace, lam_max=0.9):
    """Max |theta| gap between ``other`` and a cubic spline through ``reference``,
    over the upper-branch points of ``other`` with lam in [0, lam_max]."""
    from scipy.interpolate import CubicSpline

    ref_l, ref_t = reference.lambdas, reference.thetas[:, 0]
    upper = (ref_t > 0) & (ref_l <= lam_max + 0.05)
    spline = CubicSpline(ref_l[upper], ref_t[upper])
    l, t = other.lambdas, other.thetas[:, 0]
    mask = (t > 0) & (l >= 0) & (l <= lam_max)
    return float(np.max(np.abs(spline(l[mask]) - t[mask])))
