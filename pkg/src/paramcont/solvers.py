"""First-order optimizers used both for plain training and as correctors."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalDivergence


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    alpha: float = 1e-3

    @classmethod
    def zeros(cls, size, **hyper) -> AdamState:
        return cls(np.zeros(size), np.zeros(size), **hyper)


def adam_step(state: AdamState, theta, grad):
    """One bias-corrected ADAM update. Returns ``(new_state, new_theta)``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != np.shape(theta):
        raise ValueError(f"grad shape {grad.shape} != theta shape {np.shape(theta)}")
    if not np.all(np.isfinite(grad)):
        raise NumericalDivergence("non-finite gradient in ADAM step")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_theta = theta - state.alpha * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, t=t), new_theta


def sgd_step(theta, grad, alpha):
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if theta.shape != grad.shape:
        raise ValueError(f"grad shape {grad.shape} != theta shape {theta.shape}")
    return theta - alpha * grad


@dataclass(frozen=True)
class SolverConfig:
    kind: str = "adam"
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # fresh moments at every continuation step unless False
    reset_moments: bool = True

    def new_state(self, size) -> AdamState:
        return AdamState.zeros(size, beta1=self.beta1, beta2=self.beta2,
                               eps=self.eps, alpha=self.alpha)


@dataclass(frozen=True)
class ConvergenceCriteria:
    max_steps: int | None = 500
    grad_norm_tol: float | None = 1e-4
    loss_delta_tol: float | None = None

    def __post_init__(self):
        if self.max_steps is None and self.grad_norm_tol is None and self.loss_delta_tol is None:
            raise ValueError("at least one stopping criterion is required")


@dataclass
class Diagnostics:
    reason: str
    steps: int
    grad_norm: float
    loss: float
    initial_loss: float
    losses: list = field(default_factory=list)
    state: AdamState | None = None


def run_to_convergence(objective, theta0, criteria: ConvergenceCriteria,
                       solver: SolverConfig = SolverConfig(), state=None,
                       record_losses=False):
    """Iterate ``solver`` on ``objective(theta) -> (loss, grad)``.

    Stops at the first satisfied criterion. ``steps`` counts parameter
    updates, so ``max_steps=0`` evaluates once and returns ``theta0``.
    """
    theta = np.array(theta0, dtype=np.float64)
    if solver.kind == "adam" and state is None:
        state = solver.new_state(theta.size)
    elif solver.kind not in ("adam", "sgd"):
        raise ValueError(f"unknown solver {solver.kind!r}")

    losses = []
    prev_loss = None
    initial_loss = None
    steps = 0
    while True:
        loss, grad = objective(theta)
        if not np.isfinite(loss):
            raise NumericalDivergence(f"loss became {loss} after {steps} steps")
        if initial_loss is None:
            initial_loss = loss
        if record_losses:
            losses.append(loss)
        gnorm = float(np.linalg.norm(grad))
        reason = None
        if criteria.grad_norm_tol is not None and gnorm <= criteria.grad_norm_tol:
            reason = "grad_norm"
        elif (criteria.loss_delta_tol is not None and prev_loss is not None
              and abs(prev_loss - loss) <= criteria.loss_delta_tol):
            reason = "loss_delta"
        elif criteria.max_steps is not None and steps >= criteria.max_steps:
            reason = "max_steps"
        if reason is not None:
            return theta, Diagnostics(reason, steps, gnorm, float(loss),
                                      float(initial_loss), losses, state)
        if solver.kind == "adam":
            state, theta = adam_step(state, theta, grad)
        else:
            if not np.all(np.isfinite(grad)):
                raise NumericalDivergence("non-finite gradient in SGD step")
            theta = sgd_step(theta, grad, solver.alpha)
        prev_loss = loss
        steps += 1
