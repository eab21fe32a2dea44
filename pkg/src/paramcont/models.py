"""Small fully connected networks with hand-written backpropagation.

Parameters live in one flat vector (see :mod:`paramcont.param_space`).
Weights are stored as ``(in, out)`` so a batch ``x`` of shape ``(N, in)``
maps to ``x @ W + b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import NumericalDivergence
from .homotopy import (
    HomotopyKind,
    HomotopySpec,
    blended_loss,
    h_activation,
    h_activation_parts,
    h_brightness,
)
from .param_space import unflatten


class LossKind(str, Enum):
    MSE_FROBENIUS = "mse"
    SOFTMAX_CROSS_ENTROPY = "xent"


@dataclass(frozen=True)
class MlpModel:
    layer_dims: tuple
    homotopy: HomotopySpec = field(default_factory=HomotopySpec)
    loss_kind: LossKind = LossKind.MSE_FROBENIUS
    # when False the last layer feeds the loss without an activation site
    activate_output: bool = True

    def __post_init__(self):
        dims = tuple((int(i), int(o)) for i, o in self.layer_dims)
        if not dims:
            raise ValueError("model needs at least one layer")
        for (_, out), (nxt, _) in zip(dims[:-1], dims[1:]):
            if out != nxt:
                raise ValueError(f"layer widths do not chain: {dims}")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "loss_kind", LossKind(self.loss_kind))

    @property
    def param_count(self) -> int:
        return sum(i * o + o for i, o in self.layer_dims)

    @property
    def shapes(self):
        return [((i, o), o) for i, o in self.layer_dims]

    def layers(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.param_count:
            raise ValueError(f"theta has {theta.size} entries, model needs {self.param_count}")
        return unflatten(theta, self.shapes)

    def with_homotopy(self, homotopy: HomotopySpec) -> MlpModel:
        return MlpModel(self.layer_dims, homotopy, self.loss_kind, self.activate_output)


def autoencoder(homotopy=None, widths=(36, 16, 8, 16, 36)) -> MlpModel:
    dims = tuple(zip(widths[:-1], widths[1:]))
    return MlpModel(dims, homotopy or HomotopySpec(), LossKind.MSE_FROBENIUS)


def classifier(homotopy=None, n_in=36, n_classes=10) -> MlpModel:
    return MlpModel(((n_in, n_classes),), homotopy or HomotopySpec(),
                    LossKind.SOFTMAX_CROSS_ENTROPY)


def init_params(model: MlpModel, scheme="xavier_uniform", seed=0) -> np.ndarray:
    """Xavier-uniform weights with zero biases, or all zeros."""
    if scheme == "zeros":
        return np.zeros(model.param_count)
    if scheme != "xavier_uniform":
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    parts = []
    for n_in, n_out in model.layer_dims:
        bound = np.sqrt(6.0 / (n_in + n_out))
        parts.append(rng.uniform(-bound, bound, size=n_in * n_out))
        parts.append(np.zeros(n_out))
    return np.concatenate(parts)


def _site_lambda(model: MlpModel, lam: float, hard: bool) -> float:
    # lambda seen by the activation sites
    spec = model.homotopy
    if spec.blends_activation:
        return lam
    if spec.kind is HomotopyKind.LOSS_BLEND:
        return 1.0 if hard else 0.0
    return 1.0


def _forward(model, theta, x, lam, hard=True, with_grads=False):
    spec = model.homotopy
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.layer_dims[0][0]:
        raise ValueError(f"input width {x.shape[1]} != {model.layer_dims[0][0]}")
    if spec.blends_input:
        x = h_brightness(x, lam, spec.baseline_value)
    site_lam = _site_lambda(model, lam, hard)
    a = x
    cache = []
    n_layers = len(model.layer_dims)
    for i, (w, b) in enumerate(model.layers(theta)):
        z = a @ w + b
        if model.activate_output or i < n_layers - 1:
            if with_grads:
                out, dz, dlam = h_activation_parts(z, site_lam, spec.activation)
            else:
                out, dz, dlam = h_activation(z, site_lam, spec.activation), None, None
            cache.append((a, dz, dlam, True))
        else:
            out = z
            cache.append((a, None, None, False))
        a = out
    return a, x, cache


def forward(model: MlpModel, theta, x, lam=1.0) -> np.ndarray:
    """Network output. For the loss-blend homotopy this is the hard (lam=1) network."""
    out, _, _ = _forward(model, theta, x, lam, hard=True)
    return out


def _loss_and_output_grad(model, out, y):
    n = out.shape[0]
    if model.loss_kind is LossKind.MSE_FROBENIUS:
        diff = out - y
        # squared Frobenius norm per sample, averaged over the batch
        return float(np.sum(diff * diff) / n), 2.0 * diff / n
    labels = np.asarray(y, dtype=np.int64)
    shifted = out - out.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logsum[:, None]
    loss = -float(np.mean(logp[np.arange(n), labels]))
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def _single_loss_and_grads(model, theta, x, y, lam, hard=True):
    spec = model.homotopy
    out, x_in, cache = _forward(model, theta, x, lam, hard, with_grads=True)
    if not np.all(np.isfinite(out)):
        raise NumericalDivergence("non-finite network output")
    loss, delta = _loss_and_output_grad(model, out, y)
    track_sites = spec.blends_activation
    grads = []
    grad_lam = 0.0
    layers = model.layers(theta)
    for i in range(len(layers) - 1, -1, -1):
        a_prev, dz, dlam, active = cache[i]
        if active:
            if track_sites:
                grad_lam += float(np.sum(delta * dlam))
            delta = delta * dz
        w, _ = layers[i]
        grads.append((a_prev.T @ delta, delta.sum(axis=0)))
        delta = delta @ w.T
    if spec.blends_input:
        # delta is now dLoss/d(transformed input)
        raw = np.asarray(x, dtype=np.float64).reshape(x_in.shape)
        grad_lam += float(np.sum(delta * (raw - spec.baseline_value)))
    grads.reverse()
    grad_theta = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])
    return loss, grad_theta, grad_lam


def loss_and_grads(model: MlpModel, theta, x, y, lam=1.0):
    """Batch-mean loss, its gradient in theta, and its total derivative in lambda.

    MSE is ``||Yhat - Y||_F^2`` divided by the number of entries, i.e. the
    per-sample squared error averaged over samples and output units.
    Cross-entropy takes integer labels.
    """
    if len(x) == 0:
        raise ValueError("empty batch")
    if model.homotopy.kind is HomotopyKind.LOSS_BLEND:
        l_val, l_grad, _ = _single_loss_and_grads(model, theta, x, y, lam, hard=True)
        m_val, m_grad, _ = _single_loss_and_grads(model, theta, x, y, lam, hard=False)
        return blended_loss((l_val, l_grad), (m_val, m_grad), lam)
    loss, grad_theta, grad_lam = _single_loss_and_grads(model, theta, x, y, lam)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad_theta)):
        raise NumericalDivergence("non-finite loss or gradient")
    return loss, grad_theta, grad_lam


def accuracy(model: MlpModel, theta, x, labels, lam=1.0) -> float:
    out = forward(model, theta, x, lam)
    return float(np.mean(np.argmax(out, axis=1) == np.asarray(labels)))



def make_objective(model: MlpModel, x, y):
    """Full-batch ``objective(theta, lam) -> (loss, grad_theta, grad_lambda)``."""
    x = np.asarray(x, dtype=np.float64)

    def objective(theta, lam):
        return loss_and_grads(model, theta, x, y, lam)

    return objective
