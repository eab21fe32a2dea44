"""Activation, brightness and loss-blend homotopies."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit


class HomotopyKind(str, Enum):
    NONE = "none"
    HRELU = "h-relu"
    HSIGMOID = "h-sigmoid"
    HBRIGHTNESS = "h-brightness"
    LOSS_BLEND = "loss-blend"


@dataclass(frozen=True)
class HomotopySpec:
    """Which homotopy a model carries.

    ``activation`` is the base nonlinearity used at every activation site.
    For the activation homotopies it is implied by ``kind``; for brightness,
    loss-blend and none it must be given ("relu" or "sigmoid").
    """

    kind: HomotopyKind = HomotopyKind.NONE
    activation: str = "relu"
    baseline_value: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", HomotopyKind(self.kind))
        if self.kind is HomotopyKind.HRELU:
            object.__setattr__(self, "activation", "relu")
        elif self.kind is HomotopyKind.HSIGMOID:
            object.__setattr__(self, "activation", "sigmoid")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def blends_activation(self) -> bool:
        return self.kind in (HomotopyKind.HRELU, HomotopyKind.HSIGMOID)

    @property
    def blends_input(self) -> bool:
        return self.kind is HomotopyKind.HBRIGHTNESS


def sigmoid(z):
    return expit(np.asarray(z, dtype=np.float64))


def sigmoid_prime(z):
    s = expit(np.asarray(z, dtype=np.float64))
    return s * (1.0 - s)


def relu(z):
    return np.maximum(np.asarray(z, dtype=np.float64), 0.0)


def relu_prime(z):
    # subgradient at 0 is taken as 0
    return (np.asarray(z) > 0).astype(np.float64)


ACTIVATIONS = {
    "relu": (relu, relu_prime),
    "sigmoid": (sigmoid, sigmoid_prime),
}


def h_activation(z, lam, base="relu"):
    """(1 - lam) * z + lam * act(z), elementwise.

    lam == 0 and lam == 1 return z and act(z) exactly, not via the blend.
    """
    act, _ = ACTIVATIONS[base]
    z = np.asarray(z, dtype=np.float64)
    if lam == 0.0:
        return z.copy()
    a = act(z)
    if lam == 1.0:
        return a
    return z + lam * (a - z)


def h_activation_grad(z, lam, base="relu"):
    """Return (d/dz, d/dlam) of :func:`h_activation`."""
    act, act_prime = ACTIVATIONS[base]
    z = np.asarray(z, dtype=np.float64)
    dz = (1.0 - lam) + lam * act_prime(z)
    dlam = act(z) - z
    return dz, dlam


def h_activation_parts(z, lam, base="relu"):
    """Value, d/dz and d/dlam of :func:`h_activation` sharing one act(z) evaluation."""
    act, _ = ACTIVATIONS[base]
    z = np.asarray(z, dtype=np.float64)
    a = act(z)
    if base == "sigmoid":
        prime = a * (1.0 - a)
    else:
        prime = (z > 0).astype(np.float64)
    if lam == 0.0:
        out = z.copy()
    elif lam == 1.0:
        out = a
    else:
        out = z + lam * (a - z)
    return out, (1.0 - lam) + lam * prime, a - z


def h_brightness(x, lam, baseline=0.0):
    """Fade an image from a constant ``baseline`` (lam=0) to ``x`` (lam=1)."""
    x = np.asarray(x, dtype=np.float64)
    if lam == 1.0:
        return x.copy()
    if lam == 0.0:
        return np.full_like(x, baseline)
    return (1.0 - lam) * baseline + lam * x


def blended_loss(hard, easy, lam):
    """Combine ``(value, grad)`` pairs of a hard loss L and easy loss M.

    Returns ``(value, grad_theta, grad_lambda)`` of lam*L + (1-lam)*M.
    """
    l_val, l_grad = hard
    m_val, m_grad = easy
    l_grad = np.asarray(l_grad, dtype=np.float64)
    m_grad = np.asarray(m_grad, dtype=np.float64)
    if lam == 0.0:
        value, grad = float(m_val), m_grad.copy()
    elif lam == 1.0:
        value, grad = float(l_val), l_grad.copy()
    else:
        value = lam * l_val + (1.0 - lam) * m_val
        grad = lam * l_grad + (1.0 - lam) * m_grad
    return value, grad, float(l_val - m_val)
