"""Flat parameter vectors and joint (theta, lambda) geometry."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateSecant

TOL_SECANT = 1e-14


class Normalization(str, Enum):
    JOINT = "joint"
    PER_BLOCK = "paper_literal"


@dataclass(frozen=True)
class HomotopyPoint:
    theta: np.ndarray
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64))
        object.__setattr__(self, "lam", float(self.lam))

    def as_vector(self) -> np.ndarray:
        return np.append(self.theta, self.lam)

    @classmethod
    def from_vector(cls, z) -> HomotopyPoint:
        z = np.asarray(z, dtype=np.float64)
        return cls(z[:-1].copy(), float(z[-1]))


@dataclass(frozen=True)
class Secant:
    d_theta: np.ndarray
    d_lambda: float

    def as_vector(self) -> np.ndarray:
        return np.append(self.d_theta, self.d_lambda)


def flatten(layers) -> np.ndarray:
    """Concatenate ``[(W, b), ...]`` into one vector.

    Order is layer by layer; each layer contributes W row-major then b.
    ``b`` may be ``None`` or empty.
    """
    if len(layers) == 0:
        raise ValueError("need at least one layer")
    parts = []
    for w, b in layers:
        parts.append(np.asarray(w, dtype=np.float64).ravel())
        if b is not None:
            parts.append(np.asarray(b, dtype=np.float64).ravel())
    return np.concatenate(parts)


def unflatten(vector, shapes) -> list:
    """Inverse of :func:`flatten`. ``shapes`` is ``[(w_shape, b_len), ...]``."""
    vector = np.asarray(vector, dtype=np.float64)
    layers = []
    pos = 0
    for w_shape, b_len in shapes:
        n = int(np.prod(w_shape))
        w = vector[pos:pos + n].reshape(w_shape)
        pos += n
        b = vector[pos:pos + b_len]
        pos += b_len
        layers.append((w, b))
    if pos != vector.size:
        raise ValueError(f"vector has {vector.size} entries, shapes need {pos}")
    return layers


def joint_diff(a: HomotopyPoint, b: HomotopyPoint):
    if a.theta.shape != b.theta.shape:
        raise ValueError(f"dimension mismatch: {a.theta.shape} vs {b.theta.shape}")
    return a.theta - b.theta, a.lam - b.lam


def joint_norm(d_theta, d_lambda) -> float:
    return float(np.sqrt(np.dot(d_theta, d_theta) + d_lambda * d_lambda))


def secant_from(prev: HomotopyPoint, curr: HomotopyPoint,
                mode=Normalization.JOINT, tol=TOL_SECANT) -> Secant:
    d_theta, d_lambda = joint_diff(curr, prev)
    dist = joint_norm(d_theta, d_lambda)
    if dist <= tol:
        raise DegenerateSecant(f"points are {dist:.3g} apart")
    mode = Normalization(mode)
    if mode is Normalization.JOINT:
        return Secant(d_theta / dist, d_lambda / dist)
    # separate normalization of each block; a block with no movement stays zero
    n_theta = float(np.linalg.norm(d_theta))
    d_theta = d_theta / n_theta if n_theta > tol else np.zeros_like(d_theta)
    d_lambda = float(np.sign(d_lambda)) if abs(d_lambda) > tol else 0.0
    return Secant(d_theta, d_lambda)
