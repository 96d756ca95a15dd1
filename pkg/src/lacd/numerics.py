"""Dense numeric kernels with hand-written backward passes.

Matrices are float64 numpy arrays in C (row-major) order; a Param pairs a
value with an accumulating grad buffer of the same shape.  Backward helpers
take the forward inputs explicitly instead of taping a graph: the network
architectures in this package are small and fixed, so each one spells out
its own chain rule and verifies it against finite_diff_check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

EPS_PROB = 1e-7  # probability clamp before logs


class ContractError(ValueError):
    """Shape or domain violation in a numeric kernel."""


def _as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ContractError(f"expected a matrix, got shape {a.shape}")
    return a


@dataclass
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise ContractError(f"param {self.name}: grad shape {self.grad.shape} != value shape {self.value.shape}")

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


def zero_grads(params: Sequence[Param]) -> None:
    for p in params:
        p.zero_grad()


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


# ---------------------------------------------------------------------------
# Linear layer


def linear_forward(x: np.ndarray, W: Param, b: Optional[Param] = None) -> np.ndarray:
    x = _as_matrix(x)
    if x.shape[1] != W.value.shape[0]:
        raise ContractError(f"linear: x cols {x.shape[1]} != W rows {W.value.shape[0]}")
    y = x @ W.value
    if b is not None:
        y = y + b.value.reshape(1, -1)
    return y


def linear_backward(x: np.ndarray, W: Param, b: Optional[Param], dy: np.ndarray) -> np.ndarray:
    """Accumulates into W.grad (and b.grad), returns dL/dx."""
    x = _as_matrix(x)
    dy = _as_matrix(dy)
    W.grad += x.T @ dy
    if b is not None:
        b.grad += dy.sum(axis=0).reshape(b.value.shape)
    return dy @ W.value.T


# ---------------------------------------------------------------------------
# Activations: forward plus dx = *_backward(x, dy)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (x > 0.0)


def leaky_relu(x: np.ndarray, alpha: float = 0.2) -> np.ndarray:
    return np.where(x > 0.0, x, alpha * x)


def leaky_relu_backward(x: np.ndarray, dy: np.ndarray, alpha: float = 0.2) -> np.ndarray:
    return dy * np.where(x > 0.0, 1.0, alpha)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    # exp(-|x|) keeps both branches overflow-free
    e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return dy * s * (1.0 - s)


def elu(x: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0.0, x, alpha * np.expm1(x))


def elu_backward(x: np.ndarray, dy: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return dy * np.where(x > 0.0, 1.0, alpha * np.exp(x))


def identity(x: np.ndarray) -> np.ndarray:
    return x


def identity_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy


# ---------------------------------------------------------------------------
# Similarities and losses


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ContractError(f"cosine: length mismatch {u.shape} vs {v.shape}")
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ v / (nu * nv))


def cosine_sim_backward(u: np.ndarray, v: np.ndarray, dcos: float) -> tuple[np.ndarray, np.ndarray]:
    """d cos / du and / dv; zero at the zero-vector convention point."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return np.zeros_like(u), np.zeros_like(v)
    c = float(u @ v / (nu * nv))
    du = dcos * (v / (nu * nv) - c * u / (nu * nu))
    dv = dcos * (u / (nu * nv) - c * v / (nv * nv))
    return du, dv


def bce_loss(y_hat: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross entropy and its gradient wrt y_hat.

    Predictions are clamped to [EPS_PROB, 1 - EPS_PROB] before the logs; the
    gradient is zero where the clamp is active, matching the clamped forward.
    """
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if y_hat.shape != y.shape:
        raise ContractError(f"bce: length mismatch {y_hat.shape} vs {y.shape}")
    if y_hat.size == 0:
        raise ContractError("bce: empty batch")
    clamped = np.clip(y_hat, EPS_PROB, 1.0 - EPS_PROB)
    n = y.size
    loss = float(-np.mean(y * np.log(clamped) + (1.0 - y) * np.log1p(-clamped)))
    inside = (y_hat > EPS_PROB) & (y_hat < 1.0 - EPS_PROB)
    grad = np.where(inside, -(y / clamped - (1.0 - y) / (1.0 - clamped)) / n, 0.0)
    return loss, grad


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: Sequence[Param], state: AdamState) -> None:
    state.t += 1
    b1t = 1.0 - state.beta1**state.t
    b2t = 1.0 - state.beta2**state.t
    for p in params:
        if p.name not in state.m:
            state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        m, v = state.m[p.name], state.v[p.name]
        m += (1.0 - state.beta1) * (p.grad - m)
        v += (1.0 - state.beta2) * (p.grad * p.grad - v)
        p.value -= state.lr * (m / b1t) / (np.sqrt(v / b2t) + state.eps)


# ---------------------------------------------------------------------------
# Gradient checking


def finite_diff_check(f: Callable[[], float], params: Sequence[Param], h: float = 1e-4) -> float:
    """Worst relative error between analytic grads and central differences.

    ``f`` must zero grads, run forward + backward over ``params`` and return
    the scalar loss.  Relative error is |fd - g| / max(1, |fd|, |g|) so tiny
    gradients are compared absolutely.
    """
    f()
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.value.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = f()
            flat[i] = keep - h
            down = f()
            flat[i] = keep
            fd = (up - down) / (2.0 * h)
            gi = g.ravel()[i]
            err = abs(fd - gi) / max(1.0, abs(fd), abs(gi))
            if err > worst:
                worst = err
    f()  # leave grads consistent with the unperturbed values
    return worst
