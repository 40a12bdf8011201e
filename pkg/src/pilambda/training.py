"""Mu-weighted supervised loss over labeled points and full-batch ADAM."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .characteristics import LabeledPoint
from .models import ValueModel
from .validation import TrainingDivergence, require


@dataclass
class TrainConfig:
    mu: float = 0.5
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_steps: int = 1000
    loss_tol: float = 1e-10

    def __post_init__(self):
        require(0.0 <= self.mu <= 1.0, "mu must lie in [0, 1]")
        require(self.learning_rate > 0, "learning_rate must be positive")
        require(0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0,
                "beta1, beta2 must lie in (0, 1)")
        require(self.epsilon > 0, "epsilon must be positive")
        require(self.max_steps >= 0, "max_steps must be nonnegative")
        require(self.loss_tol >= 0, "loss_tol must be nonnegative")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n_params: int) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), t=0)


class TrainResult(NamedTuple):
    model: ValueModel
    final_loss: float
    steps_taken: int
    state: AdamState


def stack_points(points: Sequence[LabeledPoint]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    require(len(points) > 0, "need at least one labeled point")
    X = np.stack([pt.x for pt in points])
    phi = np.array([pt.phi for pt in points], dtype=float)
    lam = np.stack([pt.lam for pt in points])
    return X, phi, lam


def _residuals(model: ValueModel, X, phi, lam) -> tuple[np.ndarray, np.ndarray]:
    value, grad = model.value_and_gradient(X)
    return phi - value, lam - grad


def _loss_terms(model: ValueModel, X, phi, lam) -> tuple[float, float]:
    r_phi, r_lam = _residuals(model, X, phi, lam)
    return float(np.sum(r_phi ** 2)), float(np.sum(r_lam ** 2))


def loss(model: ValueModel, points: Sequence[LabeledPoint], mu: float) -> float:
    """mu * sum of squared value errors + (1 - mu) * sum of squared gradient errors.

    Plain sums over the points in their given order, per the discrete reading
    of the training objective; no averaging.
    """
    require(0.0 <= mu <= 1.0, "mu must lie in [0, 1]")
    X, phi, lam = stack_points(points)
    phi_term, lam_term = _loss_terms(model, X, phi, lam)
    return mu * phi_term + (1.0 - mu) * lam_term


def loss_gradient(model: ValueModel, points: Sequence[LabeledPoint], mu: float) -> np.ndarray:
    require(0.0 <= mu <= 1.0, "mu must lie in [0, 1]")
    X, phi, lam = stack_points(points)
    return _loss_gradient_arrays(model, X, phi, lam, mu)


def _gradient_from_residuals(model, X, r_phi, r_lam, mu) -> np.ndarray:
    return model.loss_gradient_terms(X, -2.0 * mu * r_phi,
                                     -2.0 * (1.0 - mu) * r_lam)


def _loss_gradient_arrays(model, X, phi, lam, mu) -> np.ndarray:
    r_phi, r_lam = _residuals(model, X, phi, lam)
    return _gradient_from_residuals(model, X, r_phi, r_lam, mu)


def train(
    model: ValueModel,
    points: Sequence[LabeledPoint],
    config: TrainConfig,
    state: Optional[AdamState] = None,
    trace: Optional[list] = None,
) -> TrainResult:
    """Fit the model with full-batch ADAM; the input model is not mutated.

    Stops after ``max_steps`` or as soon as the loss drops to ``loss_tol``.
    A fresh optimizer state is used unless one is passed in (warm moments).
    ``trace``, if given, collects ``(step, loss)`` pairs for the loss curve.
    Non-finite loss or gradient raises ``TrainingDivergence`` carrying the
    last finite model.
    """
    X, phi, lam = stack_points(points)
    fitted = model.copy()
    theta = fitted.get_params_vector()
    state = AdamState.zeros(theta.shape[0]) if state is None else state
    require(state.m.shape == theta.shape and state.v.shape == theta.shape,
            "optimizer state does not match parameter count")
    lr, b1, b2, eps = (config.learning_rate, config.beta1, config.beta2, config.epsilon)
    mu = config.mu

    def evaluate() -> tuple[float, np.ndarray, np.ndarray]:
        r_phi, r_lam = _residuals(fitted, X, phi, lam)
        value = mu * float(np.sum(r_phi ** 2)) + (1.0 - mu) * float(np.sum(r_lam ** 2))
        return value, r_phi, r_lam

    steps = 0
    value, r_phi, r_lam = evaluate()
    if trace is not None:
        trace.append((0, value))
    for step in range(config.max_steps):
        if not np.isfinite(value):
            raise TrainingDivergence("loss became non-finite", model=_rollback(model, fitted))
        if value <= config.loss_tol:
            break
        grad = _gradient_from_residuals(fitted, X, r_phi, r_lam, mu)
        if not np.all(np.isfinite(grad)):
            raise TrainingDivergence("gradient became non-finite", model=_rollback(model, fitted))
        state.t += 1
        state.m = b1 * state.m + (1.0 - b1) * grad
        state.v = b2 * state.v + (1.0 - b2) * grad * grad
        m_hat = state.m / (1.0 - b1 ** state.t)
        v_hat = state.v / (1.0 - b2 ** state.t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
        fitted.set_params_vector(theta)
        steps = step + 1
        value, r_phi, r_lam = evaluate()
        if trace is not None:
            trace.append((steps, value))
    if not np.isfinite(value):
        raise TrainingDivergence("loss became non-finite", model=_rollback(model, fitted))
    return TrainResult(model=fitted, final_loss=value, steps_taken=steps, state=state)


def _rollback(original: ValueModel, fitted: ValueModel) -> ValueModel:
    theta = fitted.get_params_vector()
    if np.all(np.isfinite(theta)):
        return fitted
    return original.copy()


def write_loss_trace(path, trace: Sequence[tuple[int, float]]) -> None:
    """Per-step loss curve as CSV (step, loss)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for step, value in trace:
            writer.writerow([step, repr(float(value))])
