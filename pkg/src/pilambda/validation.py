"""Input validation helpers and the package's error taxonomy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ContractViolation(ValueError):
    """An argument breaks a documented precondition (shape, range, emptiness)."""


class OracleFailure(RuntimeError):
    """A reference solver (Riccati / Lyapunov) could not produce a valid solution."""


class BoundInapplicable(ValueError):
    """A bound formula was requested outside its region of validity (denominator <= 0)."""


class TrajectoryDivergence(RuntimeError):
    """State norm crossed the blow-up guard during integration.

    The partial trajectory accumulated up to the last recorded sample is
    attached as ``trajectory`` so callers can still use the finite prefix.
    """

    def __init__(self, message: str, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class TrainingDivergence(RuntimeError):
    """Loss or gradient became non-finite during training.

    ``model`` holds the last model with finite parameters.
    """

    def __init__(self, message: str, model=None):
        super().__init__(message)
        self.model = model


def require(condition: bool, message: str) -> None:
    if not condition:
        raise ContractViolation(message)


def as_vector(x, dim: int, name: str = "x") -> np.ndarray:
    """Coerce to a float vector of length ``dim``."""
    arr = np.asarray(x, dtype=float)
    require(arr.ndim == 1 and arr.shape[0] == dim,
            f"{name} must be a vector of length {dim}, got shape {arr.shape}")
    return arr


def as_batch(x, dim: int, name: str = "x") -> tuple[np.ndarray, bool]:
    """Coerce to a (n, dim) float batch.

    A single vector is promoted to a one-row batch; the second return value
    records whether the input was a single sample so callers can squeeze
    their output back.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    require(arr.ndim == 2 and arr.shape[1] == dim,
            f"{name} must have {dim} columns, got shape {np.asarray(x).shape}")
    return arr, single


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by per-dimension closed bounds."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        require(lower.shape == upper.shape and lower.ndim == 1,
                "box bounds must be equal-length vectors")
        require(bool(np.all(lower <= upper)), "box lower bounds must not exceed upper bounds")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def diameter(self) -> float:
        edges = self.upper - self.lower
        finite = np.isfinite(edges)
        return float(np.sqrt(np.sum(edges[finite] ** 2)))

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Row-wise closed-box membership for a batch of points."""
        pts, single = as_batch(x, self.dim, "point")
        inside = np.all((pts >= self.lower) & (pts <= self.upper), axis=1)
        return bool(inside[0]) if single else inside

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        require(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)),
                "cannot sample from an unbounded box")
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def clip(self, a: np.ndarray) -> np.ndarray:
        return np.clip(a, self.lower, self.upper)


def unbounded_box(dim: int) -> Box:
    return Box(np.full(dim, -np.inf), np.full(dim, np.inf))
