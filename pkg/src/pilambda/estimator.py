"""Scikit-learn style front end for the policy-iteration solver.

``PiLambda`` keeps its hyperparameters as plain constructor attributes (so
``get_params`` / ``set_params`` / ``clone`` work through ``BaseEstimator``),
fits a value function to a :class:`~pilambda.problem.ControlProblem`, and
exposes the fitted value, value gradient and greedy policy through
``predict``-style methods.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .driver import (CharacteristicsConfig, PiConfig, greedy_policy, run_pi_lambda)
from .metrics import hjb_residual
from .models import QuadraticValueModel, RbfValueModel, ValueModel
from .problem import ControlProblem
from .training import TrainConfig
from .validation import Box, ContractViolation, as_batch, require


class PiLambda(BaseEstimator):
    """Value-gradient policy iteration as a fit/predict estimator.

    Parameters mirror :class:`~pilambda.driver.PiConfig` plus the model
    family.  ``fit`` consumes a control problem (the learning target is the
    problem itself; labeled data is generated internally along characteristic
    curves) and stores the fitted value model and per-iteration history.

    Attributes set by ``fit``: ``model_`` (the fitted value model),
    ``records_`` (iteration history), ``summary_`` (run statistics),
    ``diverged_``, ``problem_`` and optionally ``models_`` (per-iteration
    snapshots when ``keep_models=True``).
    """

    def __init__(
        self,
        model: str = "quadratic",
        n_modes: int = 50,
        mu: float = 0.5,
        n_trajectories: int = 10,
        n_iterations: int = 30,
        domain_box: Optional[Box] = None,
        seed: int = 0,
        step: float = 0.01,
        trunc_tol: float = 1e-6,
        t_max: float = 100.0,
        spacing: Optional[float] = None,
        blowup_norm: float = 1e6,
        learning_rate: float = 1e-2,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
        train_steps: int = 1000,
        loss_tol: float = 1e-10,
        divergence_threshold: float = 1e3,
        resample_each_iteration: bool = True,
        residual_points: int = 10000,
        n_workers: int = 1,
        carry_adam_state: bool = False,
        filter_to_box: bool = True,
        rollup_each_iteration: bool = False,
        keep_models: bool = False,
    ):
        self.model = model
        self.n_modes = n_modes
        self.mu = mu
        self.n_trajectories = n_trajectories
        self.n_iterations = n_iterations
        self.domain_box = domain_box
        self.seed = seed
        self.step = step
        self.trunc_tol = trunc_tol
        self.t_max = t_max
        self.spacing = spacing
        self.blowup_norm = blowup_norm
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.train_steps = train_steps
        self.loss_tol = loss_tol
        self.divergence_threshold = divergence_threshold
        self.resample_each_iteration = resample_each_iteration
        self.residual_points = residual_points
        self.n_workers = n_workers
        self.carry_adam_state = carry_adam_state
        self.filter_to_box = filter_to_box
        self.rollup_each_iteration = rollup_each_iteration
        self.keep_models = keep_models

    # ------------------------------------------------------------------
    def _resolve_box(self, problem: ControlProblem) -> Box:
        box = self.domain_box if self.domain_box is not None else problem.domain
        if box is None:
            raise ContractViolation(
                "no domain box: pass domain_box= or use a problem with a default domain")
        return box

    def _make_config(self, problem: ControlProblem) -> PiConfig:
        return PiConfig(
            n_trajectories=self.n_trajectories,
            n_iterations=self.n_iterations,
            domain_box=self._resolve_box(problem),
            seed=self.seed,
            train=TrainConfig(mu=self.mu, learning_rate=self.learning_rate,
                              beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon,
                              max_steps=self.train_steps, loss_tol=self.loss_tol),
            characteristics=CharacteristicsConfig(step=self.step, trunc_tol=self.trunc_tol,
                                                  t_max=self.t_max, spacing=self.spacing,
                                                  blowup_norm=self.blowup_norm),
            divergence_threshold=self.divergence_threshold,
            resample_each_iteration=self.resample_each_iteration,
            residual_points=self.residual_points,
            n_workers=self.n_workers,
            carry_adam_state=self.carry_adam_state,
            filter_to_box=self.filter_to_box,
            rollup_each_iteration=self.rollup_each_iteration,
        )

    def _initial_model(self, problem: ControlProblem, box: Box) -> ValueModel:
        if self.model == "quadratic":
            return QuadraticValueModel(problem.dim_state)
        if self.model == "rbf":
            return RbfValueModel.initialize(problem.dim_state, self.n_modes, box,
                                            seed=self.seed)
        raise ContractViolation(f"unknown model family {self.model!r}")

    # ------------------------------------------------------------------
    def fit(self, problem: ControlProblem, initial_model: Optional[ValueModel] = None):
        """Fit the value model to the problem; returns self."""
        require(isinstance(problem, ControlProblem), "fit expects a ControlProblem")
        box = self._resolve_box(problem)
        config = self._make_config(problem)
        model = initial_model.copy() if initial_model is not None \
            else self._initial_model(problem, box)
        result = run_pi_lambda(problem, model, config, keep_models=self.keep_models)
        self.problem_ = problem
        self.config_ = config
        self.model_ = result.model
        self.records_ = result.records
        self.summary_ = result.summary
        self.diverged_ = result.summary.diverged
        self.models_ = result.models
        return self

    def _check_fitted(self):
        require(hasattr(self, "model_"), "estimator is not fitted yet")

    def predict(self, X) -> np.ndarray:
        """Fitted value at the given states, in the problem's own sign convention."""
        self._check_fitted()
        Xb, single = as_batch(X, self.problem_.dim_state, "X")
        value = self.model_.value(Xb)
        if self.problem_.sign == "maximize":
            value = -value
        return float(value[0]) if single else value

    def predict_gradient(self, X) -> np.ndarray:
        self._check_fitted()
        Xb, single = as_batch(X, self.problem_.dim_state, "X")
        grad = self.model_.gradient(Xb)
        if self.problem_.sign == "maximize":
            grad = -grad
        return grad[0] if single else grad

    def predict_policy(self, X) -> np.ndarray:
        """Greedy control of the fitted model at the given states."""
        self._check_fitted()
        return greedy_policy(self.problem_, self.model_)(np.asarray(X, dtype=float))

    def score(self, X=None, y=None) -> float:
        """Negative HJB residual (higher is better, sklearn convention)."""
        self._check_fitted()
        return -hjb_residual(self.problem_, self.model_, self.residual_points,
                             self._resolve_box(self.problem_), seed=self.seed)
