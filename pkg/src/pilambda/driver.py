"""The policy-iteration loop: roll characteristics, label, fit, repeat.

Each iteration freezes the greedy policy of the current model, integrates a
batch of characteristic curves from uniformly sampled initial states, labels
value and value-gradient along them, thins them to arc-length spacing
(optionally keeping only in-box points), and refits the model on the pooled
data with full-batch ADAM (parameters warm-started across iterations;
optimizer moments reset or carried per ``carry_adam_state``).  Per-iteration
metrics are kept as the experiment history.

Initial-state randomness is keyed only on (seed, trajectory count, iteration)
so sweeps over the loss weight or the training budget see identical data;
``resample_each_iteration=False`` freezes one initial-state set for the whole
run.  Curves that hit the blow-up guard still contribute their finite labeled
prefix; an iteration is recorded as diverged when no usable labeled point
survives at all, when training or metrics go non-finite, or when the residual
crosses the divergence threshold.  The run stops at the first diverged
iteration.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .characteristics import (LabeledPoint, drop_nonfinite, filter_box,
                              integrate_characteristics, label_gradient, label_value,
                              resample_arclength)
from .metrics import hjb_residual, rollup_score
from .models import ValueModel
from .problem import ControlProblem, argmin_hamiltonian_batch
from .training import AdamState, TrainConfig, train
from .validation import Box, TrainingDivergence, as_batch, require


@dataclass
class CharacteristicsConfig:
    """Integration and resampling knobs for the characteristic curves."""

    step: float = 0.01
    trunc_tol: float = 1e-6
    t_max: float = 100.0
    spacing: Optional[float] = None  # None: domain-box diameter / 50
    blowup_norm: float = 1e6

    def __post_init__(self):
        require(self.step > 0 and self.trunc_tol > 0 and self.t_max > 0,
                "step, trunc_tol and t_max must be positive")
        require(self.spacing is None or self.spacing > 0, "spacing must be positive")


@dataclass
class PiConfig:
    """Full configuration of one policy-iteration run."""

    n_trajectories: int
    n_iterations: int
    domain_box: Box
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    characteristics: CharacteristicsConfig = field(default_factory=CharacteristicsConfig)
    divergence_threshold: float = 1e3
    resample_each_iteration: bool = True
    residual_points: int = 10000
    n_workers: int = 1
    carry_adam_state: bool = False
    filter_to_box: bool = True
    rollup_each_iteration: bool = False
    rollup_sim_step: float = 0.01
    rollup_consecutive: bool = False

    def __post_init__(self):
        require(self.n_trajectories >= 1, "need at least one trajectory")
        require(self.n_iterations >= 1, "need at least one iteration")
        require(self.divergence_threshold > 0, "divergence_threshold must be positive")
        require(self.residual_points > 0, "residual_points must be positive")
        require(self.n_workers >= 1, "n_workers must be at least 1")

    @property
    def spacing(self) -> float:
        if self.characteristics.spacing is not None:
            return self.characteristics.spacing
        return self.domain_box.diameter / 50.0


@dataclass
class IterationRecord:
    """Metrics of one policy iteration."""

    iteration: int
    hjb_residual: float
    train_loss: float
    points_used: int
    diverged: bool
    rollup_count: Optional[float] = None


class IterationResult(NamedTuple):
    model: ValueModel
    record: IterationRecord
    adam_state: Optional[AdamState]


@dataclass
class RunSummary:
    """Whole-run statistics recomputable from the iteration records."""

    mean_residual: float
    diverged: bool
    iterations_completed: int
    rollup_count: Optional[float] = None


class PiRunResult(NamedTuple):
    model: ValueModel
    records: list[IterationRecord]
    summary: RunSummary
    models: Optional[list[ValueModel]]


def greedy_policy(problem: ControlProblem, model: ValueModel) -> Callable[[np.ndarray], np.ndarray]:
    """Feedback policy minimizing the Hamiltonian at the model's gradient."""

    def policy(x: np.ndarray) -> np.ndarray:
        if isinstance(x, np.ndarray) and x.ndim == 2:  # hot path: integrator batches
            return argmin_hamiltonian_batch(problem, x, model.gradient(x))
        xb, single = as_batch(x, problem.dim_state, "state")
        a = argmin_hamiltonian_batch(problem, xb, model.gradient(xb))
        return a[0] if single else a

    return policy


def initial_states(config: PiConfig, iteration: int) -> np.ndarray:
    """Uniform initial states from the stream keyed on (seed, N, iteration)."""
    k = iteration if config.resample_each_iteration else 0
    seq = np.random.SeedSequence([int(config.seed) & 0xFFFFFFFF,
                                  config.n_trajectories, k, 0x151])
    return config.domain_box.sample(np.random.default_rng(seq), config.n_trajectories)


def _label_chunk(problem, policy, lambda_hat, x0s, config: PiConfig):
    """Integrate and label one chunk of curves; returns per-curve point lists."""
    cc = config.characteristics
    trajectories = integrate_characteristics(
        problem, policy, x0s, cc.step, cc.trunc_tol, cc.t_max,
        lambda_hat=lambda_hat, blowup_norm=cc.blowup_norm)
    spacing = config.spacing
    out = []
    for traj in trajectories:
        phi = label_value(problem, traj)
        lam = label_gradient(problem, lambda_hat, traj)
        points = resample_arclength(traj, phi, lam, spacing)
        if config.filter_to_box:
            points = filter_box(points, config.domain_box)
        points = drop_nonfinite(points)
        out.append((points, traj.blown_up))
    return out


def gather_points(
    problem: ControlProblem,
    model: ValueModel,
    config: PiConfig,
    iteration: int,
) -> tuple[list[LabeledPoint], int]:
    """Labeled points for one iteration, pooled in trajectory order.

    Returns the points and the number of curves that hit the blow-up guard.
    Trajectory chunks may be processed by concurrent workers; each curve is
    computed independently and merged in index order, so the result does not
    depend on the worker count.
    """
    x0s = initial_states(config, iteration)
    policy = greedy_policy(problem, model)
    lambda_hat = model.gradient
    chunks = np.array_split(np.arange(config.n_trajectories),
                            min(config.n_workers, config.n_trajectories))
    chunks = [c for c in chunks if c.size > 0]
    if len(chunks) == 1:
        chunk_results = [_label_chunk(problem, policy, lambda_hat, x0s[chunks[0]], config)]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            futures = [pool.submit(_label_chunk, problem, policy, lambda_hat,
                                   x0s[c], config) for c in chunks]
            chunk_results = [f.result() for f in futures]
    points: list[LabeledPoint] = []
    blown = 0
    for result in chunk_results:
        for curve_points, blown_up in result:
            points.extend(curve_points)
            blown += int(blown_up)
    return points, blown


def run_iteration(
    problem: ControlProblem,
    model: ValueModel,
    config: PiConfig,
    iteration: int = 0,
    adam_state: Optional[AdamState] = None,
) -> IterationResult:
    """One policy iteration: sample, roll, label, fit, measure."""
    require(model.dim == problem.dim_state, "model dimension must match the problem")
    require(config.domain_box.dim == problem.dim_state, "domain box dimension mismatch")

    points, _ = gather_points(problem, model, config, iteration)
    if len(points) == 0:
        record = IterationRecord(iteration=iteration, hjb_residual=float("inf"),
                                 train_loss=float("nan"), points_used=0, diverged=True)
        return IterationResult(model=model, record=record, adam_state=adam_state)

    try:
        fit = train(model, points, config.train, state=adam_state)
        fitted, final_loss, next_state = fit.model, fit.final_loss, fit.state
        finite_params = bool(np.all(np.isfinite(fitted.get_params_vector())))
    except TrainingDivergence as exc:
        fitted = exc.model if exc.model is not None else model
        final_loss, next_state, finite_params = float("inf"), None, False

    residual = hjb_residual(problem, fitted, config.residual_points,
                            config.domain_box, seed=config.seed)
    diverged = (not finite_params) or (not np.isfinite(residual)) \
        or residual > config.divergence_threshold

    rollups = None
    if config.rollup_each_iteration and problem.name == "cartpole":
        rollups = rollup_score(problem, fitted, sim_step=config.rollup_sim_step,
                               consecutive=config.rollup_consecutive)
    record = IterationRecord(iteration=iteration, hjb_residual=residual,
                             train_loss=final_loss, points_used=len(points),
                             diverged=diverged, rollup_count=rollups)
    return IterationResult(model=fitted, record=record, adam_state=next_state)


def summarize_records(records: Sequence[IterationRecord], window: int = 20) -> RunSummary:
    """Mean residual over the last ``min(window, K)`` iterations, plus flags."""
    require(len(records) > 0, "no records to summarize")
    tail = records[-min(window, len(records)):]
    finite = [r.hjb_residual for r in tail if np.isfinite(r.hjb_residual)]
    mean_residual = float(np.mean(finite)) if finite else float("inf")
    rollups = [r.rollup_count for r in records if r.rollup_count is not None]
    return RunSummary(
        mean_residual=mean_residual,
        diverged=any(r.diverged for r in records),
        iterations_completed=len(records),
        rollup_count=rollups[-1] if rollups else None,
    )


def run_pi_lambda(
    problem: ControlProblem,
    initial_model: ValueModel,
    config: PiConfig,
    keep_models: bool = False,
) -> PiRunResult:
    """Run the full policy iteration, stopping at the first diverged iteration."""
    model = initial_model
    records: list[IterationRecord] = []
    models: Optional[list[ValueModel]] = [initial_model.copy()] if keep_models else None
    adam_state: Optional[AdamState] = None
    for k in range(config.n_iterations):
        result = run_iteration(problem, model, config, iteration=k,
                               adam_state=adam_state if config.carry_adam_state else None)
        model = result.model
        adam_state = result.adam_state
        records.append(result.record)
        if models is not None:
            models.append(model.copy())
        if result.record.diverged:
            break
    return PiRunResult(model=model, records=records,
                       summary=summarize_records(records), models=models)
