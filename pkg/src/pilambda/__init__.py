"""Value-gradient policy iteration for discounted continuous-time optimal control.

The solver alternates between rolling characteristic curves under the current
greedy policy, labeling the value function and its gradient along them by
discounted line integrals, and refitting a parametric value model on the
weighted combination of both label sets.
"""

__version__ = "0.1.0"

from .benchmarks import (AdvertisingSpec, CartPoleSpec, LqrSpec, lqr_test_spec,
                         lyapunov_policy_oracle, make_advertising, make_cartpole,
                         make_lqr, riccati_oracle)
from .characteristics import (LabeledPoint, Trajectory, filter_box,
                              integrate_characteristic, label_gradient, label_value,
                              resample_arclength)
from .driver import (CharacteristicsConfig, IterationRecord, PiConfig, RunSummary,
                     greedy_policy, run_iteration, run_pi_lambda)
from .estimator import PiLambda
from .metrics import (AssumptionConstants, BoundReport, hjb_residual, rollup_score,
                      step_growth_bounds, theory_bounds, weighted_gradient_gap)
from .models import (QuadraticValueModel, RbfValueModel, ValueModel,
                     load_checkpoint, save_checkpoint)
from .problem import (ControlProblem, evaluate_cost, evaluate_dynamics, hamiltonian,
                      minimize_hamiltonian)
from .training import AdamState, TrainConfig, loss, loss_gradient, train
from .validation import (BoundInapplicable, Box, ContractViolation, OracleFailure,
                         TrainingDivergence, TrajectoryDivergence)

__all__ = [
    "AdamState", "AdvertisingSpec", "AssumptionConstants", "BoundInapplicable",
    "BoundReport", "Box", "CartPoleSpec", "CharacteristicsConfig", "ContractViolation",
    "ControlProblem", "IterationRecord", "LabeledPoint", "LqrSpec", "OracleFailure",
    "PiConfig", "PiLambda", "QuadraticValueModel", "RbfValueModel", "RunSummary",
    "TrainConfig", "TrainingDivergence", "Trajectory", "TrajectoryDivergence",
    "ValueModel", "evaluate_cost", "evaluate_dynamics", "filter_box", "greedy_policy",
    "hamiltonian", "hjb_residual", "integrate_characteristic", "label_gradient",
    "label_value", "load_checkpoint", "loss", "loss_gradient", "lqr_test_spec",
    "lyapunov_policy_oracle", "make_advertising", "make_cartpole", "make_lqr",
    "minimize_hamiltonian", "resample_arclength", "riccati_oracle", "rollup_score",
    "run_iteration", "run_pi_lambda", "save_checkpoint", "step_growth_bounds",
    "theory_bounds", "train", "weighted_gradient_gap",
]
