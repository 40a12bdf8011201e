"""Solution-quality metrics and the closed-form growth/contraction constants.

``hjb_residual`` measures the mean absolute defect of the stationary
dynamic-programming equation under the model's own greedy policy;
``rollup_score`` is the cart-pole closed-loop success count on a fixed grid
of initial conditions; ``weighted_gradient_gap`` is the weighted squared
distance between two models' gradients, the quantity whose geometric decay
certifies contraction of the iteration.  ``theory_bounds`` evaluates the
closed-form uniform bounds (C1..C4), the admissibility threshold rho1, the
contraction threshold rho2 and the rate eta(rho), together with the one-step
recurrences for the per-iteration growth constants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import ValueModel
from .problem import ControlProblem, minimize_hamiltonian
from .validation import Box, BoundInapplicable, require


def hjb_residual(
    problem: ControlProblem,
    model: ValueModel,
    n_points: int = 10000,
    box: Box | None = None,
    seed: int = 0,
) -> float:
    """Mean absolute stationarity defect over uniform sample points.

    Draws ``n_points`` states in the box, forms the greedy control from the
    model gradient, and averages ``|rho Phi - g . grad Phi - l|``.  Returns
    ``inf`` when the model output is non-finite (divergence signal rather
    than an exception).
    """
    require(n_points > 0, "n_points must be positive")
    box = problem.domain if box is None else box
    require(box is not None, "no sampling box available")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x41D]))
    X = box.sample(rng, n_points)
    value = model.value(X)
    grad = model.gradient(X)
    if not (np.all(np.isfinite(value)) and np.all(np.isfinite(grad))):
        return float("inf")
    a_star = minimize_hamiltonian(problem, X, grad)
    g = problem.dynamics(X, a_star)
    defect = problem.discount * value - np.einsum("ni,ni->n", g, grad) \
        - problem.cost(X, a_star)
    if not np.all(np.isfinite(defect)):
        return float("inf")
    return float(np.mean(np.abs(defect)))


def weighted_gradient_gap(
    model_a: ValueModel,
    model_b: ValueModel,
    probe_points: np.ndarray,
    alpha: float = 2.0,
) -> float:
    """Mean of ``|grad_a - grad_b|^2 / (1 + |x|^2)^(2 alpha)`` over the probes."""
    X = np.atleast_2d(np.asarray(probe_points, dtype=float))
    require(X.shape[0] > 0, "probe set must be nonempty")
    require(alpha > 1.0, "alpha must exceed 1")
    gap = model_a.gradient(X) - model_b.gradient(X)
    weight = (1.0 + np.einsum("ni,ni->n", X, X)) ** (2.0 * alpha)
    return float(np.mean(np.einsum("ni,ni->n", gap, gap) / weight))


def probe_grid(box: Box, n_points: int = 4096, seed: int = 0) -> np.ndarray:
    """Fixed seeded probe set used to report the gradient-gap sequence."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x6AB]))
    return box.sample(rng, n_points)


# ---------------------------------------------------------------------------
# Cart-pole roll-up score
# ---------------------------------------------------------------------------

def rollup_initial_grid() -> np.ndarray:
    """The fixed 10 x 10 grid of (omega0, psi0) with zero velocity/position."""
    omegas = -2.0 * np.pi + (4.0 * np.pi / 10.0) * np.arange(10)
    psis = -np.pi + (2.0 * np.pi / 10.0) * np.arange(10)
    grid = np.zeros((100, 4))
    om, ps = np.meshgrid(omegas, psis, indexing="ij")
    grid[:, 0] = om.ravel()
    grid[:, 1] = ps.ravel()
    return grid


def rollup_score(
    problem: ControlProblem,
    model: ValueModel,
    sim_step: float = 0.01,
    horizon: float = 20.0,
    hold_time: float = 10.0,
    angle_bound: float = np.pi / 4.0,
    position_bound: float = 10.0,
    consecutive: bool = False,
) -> float:
    """Count successful 20 s closed-loop runs from the fixed 100-state grid.

    A run succeeds when the wrapped pole angle stays within ``angle_bound``
    for a total (or, with ``consecutive=True``, an unbroken stretch) of at
    least ``hold_time`` seconds while the cart position never leaves
    ``position_bound``.  The policy is the model's greedy control, held
    constant within each simulation step.  Blow-ups count as failures.
    """
    require(problem.dim_state == 4 and problem.dim_control == 1,
            "rollup score is defined for the cart-pole problem")
    require(sim_step > 0, "sim_step must be positive")
    n_steps = int(round(horizon / sim_step))
    x = rollup_initial_grid()
    if problem.wrap_state is not None:
        x = problem.wrap_state(x)
    n = x.shape[0]
    alive = np.ones(n, dtype=bool)
    ok_position = np.abs(x[:, 3]) < position_bound
    upright_time = np.where(np.abs(x[:, 1]) < angle_bound, sim_step, 0.0)
    best_streak = upright_time.copy()
    streak = upright_time.copy()

    half = 0.5 * sim_step
    for _ in range(n_steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        xa = x[idx]
        grad = model.gradient(xa)
        force = minimize_hamiltonian(problem, xa, grad)  # zero-order hold
        k1 = problem.dynamics(xa, force)
        k2 = problem.dynamics(xa + half * k1, force)
        k3 = problem.dynamics(xa + half * k2, force)
        k4 = problem.dynamics(xa + sim_step * k3, force)
        x_new = xa + (sim_step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if problem.wrap_state is not None:
            x_new = problem.wrap_state(x_new)
        finite = np.all(np.isfinite(x_new), axis=1)
        alive[idx[~finite]] = False
        good = idx[finite]
        x[good] = x_new[finite]
        ok_position[good] &= np.abs(x[good, 3]) < position_bound
        upright = np.abs(x[good, 1]) < angle_bound
        upright_time[good] += np.where(upright, sim_step, 0.0)
        streak[good] = np.where(upright, streak[good] + sim_step, 0.0)
        best_streak[good] = np.maximum(best_streak[good], streak[good])

    held = best_streak if consecutive else upright_time
    success = alive & ok_position & (held >= hold_time - 1e-9)
    return float(np.sum(success))


# ---------------------------------------------------------------------------
# Growth-bound constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionConstants:
    """Structural constants of the dynamics/cost growth assumptions."""

    g_bar: float
    g2_bar: float
    l_bar: float
    l1_bar: float
    l2_bar: float
    c0: float
    c_s: float
    c_bar: float

    def __post_init__(self):
        require(self.g_bar > 0, "g_bar must be positive")
        require(self.l1_bar > 0, "l1_bar must be positive")
        require(self.c_s > 0, "c_s must be positive")
        require(self.c_bar > 0, "c_bar must be positive")
        for name in ("g2_bar", "l_bar", "l2_bar", "c0"):
            require(getattr(self, name) >= 0, f"{name} must be nonnegative")


@dataclass(frozen=True)
class BoundReport:
    """Uniform bounds, thresholds and the contraction rate evaluator."""

    C1: float
    C2: float
    C3: float
    C4: float
    rho1: float
    rho2: float
    alpha: float
    constants: AssumptionConstants

    def eta(self, rho: float) -> float:
        """Contraction factor for a given discount rate; < 1 when rho > rho2."""
        c = self.constants
        numerator = c.c_bar ** 2 * self.C4 / (2.0 * c.c_s) + c.l2_bar / 2.0 + c.g_bar / 2.0
        denominator = rho - (c.g_bar + c.c_bar * self.C2
                             + 5.0 * self.alpha * c.g_bar * (1.0 + self.C1)) - numerator
        if denominator <= 0:
            raise BoundInapplicable(
                f"discount rate {rho:g} too small for a contraction factor")
        return numerator / denominator


def theory_bounds(c: AssumptionConstants, alpha: float) -> BoundReport:
    """Evaluate the closed-form uniform bounds and thresholds.

    C1/C2 bound the policy magnitude/slope, C3/C4 the gradient magnitude and
    slope; rho1 is the discount level that keeps the growth recurrences
    bounded, rho2 >= rho1 additionally yields a contraction rate eta < 1.
    """
    require(alpha > 1.0, "alpha must exceed 1")
    root = math.sqrt(c.c_s * c.l2_bar + c.l2_bar ** 2
                     + c.g2_bar * math.sqrt(c.c_s * (c.l_bar ** 2 + c.c0 * c.l_bar) / c.g_bar))
    C1 = math.sqrt(c.c_bar * c.l_bar * (1.0 + c.c0 / c.l1_bar) / (c.g_bar * c.l1_bar)) \
        + c.c0 / c.l1_bar
    C2 = (c.l2_bar + root) / c.c_s
    C3 = math.sqrt(c.l1_bar * c.l_bar * (1.0 + c.c0 / c.l1_bar) / (c.g_bar * c.c_bar))
    C4 = root / c.c_bar
    rho1 = (c.g_bar * (1.0 + C1) + c.c_bar * C2 + 2.0 * c.g_bar
            + c.g_bar * c.c0 / c.l1_bar + c.l_bar * c.c_bar / c.l1_bar
            + 2.0 * math.sqrt(c.l_bar * (1.0 + c.c0 / c.l1_bar)
                              * c.g_bar * c.c_bar / c.l1_bar)
            + 2.0 * c.c_bar * c.l2_bar / c.c_s
            + 2.0 * math.sqrt((c.l2_bar + c.l2_bar ** 2 / c.c_s
                               + c.g2_bar * math.sqrt((c.l_bar ** 2 + c.c0 * c.l_bar)
                                                      / (c.g_bar * c.c_s)))
                              * c.c_bar ** 2 / c.c_s))
    rho2 = max(rho1, 2.0 * c.g_bar + c.c_bar * C2 + 5.0 * alpha * c.g_bar * (1.0 + C1)
               + c.c_bar ** 2 * C4 / c.c_s + c.l2_bar)
    return BoundReport(C1=C1, C2=C2, C3=C3, C4=C4, rho1=rho1, rho2=rho2,
                       alpha=alpha, constants=c)


def step_growth_bounds(
    c: AssumptionConstants,
    rho: float,
    lam_bar: float,
    lam_slope: float,
    a_bar: float,
    a_slope: float,
) -> tuple[float, float, float, float]:
    """One step of the growth-constant recurrences.

    Maps the current (gradient bound, gradient slope, policy bound, policy
    slope) to the next iteration's constants; the updated policy bounds are
    driven by the *new* gradient bounds.  Raises ``BoundInapplicable`` when a
    denominator is nonpositive, i.e. the discount rate is too small for the
    step to be meaningful.
    """
    denom_lam = rho - c.g_bar * (1.0 + a_bar)
    denom_slope = rho - (c.g_bar + c.c_bar * a_slope)
    if denom_lam <= 0 or denom_slope <= 0:
        raise BoundInapplicable("discount rate too small for the growth recurrences")
    lam_next = (c.l_bar + c.l_bar * a_bar + c.g_bar * lam_bar) / denom_lam
    slope_next = (c.l2_bar + c.l2_bar * a_slope + c.g2_bar * lam_bar
                  + c.g_bar * lam_slope) / denom_slope
    a_next = (c.c_bar * lam_next + c.c0) / c.l1_bar
    a_slope_next = (c.l2_bar + c.c_bar * slope_next) / c.c_s
    return lam_next, slope_next, a_next, a_slope_next
