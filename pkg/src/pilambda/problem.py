"""Discounted continuous-time control problems and the pointwise Hamiltonian.

A problem bundles the state dynamics ``g``, the running cost ``l``, their
first derivatives, the discount rate and the admissible control box.  All
callables are batch-first: states are ``(n, d)`` arrays, controls ``(n, p)``
arrays, and outputs carry the leading batch axis.  The module-level
operations accept either a single vector or a batch and mirror the input
shape on output.

The dynamics is assumed affine in the control, ``g(x, a) = g1(x) + c^T a``,
which makes the Hamiltonian

    H(x, lam, a) = g(x, a) . lam + l(x, a)

either quadratic or linear in ``a``.  ``minimize_hamiltonian`` exploits that
structure: with a constant positive-definite control-cost Hessian the
minimizer is closed form and clipped to the admissible box; with no control
cost the minimizer is bang-bang at the active bound.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .validation import Box, ContractViolation, as_batch, require

Array = np.ndarray
BatchFn = Callable[..., Array]


@dataclass(frozen=True)
class ControlProblem:
    """A discounted deterministic control problem in minimization form.

    Parameters
    ----------
    dim_state, dim_control : int
        State dimension ``d`` and control dimension ``p``.
    discount : float
        Discount rate ``rho > 0`` per unit time.
    control_bounds : Box
        Admissible control box (bounds may be infinite).
    dynamics : callable
        ``(x (n,d), a (n,p)) -> (n,d)``, the state velocity ``g(x, a)``.
    dynamics_jacobian_state : callable
        ``(x, a) -> (n,d,d)`` with entry ``[., i, j] = d g_i / d x_j``.
    dynamics_jacobian_control : callable
        ``x -> (n,d,p)`` with entry ``[., i, j] = d g_i / d a_j``.  Constant
        under the affine-control assumption, though a state-dependent matrix
        is accepted for benchmark dynamics that need it pointwise.
    cost : callable
        ``(x, a) -> (n,)``, the running cost ``l(x, a)``.
    cost_grad_state, cost_grad_control : callable
        Gradients of ``l`` with respect to ``x`` and ``a``.
    control_cost_hessian : (p, p) array or None
        Constant Hessian of ``l`` in ``a``.  ``None`` (or a zero matrix)
        declares the Hamiltonian linear in the control, selecting the
        bang-bang branch of the minimizer.
    sign : str
        ``"minimize"`` or ``"maximize"``.  Maximization problems are stored
        in negated (minimization) form; ``objective`` undoes the negation.
    wrap_state : callable or None
        Optional periodic-coordinate wrap applied after each integration
        step (e.g. angle wrapping).
    domain : Box or None
        Natural box for sampling and training, used as a default by the
        solver and the experiment runner.
    """

    dim_state: int
    dim_control: int
    discount: float
    control_bounds: Box
    dynamics: BatchFn
    dynamics_jacobian_state: BatchFn
    dynamics_jacobian_control: BatchFn
    cost: BatchFn
    cost_grad_state: BatchFn
    cost_grad_control: BatchFn
    control_cost_hessian: Optional[Array] = None
    sign: str = "minimize"
    wrap_state: Optional[Callable[[Array], Array]] = None
    domain: Optional[Box] = None
    name: str = ""
    control_jacobian_constant: bool = False

    def __post_init__(self):
        require(self.dim_state >= 1 and self.dim_control >= 1, "dimensions must be positive")
        require(self.discount > 0, "discount rate must be positive")
        require(self.sign in ("minimize", "maximize"), "sign must be 'minimize' or 'maximize'")
        require(self.control_bounds.dim == self.dim_control,
                "control bounds dimension must match dim_control")
        if self.control_cost_hessian is not None:
            hess = np.asarray(self.control_cost_hessian, dtype=float)
            require(hess.shape == (self.dim_control, self.dim_control),
                    "control_cost_hessian must be (p, p)")
            object.__setattr__(self, "control_cost_hessian", hess)
        # Precompute the Hamiltonian-minimizer machinery once; the minimizer
        # runs at every integrator stage.
        linear = self.control_cost_hessian is None or not np.any(self.control_cost_hessian)
        object.__setattr__(self, "_linear", linear)
        object.__setattr__(self, "_hess_inv",
                           None if linear else np.linalg.inv(self.control_cost_hessian))
        lower, upper = self.control_bounds.lower, self.control_bounds.upper
        tie = np.where((lower <= 0.0) & (upper >= 0.0), 0.0,
                       np.where(np.abs(lower) <= np.abs(upper), lower, upper))
        object.__setattr__(self, "_tie_control", tie)
        ctrl_jac = None
        if self.control_jacobian_constant:
            ctrl_jac = np.asarray(self.dynamics_jacobian_control(
                np.zeros((1, self.dim_state))), dtype=float)
            ctrl_jac = ctrl_jac[0] if ctrl_jac.ndim == 3 else ctrl_jac
        object.__setattr__(self, "_ctrl_jac_const", ctrl_jac)

    def objective(self, x, a) -> Array:
        """Running objective as posed by the user (un-negated for maximization)."""
        cost = evaluate_cost(self, x, a)
        return -cost if self.sign == "maximize" else cost

    @property
    def linear_in_control(self) -> bool:
        return self._linear


def _coerce(problem: ControlProblem, x, a):
    xb, x_single = as_batch(x, problem.dim_state, "state")
    ab, a_single = as_batch(a, problem.dim_control, "control")
    require(xb.shape[0] == ab.shape[0] or xb.shape[0] == 1 or ab.shape[0] == 1,
            "state and control batches must broadcast")
    if xb.shape[0] == 1 and ab.shape[0] > 1:
        xb = np.broadcast_to(xb, (ab.shape[0], problem.dim_state))
    if ab.shape[0] == 1 and xb.shape[0] > 1:
        ab = np.broadcast_to(ab, (xb.shape[0], problem.dim_control))
    return xb, ab, x_single and a_single


def evaluate_dynamics(problem: ControlProblem, x, a) -> Array:
    """Evaluate the state velocity ``g(x, a)``.

    Raises ``ContractViolation`` on dimension mismatch; the output is
    required to be finite for finite inputs.
    """
    xb, ab, single = _coerce(problem, x, a)
    out = problem.dynamics(xb, ab)
    return out[0] if single else out


def evaluate_cost(problem: ControlProblem, x, a) -> Array:
    xb, ab, single = _coerce(problem, x, a)
    out = problem.cost(xb, ab)
    return float(out[0]) if single else out


def hamiltonian(problem: ControlProblem, x, lam, a) -> Array:
    """Pointwise Hamiltonian ``H(x, lam, a) = g(x, a) . lam + l(x, a)``."""
    xb, ab, single = _coerce(problem, x, a)
    lb, _ = as_batch(lam, problem.dim_state, "lam")
    if lb.shape[0] == 1 and xb.shape[0] > 1:
        lb = np.broadcast_to(lb, xb.shape)
    g = problem.dynamics(xb, ab)
    h = np.einsum("ni,ni->n", g, lb) + problem.cost(xb, ab)
    return float(h[0]) if single else h


def argmin_hamiltonian_batch(problem: ControlProblem, X: Array, L: Array) -> Array:
    """Validation-free batch Hamiltonian minimizer for hot loops.

    ``X`` and ``L`` must already be matching ``(n, d)`` arrays.  All row
    operations are elementwise or einsum-based, so each row's control is
    bitwise independent of the rest of the batch.
    """
    if problem._ctrl_jac_const is not None:
        coeff = np.einsum("dp,nd->np", problem._ctrl_jac_const, L)
    else:
        ctrl_jac = np.asarray(problem.dynamics_jacobian_control(X), dtype=float)
        if ctrl_jac.ndim == 2:
            coeff = np.einsum("dp,nd->np", ctrl_jac, L)
        else:
            coeff = np.einsum("ndp,nd->np", ctrl_jac, L)
    coeff = coeff + problem.cost_grad_control(X, np.zeros((X.shape[0], problem.dim_control)))
    lower, upper = problem.control_bounds.lower, problem.control_bounds.upper
    if problem._linear:
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ContractViolation(
                "Hamiltonian linear in the control requires finite control bounds")
        return np.where(coeff > 0.0, lower,
                        np.where(coeff < 0.0, upper, problem._tie_control))
    a_unc = -np.einsum("pq,nq->np", problem._hess_inv, coeff)
    return np.clip(a_unc, lower, upper)


def minimize_hamiltonian(problem: ControlProblem, x, lam) -> Array:
    """Admissible minimizer of ``a -> H(x, lam, a)``.

    With a constant SPD control-cost Hessian ``Hc`` the unconstrained
    first-order condition ``Hc a + (B^T lam + grad_a l(x, 0)) = 0`` is solved
    and clipped to the control box (exact for separable costs, which covers
    every benchmark).  Without a control cost the Hamiltonian is linear in
    each control component, so the minimizer sits at the bound opposing the
    sign of the linear coefficient; an exactly zero coefficient selects 0 if
    admissible, else the bound nearest 0.
    """
    xb, x_single = as_batch(x, problem.dim_state, "state")
    lb, _ = as_batch(lam, problem.dim_state, "lam")
    if lb.shape[0] == 1 and xb.shape[0] > 1:
        lb = np.broadcast_to(lb, xb.shape)
    require(lb.shape == xb.shape, "lam batch must match state batch")
    a = argmin_hamiltonian_batch(problem, xb, lb)
    return a[0] if x_single else a
