"""The three benchmark problems and their independent ground-truth oracles.

A linear-quadratic regulator family (with an algebraic-Riccati oracle and a
Lyapunov policy-evaluation oracle), a cart-pole swing-up/balance task, and a
three-state advertising process.  The oracles are deliberately computed by
standard dense linear-algebra routines so they stay independent of the
characteristics-based solver they validate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .problem import ControlProblem
from .validation import Box, OracleFailure, require

# Fixed seeds for the random LQR instances so "test 2" / "test 3" are
# reproducible realizations of A = (a^T a + I) / d.
LQR_TEST2_SEED = 2
LQR_TEST3_SEED = 3


# ---------------------------------------------------------------------------
# Linear-quadratic regulator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LqrSpec:
    """System matrices for the LQR benchmark with cost ``|x|^2 + |u|^2``."""

    A: np.ndarray
    B: np.ndarray
    discount: float = 1.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        require(A.shape[0] == A.shape[1], "A must be square")
        require(B.shape[0] == A.shape[0], "B must have as many rows as A")
        require(self.discount > 0, "discount must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def dim_state(self) -> int:
        return self.A.shape[0]

    @property
    def dim_control(self) -> int:
        return self.B.shape[1]


def lqr_test_spec(test: str, dim: int = 5, discount: float = 1.0) -> LqrSpec:
    """Named LQR instances: t1 is A = I, t2/t3 are fixed random realizations."""
    if test == "t1":
        A = np.eye(dim)
    elif test in ("t2", "t3"):
        seed = LQR_TEST2_SEED if test == "t2" else LQR_TEST3_SEED
        a = np.random.default_rng(seed).standard_normal((dim, dim))
        A = (a.T @ a + np.eye(dim)) / dim
    else:
        raise ValueError(f"unknown LQR test name: {test!r}")
    return LqrSpec(A=A, B=np.eye(dim), discount=discount)


def make_lqr(spec: LqrSpec) -> ControlProblem:
    """Control problem with ``xdot = A x + B a`` and cost ``|x|^2 + |a|^2``."""
    A, B = spec.A, spec.B
    d, p = spec.dim_state, spec.dim_control

    def dynamics(x, a):
        return np.einsum("ij,nj->ni", A, x) + np.einsum("ij,nj->ni", B, a)

    def jac_state(x, a):
        return np.broadcast_to(A, (x.shape[0], d, d))

    def jac_control(x):
        return np.broadcast_to(B, (x.shape[0], d, p))

    def cost(x, a):
        return np.einsum("ni,ni->n", x, x) + np.einsum("ni,ni->n", a, a)

    def cost_grad_state(x, a):
        return 2.0 * x

    def cost_grad_control(x, a):
        return 2.0 * a

    return ControlProblem(
        dim_state=d,
        dim_control=p,
        discount=spec.discount,
        control_bounds=Box(np.full(p, -np.inf), np.full(p, np.inf)),
        dynamics=dynamics,
        dynamics_jacobian_state=jac_state,
        dynamics_jacobian_control=jac_control,
        cost=cost,
        cost_grad_state=cost_grad_state,
        cost_grad_control=cost_grad_control,
        control_cost_hessian=2.0 * np.eye(p),
        domain=Box(np.full(d, -1.0), np.full(d, 1.0)),
        name="lqr",
        control_jacobian_constant=True,
    )


def stabilizing_quadratic_start(spec: LqrSpec, margin: float = 1.0) -> np.ndarray:
    """A conservative initial Q whose greedy policy stabilizes the plant.

    Policy iteration needs a stabilizing initial policy on open-loop-unstable
    plants; with ``Q0 = c I`` the induced gain is ``B^T Q0`` and the closed
    loop is ``A - c B B^T``, so any ``c`` above the largest real eigenvalue
    part of ``A`` works when ``B B^T >= I`` (true for the identity-actuated
    benchmarks).  No Riccati information is used.
    """
    c = margin + max(0.0, float(np.max(np.real(np.linalg.eigvals(spec.A)))))
    return c * np.eye(spec.dim_state)


def riccati_oracle(spec: LqrSpec) -> np.ndarray:
    """Stabilizing solution P of ``A^T P + P A - P B B^T P + I = rho P``.

    Shifting ``A`` by ``-rho/2 I`` turns the discounted equation into the
    standard continuous-time algebraic Riccati equation, which is solved by a
    dense Schur method.  The value-function oracle is ``Phi(x) = x^T P x``
    with optimal gain ``K = B^T P``.
    """
    A, B = spec.A, spec.B
    d = spec.dim_state
    shifted = A - 0.5 * spec.discount * np.eye(d)
    try:
        P = scipy.linalg.solve_continuous_are(shifted, B, np.eye(d), np.eye(spec.dim_control))
    except Exception as exc:  # scipy raises LinAlgError or ValueError
        raise OracleFailure(f"Riccati solve failed: {exc}") from exc
    P = 0.5 * (P + P.T)
    residual = A.T @ P + P @ A - P @ B @ B.T @ P + np.eye(d) - spec.discount * P
    if not np.all(np.isfinite(P)) or np.linalg.norm(residual) > 1e-8 * (1.0 + np.linalg.norm(P)):
        raise OracleFailure("Riccati residual check failed")
    return P


def lyapunov_policy_oracle(spec: LqrSpec, K: np.ndarray) -> np.ndarray:
    """Policy-evaluation matrix P_K for the fixed linear policy ``a = -K x``.

    Solves ``(A - BK)^T P + P (A - BK) - rho P + I + K^T K = 0``; requires the
    discounted closed loop to converge, i.e. ``rho > 2 max Re eig(A - BK)``.
    Then ``Phi_K(x) = x^T P_K x`` and ``lambda_K(x) = 2 P_K x`` are exact.
    """
    A, B = spec.A, spec.B
    d = spec.dim_state
    K = np.atleast_2d(np.asarray(K, dtype=float))
    require(K.shape == (spec.dim_control, d), "K must be (p, d)")
    closed = A - B @ K
    margin = spec.discount - 2.0 * np.max(np.real(np.linalg.eigvals(closed)))
    if margin <= 0:
        raise OracleFailure("closed loop diverges: discount too small for policy evaluation")
    shifted = closed - 0.5 * spec.discount * np.eye(d)
    Q = np.eye(d) + K.T @ K
    P = scipy.linalg.solve_continuous_lyapunov(shifted.T, -Q)
    P = 0.5 * (P + P.T)
    residual = closed.T @ P + P @ closed - spec.discount * P + Q
    if not np.all(np.isfinite(P)) or np.linalg.norm(residual) > 1e-10 * (1.0 + np.linalg.norm(P)):
        raise OracleFailure("Lyapunov residual check failed")
    return P


# ---------------------------------------------------------------------------
# Cart-pole balancing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CartPoleSpec:
    """Cart-pole constants; gravity defaults to 9.8 (not fixed by the task)."""

    ball_mass: float = 0.1
    pole_length: float = 0.5
    cart_mass: float = 1.0
    cart_friction: float = 5e-4
    pole_friction: float = 2e-6
    force_max: float = 10.0
    gravity: float = 9.8
    discount: float = 5.0
    position_weight: float = 0.2

    def __post_init__(self):
        require(self.ball_mass > 0 and self.cart_mass > 0 and self.pole_length > 0,
                "masses and length must be positive")
        require(self.force_max > 0, "force bound must be positive")
        require(self.discount > 0, "discount must be positive")


def _wrap_angle(psi: np.ndarray) -> np.ndarray:
    return np.mod(psi + np.pi, 2.0 * np.pi) - np.pi


def make_cartpole(spec: CartPoleSpec) -> ControlProblem:
    """Four-state problem (omega, psi, v, z) with bang-bang force control.

    Cost is ``-cos(psi) + eta z^2``; the angle coordinate is wrapped to
    [-pi, pi) after each integration step.  sgn(0) = 0 so the upright rest
    state is an equilibrium, and sgn' = 0 is used in the state Jacobian.
    """
    m, l, mc = spec.ball_mass, spec.pole_length, spec.cart_mass
    mu_c, mu_p = spec.cart_friction, spec.pole_friction
    grav, eta = spec.gravity, spec.position_weight
    M = m + mc

    def _accelerations(x, F):
        omega, psi, v = x[:, 0], x[:, 1], x[:, 2]
        s, c = np.sin(psi), np.cos(psi)
        denom = l * (4.0 / 3.0 - (m / M) * c ** 2)
        num = grav * s + c * (mu_c * np.sign(v) - F - m * l * omega ** 2 * s) / M \
            - mu_p * omega / (m * l)
        omega_dot = num / denom
        v_dot = (F + m * l * (omega ** 2 * s - omega_dot * c) - mu_c * np.sign(v)) / M
        return omega_dot, v_dot

    def dynamics(x, a):
        F = a[:, 0]
        omega_dot, v_dot = _accelerations(x, F)
        return np.stack([omega_dot, x[:, 0], v_dot, x[:, 2]], axis=1)

    def jac_state(x, a):
        n = x.shape[0]
        omega, psi, v = x[:, 0], x[:, 1], x[:, 2]
        F = a[:, 0]
        s, c = np.sin(psi), np.cos(psi)
        denom = l * (4.0 / 3.0 - (m / M) * c ** 2)
        ddenom_dpsi = 2.0 * l * (m / M) * c * s
        brake = mu_c * np.sign(v) - F - m * l * omega ** 2 * s
        num = grav * s + c * brake / M - mu_p * omega / (m * l)
        omega_dot = num / denom
        dnum_domega = -2.0 * m * l * omega * s * c / M - mu_p / (m * l)
        dnum_dpsi = grav * c + (-s * brake - m * l * omega ** 2 * c ** 2) / M
        dwdot_domega = dnum_domega / denom
        dwdot_dpsi = (dnum_dpsi * denom - num * ddenom_dpsi) / denom ** 2
        dvdot_domega = m * l * (2.0 * omega * s - c * dwdot_domega) / M
        dvdot_dpsi = m * l * (omega ** 2 * c + s * omega_dot - c * dwdot_dpsi) / M
        jac = np.zeros((n, 4, 4))
        jac[:, 0, 0] = dwdot_domega
        jac[:, 0, 1] = dwdot_dpsi
        jac[:, 1, 0] = 1.0
        jac[:, 2, 0] = dvdot_domega
        jac[:, 2, 1] = dvdot_dpsi
        jac[:, 3, 2] = 1.0
        return jac

    def jac_control(x):
        n = x.shape[0]
        psi = x[:, 1]
        c = np.cos(psi)
        denom = l * (4.0 / 3.0 - (m / M) * c ** 2)
        dwdot_dF = -c / (M * denom)
        dvdot_dF = (1.0 - m * l * c * dwdot_dF) / M
        jac = np.zeros((n, 4, 1))
        jac[:, 0, 0] = dwdot_dF
        jac[:, 2, 0] = dvdot_dF
        return jac

    def cost(x, a):
        return -np.cos(x[:, 1]) + eta * x[:, 3] ** 2

    def cost_grad_state(x, a):
        grad = np.zeros_like(x)
        grad[:, 1] = np.sin(x[:, 1])
        grad[:, 3] = 2.0 * eta * x[:, 3]
        return grad

    def cost_grad_control(x, a):
        return np.zeros_like(a)

    def wrap_state(x):
        wrapped = x.copy()
        wrapped[:, 1] = _wrap_angle(wrapped[:, 1])
        return wrapped

    return ControlProblem(
        dim_state=4,
        dim_control=1,
        discount=spec.discount,
        control_bounds=Box(np.array([-spec.force_max]), np.array([spec.force_max])),
        dynamics=dynamics,
        dynamics_jacobian_state=jac_state,
        dynamics_jacobian_control=jac_control,
        cost=cost,
        cost_grad_state=cost_grad_state,
        cost_grad_control=cost_grad_control,
        control_cost_hessian=None,
        wrap_state=wrap_state,
        domain=Box(np.array([-2.0 * np.pi, -np.pi, -0.5, -2.4]),
                   np.array([2.0 * np.pi, np.pi, 0.5, 2.4])),
        name="cartpole",
    )


def cartpole_energy(spec: CartPoleSpec, x: np.ndarray) -> np.ndarray:
    """Total mechanical energy, conserved when force and friction vanish."""
    m, l, mc, grav = spec.ball_mass, spec.pole_length, spec.cart_mass, spec.gravity
    x = np.atleast_2d(np.asarray(x, dtype=float))
    omega, psi, v = x[:, 0], x[:, 1], x[:, 2]
    kinetic = 0.5 * (mc + m) * v ** 2 + m * l * v * omega * np.cos(psi) \
        + (2.0 / 3.0) * m * l ** 2 * omega ** 2
    potential = m * grav * l * np.cos(psi)
    return kinetic + potential


# ---------------------------------------------------------------------------
# Advertising process
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdvertisingSpec:
    """Constants of the three-state advertising model (stimulus, adaptation, sales).

    The task maximizes discounted ``profit * sales - spend``; the discount
    rate is not pinned down by the original task description, so it is a
    configurable field defaulting to 1.
    """

    spend_max: float = 2.0
    depreciation: float = 0.5
    adaptation_rate: float = 1.0
    response_gain: float = 0.5
    churn: float = 0.1
    surprise_gain: float = 0.5
    profit: float = 0.5
    discount: float = 1.0

    def __post_init__(self):
        require(self.spend_max > 0, "spend bound must be positive")
        require(self.depreciation > 0 and self.adaptation_rate > 0 and self.churn > 0,
                "rates must be positive")
        require(self.discount > 0, "discount must be positive")


def make_advertising(spec: AdvertisingSpec) -> ControlProblem:
    """Maximization problem over (A, Abar, S), stored internally as a minimization.

    Dynamics::

        A'    = u - delta A
        Abar' = zeta (A - Abar)
        S'    = v ln(A + 1) - alpha S + wbar max(0, A - Abar)

    The kink ``max(0, A - Abar)`` uses one-sided derivative 0 at ``A = Abar``.
    """
    delta, zeta = spec.depreciation, spec.adaptation_rate
    gain, alpha, wbar, profit = spec.response_gain, spec.churn, spec.surprise_gain, spec.profit

    def dynamics(x, a):
        A, Abar, S = x[:, 0], x[:, 1], x[:, 2]
        u = a[:, 0]
        dA = u - delta * A
        dAbar = zeta * (A - Abar)
        dS = gain * np.log(A + 1.0) - alpha * S + wbar * np.maximum(0.0, A - Abar)
        return np.stack([dA, dAbar, dS], axis=1)

    def jac_state(x, a):
        n = x.shape[0]
        A, Abar = x[:, 0], x[:, 1]
        active = (A > Abar).astype(float)
        jac = np.zeros((n, 3, 3))
        jac[:, 0, 0] = -delta
        jac[:, 1, 0] = zeta
        jac[:, 1, 1] = -zeta
        jac[:, 2, 0] = gain / (A + 1.0) + wbar * active
        jac[:, 2, 1] = -wbar * active
        jac[:, 2, 2] = -alpha
        return jac

    def jac_control(x):
        jac = np.zeros((x.shape[0], 3, 1))
        jac[:, 0, 0] = 1.0
        return jac

    # Internal minimization cost: u - profit * S (negated reward).
    def cost(x, a):
        return a[:, 0] - profit * x[:, 2]

    def cost_grad_state(x, a):
        grad = np.zeros_like(x)
        grad[:, 2] = -profit
        return grad

    def cost_grad_control(x, a):
        return np.ones_like(a)

    return ControlProblem(
        dim_state=3,
        dim_control=1,
        discount=spec.discount,
        control_bounds=Box(np.array([0.0]), np.array([spec.spend_max])),
        dynamics=dynamics,
        dynamics_jacobian_state=jac_state,
        dynamics_jacobian_control=jac_control,
        cost=cost,
        cost_grad_state=cost_grad_state,
        cost_grad_control=cost_grad_control,
        control_cost_hessian=None,
        sign="maximize",
        domain=Box(np.array([0.0, 0.0, 0.0]), np.array([4.0, 4.0, 8.0])),
        name="advertising",
        control_jacobian_constant=True,
    )
