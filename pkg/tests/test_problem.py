"""Hamiltonian machinery: minimizer optimality, affinity, derivative consistency."""
import numpy as np
import pytest

import pilambda as pl
from pilambda.validation import ContractViolation

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@pytest.fixture(scope="module")
def lqr5():
    return pl.make_lqr(pl.lqr_test_spec("t1", dim=5))


@pytest.fixture(scope="module")
def cartpole():
    return pl.make_cartpole(pl.CartPoleSpec())


@pytest.fixture(scope="module")
def advertising():
    return pl.make_advertising(pl.AdvertisingSpec())


def test_lqr_identity_dynamics(lqr5):
    x = np.ones(5)
    out = pl.evaluate_dynamics(lqr5, x, np.zeros(5))
    np.testing.assert_allclose(out, x)


def test_cartpole_equilibrium(cartpole):
    out = pl.evaluate_dynamics(cartpole, np.zeros(4), np.zeros(1))
    np.testing.assert_allclose(out, np.zeros(4))


def test_advertising_adapted_state(advertising):
    # A = Abar = 1, spend exactly balancing depreciation: only sales move.
    x = np.array([1.0, 1.0, 3.0])
    out = pl.evaluate_dynamics(advertising, x, np.array([0.5]))
    np.testing.assert_allclose(out[0], 0.0, atol=1e-15)
    np.testing.assert_allclose(out[1], 0.0, atol=1e-15)
    np.testing.assert_allclose(out[2], 0.5 * np.log(2.0) - 0.1 * 3.0)


def test_dimension_mismatch_raises(lqr5):
    with pytest.raises(ContractViolation):
        pl.evaluate_dynamics(lqr5, np.ones(4), np.zeros(5))
    with pytest.raises(ContractViolation):
        pl.minimize_hamiltonian(lqr5, np.ones(5), np.ones(4))


def test_hamiltonian_hand_value():
    # d=1, A=0, B=1: H = (0*1 + 1*1)*1 + (1 + 1) = 3
    prob = pl.make_lqr(pl.LqrSpec(A=np.zeros((1, 1)), B=np.eye(1), discount=1.0))
    h = pl.hamiltonian(prob, np.array([1.0]), np.array([1.0]), np.array([1.0]))
    assert h == pytest.approx(3.0, abs=1e-14)
    assert pl.hamiltonian(prob, np.zeros(1), np.zeros(1), np.zeros(1)) == 0.0


def test_lqr_minimizer_first_order_condition(lqr5):
    lam = np.array([2.0, 0.0, 0.0, 0.0, 0.0])
    a = pl.minimize_hamiltonian(lqr5, np.zeros(5), lam)
    np.testing.assert_allclose(a, [-1.0, 0.0, 0.0, 0.0, 0.0])


def test_cartpole_bang_bang_and_tie_break(cartpole):
    x = np.array([0.1, 0.5, 0.0, 0.0])
    jac = cartpole.dynamics_jacobian_control(x[None, :])[0]
    lam_pos = jac[:, 0].copy()  # makes the coefficient positive
    a = pl.minimize_hamiltonian(cartpole, x, lam_pos)
    assert a[0] == -10.0
    a = pl.minimize_hamiltonian(cartpole, x, -lam_pos)
    assert a[0] == 10.0
    a = pl.minimize_hamiltonian(cartpole, x, np.zeros(4))
    assert a[0] == 0.0  # zero coefficient picks the admissible zero control


def test_advertising_bang_bang_sign(advertising):
    x = np.array([1.0, 1.0, 1.0])
    # Coefficient of u in the (minimization) Hamiltonian is lam_A + 1.
    a = pl.minimize_hamiltonian(advertising, x, np.array([-2.0, 0.0, 0.0]))
    assert a[0] == 2.0
    a = pl.minimize_hamiltonian(advertising, x, np.array([0.5, 0.0, 0.0]))
    assert a[0] == 0.0


@pytest.mark.parametrize("maker", ["lqr5", "cartpole", "advertising"])
def test_minimizer_beats_random_probes(maker, request):
    problem = request.getfixturevalue(maker)
    rng = np.random.default_rng(7)
    lower = np.where(np.isfinite(problem.control_bounds.lower),
                     problem.control_bounds.lower, -5.0)
    upper = np.where(np.isfinite(problem.control_bounds.upper),
                     problem.control_bounds.upper, 5.0)
    for _ in range(20):
        x = rng.uniform(-1.0, 1.0, problem.dim_state)
        lam = rng.normal(size=problem.dim_state)
        a_star = pl.minimize_hamiltonian(problem, x, lam)
        h_star = pl.hamiltonian(problem, x, lam, a_star)
        probes = rng.uniform(lower, upper, size=(100, problem.dim_control))
        h_probe = pl.hamiltonian(problem, np.tile(x, (100, 1)), np.tile(lam, (100, 1)), probes)
        assert np.all(h_star <= h_probe + 1e-10)


@pytest.mark.parametrize("maker", ["lqr5", "cartpole", "advertising"])
def test_dynamics_affine_in_control(maker, request):
    problem = request.getfixturevalue(maker)
    rng = np.random.default_rng(11)
    lower = np.where(np.isfinite(problem.control_bounds.lower),
                     problem.control_bounds.lower, -3.0)
    upper = np.where(np.isfinite(problem.control_bounds.upper),
                     problem.control_bounds.upper, 3.0)
    for _ in range(50):
        x = rng.uniform(-1.0, 1.0, problem.dim_state)
        a1 = rng.uniform(lower, upper)
        a2 = rng.uniform(lower, upper)
        t = rng.uniform()
        mix = pl.evaluate_dynamics(problem, x, t * a1 + (1 - t) * a2)
        parts = t * pl.evaluate_dynamics(problem, x, a1) \
            + (1 - t) * pl.evaluate_dynamics(problem, x, a2)
        np.testing.assert_allclose(mix, parts, atol=1e-12)


def _fd_jacobian(f, x, scale=1.0):
    """Central finite differences of a vector map, column by column."""
    x = np.asarray(x, dtype=float)
    h = 1e-5 * scale
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2.0 * h))
    return np.stack(cols, axis=-1)


@pytest.mark.parametrize("maker", ["lqr5", "cartpole", "advertising"])
def test_jacobians_match_finite_differences(maker, request):
    problem = request.getfixturevalue(maker)
    rng = np.random.default_rng(3)
    lower = np.where(np.isfinite(problem.control_bounds.lower),
                     problem.control_bounds.lower, -2.0)
    upper = np.where(np.isfinite(problem.control_bounds.upper),
                     problem.control_bounds.upper, 2.0)
    for _ in range(20):
        # Stay away from the sign/kink sets of the nonlinear benchmarks.
        x = rng.uniform(0.3, 1.0, problem.dim_state) * rng.choice([-1.0, 1.0], problem.dim_state)
        if problem.name == "advertising":
            x = np.abs(x)
            x[1] = x[0] + 0.3  # keep A < Abar strictly
        a = rng.uniform(lower, upper)
        scale = 1.0 + float(np.max(np.abs(x)))

        jac = problem.dynamics_jacobian_state(x[None, :], a[None, :])[0]
        fd = _fd_jacobian(lambda z: pl.evaluate_dynamics(problem, z, a), x, scale)
        np.testing.assert_allclose(jac, fd, rtol=1e-6, atol=1e-6)

        grad_x = problem.cost_grad_state(x[None, :], a[None, :])[0]
        fd_x = _fd_jacobian(lambda z: np.atleast_1d(pl.evaluate_cost(problem, z, a)), x, scale)[0]
        np.testing.assert_allclose(grad_x, fd_x, rtol=1e-6, atol=1e-6)

        grad_a = problem.cost_grad_control(x[None, :], a[None, :])[0]
        fd_a = _fd_jacobian(lambda u: np.atleast_1d(pl.evaluate_cost(problem, x, u)), a, scale)[0]
        np.testing.assert_allclose(grad_a, fd_a, rtol=1e-6, atol=1e-6)

        ctrl_jac = problem.dynamics_jacobian_control(x[None, :])
        ctrl_jac = ctrl_jac[0] if ctrl_jac.ndim == 3 else ctrl_jac
        fd_ctrl = _fd_jacobian(lambda u: pl.evaluate_dynamics(problem, x, u), a, scale)
        np.testing.assert_allclose(ctrl_jac, fd_ctrl, rtol=1e-6, atol=1e-6)


def test_maximization_objective_sign(advertising):
    x = np.array([0.0, 0.0, 2.0])
    u = np.array([1.0])
    # Reward pi*S - u with pi = 0.5: 0.5*2 - 1 = 0.
    assert advertising.objective(x, u) == pytest.approx(0.0, abs=1e-14)
    assert pl.evaluate_cost(advertising, x, u) == pytest.approx(0.0, abs=1e-14)
