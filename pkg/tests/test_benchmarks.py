"""Benchmark constructors and the Riccati / Lyapunov reference solutions."""
import numpy as np
import pytest

import pilambda as pl
from pilambda.benchmarks import cartpole_energy, stabilizing_quadratic_start
from pilambda.validation import OracleFailure

GOLDEN_SMALL = (np.sqrt(5.0) - 1.0) / 2.0   # positive root of P^2 + P - 1 = 0
GOLDEN_BIG = (np.sqrt(5.0) + 1.0) / 2.0     # positive root of p^2 - p - 1 = 0


def scalar_spec(a=0.0, rho=1.0):
    return pl.LqrSpec(A=np.array([[a]]), B=np.eye(1), discount=rho)


class TestRiccati:
    def test_scalar_golden_ratio(self):
        P = pl.riccati_oracle(scalar_spec())
        assert P[0, 0] == pytest.approx(GOLDEN_SMALL, abs=1e-10)

    def test_identity_five(self):
        P = pl.riccati_oracle(pl.lqr_test_spec("t1", dim=5))
        np.testing.assert_allclose(P, GOLDEN_BIG * np.eye(5), atol=1e-9)

    def test_monotone_in_discount(self):
        values = [pl.riccati_oracle(scalar_spec(rho=r))[0, 0] for r in (0.5, 1.0, 2.0, 5.0)]
        assert all(a > b for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("test", ["t1", "t2", "t3"])
    def test_residual_bound(self, test):
        spec = pl.lqr_test_spec(test, dim=5)
        P = pl.riccati_oracle(spec)
        res = spec.A.T @ P + P @ spec.A - P @ spec.B @ spec.B.T @ P + np.eye(5) \
            - spec.discount * P
        assert np.linalg.norm(res) <= 1e-8 * (1.0 + np.linalg.norm(P))


class TestLyapunov:
    def test_scalar_zero_gain(self):
        P = pl.lyapunov_policy_oracle(scalar_spec(), np.zeros((1, 1)))
        assert P[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_scalar_unit_gain(self):
        P = pl.lyapunov_policy_oracle(scalar_spec(a=1.0), np.eye(1))
        assert P[0, 0] == pytest.approx(2.0, abs=1e-12)

    def test_optimal_gain_is_fixed_point(self):
        spec = pl.lqr_test_spec("t2", dim=5)
        P = pl.riccati_oracle(spec)
        P_K = pl.lyapunov_policy_oracle(spec, spec.B.T @ P)
        np.testing.assert_allclose(P_K, P, atol=1e-8)

    def test_residual_bound(self):
        spec = pl.lqr_test_spec("t3", dim=5)
        K = 0.5 * np.eye(5) + spec.B.T @ pl.riccati_oracle(spec)
        P_K = pl.lyapunov_policy_oracle(spec, K)
        closed = spec.A - spec.B @ K
        res = closed.T @ P_K + P_K @ closed - spec.discount * P_K + np.eye(5) + K.T @ K
        assert np.linalg.norm(res) <= 1e-10 * (1.0 + np.linalg.norm(P_K))

    def test_divergent_loop_raises(self):
        with pytest.raises(OracleFailure):
            pl.lyapunov_policy_oracle(scalar_spec(a=2.0, rho=1.0), np.zeros((1, 1)))


def test_stabilizing_start_stabilizes():
    for name in ("t1", "t2", "t3"):
        spec = pl.lqr_test_spec(name, dim=5)
        Q0 = stabilizing_quadratic_start(spec)
        closed = spec.A - spec.B @ spec.B.T @ Q0
        assert np.max(np.real(np.linalg.eigvals(closed))) < 0


def test_lqr_test_specs_reproducible():
    a1 = pl.lqr_test_spec("t2", dim=5).A
    a2 = pl.lqr_test_spec("t2", dim=5).A
    np.testing.assert_array_equal(a1, a2)
    assert not np.allclose(a1, pl.lqr_test_spec("t3", dim=5).A)
    eigs = np.linalg.eigvalsh(a1)
    assert np.all(eigs > 0)  # (a^T a + I)/d is positive definite


class TestCartPole:
    def test_cost_values(self):
        prob = pl.make_cartpole(pl.CartPoleSpec())
        assert pl.evaluate_cost(prob, np.zeros(4), np.zeros(1)) == pytest.approx(-1.0)
        x = np.array([0.0, np.pi, 0.0, 1.0])
        assert pl.evaluate_cost(prob, x, np.zeros(1)) == pytest.approx(1.2)

    def test_angle_wrap(self):
        prob = pl.make_cartpole(pl.CartPoleSpec())
        wrapped = prob.wrap_state(np.array([[0.0, 3.5 * np.pi, 0.0, 0.0]]))
        assert -np.pi <= wrapped[0, 1] < np.pi
        assert wrapped[0, 1] == pytest.approx(-0.5 * np.pi)

    def test_energy_conservation_order(self):
        # Without force or friction the mechanical energy drift is pure
        # integrator error, so halving the step divides it by ~16.
        spec = pl.CartPoleSpec(cart_friction=0.0, pole_friction=0.0)
        prob = pl.make_cartpole(spec)
        x0 = np.array([0.3, 0.8, 0.1, 0.0])
        zero_policy = lambda x: np.zeros((x.shape[0], 1))

        def drift(step):
            traj = pl.integrate_characteristic(prob, zero_policy, x0, step=step,
                                               trunc_tol=1e-12, t_max=1.0)
            energy = cartpole_energy(spec, traj.states)
            return float(np.max(np.abs(energy - energy[0])))

        ratio = drift(0.02) / drift(0.01)
        assert 16.0 * 0.6 <= ratio <= 16.0 * 1.6

    def test_energy_gradient_consistency(self):
        # dE/dt = grad E . f must vanish identically for the frictionless
        # unforced flow; checked by finite differences of E along the field.
        spec = pl.CartPoleSpec(cart_friction=0.0, pole_friction=0.0)
        prob = pl.make_cartpole(spec)
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = rng.uniform([-2, -2, -1, -1], [2, 2, 1, 1])
            f = pl.evaluate_dynamics(prob, x, np.zeros(1))
            h = 1e-6
            de = (cartpole_energy(spec, x + h * f) - cartpole_energy(spec, x - h * f)) / (2 * h)
            scale = max(1.0, abs(float(cartpole_energy(spec, x)[0])))
            assert abs(float(de[0])) <= 1e-6 * scale


class TestAdvertising:
    def test_state_positivity(self):
        prob = pl.make_advertising(pl.AdvertisingSpec())
        policy = lambda x: np.full((x.shape[0], 1), 1.5)
        rng = np.random.default_rng(2)
        for _ in range(5):
            x0 = rng.uniform(0.0, 3.0, size=3)
            traj = pl.integrate_characteristic(prob, policy, x0, step=0.01,
                                               trunc_tol=1e-8, t_max=30.0)
            assert np.all(traj.states[:, 0] >= -1e-12)
            assert np.all(traj.states[:, 1] >= -1e-12)

    def test_sales_dynamics_value(self):
        prob = pl.make_advertising(pl.AdvertisingSpec())
        out = pl.evaluate_dynamics(prob, np.array([0.0, 0.5, 0.0]), np.array([0.0]))
        assert out[2] == pytest.approx(0.0, abs=1e-15)  # ln 1 = 0, kink inactive
