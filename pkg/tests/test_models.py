"""Value-model families: closed-form derivatives against finite differences."""
import numpy as np
import pytest

import pilambda as pl


def random_quadratic(rng, dim):
    return pl.QuadraticValueModel(dim, rng.normal(size=(dim, dim)))


def random_rbf(rng, dim, n_modes=6):
    return pl.RbfValueModel(
        dim,
        centers=rng.uniform(-1.0, 1.0, size=(n_modes, dim)),
        log_widths=rng.uniform(-1.0, 0.5, size=(n_modes, dim)),
        weights=rng.normal(size=n_modes),
    )


def fd_state_gradient(model, x):
    h = 1e-5 * (1.0 + np.linalg.norm(x))
    out = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (model.value(x + e)[0] - model.value(x - e)[0]) / (2.0 * h)
    return out


def fd_param_jacobians(model, x):
    theta = model.get_params_vector()
    h = 1e-6 * (1.0 + np.max(np.abs(theta)))
    probe = model.copy()
    jv = np.zeros(theta.size)
    jg = np.zeros((x.size, theta.size))
    for k in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[k] += h
        down[k] -= h
        probe.set_params_vector(up)
        v_up, g_up = probe.value(x)[0], probe.gradient(x)[0]
        probe.set_params_vector(down)
        v_dn, g_dn = probe.value(x)[0], probe.gradient(x)[0]
        jv[k] = (v_up - v_dn) / (2.0 * h)
        jg[:, k] = (g_up - g_dn) / (2.0 * h)
    return jv, jg


class TestEvaluation:
    def test_quadratic_hand_values(self):
        model = pl.QuadraticValueModel(2, np.eye(2))
        assert model.value(np.zeros(2))[0] == 0.0
        assert model.value(np.array([1.0, 1.0]))[0] == pytest.approx(2.0)
        np.testing.assert_allclose(model.gradient(np.zeros(2))[0], np.zeros(2))

    def test_quadratic_param_jacobian_is_outer_product(self):
        model = pl.QuadraticValueModel(3)
        x = np.array([1.0, 2.0, 3.0])
        jac_val, _ = model.param_jacobians(x)
        np.testing.assert_allclose(jac_val[0].reshape(3, 3), np.outer(x, x))

    def test_rbf_peak(self):
        model = pl.RbfValueModel(2, centers=np.array([[0.3, -0.2]]),
                                 log_widths=np.zeros((1, 2)), weights=np.array([1.0]))
        assert model.value(np.array([0.3, -0.2]))[0] == pytest.approx(1.0)
        np.testing.assert_allclose(model.gradient(np.array([0.3, -0.2]))[0],
                                   np.zeros(2), atol=1e-14)

    def test_rbf_weight_jacobian_is_activation(self):
        rng = np.random.default_rng(0)
        model = random_rbf(rng, 3)
        x = rng.uniform(-1, 1, 3)
        jac_val, _ = model.param_jacobians(x)
        d = 3
        activations = jac_val[0].reshape(model.n_modes, 2 * d + 1)[:, 2 * d]
        ones = pl.RbfValueModel(3, model.centers, model.log_widths,
                                np.ones(model.n_modes))
        per_mode = np.array([
            pl.RbfValueModel(3, model.centers[i:i + 1], model.log_widths[i:i + 1],
                             np.ones(1)).value(x)[0]
            for i in range(model.n_modes)])
        np.testing.assert_allclose(activations, per_mode, rtol=1e-12)
        assert ones.value(x)[0] == pytest.approx(float(np.sum(per_mode)))


@pytest.mark.parametrize("family", ["quadratic", "rbf"])
def test_state_gradient_matches_fd(family):
    rng = np.random.default_rng(42)
    for trial in range(100):
        dim = int(rng.integers(1, 5))
        model = random_quadratic(rng, dim) if family == "quadratic" \
            else random_rbf(rng, dim, n_modes=int(rng.integers(1, 6)))
        x = rng.uniform(-2.0, 2.0, dim)
        grad = model.gradient(x)[0]
        fd = fd_state_gradient(model, x)
        np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("family", ["quadratic", "rbf"])
def test_param_jacobians_match_fd(family):
    rng = np.random.default_rng(7)
    for trial in range(25):
        dim = int(rng.integers(1, 4))
        model = random_quadratic(rng, dim) if family == "quadratic" \
            else random_rbf(rng, dim, n_modes=int(rng.integers(1, 5)))
        x = rng.uniform(-1.5, 1.5, dim)
        jac_val, jac_grad = model.param_jacobians(x)
        fd_val, fd_grad = fd_param_jacobians(model, x)
        np.testing.assert_allclose(jac_val[0], fd_val, rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(jac_grad[0], fd_grad, rtol=1e-6, atol=1e-5)


def test_quadratic_transpose_invariance():
    rng = np.random.default_rng(3)
    Q = rng.normal(size=(4, 4))
    X = rng.uniform(-1, 1, size=(50, 4))
    a = pl.QuadraticValueModel(4, Q)
    b = pl.QuadraticValueModel(4, Q.T)
    assert np.max(np.abs(a.value(X) - b.value(X))) <= 1e-14 * (1 + np.max(np.abs(a.value(X))))
    assert np.max(np.abs(a.gradient(X) - b.gradient(X))) <= 1e-13


@pytest.mark.parametrize("family", ["quadratic", "rbf"])
def test_gradient_is_conservative(family):
    # Path integral of the gradient around any closed polygon vanishes.
    rng = np.random.default_rng(11)
    dim = 3
    model = random_quadratic(rng, dim) if family == "quadratic" \
        else random_rbf(rng, dim)
    for _ in range(5):
        corners = rng.uniform(-1.0, 1.0, size=(4, dim))
        loop = np.vstack([corners, corners[:1]])
        total = 0.0
        for a, b in zip(loop[:-1], loop[1:]):
            ts = np.linspace(0.0, 1.0, 2001)[:, None]
            pts = a[None, :] * (1 - ts) + b[None, :] * ts
            grads = model.gradient(pts)
            integrand = grads @ (b - a)
            total += np.trapezoid(integrand, ts[:, 0])
        # Quadrature tolerance: the segment integrals are O(1).
        assert abs(total) <= 1e-6


def test_rbf_initialize_zero_model():
    box = pl.Box(np.array([-1.0, -2.0]), np.array([1.0, 2.0]))
    model = pl.RbfValueModel.initialize(2, 10, box, seed=4)
    X = np.random.default_rng(0).uniform(-1, 1, size=(20, 2))
    assert np.all(model.value(X) == 0.0)
    assert np.all(model.gradient(X) == 0.0)
    assert np.all((model.centers >= box.lower) & (model.centers <= box.upper))
    np.testing.assert_allclose(np.exp(model.log_widths[0]), [0.5, 1.0])
    assert model.n_params == (2 * 2 + 1) * 10
    clone = pl.RbfValueModel.initialize(2, 10, box, seed=4)
    np.testing.assert_array_equal(model.get_params_vector(), clone.get_params_vector())


def test_param_vector_round_trip():
    rng = np.random.default_rng(9)
    for model in (random_quadratic(rng, 3), random_rbf(rng, 3)):
        theta = model.get_params_vector()
        clone = model.copy()
        clone.set_params_vector(theta)
        np.testing.assert_array_equal(clone.get_params_vector(), theta)
        X = rng.uniform(-1, 1, size=(10, 3))
        np.testing.assert_array_equal(clone.value(X), model.value(X))


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(21)
    for name, model in (("q.json", random_quadratic(rng, 4)),
                        ("r.json", random_rbf(rng, 2, n_modes=7))):
        path = tmp_path / name
        pl.save_checkpoint(model, path)
        loaded = pl.load_checkpoint(path)
        np.testing.assert_array_equal(loaded.get_params_vector(),
                                      model.get_params_vector())
        X = rng.uniform(-1, 1, size=(5, model.dim))
        np.testing.assert_array_equal(loaded.value(X), model.value(X))
        np.testing.assert_array_equal(loaded.gradient(X), model.gradient(X))
