"""Parametric value-function families with closed-form derivatives.

Two families cover the benchmarks: a symmetric quadratic form (exact for the
linear-quadratic problem) and an anisotropic Gaussian radial-basis network.
Every model evaluates, in batch, the value, its state gradient, and the
Jacobians of both with respect to the flat parameter vector; no automatic
differentiation is involved.

Parameter layout is fixed and versioned so checkpoints stay portable:

* quadratic: row-major entries of Q, ``Phi(x) = 0.5 x^T (Q^T + Q) x``
  (order tag ``quadratic-rowmajor-v1``);
* RBF: mode-major blocks ``(center_i, log_width_i, weight_i)`` of length
  ``2 d + 1`` each (order tag ``rbf-modemajor-v1``).  Widths are stored in
  log space so gradient steps cannot make them nonpositive.
"""
from __future__ import annotations

import json

import numpy as np

from .validation import Box, require


class ValueModel:
    """Shared interface: batch value/gradient/jacobian evaluation plus flat params."""

    dim: int

    @property
    def n_params(self) -> int:
        return self.get_params_vector().shape[0]

    def get_params_vector(self) -> np.ndarray:
        raise NotImplementedError

    def set_params_vector(self, theta: np.ndarray) -> None:
        raise NotImplementedError

    def value(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def param_jacobians(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (d value / d theta, d gradient / d theta).

        Shapes ``(n, P)`` and ``(n, d, P)`` in the documented parameter order.
        """
        raise NotImplementedError

    def value_and_gradient(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.value(X), self.gradient(X)

    def loss_gradient_terms(self, X: np.ndarray, coeff_value: np.ndarray,
                            coeff_gradient: np.ndarray) -> np.ndarray:
        """Contraction ``sum_n coeff_value[n] dPhi/dtheta + coeff_gradient[n,:] . d(grad Phi)/dtheta``.

        The training loop only ever needs this contraction; subclasses may
        override it to avoid materializing the full parameter Jacobians.
        """
        jac_val, jac_grad = self.param_jacobians(X)
        return np.einsum("n,np->p", coeff_value, jac_val) \
            + np.einsum("nd,ndp->p", coeff_gradient, jac_grad)

    def copy(self) -> "ValueModel":
        raise NotImplementedError

    def to_checkpoint(self) -> dict:
        raise NotImplementedError

    def _batch(self, X) -> np.ndarray:
        if type(X) is np.ndarray and X.ndim == 2 and X.shape[1] == self.dim \
                and X.dtype == np.float64:
            return X
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        require(X.ndim == 2 and X.shape[1] == self.dim,
                f"states must have {self.dim} columns")
        return X


class QuadraticValueModel(ValueModel):
    """``Phi(x) = 0.5 x^T (Q^T + Q) x`` with unconstrained square Q."""

    PARAM_ORDER = "quadratic-rowmajor-v1"

    def __init__(self, dim: int, Q: np.ndarray | None = None):
        require(dim >= 1, "dim must be positive")
        self.dim = dim
        self.Q = np.zeros((dim, dim)) if Q is None else np.array(Q, dtype=float)
        require(self.Q.shape == (dim, dim), "Q must be (d, d)")

    @property
    def symmetrized(self) -> np.ndarray:
        """The symmetric matrix actually evaluated, ``(Q^T + Q) / 2``."""
        return 0.5 * (self.Q + self.Q.T)

    def get_params_vector(self) -> np.ndarray:
        return self.Q.reshape(-1).copy()

    def set_params_vector(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=float)
        require(theta.shape == (self.dim * self.dim,), "parameter vector has wrong length")
        self.Q = theta.reshape(self.dim, self.dim).copy()

    def value(self, X) -> np.ndarray:
        X = self._batch(X)
        S = self.Q + self.Q.T
        return 0.5 * np.einsum("ni,ij,nj->n", X, S, X)

    def gradient(self, X) -> np.ndarray:
        X = self._batch(X)
        S = self.Q + self.Q.T
        return np.einsum("ij,nj->ni", S, X)

    def param_jacobians(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = self._batch(X)
        n, d = X.shape
        eye = np.eye(d)
        # d Phi / d Q_ab = x_a x_b
        jac_val = np.einsum("na,nb->nab", X, X).reshape(n, d * d)
        # d (grad Phi)_k / d Q_ab = delta_kb x_a + delta_ka x_b
        jac_grad = (np.einsum("na,kb->nkab", X, eye)
                    + np.einsum("nb,ka->nkab", X, eye)).reshape(n, d, d * d)
        return jac_val, jac_grad

    def copy(self) -> "QuadraticValueModel":
        return QuadraticValueModel(self.dim, self.Q)

    def to_checkpoint(self) -> dict:
        return {"family": "quadratic", "dim": self.dim, "n_modes": None,
                "param_order": self.PARAM_ORDER,
                "params": self.get_params_vector().tolist()}


class RbfValueModel(ValueModel):
    """Weighted sum of anisotropic Gaussian modes.

    ``Phi(x) = sum_i w_i exp(-sum_j (x_j - c_ij)^2 / (2 exp(2 s_ij)))`` with
    ``(2 d + 1) n`` trainable parameters and no offset term.
    """

    PARAM_ORDER = "rbf-modemajor-v1"

    def __init__(self, dim: int, centers: np.ndarray, log_widths: np.ndarray,
                 weights: np.ndarray):
        centers = np.array(centers, dtype=float)
        log_widths = np.array(log_widths, dtype=float)
        weights = np.array(weights, dtype=float)
        require(centers.ndim == 2 and centers.shape[1] == dim, "centers must be (n_modes, d)")
        require(log_widths.shape == centers.shape, "log_widths must match centers")
        require(weights.shape == (centers.shape[0],), "weights must be (n_modes,)")
        self.dim = dim
        self.centers = centers
        self.log_widths = log_widths
        self.weights = weights

    @classmethod
    def initialize(cls, dim: int, n_modes: int, box: Box, seed: int = 0) -> "RbfValueModel":
        """Centers uniform over the box, widths a quarter of each edge, zero weights.

        Zero weights make the initial value and gradient identically zero, so
        the induced initial policy is the zero-gradient Hamiltonian minimizer.
        """
        require(n_modes >= 1, "need at least one mode")
        require(box.dim == dim, "box dimension mismatch")
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x5BF]))
        centers = box.sample(rng, n_modes)
        edges = box.upper - box.lower
        log_widths = np.tile(np.log(edges / 4.0), (n_modes, 1))
        return cls(dim, centers, log_widths, np.zeros(n_modes))

    @property
    def n_modes(self) -> int:
        return self.centers.shape[0]

    def get_params_vector(self) -> np.ndarray:
        blocks = np.concatenate(
            [self.centers, self.log_widths, self.weights[:, None]], axis=1)
        return blocks.reshape(-1).copy()

    def set_params_vector(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=float)
        n, d = self.n_modes, self.dim
        require(theta.shape == ((2 * d + 1) * n,), "parameter vector has wrong length")
        blocks = theta.reshape(n, 2 * d + 1)
        self.centers = blocks[:, :d].copy()
        self.log_widths = blocks[:, d:2 * d].copy()
        self.weights = blocks[:, 2 * d].copy()

    def _features(self, X: np.ndarray):
        diff = X[:, None, :] - self.centers[None, :, :]          # (n, m, d)
        inv_w2 = np.exp(-2.0 * self.log_widths)[None, :, :]       # (1, m, d)
        quad = diff * diff * inv_w2                               # (x-c)^2 / w^2
        phi = np.exp(-0.5 * np.sum(quad, axis=2))                 # (n, m)
        pull = -diff * inv_w2                                     # (c-x)/w^2, (n, m, d)
        return diff, inv_w2, quad, phi, pull

    def value(self, X) -> np.ndarray:
        X = self._batch(X)
        _, _, _, phi, _ = self._features(X)
        return np.einsum("nm,m->n", phi, self.weights)

    def gradient(self, X) -> np.ndarray:
        X = self._batch(X)
        _, _, _, phi, pull = self._features(X)
        return np.einsum("m,nm,nmd->nd", self.weights, phi, pull)

    def value_and_gradient(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = self._batch(X)
        _, _, _, phi, pull = self._features(X)
        value = np.einsum("nm,m->n", phi, self.weights)
        grad = np.einsum("m,nm,nmd->nd", self.weights, phi, pull)
        return value, grad

    def loss_gradient_terms(self, X, coeff_value, coeff_gradient) -> np.ndarray:
        # Fused contraction over points and gradient components; avoids the
        # (n, d, P) Jacobian tensor the generic path would materialize.
        X = self._batch(X)
        n, d, m = X.shape[0], self.dim, self.n_modes
        _, inv_w2, quad, phi, pull = self._features(X)
        v = -pull                                    # (x - c) / w^2
        wphi = self.weights[None, :] * phi           # (n, m)
        a_phi = coeff_value[:, None] * wphi          # value-term weights
        bu = np.einsum("nk,nmk->nm", coeff_gradient, pull)
        mix = a_phi + bu * wphi                      # shared (n, m) factor
        g_c = np.einsum("nm,nmj->mj", mix, v) \
            + np.einsum("nj,nm->mj", coeff_gradient, wphi) * inv_w2[0]
        g_s = np.einsum("nm,nmj->mj", mix, quad) \
            - 2.0 * np.einsum("nj,nm,nmj->mj", coeff_gradient, wphi, pull)
        g_w = np.einsum("n,nm->m", coeff_value, phi) + np.einsum("nm,nm->m", bu, phi)
        out = np.empty((m, 2 * d + 1))
        out[:, :d] = g_c
        out[:, d:2 * d] = g_s
        out[:, 2 * d] = g_w
        return out.reshape(-1)

    def param_jacobians(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = self._batch(X)
        n, d, m = X.shape[0], self.dim, self.n_modes
        diff, inv_w2, quad, phi, pull = self._features(X)
        w = self.weights

        jac_val = np.zeros((n, m, 2 * d + 1))
        wphi = w[None, :] * phi                                   # (n, m)
        jac_val[:, :, :d] = wphi[:, :, None] * diff * inv_w2      # d/dc
        jac_val[:, :, d:2 * d] = wphi[:, :, None] * quad          # d/ds
        jac_val[:, :, 2 * d] = phi                                # d/dw

        jac_grad = np.zeros((n, d, m, 2 * d + 1))
        # d (grad)_k / d c_ij = w phi [ (diff_j inv_w2_j) pull_k + delta_jk inv_w2_k ]
        dgrad_dc = wphi[:, :, None, None] * (diff * inv_w2)[:, :, :, None] \
            * pull[:, :, None, :]
        eye = np.eye(d)
        dgrad_dc += wphi[:, :, None, None] * eye[None, None, :, :] * inv_w2[:, :, :, None]
        # d (grad)_k / d s_ij = w phi pull_k (quad_j - 2 delta_jk)
        dgrad_ds = wphi[:, :, None, None] * pull[:, :, None, :] \
            * (quad[:, :, :, None] - 2.0 * eye[None, None, :, :])
        dgrad_dw = phi[:, :, None] * pull                          # (n, m, d)
        jac_grad[:, :, :, :d] = np.transpose(dgrad_dc, (0, 3, 1, 2))
        jac_grad[:, :, :, d:2 * d] = np.transpose(dgrad_ds, (0, 3, 1, 2))
        jac_grad[:, :, :, 2 * d] = np.transpose(dgrad_dw, (0, 2, 1))
        return jac_val.reshape(n, m * (2 * d + 1)), jac_grad.reshape(n, d, m * (2 * d + 1))

    def copy(self) -> "RbfValueModel":
        return RbfValueModel(self.dim, self.centers, self.log_widths, self.weights)

    def to_checkpoint(self) -> dict:
        return {"family": "rbf", "dim": self.dim, "n_modes": self.n_modes,
                "param_order": self.PARAM_ORDER,
                "params": self.get_params_vector().tolist()}


def save_checkpoint(model: ValueModel, path) -> None:
    """Write a model as JSON: metadata header plus the flat parameter vector."""
    with open(path, "w") as fh:
        json.dump(model.to_checkpoint(), fh)


def load_checkpoint(path) -> ValueModel:
    with open(path) as fh:
        data = json.load(fh)
    family = data["family"]
    dim = int(data["dim"])
    theta = np.asarray(data["params"], dtype=float)
    if family == "quadratic":
        require(data["param_order"] == QuadraticValueModel.PARAM_ORDER,
                "unknown quadratic parameter order")
        model: ValueModel = QuadraticValueModel(dim)
    elif family == "rbf":
        require(data["param_order"] == RbfValueModel.PARAM_ORDER,
                "unknown rbf parameter order")
        n_modes = int(data["n_modes"])
        model = RbfValueModel(dim, np.zeros((n_modes, dim)),
                              np.zeros((n_modes, dim)), np.zeros(n_modes))
    else:
        raise ValueError(f"unknown model family {family!r}")
    model.set_params_vector(theta)
    return model
