"""Characteristic curves and the discounted line-integral labels on them.

Under a frozen feedback policy the value function and every component of its
gradient satisfy the same advection equation along the state flow, so both
kinds of training labels come from one backward discounted integral over an
integrated trajectory:

    I_j = quad(f_j, f_{j+1}) + exp(-rho dt) I_{j+1},     I_last = f_last / rho

where the per-interval quadrature is the exponentially weighted trapezoid
``0.5 dt (f_j + exp(-rho dt) f_{j+1})`` (the plain trapezoid applied to the
discounted integrand) and the constant-tail closure bounds the truncation
error by ``trunc_tol / rho``.

Integration is classical fixed-step RK4 with the policy re-evaluated at every
stage.  A lockstep batch engine integrates many curves simultaneously; all
row operations are elementwise or einsum-based so each curve's samples are
bitwise independent of which other curves share the batch.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.signal

from .problem import ControlProblem
from .validation import Box, TrajectoryDivergence, as_batch, require

DEFAULT_BLOWUP_NORM = 1e6


@dataclass
class Trajectory:
    """Time-stamped samples of one characteristic curve.

    ``truncated`` records that integration stopped because the discounted
    magnitude test fell below tolerance (rather than hitting the time cap or
    the blow-up guard); ``blown_up`` marks curves cut short by the guard.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    costs: np.ndarray
    arclens: np.ndarray
    truncated: bool = False
    blown_up: bool = False

    def __len__(self) -> int:
        return self.times.shape[0]


@dataclass(frozen=True)
class LabeledPoint:
    """A state with its value label ``phi`` and value-gradient label ``lam``."""

    x: np.ndarray
    phi: float
    lam: np.ndarray


def integrate_characteristics(
    problem: ControlProblem,
    policy: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    step: float,
    trunc_tol: float,
    t_max: float,
    lambda_hat: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    blowup_norm: float = DEFAULT_BLOWUP_NORM,
) -> list[Trajectory]:
    """Integrate a batch of characteristic curves in lockstep.

    ``x0`` is an ``(n, d)`` array of initial states.  Each curve stops
    independently at the first time the discounted magnitude test

        exp(-rho t) (1 + |x(t)| + |lambda_hat(x(t))|) < trunc_tol

    holds, or at ``t_max``.  A curve whose state norm reaches ``blowup_norm``
    (or goes non-finite) is cut at its last admissible sample and flagged
    ``blown_up``; no exception is raised here so partial data stays usable.
    """
    require(step > 0, "step must be positive")
    require(trunc_tol > 0, "trunc_tol must be positive")
    require(t_max > 0, "t_max must be positive")
    x0s, _ = as_batch(x0, problem.dim_state, "x0")
    require(np.all(np.isfinite(x0s)), "initial states must be finite")

    n, d = x0s.shape
    p = problem.dim_control
    rho = problem.discount
    n_steps = max(1, int(np.ceil(t_max / step - 1e-12)))
    wrap = problem.wrap_state

    states = np.zeros((n_steps + 1, n, d))
    controls = np.zeros((n_steps + 1, n, p))
    costs = np.zeros((n_steps + 1, n))
    arclens = np.zeros((n_steps + 1, n))
    times = step * np.arange(n_steps + 1)

    x = x0s.copy()
    a = policy(x)
    states[0], controls[0], costs[0] = x, a, problem.cost(x, a)

    active = np.ones(n, dtype=bool)
    stop_index = np.zeros(n, dtype=int)
    truncated = np.zeros(n, dtype=bool)
    blown = np.zeros(n, dtype=bool)

    def row_norms(arr: np.ndarray) -> np.ndarray:
        return np.sqrt(np.einsum("ni,ni->n", arr, arr))

    # Curves already below the truncation test at t = 0 keep their single sample.
    test0 = 1.0 + row_norms(x)
    if lambda_hat is not None:
        test0 = test0 + row_norms(np.atleast_2d(lambda_hat(x)))
    hit0 = test0 < trunc_tol
    truncated[hit0] = True
    active[hit0] = False

    half = 0.5 * step
    sixth = step / 6.0
    for j in range(n_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xa = states[j, idx]
        k1 = problem.dynamics(xa, controls[j, idx])
        x2 = xa + half * k1
        k2 = problem.dynamics(x2, policy(x2))
        x3 = xa + half * k2
        k3 = problem.dynamics(x3, policy(x3))
        x4 = xa + step * k3
        k4 = problem.dynamics(x4, policy(x4))
        x_new = xa + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        inc = row_norms(x_new - xa)
        if wrap is not None:
            x_new = wrap(x_new)

        norms = row_norms(x_new)
        ok = np.isfinite(norms) & (norms < blowup_norm)
        if not ok.all():
            bad = idx[~ok]
            blown[bad] = True
            stop_index[bad] = j
            active[bad] = False
            if not ok.any():
                continue
            idx, xa = idx[ok], xa[ok]
            x_new, inc, norms = x_new[ok], inc[ok], norms[ok]
        ag = policy(x_new)
        states[j + 1, idx] = x_new
        controls[j + 1, idx] = ag
        costs[j + 1, idx] = problem.cost(x_new, ag)
        arclens[j + 1, idx] = arclens[j, idx] + inc
        stop_index[idx] = j + 1

        test = 1.0 + norms
        if lambda_hat is not None:
            test = test + row_norms(np.atleast_2d(lambda_hat(x_new)))
        done = np.exp(-rho * times[j + 1]) * test < trunc_tol
        if done.any():
            hit = idx[done]
            truncated[hit] = True
            active[hit] = False

    out = []
    for i in range(n):
        m = stop_index[i] + 1
        out.append(Trajectory(
            times=times[:m].copy(),
            states=states[:m, i].copy(),
            controls=controls[:m, i].copy(),
            costs=costs[:m, i].copy(),
            arclens=arclens[:m, i].copy(),
            truncated=bool(truncated[i]),
            blown_up=bool(blown[i]),
        ))
    return out


def integrate_characteristic(
    problem: ControlProblem,
    policy: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    step: float = 0.01,
    trunc_tol: float = 1e-6,
    t_max: float = 100.0,
    lambda_hat: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    blowup_norm: float = DEFAULT_BLOWUP_NORM,
) -> Trajectory:
    """Integrate a single characteristic curve.

    Raises ``TrajectoryDivergence`` (carrying the partial trajectory) when
    the state norm crosses the blow-up guard.
    """
    x0 = np.asarray(x0, dtype=float)
    require(x0.ndim == 1, "x0 must be a single state vector")
    traj = integrate_characteristics(problem, policy, x0[None, :], step, trunc_tol,
                                     t_max, lambda_hat, blowup_norm)[0]
    if traj.blown_up:
        raise TrajectoryDivergence(
            f"state norm exceeded {blowup_norm:g} at t={traj.times[-1] + step:g}",
            trajectory=traj)
    return traj


def discounted_tail_integrals(times: np.ndarray, values: np.ndarray, rho: float) -> np.ndarray:
    """Backward recursion for ``I_j = int_{t_j}^inf exp(-rho (tau - t_j)) f dtau``.

    ``values`` holds integrand samples, shape ``(T,)`` or ``(T, m)``; the
    columns are computed independently.  The tail beyond the last sample is
    closed with the exact discounted integral of the constant ``f_last``.
    On a uniform time grid the recursion is run as a linear filter; otherwise
    it falls back to an explicit backward loop.
    """
    values = np.asarray(values, dtype=float)
    require(values.shape[0] == times.shape[0] and values.shape[0] >= 1,
            "values must align with times and be nonempty")
    out = np.empty_like(values)
    out[-1] = values[-1] / rho
    if values.shape[0] == 1:
        return out
    dts = np.diff(times)
    if np.allclose(dts, dts[0], rtol=1e-12, atol=0.0):
        dt = dts[0]
        decay = float(np.exp(-rho * dt))
        # Per-interval trapezoid contribution, then the recursion
        # y_j = contrib_j + decay * y_{j+1} as a causal filter on the
        # reversed sequence seeded with the tail term.
        contrib = np.empty_like(values)
        contrib[-1] = out[-1]
        contrib[:-1] = 0.5 * dt * (values[:-1] + decay * values[1:])
        rev = contrib[::-1]
        filtered = scipy.signal.lfilter([1.0], [1.0, -decay], rev, axis=0)
        return np.ascontiguousarray(filtered[::-1])
    decay = np.exp(-rho * dts)
    for j in range(values.shape[0] - 2, -1, -1):
        out[j] = 0.5 * dts[j] * (values[j] + decay[j] * values[j + 1]) + decay[j] * out[j + 1]
    return out


def label_value(problem: ControlProblem, traj: Trajectory) -> np.ndarray:
    """Value label at every trajectory sample: the discounted cost-to-go."""
    require(len(traj) >= 1, "cannot label an empty trajectory")
    return discounted_tail_integrals(traj.times, traj.costs, problem.discount)


def label_gradient(
    problem: ControlProblem,
    prev_lambda: Callable[[np.ndarray], np.ndarray],
    traj: Trajectory,
) -> np.ndarray:
    """Value-gradient label at every trajectory sample, shape ``(T, d)``.

    Component ``i`` integrates the source ``sum_n dg_n/dx_i lambda_prev_n +
    dl/dx_i`` along the curve; the components share the recursion but never
    mix, so their results match component-at-a-time evaluation bitwise.
    """
    require(len(traj) >= 1, "cannot label an empty trajectory")
    jac = problem.dynamics_jacobian_state(traj.states, traj.controls)
    lam_prev = np.atleast_2d(prev_lambda(traj.states))
    source = np.einsum("tni,tn->ti", jac, lam_prev) \
        + problem.cost_grad_state(traj.states, traj.controls)
    return discounted_tail_integrals(traj.times, source, problem.discount)


def resample_arclength(
    traj: Trajectory,
    labels_phi: np.ndarray,
    labels_lam: np.ndarray,
    spacing: float,
) -> list[LabeledPoint]:
    """Thin a labeled trajectory to roughly arc-length-equispaced points.

    Keeps the first sample, then greedily every sample whose cumulative arc
    length exceeds the last kept one by at least ``spacing``.  Labels travel
    with their sample; nothing is interpolated.
    """
    require(spacing > 0, "spacing must be positive")
    require(len(traj) == len(labels_phi) == len(labels_lam), "labels must align with samples")
    kept = [0]
    last = traj.arclens[0]
    for j in range(1, len(traj)):
        if traj.arclens[j] - last >= spacing:
            kept.append(j)
            last = traj.arclens[j]
    return [LabeledPoint(x=traj.states[j].copy(), phi=float(labels_phi[j]),
                         lam=np.array(labels_lam[j], dtype=float))
            for j in kept]


def filter_box(points: Sequence[LabeledPoint], box: Box) -> list[LabeledPoint]:
    """Keep the points whose every coordinate lies inside the closed box."""
    return [pt for pt in points if box.contains(pt.x)]


def drop_nonfinite(points: Sequence[LabeledPoint]) -> list[LabeledPoint]:
    """Discard points whose state or labels are not finite."""
    return [pt for pt in points
            if np.all(np.isfinite(pt.x)) and np.isfinite(pt.phi) and np.all(np.isfinite(pt.lam))]


def dump_trajectory_csv(path, traj: Trajectory, labels_phi=None, labels_lam=None) -> None:
    """Write one row per sample: t, state, control, cost, arc length, labels."""
    d = traj.states.shape[1]
    p = traj.controls.shape[1]
    header = ["t"] + [f"x{i}" for i in range(d)] + [f"a{i}" for i in range(p)] \
        + ["l", "arclen"]
    if labels_phi is not None:
        header.append("phi")
    if labels_lam is not None:
        header += [f"lam{i}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j in range(len(traj)):
            row = [traj.times[j], *traj.states[j], *traj.controls[j],
                   traj.costs[j], traj.arclens[j]]
            if labels_phi is not None:
                row.append(labels_phi[j])
            if labels_lam is not None:
                row.extend(labels_lam[j])
            writer.writerow([repr(float(v)) for v in row])
