"""Sensitivity-penalized robust estimator for intermittent observations.

One step maps ``(x_{t|t}, P_{t|t})`` and the arrival indicator
``gamma_{t+1}`` to ``(x_{t+1|t+1}, P_{t+1|t+1})``.  On arrival the update
uses adjusted versions of ``P, Q, A, B`` that penalize the first-order
sensitivity of the innovation to the parametric errors with weight
``lambda_t = (1 - mu_t) / mu_t``.  Without arrival only the nominal model
prediction is applied.  With ``mu_t = 1`` the recursion is exactly the
Kalman filter with intermittent observations.
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._linalg import ASYM_LOG_TOL, information_update, inv_spd, log_asymmetry, solve_spd, sym
from .errors import NumericError, UsageError
from .plant import PlantModel, sensitivity_matrices

__all__ = [
    "AdjustedMatrices",
    "EstimatorKind",
    "EstimatorState",
    "adjust_matrices",
    "kalman_step",
    "quadratic_minimizer_update",
    "rseio_step",
    "run_filter",
    "write_trace_csv",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimatorState:
    """Estimate ``x_{t|t}`` and pseudo-covariance ``P_{t|t}`` at time ``t``."""

    t: int
    x_hat: np.ndarray
    p_mat: np.ndarray

    def __post_init__(self):
        x = np.array(self.x_hat, dtype=float).reshape(-1)
        p = np.array(self.p_mat, dtype=float)
        x.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "x_hat", x)
        object.__setattr__(self, "p_mat", p)

    @classmethod
    def initial(cls, model: PlantModel) -> "EstimatorState":
        return cls(0, model.x0_mean, model.p0)


@dataclass(frozen=True)
class AdjustedMatrices:
    """Sensitivity-adjusted ``P_hat, Q_hat, B_hat, A_hat`` for one step."""

    p_hat: np.ndarray
    q_hat: np.ndarray
    b_hat: np.ndarray
    a_hat: np.ndarray


class EstimatorKind(str, enum.Enum):
    """Estimators compared in the Monte Carlo study.

    ``RSE`` and ``KF`` ignore the arrival indicator and treat every received
    signal as a measurement.
    """

    RSEIO = "rseio"
    KFIO = "kfio"
    KF = "kf"
    RSE = "rse"

    @property
    def robust(self) -> bool:
        return self in (EstimatorKind.RSEIO, EstimatorKind.RSE)

    @property
    def uses_gamma(self) -> bool:
        return self in (EstimatorKind.RSEIO, EstimatorKind.KFIO)


def adjust_matrices(model: PlantModel, state: EstimatorState, t: int | None = None) -> AdjustedMatrices:
    """Adjusted matrices used by the arrival branch of :func:`rseio_step`.

    ``P_hat = (P^-1 + l S'S)^-1``,
    ``Q_hat = [Q^-1 + l T'(I + l S P S')^-1 T]^-1``,
    ``B_hat = B - l A P_hat S'T`` and
    ``A_hat = (A - l B_hat Q_hat T'S)(I - l P_hat S'S)``.

    Raises
    ------
    SingularMatrixError
        If any matrix that is inverted has condition number above 1e12.
    """
    t = state.t if t is None else t
    a, b, q = model.A(t), model.B(t), model.Q(t)
    p = state.p_mat
    lam = model.lam(t)
    if lam == 0.0:
        inv_spd(p, "P", t)
        inv_spd(q, "Q", t)
        return AdjustedMatrices(p.copy(), q.copy(), b.copy(), a.copy())
    sens = sensitivity_matrices(model, t)
    s, tt = sens.s_mat, sens.t_mat
    r = s.shape[0]
    p_hat = inv_spd(inv_spd(p, "P", t) + lam * s.T @ s, "P^-1 + l S'S", t)
    inner = sym(np.eye(r) + lam * s @ p @ s.T)
    q_hat = inv_spd(inv_spd(q, "Q", t) + lam * tt.T @ solve_spd(inner, tt, "I + l S P S'", t),
                    "Q_hat^-1", t)
    b_hat = b - lam * a @ p_hat @ s.T @ tt
    a_hat = (a - lam * b_hat @ q_hat @ tt.T @ s) @ (np.eye(model.n) - lam * p_hat @ s.T @ s)
    return AdjustedMatrices(p_hat, q_hat, b_hat, a_hat)


def _finish(p_new: np.ndarray, t: int) -> np.ndarray:
    asym = log_asymmetry(p_new)
    if asym > ASYM_LOG_TOL:
        log.warning("PCM asymmetry %.2e before re-symmetrization at t=%d", asym, t)
    p_new = sym(p_new)
    if not np.all(np.isfinite(p_new)):
        raise NumericError("PCM became non-finite", t)
    return p_new


def _check_measurement(model, y, gamma):
    if gamma not in (0, 1):
        raise UsageError(f"gamma must be 0 or 1, got {gamma!r}")
    if gamma == 1:
        if y is None:
            raise UsageError("a measurement is required when gamma == 1")
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape != (model.p,):
            raise UsageError(f"measurement must have length {model.p}")
    return y


def _predict(model, state):
    t = state.t
    a, b = model.A(t), model.B(t)
    x_new = a @ state.x_hat
    p_new = a @ state.p_mat @ a.T + b @ model.Q(t) @ b.T
    return EstimatorState(t + 1, x_new, _finish(p_new, t))


def rseio_step(model: PlantModel, state: EstimatorState, y, gamma: int) -> EstimatorState:
    """Advance the robust estimator from ``state.t`` to ``state.t + 1``.

    Parameters
    ----------
    y : array_like or None
        Received signal at ``t + 1``; required iff ``gamma == 1``.
    gamma : {0, 1}
        Arrival indicator ``gamma_{t+1}``.
    """
    y = _check_measurement(model, y, gamma)
    if gamma == 0:
        return _predict(model, state)
    t = state.t
    adj = adjust_matrices(model, state, t)
    c, r = model.C(t + 1), model.R(t + 1)
    r_inv = inv_spd(r, "R", t + 1)
    a = model.A(t)
    prior = sym(a @ adj.p_hat @ a.T + adj.b_hat @ adj.q_hat @ adj.b_hat.T)
    p_new = information_update(prior, c, r_inv, r, "A P_hat A' + B_hat Q_hat B_hat'", t)
    x_pred = adj.a_hat @ state.x_hat
    x_new = x_pred + p_new @ c.T @ r_inv @ (y - c @ x_pred)
    return EstimatorState(t + 1, x_new, _finish(p_new, t))


def kalman_step(model: PlantModel, state: EstimatorState, y, gamma: int) -> EstimatorState:
    """Covariance-form Kalman step; ``gamma == 0`` is a pure prediction."""
    y = _check_measurement(model, y, gamma)
    pred = _predict(model, state)
    if gamma == 0:
        return pred
    t1 = pred.t
    c, r = model.C(t1), model.R(t1)
    pc = pred.p_mat @ c.T
    innov_cov = sym(c @ pc + r)
    gain = solve_spd(innov_cov, pc.T, "C P C' + R", state.t).T
    x_new = pred.x_hat + gain @ (y - c @ pred.x_hat)
    ikc = np.eye(model.n) - gain @ c
    # Joseph form keeps the update symmetric PSD under rounding
    p_new = ikc @ pred.p_mat @ ikc.T + gain @ r @ gain.T
    return EstimatorState(t1, x_new, _finish(p_new, state.t))


def quadratic_minimizer_update(model: PlantModel, state: EstimatorState, y) -> EstimatorState:
    """Arrival update obtained by minimizing the penalized least-squares cost.

    The cost in ``alpha = col(x, w)`` is

        ||x - x_hat||^2_{P^-1} + ||w||^2_{Q^-1} + l ||[S T] alpha||^2
        + ||y - C [A B] alpha||^2_{R^-1}

    whose minimizer solves one linear system.  The estimate is
    ``[A B] alpha*`` and the PCM is ``[A B] H^-1 [A B]'`` with ``H`` the
    Hessian.  This shares no algebra with :func:`rseio_step`.
    """
    t = state.t
    n, m = model.n, model.m
    a, b, q = model.A(t), model.B(t), model.Q(t)
    c, r = model.C(t + 1), model.R(t + 1)
    sens = sensitivity_matrices(model, t)
    lam = model.lam(t)
    y = np.asarray(y, dtype=float).reshape(-1)
    ab = np.hstack([a, b])
    st = np.hstack([sens.s_mat, sens.t_mat])
    r_inv = np.linalg.inv(r)
    prior = np.zeros((n + m, n + m))
    prior[:n, :n] = np.linalg.inv(state.p_mat)
    prior[n:, n:] = np.linalg.inv(q)
    hess = prior + lam * st.T @ st + ab.T @ c.T @ r_inv @ c @ ab
    rhs = prior @ np.concatenate([state.x_hat, np.zeros(m)]) + ab.T @ c.T @ r_inv @ y
    alpha = np.linalg.solve(hess, rhs)
    p_new = ab @ np.linalg.solve(hess, ab.T)
    return EstimatorState(t + 1, ab @ alpha, sym(p_new))


def run_filter(model: PlantModel, gammas: Sequence[int], measurements,
               kind: EstimatorKind | str = EstimatorKind.RSEIO,
               initial: EstimatorState | None = None) -> list[EstimatorState]:
    """Run an estimator over ``t = 1 .. N``.

    Parameters
    ----------
    gammas : sequence of {0, 1}
        ``gamma_1 .. gamma_N``.
    measurements : array_like, shape (N, p)
        Received signals ``y_1 .. y_N``.  Entries with ``gamma = 0`` are
        pure noise; only estimators that ignore ``gamma`` read them.
    kind : EstimatorKind

    Returns
    -------
    list of EstimatorState
        States for ``t = 0 .. N`` (the initial state first).
    """
    kind = EstimatorKind(kind)
    state = EstimatorState.initial(model) if initial is None else initial
    gammas = [int(g) for g in gammas]
    ys = np.asarray(measurements, dtype=float).reshape(len(gammas), model.p) if gammas else []
    if kind is EstimatorKind.KFIO or kind is EstimatorKind.KF:
        step = kalman_step
    else:
        step = rseio_step
    states = [state]
    for g, y in zip(gammas, ys):
        g_used = g if kind.uses_gamma else 1
        state = step(model, state, y if g_used else None, g_used)
        states.append(state)
    return states


def write_trace_csv(path, states: Sequence[EstimatorState], gammas: Sequence[int] | None = None,
                    header: str | None = None) -> None:
    """Write a trace with columns ``t, gamma, x_hat_i, P_ij`` (upper triangle).

    ``gamma`` is empty for the initial state.
    """
    n = states[0].x_hat.size
    iu = np.triu_indices(n)
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "gamma"] + [f"x_hat_{i}" for i in range(n)]
                        + [f"P_{i}{j}" for i, j in zip(*iu)])
        for k, st in enumerate(states):
            g = "" if (gammas is None or k == 0) else int(gammas[k - 1])
            writer.writerow([st.t, g] + [repr(float(v)) for v in st.x_hat]
                            + [repr(float(v)) for v in st.p_mat[iu]])
