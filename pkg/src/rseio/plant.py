"""Uncertain linear time-varying plant and its sensitivity blocks.

The plant is

    x_{t+1} = A_t(eps_t) x_t + B_t(eps_t) w_t
    y_t     = C_t(eps_t) x_t + v_t

with each of ``A, B, C`` affine in the parametric error ``eps_t``:
``A_t(eps) = A_t + sum_k eps_k dA_t[k]``.  The estimator only ever sees the
nominal matrices, the Jacobians ``dA, dB, dC`` and the design parameter
``mu_t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._linalg import check_pd, sym
from .errors import ConfigError, NumericError

__all__ = [
    "Constant",
    "Table",
    "Function",
    "PlantModel",
    "SensitivityPair",
    "Trajectory",
    "UniformError",
    "ZeroError",
    "benchmark_plant",
    "plant_from_dict",
    "sensitivity_matrices",
    "simulate_truth",
]


class Constant:
    """Time-invariant schedule."""

    is_constant = True

    def __init__(self, value):
        self.value = np.array(value, dtype=float)
        self.value.setflags(write=False)

    def __call__(self, t: int) -> np.ndarray:
        return self.value

    def __repr__(self):
        return f"Constant(shape={self.value.shape})"


class Table:
    """Schedule tabulated for ``t = 0 .. len(values) - 1``."""

    is_constant = False

    def __init__(self, values):
        self.values = np.array(values, dtype=float)
        if self.values.ndim < 1 or len(self.values) == 0:
            raise ConfigError("tabulated schedule must have at least one entry")
        self.values.setflags(write=False)

    def __call__(self, t: int) -> np.ndarray:
        if not 0 <= t < len(self.values):
            raise ConfigError(f"tabulated schedule has {len(self.values)} entries; t={t} is out of range")
        return self.values[t]

    def __repr__(self):
        return f"Table(len={len(self.values)})"


class Function:
    """Schedule backed by an arbitrary pure function of ``t``."""

    is_constant = False

    def __init__(self, fn: Callable[[int], np.ndarray]):
        self.fn = fn

    def __call__(self, t: int) -> np.ndarray:
        return np.asarray(self.fn(t), dtype=float)


def _as_schedule(value):
    if isinstance(value, (Constant, Table, Function)):
        return value
    if callable(value):
        return Function(value)
    return Constant(value)


def _stack_jacobian(value):
    """Normalize a Jacobian spec to a schedule of shape (n_e, rows, cols)."""
    if value is None:
        return None
    if isinstance(value, Constant) and value.value.ndim == 2:
        return Constant(value.value[None])
    if isinstance(value, (Constant, Table, Function)) or callable(value):
        return _as_schedule(value)
    arr = np.array(value, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    return Constant(arr)


class PlantModel:
    """Uncertain plant description with time-indexed providers.

    Every matrix argument accepts an array (constant in ``t``), a
    :class:`Table`, or a callable ``t -> array``.  Jacobians are given as
    arrays of shape ``(n_e, rows, cols)`` (or a list of 2-D arrays); omitted
    Jacobians are zero.

    Parameters
    ----------
    a, b, c : array_like or schedule
        Nominal ``A_t`` (n x n), ``B_t`` (n x m), ``C_t`` (p x n).
    q, r : array_like or schedule
        Covariances of ``w_t`` (m x m) and ``v_t`` (p x p).
    p0 : array_like
        Covariance of ``x_0``.
    x0_mean : array_like, optional
        Mean of ``x_0``; zero by default.
    da, db, dc : array_like or schedule, optional
        Parametric-error Jacobians.
    mu : float or schedule
        Design parameter ``mu_t`` in ``(0, 1]``.
    """

    def __init__(self, a, b, c, q, r, p0, x0_mean=None, da=None, db=None, dc=None, mu=1.0):
        self._a = _as_schedule(a)
        self._b = _as_schedule(b)
        self._c = _as_schedule(c)
        self._q = _as_schedule(q)
        self._r = _as_schedule(r)
        self._mu = _as_schedule(mu)
        a0, b0, c0 = self._a(0), self._b(0), self._c(0)
        if a0.ndim != 2 or a0.shape[0] != a0.shape[1]:
            raise ConfigError(f"A must be square, got shape {a0.shape}")
        if b0.ndim != 2 or c0.ndim != 2:
            raise ConfigError("B and C must be 2-D matrices")
        self.n = a0.shape[0]
        self.m = b0.shape[1]
        self.p = c0.shape[0]
        self._da = _stack_jacobian(da)
        self._db = _stack_jacobian(db)
        self._dc = _stack_jacobian(dc)
        sizes = {s(0).shape[0] for s in (self._da, self._db, self._dc) if s is not None}
        if len(sizes) > 1:
            raise ConfigError(f"Jacobians disagree on the error dimension: {sorted(sizes)}")
        self.n_e = sizes.pop() if sizes else 1
        self.p0 = sym(np.array(p0, dtype=float))
        check_pd(self.p0, "P0")
        self.x0_mean = np.zeros(self.n) if x0_mean is None else np.array(x0_mean, dtype=float).reshape(-1)
        if self.x0_mean.shape != (self.n,):
            raise ConfigError(f"x0_mean must have length {self.n}")
        self.p0.setflags(write=False)
        self.x0_mean.setflags(write=False)
        self._chol_cache: dict[tuple[str, int], np.ndarray] = {}
        self._validate_static()

    # -- providers -----------------------------------------------------
    def _checked(self, sched, t, shape, name):
        value = sched(t)
        if value.shape != shape:
            raise ConfigError(f"{name}_{t} has shape {value.shape}, expected {shape}")
        return value

    def A(self, t: int) -> np.ndarray:
        return self._checked(self._a, t, (self.n, self.n), "A")

    def B(self, t: int) -> np.ndarray:
        return self._checked(self._b, t, (self.n, self.m), "B")

    def C(self, t: int) -> np.ndarray:
        return self._checked(self._c, t, (self.p, self.n), "C")

    def Q(self, t: int) -> np.ndarray:
        return sym(self._checked(self._q, t, (self.m, self.m), "Q"))

    def R(self, t: int) -> np.ndarray:
        return sym(self._checked(self._r, t, (self.p, self.p), "R"))

    def _jac(self, sched, t, rows, cols, name):
        if sched is None:
            return np.zeros((self.n_e, rows, cols))
        return self._checked(sched, t, (self.n_e, rows, cols), name)

    def dA(self, t: int) -> np.ndarray:
        return self._jac(self._da, t, self.n, self.n, "dA")

    def dB(self, t: int) -> np.ndarray:
        return self._jac(self._db, t, self.n, self.m, "dB")

    def dC(self, t: int) -> np.ndarray:
        return self._jac(self._dc, t, self.p, self.n, "dC")

    def mu(self, t: int) -> float:
        value = float(np.asarray(self._mu(t)).reshape(()))
        if not 0.0 < value <= 1.0:
            raise ConfigError(f"mu_{t}={value} outside (0, 1]")
        return value

    def lam(self, t: int) -> float:
        """Sensitivity weight ``(1 - mu_t) / mu_t``."""
        mu = self.mu(t)
        return (1.0 - mu) / mu

    def chol_q(self, t: int) -> np.ndarray:
        return self._chol("Q", t)

    def chol_r(self, t: int) -> np.ndarray:
        return self._chol("R", t)

    def _chol(self, which, t):
        sched = self._q if which == "Q" else self._r
        key = (which, 0 if sched.is_constant else t)
        if key not in self._chol_cache:
            mat = self.Q(t) if which == "Q" else self.R(t)
            self._chol_cache[key] = check_pd(mat, which, t)
        return self._chol_cache[key]

    def perturbed(self, t: int, eps: np.ndarray):
        """Return ``(A_t(eps), B_t(eps), C_t(eps))``."""
        eps = np.asarray(eps, dtype=float).reshape(self.n_e)
        return (
            self.A(t) + np.tensordot(eps, self.dA(t), axes=1),
            self.B(t) + np.tensordot(eps, self.dB(t), axes=1),
            self.C(t) + np.tensordot(eps, self.dC(t), axes=1),
        )

    # -- structure -----------------------------------------------------
    @property
    def is_lti(self) -> bool:
        scheds = [self._a, self._b, self._c, self._q, self._r, self._mu]
        scheds += [s for s in (self._da, self._db, self._dc) if s is not None]
        return all(s.is_constant for s in scheds)

    def with_mu(self, mu) -> "PlantModel":
        """Copy of the model with a different design-parameter schedule."""
        clone = object.__new__(PlantModel)
        clone.__dict__.update(self.__dict__)
        clone._mu = _as_schedule(mu)
        clone._chol_cache = self._chol_cache
        if clone._mu.is_constant:
            clone.mu(0)
        return clone

    def _validate_static(self):
        # constant providers are checked eagerly, tables entry by entry
        for name, sched in (("Q", self._q), ("R", self._r)):
            if isinstance(sched, Constant):
                self._chol(name, 0)
            elif isinstance(sched, Table):
                for t in range(len(sched.values)):
                    check_pd(sched(t), name, t)
        for getter, sched in ((self.A, self._a), (self.B, self._b), (self.C, self._c),
                              (self.dA, self._da), (self.dB, self._db), (self.dC, self._dc)):
            if isinstance(sched, Table):
                for t in range(len(sched.values)):
                    getter(t)
            elif isinstance(sched, Constant):
                getter(0)
        if isinstance(self._mu, Table):
            for t in range(len(self._mu.values)):
                self.mu(t)
        elif isinstance(self._mu, Constant):
            self.mu(0)


@dataclass(frozen=True)
class SensitivityPair:
    """Stacked innovation sensitivities ``S_t`` (r x n) and ``T_t`` (r x m)."""

    s_mat: np.ndarray
    t_mat: np.ndarray


def sensitivity_matrices(model: PlantModel, t: int) -> SensitivityPair:
    """Stack the first-order sensitivities of the one-step innovation.

    For each error component ``k`` two row blocks are appended:
    ``C_{t+1} dA_t[k]`` then ``dC_{t+1}[k] A_t`` (and the same with ``B_t``
    for ``T_t``).  The result has ``2 * n_e * p`` rows.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    a, b = model.A(t), model.B(t)
    c_next = model.C(t + 1)
    da, db, dc_next = model.dA(t), model.dB(t), model.dC(t + 1)
    s_blocks, t_blocks = [], []
    for k in range(model.n_e):
        s_blocks += [c_next @ da[k], dc_next[k] @ a]
        t_blocks += [c_next @ db[k], dc_next[k] @ b]
    return SensitivityPair(np.vstack(s_blocks), np.vstack(t_blocks))


class UniformError:
    """i.i.d. uniform errors on ``[-delta, delta]``, components independent."""

    def __init__(self, delta: float):
        if delta < 0:
            raise ConfigError("delta must be non-negative")
        self.delta = float(delta)

    def __call__(self, rng: np.random.Generator, size: int, n_e: int) -> np.ndarray:
        return rng.uniform(-self.delta, self.delta, size=(size, n_e))


class ZeroError:
    """Exact model: every ``eps_t`` is zero (no random draws consumed)."""

    def __call__(self, rng, size, n_e):
        return np.zeros((size, n_e))


@dataclass(frozen=True)
class Trajectory:
    """Simulated truth for ``t = 0 .. T``.

    ``outputs[t]`` is ``C_t(eps_t) x_t + v_t``; the channel decides later
    whether the receiver sees it or just ``v_t``.  ``noise_v`` is kept so the
    received signal can be formed for either arrival value.
    """

    states: np.ndarray
    outputs: np.ndarray
    clean_outputs: np.ndarray
    noise_v: np.ndarray
    eps: np.ndarray

    def received(self, gammas: Sequence[int]) -> np.ndarray:
        """Received signals ``y_t = gamma_t C_t(eps_t) x_t + v_t`` for ``t >= 1``."""
        g = np.asarray(gammas, dtype=float).reshape(-1, 1)
        return g * self.clean_outputs[1:] + self.noise_v[1:]


def _color(z, chol, constant):
    if constant:
        return z @ chol(0).T
    out = np.empty_like(z)
    for t in range(len(z)):
        out[t] = chol(t) @ z[t]
    return out


def draw_trial_noise(model: PlantModel, horizon: int, eps_sampler, rng_seed):
    """Draw ``(x0, w, v, eps)`` for one trial from independent child streams."""
    ss = rng_seed if isinstance(rng_seed, np.random.SeedSequence) else np.random.SeedSequence(rng_seed)
    r_x0, r_w, r_v, r_eps = (np.random.default_rng(s) for s in ss.spawn(4))
    x0 = model.x0_mean + check_pd(model.p0, "P0") @ r_x0.standard_normal(model.n)
    zw = r_w.standard_normal((horizon, model.m))
    zv = r_v.standard_normal((horizon + 1, model.p))
    w = _color(zw, model.chol_q, model._q.is_constant)
    v = _color(zv, model.chol_r, model._r.is_constant)
    eps = np.asarray(eps_sampler(r_eps, horizon + 1, model.n_e), dtype=float)
    return x0, w, v, eps


def simulate_truth(model: PlantModel, horizon: int, eps_sampler=None, rng_seed=0) -> Trajectory:
    """Simulate the uncertain plant for ``t = 0 .. horizon``.

    Parameters
    ----------
    eps_sampler : callable, optional
        ``(rng, size, n_e) -> (size, n_e)`` array; defaults to no error.
    rng_seed : int or SeedSequence
        All randomness derives from this seed.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    eps_sampler = ZeroError() if eps_sampler is None else eps_sampler
    x0, w, v, eps = draw_trial_noise(model, horizon, eps_sampler, rng_seed)
    states = np.empty((horizon + 1, model.n))
    clean = np.empty((horizon + 1, model.p))
    states[0] = x0
    for t in range(horizon + 1):
        a, b, c = model.perturbed(t, eps[t])
        clean[t] = c @ states[t]
        if t < horizon:
            states[t + 1] = a @ states[t] + b @ w[t]
    if not np.all(np.isfinite(states)):
        raise NumericError("state trajectory diverged to non-finite values")
    return Trajectory(states, clean + v, clean, v, eps)


# -- presets and config ------------------------------------------------

_BENCH_A = [[0.9802, 0.0196], [0.0, 0.9802]]
_BENCH_DA = [[0.0, 0.0198 * 5], [0.0, 0.0]]
_BENCH_Q = [[1.9608, 0.0195], [0.0195, 1.9605]]


def benchmark_plant(mu: float = 0.8) -> PlantModel:
    """Second-order benchmark plant with a single uncertain coupling term."""
    return PlantModel(
        a=_BENCH_A, b=np.eye(2), c=[[1.0, -1.0]], q=_BENCH_Q, r=[[1.0]],
        p0=np.eye(2), x0_mean=[1.0, 0.0], da=[_BENCH_DA], mu=mu,
    )


_PLANT_KEYS = {"A", "B", "C", "Q", "R", "P0", "x0", "dA", "dB", "dC", "mu"}


def _schedule_from_json(value, key):
    if isinstance(value, dict):
        kind = value.get("schedule")
        if kind == "constant":
            return Constant(value["value"])
        if kind == "table":
            return Table(value["values"])
        raise ConfigError(f"plant.{key}: schedule must be 'constant' or 'table', got {kind!r}")
    try:
        return Constant(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"plant.{key}: not a numeric array ({exc})") from None


def plant_from_dict(spec) -> PlantModel:
    """Build a plant from its JSON form.

    ``spec`` is either the string ``"benchmark"`` or a mapping with keys
    ``A, B, C, Q, R, P0`` (required) and ``x0, dA, dB, dC, mu`` (optional).
    Matrices are row-major nested lists; any entry may instead be
    ``{"schedule": "table", "values": [...]}`` or
    ``{"schedule": "constant", "value": ...}``.
    """
    if spec == "benchmark":
        return benchmark_plant()
    if not isinstance(spec, dict):
        raise ConfigError("plant must be 'benchmark' or an object")
    unknown = set(spec) - _PLANT_KEYS
    if unknown:
        raise ConfigError(f"plant: unknown keys {sorted(unknown)}")
    missing = {"A", "B", "C", "Q", "R", "P0"} - set(spec)
    if missing:
        raise ConfigError(f"plant: missing keys {sorted(missing)}")
    kw = {}
    for key, arg in (("A", "a"), ("B", "b"), ("C", "c"), ("Q", "q"), ("R", "r"),
                     ("dA", "da"), ("dB", "db"), ("dC", "dc"), ("mu", "mu")):
        if key in spec:
            kw[arg] = _schedule_from_json(spec[key], key)
    try:
        p0 = np.array(spec["P0"], dtype=float)
        x0 = None if "x0" not in spec else np.array(spec["x0"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"plant: bad P0/x0 ({exc})") from None
    try:
        return PlantModel(p0=p0, x0_mean=x0, **kw)
    except NumericError as exc:
        raise ConfigError(f"plant: {exc}") from None
