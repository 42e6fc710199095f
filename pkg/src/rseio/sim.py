"""Monte Carlo comparison of estimators and PCM stationarity study.

Trials are run in batches: all trials share the (time-indexed) nominal
matrices, so each recursion step is a handful of stacked ``numpy`` matrix
operations over the trial axis.  Every trial draws from its own RNG stream
derived from ``(seed, stream, trial)``, and per-trial results are stored
and reduced in trial order, so reports do not depend on how trials are
split across worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from ._linalg import sym
from .channel import channel_from_dict, sample_bits
from .errors import ConfigError, DomainError
from .estimator import EstimatorKind
from .plant import PlantModel, UniformError, draw_trial_noise, plant_from_dict, sensitivity_matrices

__all__ = [
    "MseAccumulator",
    "SimConfig",
    "SimReport",
    "empirical_mse",
    "epdf",
    "run_experiment",
    "silverman_bandwidth",
    "stationarity_metric",
]

log = logging.getLogger(__name__)

_STREAM_TRUTH, _STREAM_CHANNEL, _STREAM_STATIONARY, _STREAM_CALIBRATION = range(4)
FAILED_COND = 1e12


# -- statistics -------------------------------------------------------

def empirical_mse(errors: np.ndarray) -> np.ndarray:
    """Mean squared Euclidean error per time step.

    Parameters
    ----------
    errors : ndarray, shape (J, T+1, n)
        Per-trial estimation errors.
    """
    errors = np.asarray(errors, dtype=float)
    return np.mean(np.sum(errors ** 2, axis=-1), axis=0)


class MseAccumulator:
    """Streaming sum of squared errors, one trial at a time."""

    def __init__(self, length: int):
        self.total = np.zeros(length)
        self.count = 0

    def add(self, error: np.ndarray) -> None:
        self.total += np.sum(np.asarray(error, dtype=float) ** 2, axis=-1)
        self.count += 1

    def mse(self) -> np.ndarray:
        if self.count == 0:
            raise ValueError("no trials accumulated")
        return self.total / self.count


def silverman_bandwidth(samples: np.ndarray) -> float:
    """``0.9 min(std, IQR/1.34) n^(-1/5)``; falls back to ``std`` when the IQR is 0."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise DomainError("bandwidth needs at least two samples")
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        raise DomainError("samples have zero variance")
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * x.size ** (-0.2)


def epdf(samples: np.ndarray, grid: np.ndarray | None = None, points: int = 100):
    """Gaussian kernel density estimate with Silverman's bandwidth.

    Parameters
    ----------
    samples : array_like
        Scalar samples.
    grid : array_like, optional
        Evaluation points; by default ``points`` equally spaced values over
        ``[min - 4h, max + 4h]``.

    Returns
    -------
    grid, density : ndarray
    """
    x = np.asarray(samples, dtype=float).ravel()
    h = silverman_bandwidth(x)
    if grid is None:
        grid = np.linspace(x.min() - 4 * h, x.max() + 4 * h, points)
    grid = np.asarray(grid, dtype=float)
    z = (grid[:, None] - x[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * math.sqrt(2 * math.pi))
    return grid, dens


def stationarity_metric(samples_a, samples_b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    a = np.asarray(samples_a, dtype=float).ravel()
    b = np.asarray(samples_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be nonempty")
    return float(stats.ks_2samp(a, b).statistic)


# -- configuration ----------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo experiment description (JSON-serializable fields only).

    ``p0_list`` entries are either scalars ``c`` (meaning ``c I``) or full
    matrices.  When empty the stationarity study is skipped.
    """

    plant: object = "benchmark"
    channel: dict = field(default_factory=lambda: {"kind": "bernoulli", "gamma": 0.8})
    delta: float = 1.0
    mu: float | None = 0.8
    horizon: int = 500
    trials: int = 500
    estimators: tuple = ("rseio", "kfio", "kf", "rse")
    p0_list: tuple = ()
    seed: int = 0
    calibration_pairs: int = 3
    name: str = "custom"

    def __post_init__(self):
        if int(self.horizon) < 1:
            raise ConfigError("horizon must be >= 1")
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if not float(self.delta) >= 0:
            raise ConfigError("delta must be >= 0")
        if self.mu is not None and not 0 < float(self.mu) <= 1:
            raise ConfigError("mu must lie in (0, 1]")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        try:
            kinds = tuple(EstimatorKind(k).value for k in self.estimators)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        object.__setattr__(self, "estimators", kinds)
        object.__setattr__(self, "p0_list", tuple(self.p0_list))
        try:
            channel_from_dict(self.channel)
        except DomainError as exc:
            raise ConfigError(f"channel: {exc}") from None

    _KEYS = ("plant", "channel", "delta", "mu", "horizon", "trials", "estimators",
             "p0_list", "seed", "calibration_pairs", "name")

    @classmethod
    def from_dict(cls, spec: dict) -> "SimConfig":
        if not isinstance(spec, dict):
            raise ConfigError("simulation config must be an object")
        unknown = set(spec) - set(cls._KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kw = dict(spec)
        try:
            for key, conv in (("delta", float), ("horizon", int), ("trials", int), ("seed", int),
                              ("calibration_pairs", int)):
                if key in kw:
                    kw[key] = conv(kw[key])
            if kw.get("mu") is not None:
                kw["mu"] = float(kw["mu"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad numeric field: {exc}") from None
        if "estimators" in kw:
            kw["estimators"] = tuple(kw["estimators"])
        if "p0_list" in kw:
            kw["p0_list"] = tuple(kw["p0_list"])
        return cls(**kw)

    def to_dict(self) -> dict:
        return {k: (list(getattr(self, k)) if isinstance(getattr(self, k), tuple) else getattr(self, k))
                for k in self._KEYS}

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form (first 16 hex digits)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def model(self) -> PlantModel:
        plant = plant_from_dict(self.plant)
        return plant if self.mu is None else plant.with_mu(self.mu)

    def p0_matrices(self, n: int) -> list[np.ndarray]:
        out = []
        for entry in self.p0_list:
            arr = np.array(entry, dtype=float)
            if arr.ndim == 0:
                arr = float(arr) * np.eye(n)
            if arr.shape != (n, n):
                raise ConfigError(f"p0_list entry has shape {arr.shape}, expected {(n, n)}")
            out.append(sym(arr))
        return out


# -- batched recursions -------------------------------------------------

def _bmv(m, v):
    """Batched matrix-vector product; ``m`` is (n, k) or (J, n, k)."""
    if m.ndim == 2:
        return v @ m.T
    return np.einsum("jab,jb->ja", m, v)


def _tr(m):
    return np.swapaxes(m, -1, -2)


def _safe_inv(m: np.ndarray) -> np.ndarray:
    """Stacked inverse; singular members become NaN instead of aborting."""
    try:
        return np.linalg.inv(m)
    except np.linalg.LinAlgError:
        out = np.full_like(m, np.nan)
        for j in range(m.shape[0]):
            try:
                out[j] = np.linalg.inv(m[j])
            except np.linalg.LinAlgError:
                pass
        return out


@dataclass
class _StepMats:
    a: np.ndarray
    b: np.ndarray
    bqb: np.ndarray
    q_inv: np.ndarray
    c: np.ndarray
    r: np.ndarray
    r_inv: np.ndarray
    lam: float
    s: np.ndarray
    t: np.ndarray


def _step_mats(model: PlantModel, t: int) -> _StepMats:
    a, b, q = model.A(t), model.B(t), model.Q(t)
    sens = sensitivity_matrices(model, t)
    r = model.R(t + 1)
    return _StepMats(a, b, b @ q @ b.T, np.linalg.inv(q), model.C(t + 1), r, np.linalg.inv(r),
                     model.lam(t), sens.s_mat, sens.t_mat)


def _robust_update(sm: _StepMats, p, x, y):
    """Arrival branch of the robust estimator on a stack of trials."""
    if sm.lam == 0.0:
        # no robustness penalty: the update is the Kalman update, bit for bit
        return _kalman_update(sm, p, x, y)
    n = sm.a.shape[0]
    lam, s, tt = sm.lam, sm.s, sm.t
    sts = s.T @ s
    p_hat = _safe_inv(_safe_inv(p) + lam * sts)
    inner = np.eye(s.shape[0]) + lam * s @ p @ s.T
    q_hat = _safe_inv(sm.q_inv + lam * tt.T @ _safe_inv(inner) @ tt)
    b_hat = sm.b - lam * sm.a @ p_hat @ s.T @ tt
    a_hat = (sm.a - lam * b_hat @ q_hat @ tt.T @ s) @ (np.eye(n) - lam * p_hat @ sts)
    prior = sm.a @ p_hat @ sm.a.T + b_hat @ q_hat @ _tr(b_hat)
    prior = sym(prior)
    pc = prior @ sm.c.T
    gain_t = np.linalg.solve(sym(sm.c @ pc + sm.r), _tr(pc))
    p_new = prior - pc @ gain_t
    x_pred = _bmv(a_hat, x)
    innov = y - x_pred @ sm.c.T
    x_new = x_pred + _bmv(p_new @ sm.c.T @ sm.r_inv, innov)
    return p_new, x_new


def _kalman_update(sm: _StepMats, p, x, y):
    prior = sym(sm.a @ p @ sm.a.T + sm.bqb)
    pc = prior @ sm.c.T
    gain = _tr(np.linalg.solve(sym(sm.c @ pc + sm.r), _tr(pc)))
    x_pred = x @ sm.a.T
    x_new = x_pred + _bmv(gain, y - x_pred @ sm.c.T)
    ikc = np.eye(sm.a.shape[0]) - gain @ sm.c
    p_new = ikc @ prior @ _tr(ikc) + gain @ sm.r @ _tr(gain)
    return p_new, x_new


def _health(p: np.ndarray) -> np.ndarray:
    """Mask of trials whose PCM is finite, PD and well conditioned."""
    finite = np.all(np.isfinite(p), axis=(1, 2))
    ok = finite.copy()
    if finite.any():
        w = np.linalg.eigvalsh(np.where(finite[:, None, None], p, np.eye(p.shape[1])))
        ok &= (w[:, 0] > 0) & (w[:, -1] <= FAILED_COND * w[:, 0])
    return ok


def batch_filter(model: PlantModel, kind: EstimatorKind, gammas: np.ndarray, ys: np.ndarray,
                 x0_hat: np.ndarray | None = None, p0: np.ndarray | None = None,
                 track_states: bool = True):
    """Run one estimator over a stack of trials.

    Parameters
    ----------
    gammas : ndarray, shape (J, T)
        ``gamma_1 .. gamma_T`` per trial.
    ys : ndarray, shape (J, T, p) or None
        Received signals; may be None when ``track_states`` is False.
    p0 : ndarray, shape (n, n) or (J, n, n), optional

    Returns
    -------
    x_hat : ndarray, shape (J, T+1, n) or None
    p_final : ndarray, shape (J, n, n)
    failed : ndarray of bool, shape (J,)
    """
    kind = EstimatorKind(kind)
    n_trials, horizon = gammas.shape
    n = model.n
    p0 = model.p0 if p0 is None else p0
    p = np.broadcast_to(np.asarray(p0, dtype=float), (n_trials, n, n)).copy()
    x = np.broadcast_to(model.x0_mean if x0_hat is None else x0_hat, (n_trials, n)).astype(float)
    xs = np.empty((n_trials, horizon + 1, n)) if track_states else None
    if track_states:
        xs[:, 0] = x
    failed = np.zeros(n_trials, dtype=bool)
    update = _robust_update if kind.robust else _kalman_update
    dummy_y = np.zeros((n_trials, model.p))
    with np.errstate(all="ignore"):
        for t in range(horizon):
            sm = _step_mats(model, t)
            g = gammas[:, t].astype(bool) if kind.uses_gamma else np.ones(n_trials, dtype=bool)
            y = ys[:, t] if ys is not None else dummy_y
            p_pred = sm.a @ p @ sm.a.T + sm.bqb
            x_pred = x @ sm.a.T
            if g.any():
                p_upd, x_upd = update(sm, p, x, y)
                p = np.where(g[:, None, None], p_upd, p_pred)
                x = np.where(g[:, None], x_upd, x_pred)
            else:
                p, x = p_pred, x_pred
            p = sym(p)
            bad = ~_health(p) | ~np.all(np.isfinite(x), axis=1)
            if bad.any():
                newly = bad & ~failed
                if newly.any():
                    log.warning("%s: %d trial(s) failed at t=%d", kind.value, int(newly.sum()), t + 1)
                failed |= bad
                p[bad] = np.eye(n)
                x[bad] = 0.0
            if track_states:
                xs[:, t + 1] = x
    return xs, p, failed


@dataclass
class _Realization:
    states: np.ndarray     # (J, T+1, n)
    received: np.ndarray   # (J, T, p), y_1..y_T
    gammas: np.ndarray     # (J, T)
    digests: list


def _trial_seed(seed: int, stream: int, *index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, stream, *index])


def draw_realizations(model: PlantModel, channel, delta: float, horizon: int, seed: int,
                      trials: Sequence[int]) -> _Realization:
    """Simulate truth, channel and received signals for the given trial indices."""
    sampler = UniformError(delta)
    j_count = len(trials)
    n, p = model.n, model.p
    x0 = np.empty((j_count, n))
    w = np.empty((j_count, horizon, model.m))
    v = np.empty((j_count, horizon + 1, p))
    eps = np.empty((j_count, horizon + 1, model.n_e))
    gam = np.empty((j_count, horizon), dtype=np.int8)
    digests = []
    for row, trial in enumerate(trials):
        x0[row], w[row], v[row], eps[row] = draw_trial_noise(
            model, horizon, sampler, _trial_seed(seed, _STREAM_TRUTH, trial))
        gam[row] = sample_bits(channel, horizon, np.random.default_rng(
            _trial_seed(seed, _STREAM_CHANNEL, trial)))
        h = hashlib.sha256()
        for arr in (x0[row], w[row], v[row], eps[row], gam[row]):
            h.update(np.ascontiguousarray(arr).tobytes())
        digests.append(h.hexdigest())
    states = np.empty((j_count, horizon + 1, n))
    states[:, 0] = x0
    clean = np.empty((j_count, horizon + 1, p))
    for t in range(horizon + 1):
        e = eps[:, t]
        c_t = model.C(t) + np.einsum("jk,kab->jab", e, model.dC(t))
        clean[:, t] = np.einsum("jab,jb->ja", c_t, states[:, t])
        if t < horizon:
            a_t = model.A(t) + np.einsum("jk,kab->jab", e, model.dA(t))
            b_t = model.B(t) + np.einsum("jk,kab->jab", e, model.dB(t))
            states[:, t + 1] = (np.einsum("jab,jb->ja", a_t, states[:, t])
                                + np.einsum("jab,jb->ja", b_t, w[:, t]))
    received = gam[:, :, None] * clean[:, 1:] + v[:, 1:]
    return _Realization(states, received, gam, digests)


def _run_chunk(config: SimConfig, trials: Sequence[int]):
    model = config.model()
    channel = channel_from_dict(config.channel)
    real = draw_realizations(model, channel, config.delta, config.horizon, config.seed, trials)
    sq = {}
    failed = np.zeros(len(trials), dtype=bool)
    for kind in config.estimators:
        xs, _, bad = batch_filter(model, EstimatorKind(kind), real.gammas, real.received)
        sq[kind] = np.sum((real.states - xs) ** 2, axis=-1)
        failed |= bad
    return sq, failed, real.digests


def _run_pcm_chunk(config: SimConfig, p0: np.ndarray, stream: int, group: int, trials: Sequence[int]):
    model = config.model()
    channel = channel_from_dict(config.channel)
    gam = np.stack([sample_bits(channel, config.horizon, np.random.default_rng(
        _trial_seed(config.seed, stream, group, j))) for j in trials])
    _, p_final, failed = batch_filter(model, EstimatorKind.RSEIO, gam, None, p0=p0, track_states=False)
    return p_final, failed


def _chunks(count: int, workers: int) -> list[range]:
    size = max(1, math.ceil(count / max(1, workers)))
    return [range(i, min(count, i + size)) for i in range(0, count, size)]


def _map_chunks(fn, args_list, threads: int):
    if threads <= 1 or len(args_list) <= 1:
        return [fn(*args) for args in args_list]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, *args) for args in args_list]
        return [f.result() for f in futures]


# -- report -------------------------------------------------------------

@dataclass(frozen=True)
class SimReport:
    """Sealed results of :func:`run_experiment`.

    ``pcm_samples`` maps a ``P0`` label to the ``(J, n, n)`` array of final
    PCMs; ``ks`` maps an element label ``"i,j"`` to the pairwise KS matrix
    between ``P0`` groups; ``ks_self`` is the mean KS statistic between
    independent same-``P0`` replicates (the calibration level).
    """

    config: SimConfig
    mse: dict
    excluded_trials: int
    pcm_samples: dict
    pcm_excluded: dict
    epdf: dict
    ks: dict
    ks_self: float | None
    metadata: dict

    def time_averaged_mse(self, kind: str, start: int = 80, stop: int | None = None) -> float:
        curve = self.mse[EstimatorKind(kind).value]
        stop = len(curve) - 1 if stop is None else stop
        return float(np.mean(curve[start: stop + 1]))

    def summary(self) -> dict:
        out = dict(self.metadata)
        out["config"] = self.config.to_dict()
        out["excluded_trials"] = self.excluded_trials
        out["time_averaged_mse_80_end"] = {k: self.time_averaged_mse(k) for k in self.mse} \
            if len(next(iter(self.mse.values()), [])) > 80 else {}
        out["pcm_excluded"] = self.pcm_excluded
        out["ks"] = {k: v.tolist() for k, v in self.ks.items()}
        out["ks_self"] = self.ks_self
        out["p0_labels"] = list(self.pcm_samples)
        return out

    def write(self, out_dir) -> list[str]:
        """Write ``mse.csv``, ``report.json`` and, if present, PCM sample and EPDF files."""
        os.makedirs(out_dir, exist_ok=True)
        header = f"config_hash={self.metadata['config_hash']} seed={self.metadata['seed']}"
        paths = []
        path = os.path.join(out_dir, "mse.csv")
        kinds = list(self.mse)
        with open(path, "w", newline="") as fh:
            fh.write(f"# {header}\n")
            wr = csv.writer(fh)
            wr.writerow(["t"] + kinds)
            for t in range(self.config.horizon + 1):
                wr.writerow([t] + [repr(float(self.mse[k][t])) for k in kinds])
        paths.append(path)
        if self.pcm_samples:
            path = os.path.join(out_dir, "pcm_samples.csv")
            n = next(iter(self.pcm_samples.values())).shape[1]
            with open(path, "w", newline="") as fh:
                fh.write(f"# {header}\n")
                wr = csv.writer(fh)
                wr.writerow(["p0", "trial"] + [f"P_{i}{j}" for i in range(n) for j in range(n)])
                for label, arr in self.pcm_samples.items():
                    for j, mat in enumerate(arr):
                        wr.writerow([label, j] + [repr(float(v)) for v in mat.ravel()])
            paths.append(path)
            path = os.path.join(out_dir, "epdf.csv")
            with open(path, "w", newline="") as fh:
                fh.write(f"# {header}\n")
                wr = csv.writer(fh)
                wr.writerow(["p0", "element", "x", "density"])
                for (label, elem), (grid, dens) in self.epdf.items():
                    for xv, dv in zip(grid, dens):
                        wr.writerow([label, elem, repr(float(xv)), repr(float(dv))])
            paths.append(path)
        path = os.path.join(out_dir, "mse.gp")
        with open(path, "w") as fh:
            fh.write(f"# {header}\nset datafile separator ','\nset key autotitle columnhead\n"
                     "set xlabel 't'\nset ylabel 'empirical MSE'\n")
            cols = ", ".join(f"'mse.csv' using 1:{i + 2} with lines" for i in range(len(kinds)))
            fh.write(f"plot {cols}\n")
        paths.append(path)
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths.append(path)
        return paths


def _p0_label(mat: np.ndarray) -> str:
    if np.allclose(mat, mat[0, 0] * np.eye(mat.shape[0]), rtol=0, atol=0):
        return f"{mat[0, 0]:g}I"
    return "P0[" + ",".join(f"{v:g}" for v in mat.ravel()) + "]"


def run_experiment(config: SimConfig, threads: int = 1) -> SimReport:
    """Run every configured estimator on shared realizations.

    A trial in which any estimator fails (non-finite, indefinite or
    ill-conditioned PCM) is excluded from all MSE curves; the count is
    reported.  When ``config.p0_list`` is nonempty the final PCMs of the
    robust estimator are also collected for every initial ``P0`` (each group
    with independent arrival sequences), together with EPDFs and pairwise
    KS statistics of every upper-triangular element.
    """
    model = config.model()
    chunks = _chunks(config.trials, threads)
    results = _map_chunks(_run_chunk, [(config, c) for c in chunks], threads)
    failed = np.concatenate([r[1] for r in results])
    digests = [d for r in results for d in r[2]]
    keep = ~failed
    if failed.any():
        log.warning("excluded %d of %d trials after estimator failure", int(failed.sum()), config.trials)
    mse = {}
    for kind in config.estimators:
        sq = np.concatenate([r[0][kind] for r in results])
        mse[kind] = sq[keep].mean(axis=0) if keep.any() else np.full(config.horizon + 1, np.nan)

    pcm_samples, pcm_excluded, curves, ks, ks_self = {}, {}, {}, {}, None
    p0s = config.p0_matrices(model.n)
    if p0s:
        def collect(p0, stream, group):
            parts = _map_chunks(_run_pcm_chunk, [(config, p0, stream, group, c) for c in chunks], threads)
            return np.concatenate([x[0] for x in parts]), np.concatenate([x[1] for x in parts])

        for i, p0 in enumerate(p0s):
            label = _p0_label(p0)
            samples, bad = collect(p0, _STREAM_STATIONARY, i)
            pcm_samples[label] = samples[~bad]
            pcm_excluded[label] = int(bad.sum())
        iu = np.triu_indices(model.n)
        labels = list(pcm_samples)
        for a, b in zip(*iu):
            elem = f"{a},{b}"
            for label in labels:
                vals = pcm_samples[label][:, a, b]
                curves[(label, elem)] = epdf(vals)
            mat = np.zeros((len(labels), len(labels)))
            for x in range(len(labels)):
                for y in range(x + 1, len(labels)):
                    mat[x, y] = mat[y, x] = stationarity_metric(
                        pcm_samples[labels[x]][:, a, b], pcm_samples[labels[y]][:, a, b])
            ks[elem] = mat
        cal = []
        for r in range(config.calibration_pairs):
            s1, b1 = collect(p0s[0], _STREAM_CALIBRATION, 2 * r)
            s2, b2 = collect(p0s[0], _STREAM_CALIBRATION, 2 * r + 1)
            cal.append(stationarity_metric(s1[~b1][:, 0, 0], s2[~b2][:, 0, 0]))
        ks_self = float(np.mean(cal)) if cal else None

    digest = hashlib.sha256("".join(digests).encode()).hexdigest()
    metadata = {"seed": config.seed, "config_hash": config.config_hash(),
                "realization_digest": digest, "trials": config.trials, "horizon": config.horizon}
    return SimReport(config, mse, int(failed.sum()), pcm_samples, pcm_excluded, curves, ks, ks_self,
                     metadata)


def with_overrides(config: SimConfig, **kw) -> SimConfig:
    """``dataclasses.replace`` that ignores ``None`` values."""
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
