"""Convergence diagnostics for the PCM recursion.

Tools here answer three questions about the map ``P -> H_m(Phi, P)``:

* whether a (product of) step matrices lies in the contractive classes
  ``H_l``, ``H_r``, ``H_lr`` (block sign tests and the equivalent rank tests
  on stacked observability/controllability-like matrices for LTI plants);
* which simple controllability/observability conditions guarantee those
  classes;
* how strongly a composite map contracts the Riemannian distance, by Monte
  Carlo over matrix pairs and arrival sequences.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.stats import ortho_group

from ._linalg import inv_sqrt_pd, sqrt_psd, sym
from .channel import DropoutModel, sample_bits
from .errors import DomainError, UnsupportedConfigError
from .pcm import HamiltonianBlock, build_phi, homographic, symplectic_unit, tilde_matrices
from .plant import PlantModel

__all__ = [
    "ContractionStats",
    "SufficientConditions",
    "DropoutPattern",
    "HamiltonianClass",
    "LipschitzEstimate",
    "analysis_matrices",
    "build_Cn",
    "build_Ob",
    "classify_hamiltonian",
    "controllable",
    "sufficient_conditions",
    "estimate_contraction",
    "estimate_expected_log_lipschitz",
    "observable",
    "product_membership",
    "random_spd",
    "rank_full",
    "riemannian_distance",
]

STRICT_RTOL = 1e-9


# -- metric -----------------------------------------------------------

def riemannian_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Affine-invariant distance ``sqrt(sum log^2 eig(P Q^-1))``.

    The spectrum is taken from the symmetric whitened matrix
    ``L^-1 P L^-T`` with ``Q = L L'``.

    Raises
    ------
    DomainError
        If either argument is not symmetric positive definite.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise DomainError("distance needs two square matrices of equal size")
    try:
        low = np.linalg.cholesky(sym(q))
        np.linalg.cholesky(sym(p))
    except np.linalg.LinAlgError:
        raise DomainError("distance is defined for positive definite matrices only") from None
    tmp = solve_triangular(low, sym(p), lower=True)
    white = solve_triangular(low, tmp.T, lower=True)
    w = np.linalg.eigvalsh(sym(white))
    if w[0] <= 0:
        raise DomainError("distance is defined for positive definite matrices only")
    return float(np.sqrt(np.sum(np.log(w) ** 2)))


def random_spd(n: int, rng: np.random.Generator, log10_range=(-2.0, 2.0)) -> np.ndarray:
    """``U diag(10^u) U'`` with Haar-orthogonal ``U`` and uniform ``u``."""
    u = ortho_group.rvs(n, random_state=rng) if n > 1 else np.ones((1, 1))
    lam = 10.0 ** rng.uniform(*log10_range, size=n)
    return sym((u * lam) @ u.T)


# -- Hamiltonian classes ---------------------------------------------

@dataclass(frozen=True)
class HamiltonianClass:
    in_h: bool
    in_hl: bool
    in_hr: bool

    @property
    def in_hlr(self) -> bool:
        return self.in_hl and self.in_hr

    def as_dict(self) -> dict:
        return {"in_h": self.in_h, "in_hl": self.in_hl, "in_hr": self.in_hr, "in_hlr": self.in_hlr}


def _min_eig_rel(m: np.ndarray) -> float:
    m = sym(m)
    nrm = np.linalg.norm(m, 2)
    if nrm == 0:
        return 0.0
    return float(np.linalg.eigvalsh(m)[0] / nrm)


def classify_hamiltonian(phi: HamiltonianBlock, tol: float = STRICT_RTOL) -> HamiltonianClass:
    """Classify ``Phi`` into ``H``, ``H_l``, ``H_r`` (and ``H_lr``).

    ``H`` requires a symplectic residual below ``tol * max(1, ||Phi||^2)``,
    invertible ``Phi11`` and ``Phi12 Phi11' >= 0``, ``Phi11' Phi21 >= 0``.
    The strict classes require the respective block to be positive
    definite, judged on the congruent forms ``Phi11^-1 Phi12`` and
    ``Phi21 Phi11^-1``: these are better scaled than the raw products for
    long compositions while having the same inertia.
    """
    mat = phi.matrix
    j = symplectic_unit(phi.n)
    scale = max(1.0, np.linalg.norm(mat) ** 2)
    if np.linalg.norm(mat.T @ j @ mat - j) > tol * scale:
        return HamiltonianClass(False, False, False)
    p11 = phi.p11
    if not np.linalg.cond(p11) < 1e12:
        return HamiltonianClass(False, False, False)
    right = np.linalg.solve(p11, phi.p12)          # Phi11^-1 Phi12 ~ Phi12 Phi11'
    left = np.linalg.solve(p11.T, phi.p21.T).T     # Phi21 Phi11^-1 ~ Phi11' Phi21
    e_r, e_l = _min_eig_rel(right), _min_eig_rel(left)
    if e_r < -tol or e_l < -tol:
        return HamiltonianClass(False, False, False)
    return HamiltonianClass(True, e_l > tol, e_r > tol)


def product_membership(phis: Sequence[HamiltonianBlock], tol: float = STRICT_RTOL) -> HamiltonianClass:
    """Classify ``Phi_1 Phi_2 ... Phi_L`` (factors in left-to-right order).

    Uses the sum criteria for products of members of ``H``:

    * in ``H_l`` iff ``sum_i R_i' (Phi_i,11' Phi_i,21) R_i`` is PD with
      ``R_i = Phi_{i+1},11 ... Phi_L,11``;
    * in ``H_r`` iff ``sum_i L_i (Phi_i,12 Phi_i,11') L_i'`` is PD with
      ``L_i = Phi_1,11 ... Phi_{i-1},11``.

    The long product is never formed.  Membership of every factor in ``H``
    is checked first.

    Raises
    ------
    DomainError
        If some ``Phi_i,11`` is singular.
    """
    phis = list(phis)
    if not phis:
        raise ValueError("need at least one factor")
    n = phis[0].n
    in_h = True
    for phi in phis:
        if not np.linalg.cond(phi.p11) < 1e12:
            raise DomainError("a factor has a singular Phi11 block")
        in_h = in_h and classify_hamiltonian(phi, tol).in_h
    # suffix products R_i, built right to left
    suffix = [np.eye(n)] * len(phis)
    acc = np.eye(n)
    for i in range(len(phis) - 1, -1, -1):
        suffix[i] = acc
        acc = phis[i].p11 @ acc
    g_l = np.zeros((n, n))
    g_r = np.zeros((n, n))
    prefix = np.eye(n)
    for i, phi in enumerate(phis):
        r_i = suffix[i]
        g_l += r_i.T @ sym(phi.p11.T @ phi.p21) @ r_i
        g_r += prefix @ sym(phi.p12 @ phi.p11.T) @ prefix.T
        prefix = prefix @ phi.p11
    # congruence by the product of 11-blocks keeps inertia and fixes scaling
    full11 = prefix
    try:
        g_l_bal = np.linalg.solve(full11.T, np.linalg.solve(full11.T, g_l).T).T
        g_r_bal = np.linalg.solve(full11, np.linalg.solve(full11, g_r).T).T
    except np.linalg.LinAlgError:
        raise DomainError("product of Phi11 blocks is singular") from None
    return HamiltonianClass(in_h, _min_eig_rel(g_l_bal) > tol, _min_eig_rel(g_r_bal) > tol)


# -- rank tests ------------------------------------------------------

def rank_full(matrix: np.ndarray, mode: str = "column") -> bool:
    """Numerical full-rank test.

    The rank counts singular values above ``max(dims) * eps * sigma_max``.

    Parameters
    ----------
    mode : {"column", "row"}
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    rows, cols = matrix.shape
    want = cols if mode == "column" else rows
    if mode not in ("column", "row"):
        raise ValueError("mode must be 'column' or 'row'")
    if want == 0:
        return True
    if matrix.size == 0 or min(rows, cols) < want:
        return False
    sv = np.linalg.svd(matrix, compute_uv=False)
    if sv[0] == 0:
        return False
    tol = max(rows, cols) * np.finfo(float).eps * sv[0]
    return int(np.sum(sv > tol)) == want


def observable(a: np.ndarray, h: np.ndarray) -> bool:
    """Observability of ``(A, H)`` by the rank of ``col(H, HA, ..., HA^{n-1})``."""
    n = a.shape[0]
    blocks, cur = [], h
    for _ in range(n):
        blocks.append(cur)
        cur = cur @ a
    return rank_full(np.vstack(blocks), "column")


def controllable(a: np.ndarray, g: np.ndarray) -> bool:
    """Controllability of ``(A, G)`` by the rank of ``[G, AG, ..., A^{n-1}G]``."""
    n = a.shape[0]
    blocks, cur = [], g
    for _ in range(n):
        blocks.append(cur)
        cur = a @ cur
    return rank_full(np.hstack(blocks), "row")


@dataclass(frozen=True)
class AnalysisMatrices:
    """``A1 = A~, A2 = A, G1 = B Q~^1/2, G2 = B Q^1/2, H1 = R~^-1/2 C~``."""

    a1: np.ndarray
    a2: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    h1: np.ndarray


def _require_lti(model: PlantModel):
    if not model.is_lti:
        raise UnsupportedConfigError("structural analysis needs a time-invariant plant")


def analysis_matrices(model: PlantModel) -> AnalysisMatrices:
    _require_lti(model)
    tm = tilde_matrices(model, 0)
    b = model.B(0)
    return AnalysisMatrices(
        a1=tm.a_tilde,
        a2=model.A(0),
        g1=b @ sqrt_psd(tm.q_tilde, "Q~"),
        g2=b @ sqrt_psd(model.Q(0), "Q"),
        h1=inv_sqrt_pd(tm.r_tilde, "R~") @ tm.c_tilde,
    )


@dataclass(frozen=True)
class DropoutPattern:
    """Arrival instants ``1 <= t_1 < ... < t_p <= N`` within a window of length ``N``."""

    t_indices: tuple[int, ...]
    n_total: int

    def __post_init__(self):
        ts = tuple(int(t) for t in self.t_indices)
        if self.n_total < 1:
            raise ValueError("pattern length must be >= 1")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("arrival instants must be strictly increasing")
        if ts and (ts[0] < 1 or ts[-1] > self.n_total):
            raise ValueError("arrival instants must lie in [1, N]")
        object.__setattr__(self, "t_indices", ts)

    @classmethod
    def from_gammas(cls, gammas: Sequence[int]) -> "DropoutPattern":
        return cls(tuple(i + 1 for i, g in enumerate(gammas) if g), len(gammas))

    @property
    def gammas(self) -> tuple[int, ...]:
        hits = set(self.t_indices)
        return tuple(int(t in hits) for t in range(1, self.n_total + 1))


def build_Ob(model: PlantModel, pattern: DropoutPattern) -> np.ndarray:
    """Stacked observability-like matrix for ``Phi_1 ... Phi_N``.

    Block ``k`` (``k = 0 .. p-1``) is ``H1`` followed by the products
    ``A1 A2^{g_s}`` for the ``k`` latest gaps ``g_s = t_s - t_{s-1} - 1``.
    Full column rank is equivalent to the product lying in ``H_l``.  With no
    arrivals the matrix has no rows.
    """
    mats = analysis_matrices(model)
    ts = (0,) + pattern.t_indices
    p = len(pattern.t_indices)
    blocks = []
    cur = mats.h1
    for k in range(p):
        blocks.append(cur)
        s = p - k
        cur = cur @ mats.a1 @ np.linalg.matrix_power(mats.a2, ts[s] - ts[s - 1] - 1)
    if not blocks:
        return np.zeros((0, model.n))
    return np.vstack(blocks)


def build_Cn(model: PlantModel, pattern: DropoutPattern) -> np.ndarray:
    """Stacked controllability-like matrix for ``Phi_1 ... Phi_N``.

    Column block ``i`` is ``L_i G(i)`` where ``L_i`` is the product of the
    transition blocks of the earlier steps (``A1`` at arrivals, ``A2``
    otherwise) and ``G(i)`` is ``G1`` at arrivals and ``G2`` otherwise.
    Full row rank is equivalent to the product lying in ``H_r``.
    """
    mats = analysis_matrices(model)
    cols = []
    left = np.eye(model.n)
    for g in pattern.gammas:
        cols.append(left @ (mats.g1 if g else mats.g2))
        left = left @ (mats.a1 if g else mats.a2)
    return np.hstack(cols)


@dataclass(frozen=True)
class SufficientConditions:
    """Witnesses ``m`` for which each sufficient condition holds.

    ``obs_a1a2m_h1``: ``(A1 A2^m, H1)`` observable (guarantees ``H_l`` for
    enough arrivals); ``ctrb_a1a2m_g1``: ``(A1 A2^m, G1)`` controllable;
    ``ctrb_a2_g2``: ``(A2, G2)`` controllable; ``ctrb_a2m_a1_g2``:
    ``(A2^m A1, G2)`` controllable.
    """

    obs_a1a2m_h1: tuple[int, ...]
    ctrb_a1a2m_g1: tuple[int, ...]
    ctrb_a2_g2: bool
    ctrb_a2m_a1_g2: tuple[int, ...]

    @property
    def hl_sufficient(self) -> bool:
        return bool(self.obs_a1a2m_h1)

    @property
    def hr_sufficient(self) -> bool:
        return bool(self.ctrb_a1a2m_g1) or self.ctrb_a2_g2 or bool(self.ctrb_a2m_a1_g2)

    def as_dict(self) -> dict:
        out = asdict(self)
        out = {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}
        out.update(hl_sufficient=self.hl_sufficient, hr_sufficient=self.hr_sufficient,
                   hlr_sufficient=self.hl_sufficient and self.hr_sufficient)
        return out


def sufficient_conditions(model: PlantModel) -> SufficientConditions:
    """Test the simple rank conditions for every ``m`` in ``[0, n-1]``."""
    mats = analysis_matrices(model)
    obs, c1, c3 = [], [], []
    for m in range(model.n):
        a2m = np.linalg.matrix_power(mats.a2, m)
        if observable(mats.a1 @ a2m, mats.h1):
            obs.append(m)
        if controllable(mats.a1 @ a2m, mats.g1):
            c1.append(m)
        if controllable(a2m @ mats.a1, mats.g2):
            c3.append(m)
    return SufficientConditions(tuple(obs), tuple(c1), controllable(mats.a2, mats.g2), tuple(c3))


# -- contraction estimates --------------------------------------------

@dataclass(frozen=True)
class ContractionStats:
    """Distance ratios ``delta(H(P), H(Q)) / delta(P, Q)`` over sampled pairs."""

    max: float
    mean: float
    quantiles: dict = field(default_factory=dict)
    count: int = 0

    def as_dict(self) -> dict:
        return {"max": self.max, "mean": self.mean, "count": self.count,
                "quantiles": {str(k): v for k, v in self.quantiles.items()}}


def _composite(model: PlantModel, gammas: Sequence[int], t0: int = 0) -> HamiltonianBlock | None:
    """``Phi_N ... Phi_1`` for the given arrivals, or None for no steps."""
    acc = None
    for k, g in enumerate(gammas):
        phi = build_phi(model, t0 + k, int(g))
        acc = phi if acc is None else phi @ acc
    return acc


def _ratios(phi: HamiltonianBlock | None, n: int, pairs: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty(pairs)
    for k in range(pairs):
        p, q = random_spd(n, rng), random_spd(n, rng)
        d0 = riemannian_distance(p, q)
        if phi is None:
            out[k] = riemannian_distance(p, q) / d0
        else:
            out[k] = riemannian_distance(homographic(phi, p), homographic(phi, q)) / d0
    return out


def estimate_contraction(model: PlantModel, gammas: Sequence[int], trials: int = 1000,
                         rng_seed=None) -> ContractionStats:
    """Sample the distance ratio of the composite map over random PD pairs.

    The maximum is a lower bound on the map's Lipschitz constant.
    """
    rng = np.random.default_rng(rng_seed)
    ratios = _ratios(_composite(model, gammas), model.n, trials, rng)
    qs = (0.05, 0.5, 0.95)
    return ContractionStats(float(ratios.max()), float(ratios.mean()),
                            {q: float(np.quantile(ratios, q)) for q in qs}, trials)


@dataclass(frozen=True)
class LipschitzEstimate:
    """Mean of ``log(max ratio)`` over sampled arrival sequences."""

    mean: float
    std_err: float
    ci_low: float
    ci_high: float
    n_sequences: int

    @property
    def strictly_negative(self) -> bool:
        return self.ci_high < 0

    def as_dict(self) -> dict:
        out = asdict(self)
        out["strictly_negative"] = self.strictly_negative
        return out


def estimate_expected_log_lipschitz(model: PlantModel, channel: DropoutModel, n_steps: int,
                                    sequence_samples: int = 200, pair_samples: int = 200,
                                    rng_seed=None, z: float = 1.959963984540054) -> LipschitzEstimate:
    """Monte Carlo estimate of ``E[log Lip]`` for ``n_steps``-step composite maps.

    Each arrival sequence gets its own child seed; the per-sequence
    Lipschitz constant is estimated by the largest sampled distance ratio.
    The interval is a normal approximation at level set by ``z``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    ss = np.random.SeedSequence(rng_seed)
    logs = np.empty(sequence_samples)
    for k, child in enumerate(ss.spawn(sequence_samples)):
        rng = np.random.default_rng(child)
        bits = sample_bits(channel, n_steps, rng)
        logs[k] = math.log(_ratios(_composite(model, bits), model.n, pair_samples, rng).max())
    mean = float(logs.mean())
    se = float(logs.std(ddof=1) / math.sqrt(sequence_samples)) if sequence_samples > 1 else math.inf
    return LipschitzEstimate(mean, se, mean - z * se, mean + z * se, sequence_samples)
