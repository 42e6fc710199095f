"""Pseudo-covariance recursion in Riccati and Hamiltonian form.

On arrival the PCM update can be rewritten as a standard Riccati step of an
augmented nominal system (the "tilde" matrices).  Each step, with or
without arrival, is then a homographic transform by a symplectic
``2n x 2n`` matrix ``Phi``, so ``P_{t|t}`` is one transform of ``P_{0|0}``
by the ordered product ``Phi_t ... Phi_1``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Sequence

import mpmath
import numpy as np

from ._linalg import inv_general, inv_spd, inv_sqrt_pd, solve_general, sym
from .errors import SingularMatrixError, TransformUndefinedError
from .plant import PlantModel, sensitivity_matrices

__all__ = [
    "HamiltonianBlock",
    "ProductPCM",
    "TildeMatrices",
    "build_phi",
    "homographic",
    "riccati_step_augmented",
    "pcm_via_product",
    "symplectic_unit",
    "tilde_matrices",
    "write_phi_csv",
]

log = logging.getLogger(__name__)

PRODUCT_COND_WARN = 1e10
# decimal digits kept on top of the accumulated condition bound
_GUARD_DIGITS = 20


@dataclass(frozen=True)
class TildeMatrices:
    """Augmented-system matrices for one arrival step.

    ``c_tilde`` stacks the whitened sensitivity rows on top of ``C_{t+1}``
    and ``r_tilde`` is the matching block-diagonal weight.
    """

    a_check: np.ndarray
    q_check: np.ndarray
    s_tilde: np.ndarray
    a_tilde: np.ndarray
    b_tilde: np.ndarray
    q_tilde: np.ndarray
    c_tilde: np.ndarray
    r_tilde: np.ndarray


def tilde_matrices(model: PlantModel, t: int) -> TildeMatrices:
    """Compute the augmented-system matrices at time ``t``.

    Raises
    ------
    SingularMatrixError
        If ``A_check = A - l B Q_check T'S`` is singular (cond > 1e12).
    """
    a, b, q = model.A(t), model.B(t), model.Q(t)
    c, r = model.C(t + 1), model.R(t + 1)
    lam = model.lam(t)
    sens = sensitivity_matrices(model, t)
    s, tt = sens.s_mat, sens.t_mat
    rows = s.shape[0]
    q_check = inv_spd(inv_spd(q, "Q", t) + lam * tt.T @ tt, "Q^-1 + l T'T", t)
    a_check = a - lam * b @ q_check @ tt.T @ s
    s_tilde = np.sqrt(lam) * inv_sqrt_pd(np.eye(rows) + lam * tt @ q @ tt.T, "I + l T Q T'", t) @ s
    a_check_inv = inv_general(a_check, "A_check", t)
    b_tilde = a_check_inv @ b
    sts = s_tilde.T @ s_tilde
    a_tilde = a_check + b @ q_check @ b_tilde.T @ sts
    q_tilde = sym(q_check + q_check @ b_tilde.T @ sts @ b_tilde @ q_check)
    c_tilde = np.vstack([s_tilde @ a_check_inv, c])
    r_tilde = np.zeros((rows + model.p, rows + model.p))
    r_tilde[:rows, :rows] = np.eye(rows) + s_tilde @ b_tilde @ q_check @ b_tilde.T @ s_tilde.T
    r_tilde[rows:, rows:] = r
    return TildeMatrices(a_check, q_check, s_tilde, a_tilde, b_tilde, q_tilde, c_tilde, sym(r_tilde))


def riccati_step_augmented(model: PlantModel, p: np.ndarray, t: int) -> np.ndarray:
    """Arrival PCM update written as a Riccati step of the augmented system.

    ``P'^-1 = (A~ P A~' + B Q~ B')^-1 + C~' R~^-1 C~``.
    """
    tm = tilde_matrices(model, t)
    b = model.B(t)
    prior = tm.a_tilde @ p @ tm.a_tilde.T + b @ tm.q_tilde @ b.T
    info = inv_spd(prior, "A~ P A~' + B Q~ B'", t) + tm.c_tilde.T @ inv_spd(tm.r_tilde, "R~", t) @ tm.c_tilde
    return inv_spd(info, "P'^-1", t)


def symplectic_unit(n: int) -> np.ndarray:
    """``J = [[0, I], [-I, 0]]`` of size ``2n``."""
    z, i = np.zeros((n, n)), np.eye(n)
    return np.block([[z, i], [-i, z]])


@dataclass(frozen=True)
class HamiltonianBlock:
    """A ``2n x 2n`` matrix with addressable ``n x n`` blocks."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] % 2:
            raise ValueError(f"expected a square matrix of even size, got {mat.shape}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_blocks(cls, p11, p12, p21, p22) -> "HamiltonianBlock":
        return cls(np.block([[p11, p12], [p21, p22]]))

    @classmethod
    def identity(cls, n: int) -> "HamiltonianBlock":
        return cls(np.eye(2 * n))

    @property
    def n(self) -> int:
        return self.matrix.shape[0] // 2

    @property
    def p11(self):
        return self.matrix[: self.n, : self.n]

    @property
    def p12(self):
        return self.matrix[: self.n, self.n:]

    @property
    def p21(self):
        return self.matrix[self.n:, : self.n]

    @property
    def p22(self):
        return self.matrix[self.n:, self.n:]

    def __matmul__(self, other: "HamiltonianBlock") -> "HamiltonianBlock":
        return HamiltonianBlock(self.matrix @ other.matrix)

    def symplectic_residual(self) -> float:
        """``||Phi' J Phi - J||_F``."""
        j = symplectic_unit(self.n)
        return float(np.linalg.norm(self.matrix.T @ j @ self.matrix - j))


def homographic(phi: HamiltonianBlock, p: np.ndarray) -> np.ndarray:
    """``(Phi11 P + Phi12)(Phi21 P + Phi22)^-1``, re-symmetrized.

    Raises
    ------
    TransformUndefinedError
        If ``Phi21 P + Phi22`` is singular.
    """
    num = phi.p11 @ p + phi.p12
    den = phi.p21 @ p + phi.p22
    try:
        # X den = num  <=>  den' X' = num'
        out = solve_general(den.T, num.T, "Phi21 P + Phi22").T
    except SingularMatrixError as exc:
        raise TransformUndefinedError(str(exc)) from None
    return sym(out)


def build_phi(model: PlantModel, t: int, gamma: int) -> HamiltonianBlock:
    """Symplectic matrix mapping ``P_{t|t}`` to ``P_{t+1|t+1}``.

    Without arrival it is ``[[A, BQB'A^-T], [0, A^-T]]``.  With arrival it is
    ``[[A~, BQ~B'A~^-T], [W A~, (I + W BQ~B') A~^-T]]`` where
    ``W = C~' R~^-1 C~``.
    """
    b = model.B(t)
    if gamma == 0:
        a, q = model.A(t), model.Q(t)
        a_inv_t = inv_general(a, "A", t).T
        return HamiltonianBlock.from_blocks(a, b @ q @ b.T @ a_inv_t, np.zeros_like(a), a_inv_t)
    if gamma != 1:
        raise ValueError(f"gamma must be 0 or 1, got {gamma!r}")
    tm = tilde_matrices(model, t)
    w = sym(tm.c_tilde.T @ inv_spd(tm.r_tilde, "R~", t) @ tm.c_tilde)
    bqb = b @ tm.q_tilde @ b.T
    at_inv_t = inv_general(tm.a_tilde, "A~", t).T
    return HamiltonianBlock.from_blocks(
        tm.a_tilde, bqb @ at_inv_t, w @ tm.a_tilde, (np.eye(model.n) + w @ bqb) @ at_inv_t
    )


@dataclass(frozen=True)
class ProductPCM:
    """Result of :func:`pcm_via_product` with conditioning metadata."""

    p_mat: np.ndarray
    phi: HamiltonianBlock
    cond: float
    ill_conditioned: bool


def pcm_via_product(model: PlantModel, gammas: Sequence[int], p0: np.ndarray, t0: int = 0) -> ProductPCM:
    """PCM after ``len(gammas)`` steps as a single homographic transform.

    ``gammas[k]`` is the arrival indicator of step ``t0 + k -> t0 + k + 1``.
    The product is accumulated as ``Phi_t ... Phi_1`` (latest factor on the
    left) and its condition number is reported; above 1e10 the result is
    flagged as ill-conditioned.

    Notes
    -----
    Products of symplectic factors separate their singular values quickly
    (cond ~ 1e17 after 20 arrivals on the benchmark plant), and in float64
    the transform then loses about ``eps * cond`` relative accuracy.  The
    float64 factors are therefore multiplied and applied in arbitrary
    precision, with the working precision sized from the sum of per-factor
    log-condition numbers, which bounds the log-condition of the product.
    """
    phis = [build_phi(model, t0 + k, int(g)).matrix for k, g in enumerate(gammas)]
    digits = _GUARD_DIGITS + sum(np.log10(np.linalg.cond(f)) for f in phis)
    n = model.n
    with mpmath.workdps(int(np.ceil(digits))):
        acc = mpmath.eye(2 * n)
        for f in phis:
            acc = mpmath.matrix(f.tolist()) * acc
        p = mpmath.matrix(np.asarray(p0, dtype=float).tolist())
        num = acc[0:n, 0:n] * p + acc[0:n, n:2 * n]
        den = acc[n:2 * n, 0:n] * p + acc[n:2 * n, n:2 * n]
        try:
            out = num * mpmath.inverse(den)
        except ZeroDivisionError:
            raise TransformUndefinedError("Phi21 P + Phi22 is singular") from None
        sv = mpmath.svd_r(acc, compute_uv=False)
        cond = float(max(sv) / min(sv))
        p_mat = sym(np.array(out.tolist(), dtype=float))
        phi = HamiltonianBlock(np.array(acc.tolist(), dtype=float))
    flagged = not cond <= PRODUCT_COND_WARN
    if flagged:
        log.info("Phi product over %d steps has condition number %.2e", len(gammas), cond)
    return ProductPCM(p_mat, phi, cond, flagged)


def write_phi_csv(path, phis: Sequence[HamiltonianBlock], header: str | None = None) -> None:
    """Dump matrices row-major, one per line, prefixed by their index."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        size = phis[0].matrix.shape[0] if phis else 0
        writer.writerow(["k"] + [f"phi_{i}_{j}" for i in range(size) for j in range(size)])
        for k, phi in enumerate(phis):
            writer.writerow([k] + [repr(float(v)) for v in phi.matrix.ravel()])
