"""Small dense linear-algebra helpers.

Every inverse in the package goes through these so that the conditioning
policy (``MAX_COND``) is enforced in one place.  Functions accept stacked
arrays where noted so the batched simulator can share them.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from .errors import DomainError, NumericError, SingularMatrixError

MAX_COND = 1e12
PD_PIVOT_RTOL = 1e-12
ASYM_LOG_TOL = 1e-10
SQRT_NEG_TOL = 1e-14


def sym(m: np.ndarray) -> np.ndarray:
    """Return ``(M + M^T)/2``; works on stacks of matrices."""
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def check_pd(m: np.ndarray, name: str, t: int | None = None) -> np.ndarray:
    """Symmetrize ``m`` and verify positive definiteness.

    The test is a Cholesky factorization whose smallest squared pivot must
    exceed ``PD_PIVOT_RTOL * ||M||_2``.

    Returns
    -------
    ndarray
        Lower Cholesky factor of the symmetrized matrix.
    """
    m = sym(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"{name} must be a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name} has non-finite entries", t)
    try:
        low = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NumericError(f"{name} is not positive definite", t) from None
    scale = np.linalg.norm(m, 2)
    if m.size and np.min(np.diag(low)) ** 2 <= PD_PIVOT_RTOL * scale:
        raise NumericError(f"{name} is not positive definite (pivot below tolerance)", t)
    return low


def spd_cond(m: np.ndarray) -> float:
    w = np.linalg.eigvalsh(sym(m))
    if w[0] <= 0:
        return np.inf
    return float(w[-1] / w[0])


def inv_spd(m: np.ndarray, name: str, t: int | None = None) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky.

    Raises
    ------
    SingularMatrixError
        If the spectral condition number exceeds ``MAX_COND``.
    """
    m = sym(m)
    if m.shape[0] == 0:
        return m.copy()
    c = spd_cond(m)
    if not c <= MAX_COND:
        raise SingularMatrixError(name, c, t)
    factor = sla.cho_factor(m, lower=True)
    return sym(sla.cho_solve(factor, np.eye(m.shape[0])))


def solve_spd(m: np.ndarray, rhs: np.ndarray, name: str, t: int | None = None) -> np.ndarray:
    m = sym(m)
    c = spd_cond(m)
    if not c <= MAX_COND:
        raise SingularMatrixError(name, c, t)
    return sla.cho_solve(sla.cho_factor(m, lower=True), rhs)


def solve_general(m: np.ndarray, rhs: np.ndarray, name: str, t: int | None = None) -> np.ndarray:
    """LU solve ``m X = rhs`` with the condition-number guard."""
    c = np.linalg.cond(m)
    if not c <= MAX_COND:
        raise SingularMatrixError(name, float(c), t)
    return sla.lu_solve(sla.lu_factor(m), rhs)


def inv_general(m: np.ndarray, name: str, t: int | None = None) -> np.ndarray:
    return solve_general(m, np.eye(m.shape[0]), name, t)


def sqrt_psd(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Symmetric square root of a PSD matrix by eigendecomposition.

    Eigenvalues in ``[-1e-14 * ||M||, 0)`` are clamped to zero; anything
    more negative is a domain error.
    """
    m = sym(m)
    if m.shape[0] == 0:
        return m.copy()
    w, v = np.linalg.eigh(m)
    scale = max(np.max(np.abs(w)), 1.0)
    if w[0] < -SQRT_NEG_TOL * scale:
        raise DomainError(f"{name} is not positive semidefinite (min eig {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    return sym((v * np.sqrt(w)) @ v.T)


def inv_sqrt_pd(m: np.ndarray, name: str = "matrix", t: int | None = None) -> np.ndarray:
    """Inverse of the symmetric square root of a PD matrix."""
    m = sym(m)
    if m.shape[0] == 0:
        return m.copy()
    w, v = np.linalg.eigh(m)
    if w[0] <= 0 or w[-1] / w[0] > MAX_COND:
        raise SingularMatrixError(name, np.inf if w[0] <= 0 else float(w[-1] / w[0]), t)
    return sym((v / np.sqrt(w)) @ v.T)


def information_update(x: np.ndarray, c: np.ndarray, r_inv: np.ndarray,
                       r: np.ndarray | None = None, name: str = "X",
                       t: int | None = None, path: str = "auto") -> np.ndarray:
    """Compute ``(X^{-1} + C^T R^{-1} C)^{-1}``.

    Parameters
    ----------
    x : ndarray, shape (n, n)
        Symmetric positive definite prior matrix.
    c : ndarray, shape (p, n)
    r_inv : ndarray, shape (p, p)
        Inverse of the (positive definite) weight ``R``.
    r : ndarray, optional
        ``R`` itself; needed by the gain-form path.
    path : {"auto", "gain", "information"}
        ``"gain"`` uses ``X - X C^T (R + C X C^T)^{-1} C X``, which avoids
        inverting ``X`` and is chosen automatically when ``p < n``.
    """
    n = x.shape[0]
    p = c.shape[0]
    if path == "auto":
        path = "gain" if (p < n and r is not None) else "information"
    if path == "gain":
        if r is None:
            raise ValueError("gain path needs r")
        xc = x @ c.T
        s = sym(r + c @ xc)
        k = solve_spd(s, xc.T, "R + C X C^T", t).T
        return sym(x - k @ xc.T)
    info = inv_spd(x, name, t) + c.T @ r_inv @ c
    return inv_spd(info, f"{name}^-1 + C^T R^-1 C", t)


def log_asymmetry(m: np.ndarray) -> float:
    """Relative asymmetry ``||M - M^T|| / ||M||`` (0 for the zero matrix)."""
    nrm = np.linalg.norm(m)
    if nrm == 0:
        return 0.0
    return float(np.linalg.norm(m - m.T) / nrm)
