"""Dense numerical primitives shared by the rest of the package.

Rank, kernel and pseudoinverse computations all go through one SVD-based
threshold so that rank tests and kernel tests never disagree about which
singular values count as zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class NumericalError(RuntimeError):
    """Raised when a decomposition fails or results are numerically inconsistent."""


@dataclass(frozen=True)
class Tolerance:
    """Numerical thresholds.

    The singular-value cutoff for an ``r x c`` matrix is
    ``max(rank_rel * max(r, c) * sigma_max, abs_floor)``.
    """

    rank_rel: float = 1e-10
    abs_floor: float = 1e-12
    schur_margin: float = 1e-9

    def __post_init__(self):
        for name in ("rank_rel", "abs_floor", "schur_margin"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.rank_rel < 1:
            raise ValueError("rank_rel must be < 1")

    def cutoff(self, shape: tuple[int, int], sigma_max: float) -> float:
        return max(self.rank_rel * max(shape) * sigma_max, self.abs_floor)

    def as_dict(self) -> dict:
        return {"rank_rel": self.rank_rel, "abs_floor": self.abs_floor,
                "schur_margin": self.schur_margin}


DEFAULT_TOL = Tolerance()


def as_mat(M) -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def _svd(M: np.ndarray):
    try:
        return np.linalg.svd(M, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc


def _rank_from_sv(s: np.ndarray, shape, tol: Tolerance) -> int:
    if s.size == 0:
        return 0
    return int(np.count_nonzero(s > tol.cutoff(shape, s[0])))


def numerical_rank(M, tol: Tolerance = DEFAULT_TOL) -> int:
    M = as_mat(M)
    if M.size == 0:
        return 0
    _, s, _ = _svd(M)
    return _rank_from_sv(s, M.shape, tol)


def pinv(M, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse via the SVD.

    Singular values at or below the cutoff are treated as exact zeros.
    """
    M = as_mat(M)
    rows, cols = M.shape
    if M.size == 0:
        return np.zeros((cols, rows))
    U, s, Vt = _svd(M)
    r = _rank_from_sv(s, M.shape, tol)
    return (Vt[:r].T / s[:r]) @ U[:, :r].T


def null_space_basis(M, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of the numerical kernel, one vector per column.

    Returns a ``cols x 0`` array when the kernel is trivial.
    """
    M = as_mat(M)
    rows, cols = M.shape
    if M.size == 0:
        return np.eye(cols)
    _, s, Vt = _svd(M)
    r = _rank_from_sv(s, M.shape, tol)
    return Vt[r:].T.copy()


def spectral_radius(A) -> float:
    A = as_mat(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got {A.shape}")
    if A.size == 0:
        return 0.0
    try:
        eig = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration did not converge: {exc}") from exc
    return float(np.max(np.abs(eig)))


def is_schur(A, tol: Tolerance = DEFAULT_TOL) -> bool:
    """Strict Schur stability with a margin: eigenvalues near the unit circle fail."""
    return spectral_radius(A) < 1.0 - tol.schur_margin


def expm(A) -> np.ndarray:
    """Matrix exponential (scaling and squaring with Pade approximation)."""
    A = as_mat(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"expm needs a square matrix, got {A.shape}")
    with np.errstate(over="raise", invalid="raise"):
        try:
            out = scipy.linalg.expm(A)
        except FloatingPointError as exc:
            raise NumericalError(f"matrix exponential overflowed: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise NumericalError("matrix exponential overflowed")
    return out


def discretize_exact(A_c, E_c, T_s: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization of ``dx/dt = A_c x + E_c d``.

    Both discrete matrices come out of one exponential of the augmented
    matrix ``[[A_c, E_c], [0, 0]] * T_s``, which stays exact for singular
    ``A_c``.
    """
    A_c = as_mat(A_c)
    E_c = as_mat(E_c)
    n = A_c.shape[0]
    if A_c.shape != (n, n):
        raise ValueError(f"A_c must be square, got {A_c.shape}")
    if E_c.shape[0] != n:
        raise ValueError(f"E_c must have {n} rows, got {E_c.shape}")
    if not T_s > 0:
        raise ValueError("T_s must be positive")
    k = E_c.shape[1]
    M = np.zeros((n + k, n + k))
    M[:n, :n] = A_c
    M[:n, n:] = E_c
    F = expm(M * T_s)
    return F[:n, :n].copy(), F[:n, n:].copy()
