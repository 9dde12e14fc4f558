"""Dense symmetric / positive-semidefinite matrix utilities.

Loewner-order tests, Mahalanobis norms, minimal dominance ratios, PSD square
roots, and jittered Cholesky factorizations.  Covariance matrices throughout
the library are plain ``numpy`` arrays kept symmetric by explicit
symmetrization after every update; the helpers here are the single place that
owns the numerical tolerances for those operations.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = [
    "SingularMatrixError",
    "PsdCertificate",
    "symmetrize",
    "is_symmetric",
    "spectral_norm",
    "certify_psd",
    "psd_cholesky",
    "psd_sqrt",
    "loewner_leq",
    "loewner_gap",
    "mahalanobis_sq",
    "min_dominance_ratio",
    "riemannian_delta",
]

# One-shot diagonal jitter applied when a PD factorization fails; scaled by
# trace/dim so it tracks the matrix magnitude.
JITTER_SCALE = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    """Matrix is singular beyond the jitter threshold."""


@dataclass(frozen=True)
class PsdCertificate:
    """Outcome of a positive-semidefiniteness check.

    ``min_eigenvalue`` is the smallest eigenvalue of the symmetrized input;
    ``jitter_applied`` records the diagonal shift (0 if none) that made a
    subsequent factorization succeed.
    """

    matrix: np.ndarray
    min_eigenvalue: float
    jitter_applied: float


def symmetrize(M: np.ndarray) -> np.ndarray:
    """Return (M + M.T) / 2."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def is_symmetric(M: np.ndarray, tol: float = 1e-12) -> bool:
    """True when ``M`` equals its transpose to relative tolerance ``tol``."""
    M = np.asarray(M, dtype=float)
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    return bool(np.abs(M - M.T).max(initial=0.0) <= tol * scale)


def spectral_norm(M: np.ndarray) -> float:
    """Spectral norm of a symmetric matrix via its eigenvalues."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.abs(np.linalg.eigvalsh(symmetrize(M))).max())


def _check_square(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def certify_psd(M: np.ndarray, tol: float = 1e-10) -> PsdCertificate:
    """Certify that ``M`` is PSD up to ``tol * ||M||``.

    Raises ``SingularMatrixError`` when the smallest eigenvalue is below the
    tolerance.  The returned matrix is the symmetrized input.
    """
    M = symmetrize(_check_square(M))
    eigs = np.linalg.eigvalsh(M)
    min_eig = float(eigs[0])
    bound = tol * max(1.0, float(np.abs(eigs).max()))
    if min_eig < -bound:
        raise SingularMatrixError(f"matrix is not PSD: min eigenvalue {min_eig:.3e}")
    return PsdCertificate(matrix=M, min_eigenvalue=min_eig, jitter_applied=0.0)


def psd_cholesky(C: np.ndarray):
    """Lower Cholesky factor of a (near-)PD matrix with one-shot jitter.

    If the plain factorization fails, ``JITTER_SCALE * trace/dim`` is added to
    the diagonal once and the factorization retried.  Returns
    ``(cho_factor_result, jitter_applied)``.

    Raises
    ------
    SingularMatrixError
        When the matrix stays indefinite after the jitter.
    """
    C = _check_square(C)
    try:
        return sla.cho_factor(C, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    trace = float(np.trace(C))
    jitter = JITTER_SCALE * max(trace, 1.0) / C.shape[0]
    try:
        return sla.cho_factor(C + jitter * np.eye(C.shape[0]), lower=True), jitter
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("matrix singular beyond jitter threshold") from exc


def psd_sqrt(M: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues within ``-tol * ||M||`` of zero are clipped to zero; more
    negative ones raise ``SingularMatrixError``.
    """
    M = symmetrize(_check_square(M))
    eigs, vecs = np.linalg.eigh(M)
    bound = tol * max(1.0, float(np.abs(eigs).max(initial=0.0)))
    if eigs[0] < -bound:
        raise SingularMatrixError(f"matrix is not PSD: min eigenvalue {eigs[0]:.3e}")
    root = np.sqrt(np.clip(eigs, 0.0, None))
    return (vecs * root) @ vecs.T


def loewner_leq(A: np.ndarray, B: np.ndarray, tol: float = 0.0) -> bool:
    """Loewner-order test ``A <= B``: is B - A positive semidefinite?

    True iff the minimum eigenvalue of ``B - A`` is at least
    ``-tol * max(1, ||B||)``.  The relative scaling keeps the test meaningful
    across noise-rescaled systems whose covariances span many decades.
    """
    ok, _, _ = loewner_gap(A, B, tol)
    return ok


def loewner_gap(A: np.ndarray, B: np.ndarray, tol: float = 0.0):
    """Like :func:`loewner_leq` but also return the gap and a witness.

    Returns ``(ok, min_eig, eigvec)`` where ``min_eig`` is the smallest
    eigenvalue of ``B - A`` and ``eigvec`` the corresponding eigenvector
    (the direction that violates the order when ``ok`` is False).
    """
    A = _check_square(A, "A")
    B = _check_square(B, "B")
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    diff = symmetrize(B - A)
    eigs, vecs = np.linalg.eigh(diff)
    threshold = -tol * max(1.0, spectral_norm(B))
    return bool(eigs[0] >= threshold), float(eigs[0]), vecs[:, 0]


def mahalanobis_sq(v: np.ndarray, C: np.ndarray) -> float:
    """Squared Mahalanobis norm ``v^T C^{-1} v`` of ``v`` under metric ``C``.

    ``C`` must be positive definite; the solve goes through a (jittered)
    Cholesky factorization, never an explicit inverse.
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    C = _check_square(C, "C")
    if C.shape[0] != v.shape[0]:
        raise ValueError(f"dimension mismatch: vector {v.shape[0]}, metric {C.shape[0]}")
    factor, _ = psd_cholesky(C)
    return float(v @ sla.cho_solve(factor, v))


def min_dominance_ratio(X: np.ndarray, Y: np.ndarray) -> float:
    """Minimal ``b >= 0`` with ``X <= b Y`` in the Loewner order.

    Computed as the largest eigenvalue of ``Y^{-1/2} X Y^{-1/2}`` (conjugation
    preserves eigenvalues, so this equals the spectral norm of ``Y^{-1} X``
    for PSD ``X``).  ``Y`` must be positive definite.
    """
    X = _check_square(X, "X")
    Y = _check_square(Y, "Y")
    if X.shape != Y.shape:
        raise ValueError(f"dimension mismatch: {X.shape} vs {Y.shape}")
    try:
        lams = sla.eigh(symmetrize(X), symmetrize(Y), eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("Y is not positive definite") from exc
    return float(max(lams[-1], 0.0))


def riemannian_delta(P: np.ndarray, Q: np.ndarray) -> float:
    """Riemannian distance ``sqrt(sum_i log^2 lambda_i)`` on the PD cone.

    The ``lambda_i`` are the (positive) eigenvalues of ``P Q^{-1}``.  The
    distance is symmetric in its arguments and zero iff ``P == Q``.
    """
    P = _check_square(P, "P")
    Q = _check_square(Q, "Q")
    if P.shape != Q.shape:
        raise ValueError(f"dimension mismatch: {P.shape} vs {Q.shape}")
    try:
        lams = sla.eigh(symmetrize(P), symmetrize(Q), eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("inputs must be positive definite") from exc
    if lams[0] <= 0.0:
        raise SingularMatrixError("inputs must be positive definite")
    return float(np.sqrt(np.sum(np.log(lams) ** 2)))
