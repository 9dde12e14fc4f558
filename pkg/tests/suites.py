"""Randomized matrix-inequality property suites.

Each suite runs ``trials`` independent random cases at dimensions 1..6 with
Loewner tolerance ``tol`` and returns the number of failures; the granular
tests and the acceptance gate share these implementations.
"""

import numpy as np

from conftest import rand_pd, rand_psd, rand_sym
from reduced_kalman.filters import kalman_update
from reduced_kalman.matcore import loewner_leq, min_dominance_ratio, spectral_norm


def _dims(rng, trials):
    return rng.integers(1, 7, trials)


def suite_update_monotone_concave(rng, trials=500, tol=1e-9):
    """Covariance update is monotone and concave on the PD cone."""
    failures = 0
    for d in _dims(rng, trials):
        d = int(d)
        q = int(rng.integers(1, d + 1))
        X = rand_pd(rng, d)
        Xp = X + rand_psd(rng, d)
        H = rng.standard_normal((q, d))
        sig = rand_pd(rng, q, 0.5)
        KX = kalman_update(X, H, sig)
        KXp = kalman_update(Xp, H, sig)
        Kmid = kalman_update(0.5 * (X + Xp), H, sig)
        if not loewner_leq(KX, KXp, tol):
            failures += 1
        if not loewner_leq(0.5 * (KX + KXp), Kmid, tol):
            failures += 1
    return failures


def suite_inverse_domination_transfer(rng, trials=500, tol=1e-9):
    """A <= (B C B^T + D)^{-1} implies B^T A B <= C^{-1} and A^{1/2} D A^{1/2} <= I."""
    failures = 0
    for d in _dims(rng, trials):
        d = int(d)
        B = rng.standard_normal((d, d))
        C = rand_pd(rng, d)
        D = rand_psd(rng, d)
        M = B @ C @ B.T + D + 1e-9 * np.eye(d)
        M_inv = np.linalg.inv(M)
        A0 = rand_psd(rng, d) + 1e-12 * np.eye(d)
        scale = min_dominance_ratio(A0, M_inv)
        u = rng.uniform(0.1, 1.0)
        A = A0 * (u / max(scale, 1e-300))
        eigs, vecs = np.linalg.eigh(0.5 * (A + A.T))
        A_half = (vecs * np.sqrt(np.clip(eigs, 0.0, None))) @ vecs.T
        if not loewner_leq(B.T @ A @ B, np.linalg.inv(C), tol):
            failures += 1
        if not loewner_leq(A_half @ D @ A_half, np.eye(d), tol):
            failures += 1
    return failures


def suite_contraction_conjugation(rng, trials=500, tol=1e-9):
    """Conjugation-order facts used by the error dissipation arguments.

    The ordering ``A >= I  =>  A B A >= B`` (and its ``A <= I`` reverse)
    requires A and B to share an eigenbasis; for generic pairs it is false
    (see test_conjugation_ordering_needs_commuting for a counterexample), so
    the pairs here are drawn commuting.  The congruence bound
    ``C A C <= C^2`` for ``A <= I`` holds for every symmetric C and is
    tested on generic pairs.
    """
    failures = 0
    for d in _dims(rng, trials):
        d = int(d)
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        B = (Q * rng.uniform(0.0, 2.0, d)) @ Q.T
        A_big = (Q * (1.0 + rng.uniform(0.0, 2.0, d))) @ Q.T
        if not loewner_leq(B, A_big @ B @ A_big, tol):
            failures += 1
        A_small = (Q * rng.uniform(0.0, 1.0, d)) @ Q.T
        if not loewner_leq(A_small @ B @ A_small, B, tol):
            failures += 1
        A_any = rand_psd(rng, d)
        A_contract = A_any / max(np.linalg.eigvalsh(A_any).max(), 1e-12) * rng.uniform(0.0, 1.0)
        C = rand_sym(rng, d)
        if not loewner_leq(C @ A_contract @ C, C @ C, tol):
            failures += 1
    return failures


def suite_dominance_is_product_norm(rng, trials=500, rel=1e-8):
    """Largest eigenvalue of A B = ||A^{1/2} B A^{1/2}|| = min{b : B <= b A^{-1}}.

    Conjugation preserves eigenvalues, so the spectral radius of the
    (nonsymmetric) product A B equals the top eigenvalue of the symmetric
    conjugation, which is the minimal dominance ratio.
    """
    failures = 0
    for d in _dims(rng, trials):
        d = int(d)
        A = rand_pd(rng, d)
        B = rand_psd(rng, d)
        eigs, vecs = np.linalg.eigh(A)
        A_half = (vecs * np.sqrt(eigs)) @ vecs.T
        n_prod = float(np.abs(np.linalg.eigvals(A @ B)).max())
        n_conj = spectral_norm(A_half @ B @ A_half)
        n_dom = min_dominance_ratio(B, np.linalg.inv(A))
        scale = max(1.0, n_prod)
        if abs(n_prod - n_conj) > rel * scale or abs(n_prod - n_dom) > rel * scale:
            failures += 1
    return failures


def suite_trace_norm_bound(rng, trials=500, tol=1e-9):
    """tr(A B) <= ||A|| tr(B) for symmetric A and PSD B."""
    failures = 0
    for d in _dims(rng, trials):
        d = int(d)
        A = rand_sym(rng, d)
        B = rand_psd(rng, d)
        lhs = np.trace(A @ B)
        rhs = np.linalg.norm(A, 2) * np.trace(B)
        if lhs > rhs + tol * max(1.0, abs(rhs)):
            failures += 1
    return failures


ALL_SUITES = {
    "update monotone/concave": suite_update_monotone_concave,
    "inverse domination transfer": suite_inverse_domination_transfer,
    "contraction conjugation": suite_contraction_conjugation,
    "dominance ratio is product norm": suite_dominance_is_product_norm,
    "trace norm bound": suite_trace_norm_bound,
}
