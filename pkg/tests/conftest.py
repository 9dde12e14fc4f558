"""Shared random-matrix builders and independent oracles for the test suite."""

import numpy as np
import pytest

from reduced_kalman.ssmodel import SystemStep


def rand_sym(rng, d, scale=1.0):
    G = rng.standard_normal((d, d))
    return scale * 0.5 * (G + G.T)


def rand_psd(rng, d, scale=1.0, rank=None):
    r = d if rank is None else rank
    G = rng.standard_normal((d, r))
    return scale * (G @ G.T) / max(r, 1)


def rand_pd(rng, d, scale=1.0):
    return rand_psd(rng, d, scale) + scale * 0.1 * np.eye(d)


def rand_orthogonal(rng, d):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return Q


def rand_stable(rng, d, radius=0.9):
    A = rng.standard_normal((d, d))
    return A * (radius / max(np.abs(np.linalg.eigvals(A)).max(), 1e-12))


def rand_step(rng, d, q, stable_radius=0.9):
    """Random well-posed system step with a stable A and PD noises."""
    return SystemStep(
        A=rand_stable(rng, d, stable_radius),
        B=rng.standard_normal(d),
        Sigma=rand_pd(rng, d, 0.5),
        H=rng.standard_normal((q, d)),
        sigma=rand_pd(rng, q, 0.3),
    )


def conditioning_oracle(m, R, step, y):
    """Exact posterior of X_{n+1} given Y_{n+1} via joint-Gaussian conditioning.

    Builds the joint covariance of (X_{n+1}, Y_{n+1}) from the prior N(m, R)
    and conditions directly; independent of the filter's algebra.
    """
    A = np.asarray(step.A, dtype=float)
    H = np.asarray(step.H, dtype=float)
    mf = A @ m + step.B
    Pf = A @ R @ A.T + np.asarray(step.Sigma, dtype=float)
    S = H @ Pf @ H.T + step.sigma
    cross = Pf @ H.T
    m_post = mf + cross @ np.linalg.solve(S, y - H @ mf)
    R_post = Pf - cross @ np.linalg.solve(S, cross.T)
    return m_post, 0.5 * (R_post + R_post.T)


def dominance_by_bisection(X, Y, lo=0.0, hi=None, tol=1e-10):
    """Minimal b with X <= b Y found by bisection over a PSD test."""
    def psd(b):
        return np.linalg.eigvalsh(b * Y - X).min() >= -1e-13 * max(1.0, np.abs(Y).max() * b)

    if hi is None:
        hi = 1.0
        while not psd(hi):
            hi *= 2.0
            if hi > 1e12:
                raise RuntimeError("bisection bracket failed")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if psd(mid):
            hi = mid
        else:
            lo = mid
    return hi


def scale_aligned_rkf_setup(rng, dl=2, ds=2, r=1.4, r_prime=1.5, beta_star=0.9,
                            margin=3.0):
    """Small reduced-filter experiment satisfying the reference-projection
    criterion by construction: scale-aligned sensors (H^T sigma^{-1} H block
    diagonal across the split) and D_S sized from the stationary reference
    covariance with the given margin.

    Returns (system, initial_rkf_state, stationary_solution, beta_star).
    """
    from reduced_kalman.filters import RkfState
    from reduced_kalman.reference import rkf_reference, stationary_covariance
    from reduced_kalman.ssmodel import ConstantProcess, TwoScaleSystem

    d = dl + ds
    A = np.zeros((d, d))
    A[:dl, :dl] = 0.6 * rand_pd(rng, dl)
    A[dl:, dl:] = 0.4 * rand_pd(rng, ds)
    Sig = np.zeros((d, d))
    Sig[:dl, :dl] = rand_pd(rng, dl, 0.4)
    Sig[dl:, dl:] = rand_pd(rng, ds, 0.15)
    H = np.eye(d)
    step = SystemStep(A, np.zeros(d), Sig, H, 0.2 * np.eye(d))
    system = TwoScaleSystem(process=ConstantProcess(step),
                            large_idx=np.arange(dl), small_idx=np.arange(dl, d),
                            block_decoupled=True)
    D = np.eye(ds)
    for _ in range(3):
        infl = rkf_reference(system, r, r_prime, D)
        sol = stationary_covariance(infl, tol=1e-13)
        R_SS = sol.R[np.ix_(system.small_idx, system.small_idx)]
        D = margin * R_SS / (beta_star * r - 1.0)
    infl = rkf_reference(system, r, r_prime, D)
    sol = stationary_covariance(infl, tol=1e-13)
    state0 = RkfState(np.zeros(d), sol.R[np.ix_(system.large_idx, system.large_idx)],
                      system.large_idx, system.small_idx, D, r=r, r_prime=r_prime)
    return system, state0, sol, beta_star


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
