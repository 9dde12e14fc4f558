"""Optimal Kalman filter and the two-scale reduced filters.

Three step functions share the same shape ``(state, step, y) -> state``:

* :func:`kalman_step` -- the optimal filter, full covariance recursion.
* :func:`drkf_step` -- decoupled reduced filter: full Kalman update on the
  large scales, small scales carried by their unfiltered mean/covariance,
  with the small-scale contribution to the observation treated as extra
  observation noise and the posterior covariance inflated by ``r``.
* :func:`rkf_step` -- general reduced filter: full-state update with the
  small-scale prior frozen at a constant matrix ``D_S`` and the posterior
  covariance projected to the large scales, then inflated by ``r``.

Innovations are always formed against the forecast mean ``A m + B``, which is
the convention consistent with the error recursion
``e_{n+1} = (I - K H) A e_n + ...`` and with exact joint-Gaussian
conditioning.

A fast RKF path (:func:`rkf_step_fast`) exploits sparse coefficients, the
rank-p covariance block, and the Woodbury identity to reach
O(d^2 + d q^2 + d p^2) per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .matcore import mahalanobis_sq, min_dominance_ratio, spectral_norm, symmetrize
from .ssmodel import RealizedPath, SystemStep, _dense

__all__ = [
    "StructureError",
    "KalmanState",
    "DrkfState",
    "RkfState",
    "StepDetails",
    "kalman_update",
    "kalman_step",
    "drkf_step",
    "rkf_step",
    "rkf_step_fast",
    "FilterRun",
    "run_kalman",
    "run_drkf",
    "run_rkf",
    "replay_means",
    "filter_trace_to_csv",
]


class StructureError(ValueError):
    """A step violates the structural requirements of the filter."""


@dataclass(frozen=True)
class KalmanState:
    """Posterior mean and covariance of the optimal filter."""

    m: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "m", np.asarray(self.m, dtype=float).reshape(-1))
        object.__setattr__(self, "R", symmetrize(self.R))

    def effective_cov(self) -> np.ndarray:
        return self.R


@dataclass(frozen=True)
class DrkfState:
    """Decoupled reduced filter state.

    Large scales carry a filtered Gaussian (mu_L, C_L); small scales carry
    the unfiltered mean mu_S and covariance V_S.  ``r > 1`` is the
    multiplicative inflation applied after each large-scale update.
    """

    mu_L: np.ndarray
    C_L: np.ndarray
    mu_S: np.ndarray
    V_S: np.ndarray
    large_idx: np.ndarray
    small_idx: np.ndarray
    r: float

    def __post_init__(self):
        object.__setattr__(self, "mu_L", np.asarray(self.mu_L, dtype=float).reshape(-1))
        object.__setattr__(self, "mu_S", np.asarray(self.mu_S, dtype=float).reshape(-1))
        object.__setattr__(self, "C_L", symmetrize(self.C_L))
        object.__setattr__(self, "V_S", symmetrize(self.V_S))
        object.__setattr__(self, "large_idx", np.asarray(self.large_idx, dtype=int))
        object.__setattr__(self, "small_idx", np.asarray(self.small_idx, dtype=int))
        if not self.r > 1.0:
            raise ValueError("inflation r must exceed 1")

    @property
    def p(self) -> int:
        return len(self.large_idx)

    def effective_cov(self) -> np.ndarray:
        """Large-scale covariance estimator (the filtered block)."""
        return self.C_L

    def full_mean(self) -> np.ndarray:
        mu = np.empty(len(self.large_idx) + len(self.small_idx))
        mu[self.large_idx] = self.mu_L
        mu[self.small_idx] = self.mu_S
        return mu


@dataclass(frozen=True)
class RkfState:
    """General reduced filter state.

    The covariance estimate ``C`` lives on the large-scale block only and is
    stored as its p x p block plus the index map; the effective covariance is
    ``C + D_S`` with the constant small-scale prior ``D_S``.
    """

    mu: np.ndarray
    C_large: np.ndarray
    large_idx: np.ndarray
    small_idx: np.ndarray
    D_small: object
    r: float
    r_prime: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float).reshape(-1))
        object.__setattr__(self, "C_large", symmetrize(self.C_large))
        object.__setattr__(self, "large_idx", np.asarray(self.large_idx, dtype=int))
        object.__setattr__(self, "small_idx", np.asarray(self.small_idx, dtype=int))
        if sp.issparse(self.D_small):
            object.__setattr__(self, "D_small", (0.5 * (self.D_small + self.D_small.T)).tocsr())
        else:
            object.__setattr__(self, "D_small", symmetrize(self.D_small))
        if not self.r > 1.0:
            raise ValueError("inflation r must exceed 1")

    @property
    def d(self) -> int:
        return len(self.mu)

    @property
    def p(self) -> int:
        return len(self.large_idx)

    def full_C(self) -> np.ndarray:
        """The d x d covariance estimate, exactly zero off the large block."""
        C = np.zeros((self.d, self.d))
        C[np.ix_(self.large_idx, self.large_idx)] = self.C_large
        return C

    def full_D(self) -> np.ndarray:
        D = np.zeros((self.d, self.d))
        D[np.ix_(self.small_idx, self.small_idx)] = _dense(self.D_small)
        return D

    def sparse_D(self):
        """The prior embedded as a sparse d x d matrix (fast-path helper)."""
        block = self.D_small.tocoo() if sp.issparse(self.D_small) else None
        if block is None:
            rows, cols = np.nonzero(self.D_small)
            vals = np.asarray(self.D_small)[rows, cols]
        else:
            rows, cols, vals = block.row, block.col, block.data
        return sp.csr_matrix((vals, (self.small_idx[rows], self.small_idx[cols])),
                             shape=(self.d, self.d))

    def effective_cov(self) -> np.ndarray:
        """C + D_S, the covariance the filter reports for its error."""
        return self.full_C() + self.full_D()


@dataclass(frozen=True)
class StepDetails:
    """Per-step byproducts needed by the diagnostics monitors."""

    forecast_mean: np.ndarray
    forecast_cov: np.ndarray | None
    gain: np.ndarray
    kalman_updated: np.ndarray | None
    transition: np.ndarray | None


def kalman_update(C: np.ndarray, H, sigma: np.ndarray) -> np.ndarray:
    """Covariance update ``C - C H^T (sigma + H C H^T)^{-1} H C``.

    Satisfies the Joseph identity
    ``(I - K H) C (I - K H)^T + K sigma K^T`` with the gain
    ``K = C H^T (sigma + H C H^T)^{-1}``; the subtractive form is used here,
    followed by explicit symmetrization.
    """
    C = symmetrize(C)
    HC = _dense(H @ C)
    S = symmetrize(_dense(HC @ _dense(H).T) + sigma)
    try:
        G = sla.solve(S, HC, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("innovation covariance is singular") from exc
    return symmetrize(C - HC.T @ G)


def _gain(forecast_cov: np.ndarray, H, sigma: np.ndarray):
    """Kalman gain and innovation solve pieces for a forecast covariance."""
    HC = _dense(H @ forecast_cov)
    S = symmetrize(_dense(HC @ _dense(H).T) + sigma)
    try:
        K = sla.solve(S, HC, assume_a="pos").T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("innovation covariance is singular") from exc
    return K, HC


def kalman_step(state: KalmanState, step: SystemStep, y: np.ndarray,
                details: bool = False):
    """One forecast/update cycle of the optimal filter."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape != (step.q,):
        raise ValueError(f"observation must have length {step.q}")
    A, B = step.A, step.B
    mf = _dense(A @ state.m) + B
    Rf = symmetrize(_dense(A @ _dense(A @ state.R).T) + _dense(step.Sigma))
    K, HR = _gain(Rf, step.H, step.sigma)
    m_new = mf + K @ (y - _dense(step.H @ mf))
    R_new = symmetrize(Rf - K @ HR)
    new = KalmanState(m_new, R_new)
    if not details:
        return new
    trans = (np.eye(step.d) - K @ _dense(step.H)) @ _dense(A)
    return new, StepDetails(forecast_mean=mf, forecast_cov=Rf, gain=K,
                            kalman_updated=R_new, transition=trans)


def _abs_max(M) -> float:
    if sp.issparse(M):
        return float(abs(M).max()) if M.nnz else 0.0
    return float(np.abs(M).max(initial=0.0))


def _block(M, rows, cols, to_dense: bool):
    """Sub-block of a dense or sparse matrix; sparse inputs stay sparse unless asked."""
    if sp.issparse(M):
        sub = M.tocsr()[rows][:, cols]
        return sub.toarray() if to_dense else sub
    sub = M[np.ix_(rows, cols)]
    return sub


def _cols(M, cols):
    if sp.issparse(M):
        return M.tocsc()[:, cols]
    return M[:, cols]


def _split_step(step: SystemStep, large_idx, small_idx, tol: float = 1e-10,
                need_small_sigma: bool = True):
    """Slice a block-decoupled step into large/small components.

    Sparse A and H stay sparse so the small-scale covariance update keeps its
    O(d^2) cost; the noise blocks are densified (they enter additively), the
    small one only when the caller updates the small-scale covariance.
    """
    A, Sig, H = step.A, step.Sigma, step.H
    scale = max(1.0, _abs_max(A), _abs_max(Sig))
    cross = max(
        _abs_max(_block(A, small_idx, large_idx, False)),
        _abs_max(_block(A, large_idx, small_idx, False)),
        _abs_max(_block(Sig, large_idx, small_idx, False)),
    )
    if cross > tol * scale:
        raise StructureError("step is not block-decoupled across the filter's split")
    Sig_S = _block(Sig, small_idx, small_idx, True) if need_small_sigma else None
    return (_block(A, large_idx, large_idx, False), step.B[large_idx],
            _block(Sig, large_idx, large_idx, True), _cols(H, large_idx),
            _block(A, small_idx, small_idx, False), step.B[small_idx],
            Sig_S, _cols(H, small_idx))


def drkf_step(state: DrkfState, step: SystemStep, y: np.ndarray,
              details: bool = False, update_small_covariance: bool = True):
    """One cycle of the decoupled reduced filter.

    The small-scale mean and covariance follow the unfiltered recursion; the
    observation is recentred by the small-scale mean and its residual
    variance ``H_S V_S H_S^T`` is added to the observation noise before the
    large-scale Kalman update, whose posterior covariance is inflated by
    ``r``.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    A_L, B_L, Sig_L, H_L, A_S, B_S, Sig_S, H_S = _split_step(
        step, state.large_idx, state.small_idx,
        need_small_sigma=update_small_covariance)
    mu_S_new = _dense(A_S @ state.mu_S) + B_S
    if update_small_covariance:
        V_S_new = symmetrize(_dense(A_S @ _dense(A_S @ state.V_S).T) + Sig_S)
    else:
        V_S_new = state.V_S
    sigma_L = symmetrize(step.sigma + _dense(H_S @ _dense(H_S @ V_S_new).T))
    y_L = y - _dense(H_S @ mu_S_new)

    mf = _dense(A_L @ state.mu_L) + B_L
    Cf = symmetrize(_dense(A_L @ _dense(A_L @ state.C_L).T) + Sig_L)
    K, HC = _gain(Cf, H_L, sigma_L)
    mu_L_new = mf + K @ (y_L - _dense(H_L @ mf))
    posterior = symmetrize(Cf - K @ HC)
    C_L_new = state.r * posterior

    new = DrkfState(mu_L_new, C_L_new, mu_S_new, V_S_new,
                    state.large_idx, state.small_idx, state.r)
    if not details:
        return new
    trans = (np.eye(state.p) - K @ _dense(H_L)) @ _dense(A_L)
    return new, StepDetails(forecast_mean=mf, forecast_cov=Cf, gain=K,
                            kalman_updated=posterior, transition=trans)


def rkf_step(state: RkfState, step: SystemStep, y: np.ndarray,
             details: bool = False):
    """One cycle of the general reduced filter (reference dense path).

    Forecast uses the effective covariance ``C + D_S``; after the full-state
    update the posterior covariance is projected onto the large-scale block
    and inflated by ``r``.  The unprojected update is exposed through
    ``StepDetails.kalman_updated`` for the reduction-ratio diagnostics.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    A, B = step.A, step.B
    Cplus = state.effective_cov()
    mf = _dense(A @ state.mu) + B
    Cf = symmetrize(_dense(A @ _dense(A @ Cplus).T) + _dense(step.Sigma))
    K, HC = _gain(Cf, step.H, step.sigma)
    mu_new = mf + K @ (y - _dense(step.H @ mf))
    posterior = symmetrize(Cf - K @ HC)
    LL = np.ix_(state.large_idx, state.large_idx)
    C_large_new = state.r * symmetrize(posterior[LL])
    new = RkfState(mu_new, C_large_new, state.large_idx, state.small_idx,
                   state.D_small, state.r, state.r_prime)
    if not details:
        return new
    trans = (np.eye(step.d) - K @ _dense(step.H)) @ _dense(A)
    return new, StepDetails(forecast_mean=mf, forecast_cov=Cf, gain=K,
                            kalman_updated=posterior, transition=trans)


def rkf_step_fast(state: RkfState, step: SystemStep, y: np.ndarray,
                  details: bool = False):
    """Woodbury-accelerated reduced filter step.

    Never forms the dense forecast covariance: the rank-p part
    ``(A U_L) C_large (A U_L)^T`` is kept factored and the q x q innovation
    inverse is built from ``Q = sigma + H (A D_S A^T + Sigma) H^T`` plus a
    p x p correction.  With sparse A and H the per-step cost is
    O(d^2 + d q^2 + d p^2).  Agrees with :func:`rkf_step` to floating-point
    accuracy (contract: 1e-8 relative).
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    A, H = step.A, step.H
    d, q, p = step.d, step.q, state.p
    large = state.large_idx

    mf = _dense(A @ state.mu) + step.B

    # Sparse part of the forecast covariance, A D_S A^T + Sigma, kept sparse:
    # with block-sparse coefficients it has O(d) entries and never costs a
    # dense d x d pass.
    sparse_mode = sp.issparse(A) and sp.issparse(step.Sigma)
    if sparse_mode:
        A_sp = A.tocsr()
        S_sp = (A_sp @ state.sparse_D() @ A_sp.T + step.Sigma).tocsr()
        L = np.asarray(A.tocsc()[:, large].todense())
        H_sp = H.tocsr() if sp.issparse(H) else sp.csr_matrix(H)
        G = np.asarray((H_sp @ L))
        HS = (H_sp @ S_sp).tocsr()                       # q x d sparse
        Q = symmetrize(np.asarray((HS @ H_sp.T).todense()) + step.sigma)
        S_spHt = np.asarray((S_sp @ H_sp.T).todense())   # d x q
        Cf_LL_sparse = np.asarray(S_sp[large][:, large].todense())
        HS_L = np.asarray(HS[:, large].todense())
    else:
        A_d = _dense(A)
        S_sp = A_d @ state.full_D() @ A_d.T + _dense(step.Sigma)
        L = A_d[:, large]
        G = _dense(H @ L)
        HS = _dense(H @ S_sp)
        Q = symmetrize(HS @ _dense(H).T + step.sigma)
        S_spHt = HS.T
        Cf_LL_sparse = S_sp[np.ix_(large, large)]
        HS_L = HS[:, large]

    Q_cho = sla.cho_factor(Q, lower=True)
    QiG = sla.cho_solve(Q_cho, G)           # q x p
    # Woodbury: (Q + G C G^T)^{-1} = Q^{-1} - Q^{-1} G (C^{-1} + G^T Q^{-1} G)^{-1} G^T Q^{-1}
    # written with C^{1/2} so a singular C_large block stays well posed.
    Croot = _psd_root(state.C_large)
    M = np.eye(p) + Croot @ (G.T @ QiG) @ Croot
    M_cho = sla.cho_factor(symmetrize(M), lower=True)

    def S_inv_apply(Rq: np.ndarray) -> np.ndarray:
        """(sigma + H Cf H^T)^{-1} @ Rq for q x * right-hand sides."""
        QiR = sla.cho_solve(Q_cho, Rq)
        W = Croot @ (G.T @ QiR)
        return QiR - QiG @ (Croot @ sla.cho_solve(M_cho, W))

    # Gain K = Cf H^T S^{-1} with Cf H^T = L C (H L)^T + S_sp H^T.
    CfHt = L @ (state.C_large @ G.T) + S_spHt            # d x q
    K = S_inv_apply(CfHt.T).T                            # d x q

    mu_new = mf + K @ (y - _dense(H @ mf))

    # Large-scale block of the posterior: P_L (Cf - Cf H^T S^{-1} H Cf) P_L.
    Cf_LL = (L[large] @ state.C_large @ L[large].T) + Cf_LL_sparse
    HCf_L = G @ (state.C_large @ L[large].T) + HS_L      # q x p
    post_LL = Cf_LL - HCf_L.T @ S_inv_apply(HCf_L)
    C_large_new = state.r * symmetrize(post_LL)

    new = RkfState(mu_new, C_large_new, state.large_idx, state.small_idx,
                   state.D_small, state.r, state.r_prime)
    if not details:
        return new
    # Diagnostics need the dense unprojected update; this path is O(d^2 q).
    Cf = symmetrize(L @ state.C_large @ L.T + _dense(S_sp))
    posterior = symmetrize(Cf - CfHt @ S_inv_apply(_dense(H @ Cf)))
    trans = (np.eye(d) - K @ _dense(H)) @ _dense(A)
    return new, StepDetails(forecast_mean=mf, forecast_cov=Cf, gain=K,
                            kalman_updated=posterior, transition=trans)


def _psd_root(C: np.ndarray) -> np.ndarray:
    eigs, vecs = np.linalg.eigh(symmetrize(C))
    return (vecs * np.sqrt(np.clip(eigs, 0.0, None))) @ vecs.T


_STEP_FUNCTIONS = {
    "kalman": kalman_step,
    "drkf": drkf_step,
    "rkf": rkf_step,
    "rkf_fast": rkf_step_fast,
}


@dataclass
class FilterRun:
    """Record of one filter pass along a coefficient path.

    Scalar diagnostics are stored per step; full covariances and gains are
    retained only when ``store_covariances`` was requested (they are shared
    across trials that reuse the same coefficient path).
    """

    kind: str
    states: list
    means: np.ndarray
    cov_trace: np.ndarray
    cov_norm: np.ndarray
    maha: np.ndarray | None
    mse: np.ndarray | None
    errors: np.ndarray | None
    betas: np.ndarray | None
    log_norm_sum: float
    product: np.ndarray
    eff_covs: list | None
    gains: list | None
    kalman_updateds: list | None

    @property
    def n_steps(self) -> int:
        return len(self.means) - 1

    def stability_rate(self) -> float:
        """(1/n) log || prod (I - K H) A || accumulated over the run."""
        n = self.n_steps
        if n == 0:
            raise ValueError("empty run")
        top = np.linalg.norm(self.product, 2)
        return (self.log_norm_sum + np.log(top)) / n


def _error_of(kind: str, state, truth_row: np.ndarray) -> np.ndarray:
    if kind == "drkf":
        return truth_row[state.large_idx] - state.mu_L
    mu = state.m if kind == "kalman" else state.mu
    return truth_row - mu


def _mean_of(kind: str, state) -> np.ndarray:
    if kind == "drkf":
        return state.full_mean()
    return state.m if kind == "kalman" else state.mu


def _run(kind: str, path: RealizedPath, ys: np.ndarray, state0,
         truth: np.ndarray | None, store_covariances: bool) -> FilterRun:
    step_fn = _STEP_FUNCTIONS[kind]
    n = len(path)
    ys = np.asarray(ys, dtype=float)
    if ys.shape[0] != n:
        raise ValueError("observation sequence length must match the path")
    d_mean = len(_mean_of(kind, state0))
    means = np.empty((n + 1, d_mean))
    means[0] = _mean_of(kind, state0)
    cov_trace = np.empty(n + 1)
    cov_norm = np.empty(n + 1)
    C0 = state0.effective_cov()
    cov_trace[0] = np.trace(C0)
    cov_norm[0] = spectral_norm(C0)
    has_truth = truth is not None
    maha = np.empty(n + 1) if has_truth else None
    mse = np.empty(n + 1) if has_truth else None
    errors = np.empty((n + 1, C0.shape[0])) if has_truth else None
    betas = np.empty(n + 1) if kind in ("rkf", "rkf_fast") else None
    if betas is not None:
        betas[0] = np.nan
    eff_covs = [C0] if store_covariances else None
    gains = [] if store_covariances else None
    kupds = [None] if store_covariances else None

    if has_truth:
        e0 = _error_of(kind, state0, truth[0])
        errors[0] = e0
        maha[0] = mahalanobis_sq(e0, C0)
        mse[0] = float(e0 @ e0)

    state = state0
    states = [state0]
    log_sum = 0.0
    product = None
    for k in range(n):
        state, det = step_fn(state, path.steps[k], ys[k], details=True)
        states.append(state)
        means[k + 1] = _mean_of(kind, state)
        C = state.effective_cov()
        cov_trace[k + 1] = np.trace(C)
        cov_norm[k + 1] = spectral_norm(C)
        if product is None:
            product = np.array(det.transition)
        else:
            product = det.transition @ product
        scale = np.linalg.norm(product)
        if scale > 0:
            product /= scale
            log_sum += np.log(scale)
        else:
            log_sum = -np.inf
        if betas is not None:
            betas[k + 1] = min_dominance_ratio(det.kalman_updated, C)
        if has_truth:
            e = _error_of(kind, state, truth[k + 1])
            errors[k + 1] = e
            maha[k + 1] = mahalanobis_sq(e, C)
            mse[k + 1] = float(e @ e)
        if store_covariances:
            eff_covs.append(C)
            gains.append(det.gain)
            kupds.append(det.kalman_updated)

    return FilterRun(kind=kind, states=states, means=means, cov_trace=cov_trace,
                     cov_norm=cov_norm, maha=maha, mse=mse, errors=errors,
                     betas=betas, log_norm_sum=log_sum, product=product,
                     eff_covs=eff_covs, gains=gains, kalman_updateds=kupds)


def run_kalman(path, ys, state0: KalmanState, truth=None, store_covariances=False) -> FilterRun:
    """Run the optimal filter along a realized path."""
    return _run("kalman", path, ys, state0, truth, store_covariances)


def run_drkf(path, ys, state0: DrkfState, truth=None, store_covariances=False) -> FilterRun:
    """Run the decoupled reduced filter along a realized path."""
    return _run("drkf", path, ys, state0, truth, store_covariances)


def run_rkf(path, ys, state0: RkfState, truth=None, store_covariances=False,
            fast=False) -> FilterRun:
    """Run the general reduced filter along a realized path."""
    return _run("rkf_fast" if fast else "rkf", path, ys, state0, truth, store_covariances)


def replay_means(path: RealizedPath, gains: list, ys: np.ndarray, mu0: np.ndarray) -> np.ndarray:
    """Re-run the mean recursion with precomputed gains.

    The covariance recursion (and hence the gain sequence) depends only on
    the coefficient path, so Monte-Carlo trials that share a path can reuse
    the gains and iterate means at O(d q) per step.
    """
    mu = np.asarray(mu0, dtype=float).reshape(-1).copy()
    out = np.empty((len(path) + 1, len(mu)))
    out[0] = mu
    for k, step in enumerate(path.steps):
        mf = _dense(step.A @ mu) + step.B
        mu = mf + gains[k] @ (ys[k] - _dense(step.H @ mf))
        out[k + 1] = mu
    return out


def filter_trace_to_csv(run: FilterRun, fileobj) -> None:
    """Write a per-step filter trace CSV.

    Columns: step, mean entries, covariance trace, covariance spectral norm,
    squared Mahalanobis error (blank without truth), beta (blank for
    non-reduced filters).
    """
    d = run.means.shape[1]
    header = ["step"] + [f"mean_{i}" for i in range(d)] + ["cov_trace", "cov_norm", "maha_sq", "beta"]
    fileobj.write(",".join(header) + "\n")
    for k in range(run.n_steps + 1):
        cells = [str(k)] + [repr(float(v)) for v in run.means[k]]
        cells.append(repr(float(run.cov_trace[k])))
        cells.append(repr(float(run.cov_norm[k])))
        cells.append("" if run.maha is None else repr(float(run.maha[k])))
        if run.betas is None or np.isnan(run.betas[k]):
            cells.append("")
        else:
            cells.append(repr(float(run.betas[k])))
        fileobj.write(",".join(cells) + "\n")
