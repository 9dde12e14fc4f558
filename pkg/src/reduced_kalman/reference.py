"""Inflated reference systems and their Riccati recursions.

Each reduced filter has an associated signal-observation system whose optimal
Kalman covariance serves as a performance reference:

* Decoupled reduced filter: a large-scale system with dynamics ``sqrt(r) A_L``
  and process noise ``Sigma_L``, observed through ``(H_L, sigma_L)`` where
  ``sigma_L`` carries the small-scale representation-error covariance.  Its
  Kalman covariance is exactly ``C_L / r`` when initialized that way.
* General reduced filter: the full system inflated by ``r' > r`` with process
  noise ``r' Sigma + r' A D_S A^T``.  Its Kalman covariance ``R~`` upper
  bounds the filter's covariance estimate: ``C+ <= r R~ + D_S`` after the
  adjustment time.

For constant coefficients the stationary covariance solves an algebraic
Riccati equation; it is found here by plain fixed-point iteration, with a
two-initialization uniqueness probe and a plug-back residual.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .filters import kalman_update
from .matcore import riemannian_delta, spectral_norm, symmetrize
from .ssmodel import RealizedPath, SystemStep, TwoScaleSystem, _dense

__all__ = [
    "NonConvergenceError",
    "InflatedStep",
    "InflatedSystem",
    "drkf_reference",
    "rkf_reference",
    "riccati_step",
    "StationarySolution",
    "stationary_covariance",
    "reference_sequence",
    "gramian_ranks",
    "stationary_to_csv",
]


class NonConvergenceError(RuntimeError):
    """Fixed-point iteration did not meet its tolerance; carries delta_history."""

    def __init__(self, message, delta_history):
        super().__init__(message)
        self.delta_history = list(delta_history)


@dataclass(frozen=True)
class InflatedStep:
    """Per-step coefficients of a reference system: A', Sigma', H, sigma."""

    A_prime: np.ndarray
    Sigma_prime: np.ndarray
    H: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True)
class InflatedSystem:
    """Reference system derived from a two-scale system and a reduced filter.

    ``kind`` is "drkf" or "rkf".  The rkf reference needs ``r_prime > r`` and
    the small-scale prior ``D_small``; the drkf reference instead tracks the
    unfiltered small-scale covariance (started at ``V0_small``) to build its
    observation noise.
    """

    base: TwoScaleSystem
    kind: str
    r: float
    r_prime: float | None = None
    D_small: np.ndarray | None = None
    V0_small: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("drkf", "rkf"):
            raise ValueError("kind must be 'drkf' or 'rkf'")
        if not self.r > 1.0:
            raise ValueError("r must exceed 1")
        if self.kind == "rkf":
            if self.r_prime is None or not self.r_prime > self.r:
                raise ValueError("rkf reference requires r_prime > r")
            if self.D_small is None:
                raise ValueError("rkf reference requires D_small")
        else:
            if self.V0_small is None:
                raise ValueError("drkf reference requires V0_small")

    @property
    def dim(self) -> int:
        return self.base.p if self.kind == "drkf" else self.base.d

    def _full_D(self) -> np.ndarray:
        D = np.zeros((self.base.d, self.base.d))
        D[np.ix_(self.base.small_idx, self.base.small_idx)] = self.D_small
        return D

    def step_from(self, step: SystemStep, V_small: np.ndarray | None = None):
        """Derived coefficients for one base step.

        For the drkf kind, returns ``(InflatedStep, V_small_next)`` so the
        caller can carry the small-scale covariance recursion; for rkf the
        second element is None.
        """
        if self.kind == "rkf":
            A = _dense(step.A)
            Sp = self.r_prime * _dense(step.Sigma) + self.r_prime * (A @ self._full_D() @ A.T)
            return InflatedStep(np.sqrt(self.r_prime) * A, symmetrize(Sp),
                                _dense(step.H), step.sigma), None
        li, si = self.base.large_idx, self.base.small_idx
        A = _dense(step.A)
        Sig = _dense(step.Sigma)
        H = _dense(step.H)
        A_L = A[np.ix_(li, li)]
        A_S = A[np.ix_(si, si)]
        Sig_L = Sig[np.ix_(li, li)]
        Sig_S = Sig[np.ix_(si, si)]
        H_L, H_S = H[:, li], H[:, si]
        V_next = symmetrize(A_S @ V_small @ A_S.T + Sig_S)
        sigma_L = symmetrize(step.sigma + H_S @ V_next @ H_S.T)
        return InflatedStep(np.sqrt(self.r) * A_L, Sig_L, H_L, sigma_L), V_next

    def constant_step(self) -> InflatedStep:
        """Derived coefficients for a constant-coefficient base system.

        For the drkf kind the small-scale covariance is taken at its
        statistical equilibrium (the discrete Lyapunov fixed point).
        """
        if not self.base.process.constant:
            raise ValueError("base system does not have constant coefficients")
        step = self.base.process.template
        if self.kind == "rkf":
            infl, _ = self.step_from(step)
            return infl
        V_eq = self.equilibrium_small_covariance()
        infl, _ = self.step_from(step, V_eq)
        return infl

    def equilibrium_small_covariance(self) -> np.ndarray:
        """Solve V = A_S V A_S^T + Sigma_S for the constant base step."""
        step = self.base.process.template
        si = self.base.small_idx
        A_S = _dense(step.A)[np.ix_(si, si)]
        Sig_S = _dense(step.Sigma)[np.ix_(si, si)]
        if len(si) == 0:
            return np.zeros((0, 0))
        V = sla.solve_discrete_lyapunov(A_S, Sig_S)
        return symmetrize(V)


def drkf_reference(system: TwoScaleSystem, r: float, V0_small: np.ndarray) -> InflatedSystem:
    """Reference system whose Kalman covariance is C_L / r for the decoupled filter."""
    return InflatedSystem(base=system, kind="drkf", r=r, V0_small=symmetrize(V0_small))


def rkf_reference(system: TwoScaleSystem, r: float, r_prime: float,
                  D_small: np.ndarray) -> InflatedSystem:
    """Reference system whose Kalman covariance upper-bounds the general reduced filter."""
    return InflatedSystem(base=system, kind="rkf", r=r, r_prime=r_prime,
                          D_small=symmetrize(D_small))


def riccati_step(R: np.ndarray, infl: InflatedStep, r_prime: float | None = None) -> np.ndarray:
    """One Riccati iterate of a reference system.

    ``R_{n+1} = K(A' R A'^T + Sigma')`` with the Kalman covariance update
    ``K`` built from ``(H, sigma)``.  The inflation is already folded into
    ``A'`` (and ``Sigma'``), so no extra factor appears here; ``r_prime`` is
    accepted for callers that carry it separately and must then pass
    ``A' = sqrt(r') A`` themselves.
    """
    del r_prime
    forecast = symmetrize(infl.A_prime @ symmetrize(R) @ infl.A_prime.T + infl.Sigma_prime)
    return kalman_update(forecast, infl.H, infl.sigma)


@dataclass(frozen=True)
class StationarySolution:
    """Stationary Riccati solution with convergence metadata."""

    R: np.ndarray
    iterations: int
    residual: float
    delta_history: tuple
    unique: bool


def _iterate_to_fixpoint(infl: InflatedStep, R0: np.ndarray, tol: float, max_iter: int):
    R = symmetrize(np.asarray(R0, dtype=float))
    deltas = []
    dim = R.shape[0]
    record_every = 1 if dim <= 60 else 25
    for it in range(1, max_iter + 1):
        R_new = riccati_step(R, infl)
        rel = spectral_norm(R_new - R) / max(spectral_norm(R), 1e-300)
        delta = None
        if it % record_every == 0 or rel < tol:
            try:
                delta = riemannian_delta(R, R_new)
            except np.linalg.LinAlgError:
                delta = float("nan")
            deltas.append(delta)
        R = R_new
        if rel < tol or (delta is not None and np.isfinite(delta) and delta < tol):
            return R, it, deltas
    raise NonConvergenceError(f"no fixed point after {max_iter} iterations", deltas)


def stationary_covariance(inflated, tol: float = 1e-12,
                          max_iter: int = 10**6) -> StationarySolution:
    """Stationary Kalman covariance of a constant-coefficient reference system.

    Accepts an :class:`InflatedSystem` (with constant base coefficients) or a
    bare :class:`InflatedStep`.  Fixed-point iteration from ``R0 = Sigma'``
    until the Riemannian distance (or relative norm change) between iterates
    drops below ``tol``.  A second run from ``10 Sigma' + I`` probes
    uniqueness: both limits are co-iterated until their gap either closes
    (unique) or stalls above ``10 tol`` (flagged non-unique).  The plug-back
    residual of the fixed point is recorded.
    """
    infl = inflated if isinstance(inflated, InflatedStep) else inflated.constant_step()
    dim = infl.A_prime.shape[0]
    R1, it1, deltas = _iterate_to_fixpoint(infl, infl.Sigma_prime, tol, max_iter)
    R2, _, _ = _iterate_to_fixpoint(infl, 10.0 * infl.Sigma_prime + np.eye(dim), tol, max_iter)

    def rel_gap(X, Y):
        return spectral_norm(X - Y) / max(spectral_norm(X), 1e-300)

    gap = rel_gap(R1, R2)
    for _ in range(5000):
        if gap <= 10.0 * tol:
            break
        R1n, R2n = riccati_step(R1, infl), riccati_step(R2, infl)
        new_gap = rel_gap(R1n, R2n)
        if new_gap >= gap * (1.0 - 1e-9):
            gap = new_gap
            break
        R1, R2, gap = R1n, R2n, new_gap
    unique = gap <= 10.0 * tol
    residual = spectral_norm(riccati_step(R1, infl) - R1) / max(spectral_norm(R1), 1e-300)
    return StationarySolution(R=symmetrize(R1), iterations=it1, residual=residual,
                              delta_history=tuple(deltas), unique=unique)


def reference_sequence(inflated: InflatedSystem, R0: np.ndarray,
                       path: RealizedPath) -> list:
    """Riccati covariance sequence of the reference system along a realized path.

    Returns ``[R_0, ..., R_n]``.  For the drkf kind the small-scale
    covariance recursion starts at the system's ``V0_small``; initializing at
    ``R_0 = C_L(0)/r`` makes the sequence exactly proportional to the
    decoupled filter's covariance.
    """
    R = symmetrize(np.asarray(R0, dtype=float))
    out = [R]
    V = inflated.V0_small
    for step in path.steps:
        infl, V = inflated.step_from(step, V)
        R = riccati_step(R, infl)
        out.append(R)
    return out


def gramian_ranks(system: TwoScaleSystem, n: int | None = None):
    """Numerical ranks of the observability and controllability Gramians.

    A heuristic well-posedness probe for the stationary solver: both ranks
    should equal the state dimension over a window of ``n`` steps (default
    ``d``) for a constant-coefficient system.
    """
    step = system.process.template
    d = step.d
    n = d if n is None else n
    A = _dense(step.A)
    H = _dense(step.H)
    sig_inv = np.linalg.inv(step.sigma)
    Sig = _dense(step.Sigma)
    obs = np.zeros((d, d))
    ctr = np.zeros((d, d))
    Ak = np.eye(d)
    for _ in range(n):
        obs += Ak.T @ H.T @ sig_inv @ H @ Ak
        ctr = A @ ctr @ A.T + Sig
        Ak = A @ Ak
    return int(np.linalg.matrix_rank(obs, hermitian=True)), int(np.linalg.matrix_rank(ctr, hermitian=True))


def stationary_to_csv(solution: StationarySolution, matrix_file, meta_file=None) -> None:
    """Write the stationary matrix as CSV and its metadata as JSON."""
    R = solution.R
    for row in R:
        matrix_file.write(",".join(repr(float(v)) for v in row) + "\n")
    if meta_file is not None:
        meta = {
            "iterations": solution.iterations,
            "residual": solution.residual,
            "unique": solution.unique,
            "delta_history_tail": [float(x) for x in solution.delta_history[-5:]],
        }
        json.dump(meta, meta_file, sort_keys=True, indent=2)
        meta_file.write("\n")
