"""Random-coefficient signal-observation systems and trajectory simulation.

The model is the linear recursion

    X_{n+1} = A_n X_n + B_n + xi_{n+1},      xi_{n+1} ~ N(0, Sigma_n)
    Y_{n+1} = H_n X_{n+1} + zeta_{n+1},      zeta_{n+1} ~ N(0, sigma_n)

with coefficients that may themselves be random (constant, Markov-switching,
or Bernoulli-masked observations).  A realized coefficient path can be reused
across trials, which the diagnostics monitors rely on to condition on the
coefficient history.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from ._rng import substream
from .matcore import psd_sqrt, symmetrize

__all__ = [
    "SystemStep",
    "RealizedPath",
    "ConstantProcess",
    "MarkovSwitchingProcess",
    "BernoulliObservationProcess",
    "TwoScaleSystem",
    "Trajectory",
    "simulate",
    "simulate_on_path",
    "unfiltered_covariance",
    "transform_observation",
    "scale_noise",
    "trajectory_to_csv",
]


def _dense(M) -> np.ndarray:
    return M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)


@dataclass(frozen=True)
class SystemStep:
    """One time slice of system coefficients (A, B, Sigma, H, sigma).

    ``A`` and ``H`` may be ``scipy.sparse`` matrices for large systems; the
    noise covariances are kept explicitly symmetric.  ``sigma`` must be
    nonsingular so the update is well posed.
    """

    A: object
    B: np.ndarray
    Sigma: object
    H: object
    sigma: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float).reshape(-1)
        object.__setattr__(self, "B", B)
        if not sp.issparse(self.A):
            object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        if not sp.issparse(self.H):
            object.__setattr__(self, "H", np.asarray(self.H, dtype=float))
        if sp.issparse(self.Sigma):
            object.__setattr__(self, "Sigma", self.Sigma.tocsr())
        else:
            object.__setattr__(self, "Sigma", symmetrize(np.asarray(self.Sigma, dtype=float)))
        object.__setattr__(self, "sigma", symmetrize(np.asarray(self.sigma, dtype=float)))
        d, q = self.A.shape[0], self.H.shape[0]
        if self.A.shape != (d, d):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if B.shape != (d,):
            raise ValueError(f"B must have length {d}, got {B.shape}")
        if self.Sigma.shape != (d, d):
            raise ValueError(f"Sigma must be {d}x{d}, got {self.Sigma.shape}")
        if self.H.shape != (q, d):
            raise ValueError(f"H must be qx{d}, got {self.H.shape}")
        if self.sigma.shape != (q, q):
            raise ValueError(f"sigma must be {q}x{q}, got {self.sigma.shape}")

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def q(self) -> int:
        return self.H.shape[0]

    def dense(self) -> "SystemStep":
        """Copy with all coefficients densified."""
        return SystemStep(_dense(self.A), self.B, _dense(self.Sigma), _dense(self.H), self.sigma)

    def with_noise_scale(self, epsilon: float) -> "SystemStep":
        """Copy with noise amplitudes scaled by ``epsilon`` (covariances by epsilon^2)."""
        e2 = float(epsilon) ** 2
        return SystemStep(self.A, self.B, self.Sigma * e2, self.H, self.sigma * e2)


@dataclass(frozen=True)
class RealizedPath:
    """A fixed realization of the coefficient process over ``n`` steps.

    ``steps[k]`` governs the transition X_k -> X_{k+1} and the observation
    Y_{k+1}.  ``obs_mask[k]`` is 0.0 when the observation at step k is masked
    (H zeroed) and 1.0 otherwise.
    """

    steps: tuple
    regime_ids: np.ndarray
    obs_mask: np.ndarray

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def d(self) -> int:
        return self.steps[0].d

    @property
    def q(self) -> int:
        return self.steps[0].q


class ConstantProcess:
    """Deterministic, time-homogeneous coefficients."""

    constant = True

    def __init__(self, step: SystemStep):
        self.step = step

    @property
    def template(self) -> SystemStep:
        return self.step

    def template_steps(self):
        return (self.step,)

    def sample_path(self, n: int, rng=None) -> RealizedPath:
        return RealizedPath(
            steps=(self.step,) * n,
            regime_ids=np.zeros(n, dtype=int),
            obs_mask=np.ones(n),
        )

    def map_steps(self, fn) -> "ConstantProcess":
        return ConstantProcess(fn(self.step))


class MarkovSwitchingProcess:
    """Coefficients jumping between finitely many regimes as a Markov chain."""

    constant = False

    def __init__(self, states, transition, initial):
        self.states = tuple(states)
        self.transition = np.asarray(transition, dtype=float)
        self.initial = np.asarray(initial, dtype=float)
        m = len(self.states)
        if self.transition.shape != (m, m):
            raise ValueError(f"transition must be {m}x{m}")
        if not np.allclose(self.transition.sum(axis=1), 1.0, atol=1e-10):
            raise ValueError("transition rows must sum to 1")
        if self.initial.shape != (m,) or not np.isclose(self.initial.sum(), 1.0, atol=1e-10):
            raise ValueError("initial distribution must be a length-m probability vector")

    @property
    def template(self) -> SystemStep:
        return self.states[0]

    def template_steps(self):
        return self.states

    def sample_path(self, n: int, rng) -> RealizedPath:
        m = len(self.states)
        ids = np.empty(n, dtype=int)
        state = int(rng.choice(m, p=self.initial))
        for k in range(n):
            ids[k] = state
            state = int(rng.choice(m, p=self.transition[state]))
        return RealizedPath(
            steps=tuple(self.states[i] for i in ids),
            regime_ids=ids,
            obs_mask=np.ones(n),
        )

    def map_steps(self, fn) -> "MarkovSwitchingProcess":
        return MarkovSwitchingProcess([fn(s) for s in self.states], self.transition, self.initial)

    def stationary_distribution(self) -> np.ndarray:
        eigval, eigvec = np.linalg.eig(self.transition.T)
        i = int(np.argmin(np.abs(eigval - 1.0)))
        pi = np.real(eigvec[:, i])
        return pi / pi.sum()


class BernoulliObservationProcess:
    """Observations arriving independently with probability ``gamma_bar``.

    A masked step keeps the observation dimension fixed and sets H to zero,
    so sigma stays positive definite and every recursion remains well posed.
    """

    constant = False

    def __init__(self, base: SystemStep, gamma_bar: float):
        if not 0.0 < gamma_bar <= 1.0:
            raise ValueError("gamma_bar must lie in (0, 1]")
        self.base = base
        self.gamma_bar = float(gamma_bar)
        H0 = base.H * 0.0 if not sp.issparse(base.H) else sp.csr_matrix(base.H.shape)
        self.masked = SystemStep(base.A, base.B, base.Sigma, H0, base.sigma)

    @property
    def template(self) -> SystemStep:
        return self.base

    def template_steps(self):
        return (self.base, self.masked)

    def sample_path(self, n: int, rng) -> RealizedPath:
        mask = (rng.random(n) < self.gamma_bar).astype(float)
        steps = tuple(self.base if m else self.masked for m in mask)
        return RealizedPath(steps=steps, regime_ids=np.zeros(n, dtype=int), obs_mask=mask)

    def map_steps(self, fn) -> "BernoulliObservationProcess":
        return BernoulliObservationProcess(fn(self.base), self.gamma_bar)


@dataclass(frozen=True)
class TwoScaleSystem:
    """A coefficient process plus the large/small coordinate split.

    ``large_idx`` and ``small_idx`` partition ``range(d)``.  When
    ``block_decoupled`` is set, every coefficient regime must have no dynamic
    or noise coupling between the two scales (A and Sigma block diagonal with
    respect to the split).
    """

    process: object
    large_idx: np.ndarray
    small_idx: np.ndarray
    block_decoupled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "large_idx", np.asarray(self.large_idx, dtype=int))
        object.__setattr__(self, "small_idx", np.asarray(self.small_idx, dtype=int))
        d = self.process.template.d
        union = np.sort(np.concatenate([self.large_idx, self.small_idx]))
        if not np.array_equal(union, np.arange(d)):
            raise ValueError("large_idx and small_idx must partition range(d)")
        if self.block_decoupled:
            for step in self.process.template_steps():
                self._check_decoupled(step)

    def _check_decoupled(self, step: SystemStep, tol: float = 1e-12):
        A = _dense(step.A)
        S = _dense(step.Sigma)
        scale = max(1.0, np.abs(A).max(), np.abs(S).max())
        cross_A = max(
            np.abs(A[np.ix_(self.small_idx, self.large_idx)]).max(initial=0.0),
            np.abs(A[np.ix_(self.large_idx, self.small_idx)]).max(initial=0.0),
        )
        cross_S = np.abs(S[np.ix_(self.large_idx, self.small_idx)]).max(initial=0.0)
        if max(cross_A, cross_S) > tol * scale:
            raise ValueError("system is not block-decoupled across the declared split")

    @property
    def d(self) -> int:
        return self.process.template.d

    @property
    def q(self) -> int:
        return self.process.template.q

    @property
    def p(self) -> int:
        return len(self.large_idx)


@dataclass(frozen=True)
class Trajectory:
    """A simulated state/observation path, reproducible from (process, x0, seed).

    ``states[k]`` is X_k for k = 0..n; ``observations[k]`` is Y_{k+1} for
    k = 0..n-1.  The noise draws are retained so sub-system simulations can be
    replayed against the same randomness.
    """

    states: np.ndarray
    observations: np.ndarray
    path: RealizedPath
    seed: object = None
    process_noise: np.ndarray | None = None
    obs_noise: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return len(self.path)


def _sigma_roots(path: RealizedPath):
    """PSD square roots of each step's noise covariances, cached per step object."""
    cache = {}
    roots = []
    for step in path.steps:
        key = id(step)
        if key not in cache:
            cache[key] = (psd_sqrt(_dense(step.Sigma)), psd_sqrt(_dense(step.sigma)))
        roots.append(cache[key])
    return roots


def simulate_on_path(path: RealizedPath, x0: np.ndarray, rng: np.random.Generator) -> Trajectory:
    """Simulate the system along a fixed coefficient realization."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    d, q = path.d, path.q
    if x0.shape != (d,):
        raise ValueError(f"x0 must have length {d}, got {x0.shape}")
    n = len(path)
    states = np.empty((n + 1, d))
    obs = np.empty((n, q))
    xi = np.empty((n, d))
    zeta = np.empty((n, q))
    states[0] = x0
    roots = _sigma_roots(path)
    x = x0
    for k, step in enumerate(path.steps):
        sig_root, obs_root = roots[k]
        xi[k] = sig_root @ rng.standard_normal(d)
        zeta[k] = obs_root @ rng.standard_normal(q)
        x = step.A @ x + step.B + xi[k]
        states[k + 1] = x
        obs[k] = step.H @ x + zeta[k]
    return Trajectory(states=states, observations=obs, path=path,
                      process_noise=xi, obs_noise=zeta)


def simulate(system: TwoScaleSystem, x0: np.ndarray, n: int, seed: int) -> Trajectory:
    """Simulate ``n`` steps of the system; deterministic given ``seed``.

    The coefficient path and the Gaussian noises come from independent named
    substreams of ``seed``, so rerunning with the same arguments reproduces
    the trajectory exactly.
    """
    path = system.process.sample_path(n, substream(seed, "coefficients"))
    traj = simulate_on_path(path, x0, substream(seed, "noise"))
    return replace(traj, seed=seed)


def unfiltered_covariance(path_or_system, V0: np.ndarray, n: int | None = None):
    """Covariance recursion V_{k+1} = A_k V_k A_k^T + Sigma_k along a path.

    Accepts a :class:`RealizedPath`, an iterable of steps, or a constant
    :class:`TwoScaleSystem` (with ``n`` giving the horizon).  Returns the list
    ``[V_0, ..., V_n]``.
    """
    if isinstance(path_or_system, TwoScaleSystem):
        if not path_or_system.process.constant:
            raise ValueError("pass a realized path for non-constant coefficient processes")
        if n is None:
            raise ValueError("n is required for a constant system")
        steps = (path_or_system.process.template,) * n
    elif isinstance(path_or_system, RealizedPath):
        steps = path_or_system.steps
    else:
        steps = tuple(path_or_system)
    V = symmetrize(np.asarray(V0, dtype=float))
    out = [V]
    for step in steps:
        V = symmetrize(_dense(step.A @ (step.A @ V).T) + _dense(step.Sigma))
        out.append(V)
    return out


def transform_observation(step: SystemStep, Psi: np.ndarray) -> SystemStep:
    """Apply an invertible observation transformation: H -> Psi H, sigma -> Psi sigma Psi^T.

    The Kalman covariance update is invariant under this change of
    observation coordinates.
    """
    Psi = np.asarray(Psi, dtype=float)
    q = step.q
    if Psi.shape != (q, q):
        raise ValueError(f"Psi must be {q}x{q}, got {Psi.shape}")
    if abs(np.linalg.det(Psi)) < 1e-300:
        raise np.linalg.LinAlgError("Psi must be invertible")
    return SystemStep(step.A, step.B, step.Sigma, Psi @ _dense(step.H),
                      symmetrize(Psi @ step.sigma @ Psi.T))


def scale_noise(system: TwoScaleSystem, epsilon: float) -> TwoScaleSystem:
    """Scale both noise amplitudes by ``epsilon`` (covariances by epsilon^2)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return TwoScaleSystem(
        process=system.process.map_steps(lambda s: s.with_noise_scale(epsilon)),
        large_idx=system.large_idx,
        small_idx=system.small_idx,
        block_decoupled=system.block_decoupled,
    )


def trajectory_to_csv(traj: Trajectory, fileobj) -> None:
    """Write a trajectory as CSV: step, x_*, y_*, regime_id, obs_mask.

    Row 0 carries the initial state; its observation/regime columns are empty
    because the first observation is produced by step 0.
    """
    d, q = traj.path.d, traj.path.q
    header = (["step"] + [f"x_{i}" for i in range(d)] + [f"y_{j}" for j in range(q)]
              + ["regime_id", "obs_mask"])
    fileobj.write(",".join(header) + "\n")
    for k in range(traj.n_steps + 1):
        cells = [str(k)] + [repr(float(v)) for v in traj.states[k]]
        if k == 0:
            cells += [""] * q + ["", ""]
        else:
            cells += [repr(float(v)) for v in traj.observations[k - 1]]
            cells += [str(int(traj.path.regime_ids[k - 1])), repr(float(traj.path.obs_mask[k - 1]))]
        fileobj.write(",".join(cells) + "\n")
