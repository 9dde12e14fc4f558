"""Covariance-fidelity diagnostics for a reduced filter.

A reduced filter is trustworthy when its reported covariance does not
underestimate the true error. This script runs the full diagnostic chain on
a small two-scale system:

* the a-priori reference-projection criterion on the stationary reference
  covariance (checkable before ever running the filter),
* the online reduction ratios beta_n,
* the Monte-Carlo domination ratio psi_n of the true error second moment,
* the Mahalanobis error against its dissipation bound.
"""

import numpy as np

from reduced_kalman import (RkfState, check_acceptable_reduction,
                            check_reference_projection,
                            covariance_domination_monitor, mahalanobis_monitor,
                            rkf_reference, run_rkf, simulate,
                            stationary_covariance)
from reduced_kalman.ssmodel import ConstantProcess, SystemStep, TwoScaleSystem

rng = np.random.default_rng(3)
dl = ds = 2
d = dl + ds
r, r_prime, beta_star = 1.4, 1.5, 0.9

A = np.zeros((d, d))
A[:dl, :dl] = np.diag([0.8, 0.6])
A[dl:, dl:] = np.diag([0.35, 0.25])
Sigma = np.diag([0.4, 0.3, 0.08, 0.05])
step = SystemStep(A, np.zeros(d), Sigma, np.eye(d), 0.2 * np.eye(d))
system = TwoScaleSystem(process=ConstantProcess(step), large_idx=np.arange(dl),
                        small_idx=np.arange(dl, d), block_decoupled=True)

# Size the constant small-scale prior from the stationary reference covariance.
D = np.eye(ds)
for _ in range(3):
    sol = stationary_covariance(rkf_reference(system, r, r_prime, D), tol=1e-13)
    D = 3.0 * sol.R[dl:, dl:] / (beta_star * r - 1.0)
sol = stationary_covariance(rkf_reference(system, r, r_prime, D), tol=1e-13)

projection = check_reference_projection(sol.R, D, system.small_idx, r, beta_star)
print(f"a-priori reference projection criterion: ok={projection.ok} "
      f"(margin {projection.margin:.2e})")

state0 = RkfState(np.zeros(d), sol.R[:dl, :dl], system.large_idx,
                  system.small_idx, D, r=r, r_prime=r_prime)

traj = simulate(system, np.zeros(d), 60, seed=11)
run = run_rkf(traj.path, traj.observations, state0, truth=traj.states)
reduction = check_acceptable_reduction(run.betas[1:], 0, beta_star)
print(f"online reduction ratios: ok={reduction.ok}, "
      f"max beta = {np.nanmax(run.betas):.3f}")

psi = covariance_domination_monitor(system, state0, n=40, trials=400, seed=5)
print(f"Monte-Carlo domination ratio psi at n=40: "
      f"{psi.psi[-1]:.3f} +- {psi.se[-1]:.3f} (should settle at or below 1)")

runs = []
for t in range(200):
    x0 = np.linalg.cholesky(state0.effective_cov()) \
        @ np.random.default_rng(t).standard_normal(d)
    tr = simulate(system, x0, 40, seed=100 + t)
    runs.append(run_rkf(tr.path, tr.observations, state0, truth=tr.states))
maha = mahalanobis_monitor(runs, beta_star=beta_star, n0=0)
print(f"mean Mahalanobis error per dimension at n=40: {maha.per_dim[-1]:.3f}; "
      f"dissipation bound {maha.bound[-1] / d:.1f} per dimension; "
      f"violations: {len(maha.violations)}")
