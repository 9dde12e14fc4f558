"""Two-scale reduced random Kalman filters with fidelity and robustness diagnostics.

The package provides:

* ``matcore`` -- symmetric/PSD matrix utilities (Loewner order, Mahalanobis
  norms, dominance ratios, PD-cone distance);
* ``ssmodel`` -- random-coefficient signal-observation systems and
  reproducible trajectory simulation;
* ``filters`` -- the optimal Kalman filter and the two reduced filters
  (decoupled and general), plus a Woodbury-accelerated fast path;
* ``reference`` -- inflated reference systems, Riccati iteration and
  stationary covariance solving;
* ``criteria`` -- reduction-ratio verdicts, Monte-Carlo fidelity monitors,
  error bounds and classical covariance comparison principles;
* ``turbulence`` -- the spectral stochastic-turbulence benchmark family and
  its reduced-filter setup calculators;
* ``bench`` -- wall-clock complexity scaling of the filter steps;
* ``cli`` -- a config-driven experiment runner.
"""

from . import bench, cli, criteria, filters, matcore, reference, ssmodel, turbulence
from ._rng import substream
from .criteria import (BernoulliBetaMixture, ConstantBeta, DrkfBoundInputs,
                       Verdict, adjustment_time, beta_sequence,
                       check_acceptable_reduction, check_reference_projection,
                       covariance_domination_monitor, drkf_error_bound,
                       exp_stability_rate, fj96_compare, gamma_sigma,
                       gramian_bound, mahalanobis_monitor, rho_bound_check,
                       stochastic_beta_bound)
from .filters import (DrkfState, KalmanState, RkfState, drkf_step, kalman_step,
                      kalman_update, rkf_step, rkf_step_fast, run_drkf,
                      run_kalman, run_rkf)
from .matcore import (PsdCertificate, SingularMatrixError, loewner_leq,
                      mahalanobis_sq, min_dominance_ratio, psd_sqrt,
                      riemannian_delta, symmetrize)
from .reference import (InflatedSystem, NonConvergenceError,
                        StationarySolution, drkf_reference, reference_sequence,
                        riccati_step, rkf_reference, stationary_covariance)
from .ssmodel import (BernoulliObservationProcess, ConstantProcess,
                      MarkovSwitchingProcess, SystemStep, Trajectory,
                      TwoScaleSystem, scale_noise, simulate, simulate_on_path,
                      transform_observation, unfiltered_covariance)
from .turbulence import (SensorNetwork, TurbulenceParams, TurbulencePreset,
                         build_turbulence_system, drkf_cutoff,
                         equispaced_network, intermittent_drkf_cutoff,
                         intermittent_rkf_cutoff, load_preset,
                         markov_switched_turbulence, rkf_smallscale_prior)

__version__ = "0.1.0"
