"""Scale-separation setup calculators for the turbulence benchmark.

Given the physical parameters, where should the large/small split go, and
how big must the constant small-scale prior be?  The calculators answer from
closed forms; this script prints the standard table for the Kolmogorov
preset, including the intermittent-observation variants.
"""

from reduced_kalman.turbulence import (drkf_cutoff, intermittent_drkf_cutoff,
                                       intermittent_rkf_cutoff, load_preset,
                                       rkf_cutoff_wavenumber,
                                       rkf_smallscale_prior, spectral_gap)

pre = load_preset("kolmogorov-mg13", K=200)
p = pre.params
print(f"preset: alpha={p.alpha}, beta={p.beta_spec:.3f}, nu={p.nu}, h={p.h}, "
      f"K={p.K}, r={pre.r}, r'={pre.r_prime}, beta*={pre.beta_star}")

eps = 0.2
N1 = drkf_cutoff(p, eps, pre.r)
print(f"\ndecoupled filter, error tolerance {eps}: cutoff N = {N1}")
print(f"  spectral gap at the cutoff: lambda_S = {spectral_gap(p, N1):.4f}")

N2 = rkf_cutoff_wavenumber(p, pre.r, pre.r_prime, pre.beta_star)
N2b = rkf_cutoff_wavenumber(p, pre.r, pre.r_prime, pre.beta_star, log10=True)
print(f"\ngeneral filter: cutoff N = {N2} (base-10 reading of the same "
      f"threshold gives {N2b})")
prior = rkf_smallscale_prior(p, pre.r, pre.r_prime, pre.beta_star)
ks = sorted(prior.delta)
print("  constant prior entries delta_k = r' E_k / (beta* r - 1):")
for k in ks[:3] + ks[-2:]:
    print(f"    k = {k:3d}: delta = {prior.delta[k]:.5f}")

sigma_o, gamma_bar = 0.1, 0.9
N3 = intermittent_drkf_cutoff(p, eps, sigma_o, K=p.K, r=pre.r)
N4, model = intermittent_rkf_cutoff(p, gamma_bar, sigma_o, K=p.K, r=pre.r,
                                    r_prime=pre.r_prime, beta_star=pre.beta_star)
print(f"\nwith the full sensor network (sigma_o = {sigma_o}):")
print(f"  decoupled filter cutoff tightens to N = {N3}")
print(f"  with observations arriving at rate {gamma_bar}: general filter "
      f"cutoff N = {N4}")
print(f"  mixture reduction envelope: observed {model.beta_obs:.3f}, "
      f"unobserved {model.beta_unobs:.3f}, mean {model.mean_beta:.4f} (< 1)")
