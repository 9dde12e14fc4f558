"""Config-driven experiment runner.

Subcommands: ``simulate``, ``filter``, ``criteria``, ``turbulence``,
``bench``.  Experiments are described by flat ``key = value`` files with
dotted sections; values are parsed as JSON where possible (numbers, lists,
booleans) and as strings otherwise.  Unknown keys are rejected by name.

All randomness flows from a single seed through named substreams, so reruns
with identical config and seed produce byte-identical CSV bodies (timing
data from ``bench`` excepted); timestamps live only in the ``meta.json``
sidecar.

Exit codes: 0 success, 1 error, 2 criterion-verdict failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import criteria, filters, ssmodel, turbulence

_COMMON_KEYS = {
    "run.horizon", "run.trials", "run.seed", "run.out",
}
_SYSTEM_KEYS = {
    "system.preset", "system.K", "system.sigma_o", "system.gamma0", "system.nu",
    "system.alpha", "system.E0", "system.beta", "system.h", "system.epsilon",
    "system.noise_scale", "system.gamma_bar", "system.A", "system.B",
    "system.Sigma", "system.H", "system.sigma", "system.large_indices",
}
_FILTER_KEYS = {
    "filter.kind", "filter.r", "filter.r_prime", "filter.beta_star", "filter.cutoff",
}
_CRITERIA_KEYS = {"criteria.n0"}
_TURB_KEYS = {
    "turbulence.epsilon", "turbulence.gamma_bar", "turbulence.sigma_o",
    "turbulence.K", "turbulence.verify",
}
_BENCH_KEYS = {
    "bench.d_grid", "bench.q_grid", "bench.fixed_q", "bench.fixed_p", "bench.fixed_d",
    "bench.ratio_cell", "bench.reps", "bench.nnz_per_row",
}

_ALLOWED = {
    "simulate": _COMMON_KEYS | _SYSTEM_KEYS | _FILTER_KEYS,
    "filter": _COMMON_KEYS | _SYSTEM_KEYS | _FILTER_KEYS | _CRITERIA_KEYS,
    "criteria": _COMMON_KEYS | _SYSTEM_KEYS | _FILTER_KEYS | _CRITERIA_KEYS,
    "turbulence": _COMMON_KEYS | _SYSTEM_KEYS | _FILTER_KEYS | _TURB_KEYS,
    "bench": _COMMON_KEYS | _BENCH_KEYS,
}


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment; values are JSON-ish."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        try:
            cfg[key] = json.loads(value)
        except json.JSONDecodeError:
            cfg[key] = value
    return cfg


def validate_config(cfg: dict, command: str) -> None:
    allowed = _ALLOWED[command]
    for key in cfg:
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r} for command {command!r}")


def _get(cfg, key, default=None):
    return cfg.get(key, default)


def _build_system(cfg):
    """Assemble the experiment system; returns (system, preset_or_None, extras)."""
    extras = {}
    if "system.preset" in cfg:
        name = cfg["system.preset"]
        overrides = {}
        for field, key in (("gamma0", "system.gamma0"), ("nu", "system.nu"),
                           ("alpha", "system.alpha"), ("E0", "system.E0"),
                           ("beta_spec", "system.beta"), ("h", "system.h"),
                           ("r", "filter.r"), ("r_prime", "filter.r_prime"),
                           ("beta_star", "filter.beta_star")):
            if key in cfg:
                overrides[field] = cfg[key]
        preset = turbulence.load_preset(name, K=int(_get(cfg, "system.K", 200)), **overrides)
        sigma_o = float(_get(cfg, "system.sigma_o", 0.1))
        kind = _get(cfg, "filter.kind", "kalman")
        cutoff_cfg = _get(cfg, "filter.cutoff", "auto")
        cutoff = None
        prior = None
        if kind == "rkf":
            if cutoff_cfg == "auto":
                prior = turbulence.rkf_smallscale_prior(
                    preset.params, preset.r, preset.r_prime, preset.beta_star,
                    sigma_o=sigma_o)
                cutoff = prior.cutoff
            else:
                cutoff = int(cutoff_cfg)
                delta = {k: preset.r_prime * preset.params.energy(k) / (preset.beta_star * preset.r - 1.0)
                         for k in range(cutoff, preset.params.K + 1)}
                prior = turbulence.SmallScalePrior(
                    cutoff=cutoff, delta=delta,
                    D_small=turbulence.smallscale_prior_matrix(preset.params, cutoff, delta))
        elif kind == "drkf":
            if cutoff_cfg == "auto":
                cutoff = turbulence.drkf_cutoff(
                    preset.params, float(_get(cfg, "system.epsilon", 0.2)), preset.r)
            else:
                cutoff = int(cutoff_cfg)
        gamma_bar = _get(cfg, "system.gamma_bar")
        system = turbulence.build_turbulence_system(
            preset.params, sigma_o=sigma_o, large_cutoff=cutoff,
            gamma_bar=None if gamma_bar is None else float(gamma_bar))
        if "system.noise_scale" in cfg:
            system = ssmodel.scale_noise(system, float(cfg["system.noise_scale"]))
        extras["prior"] = prior
        return system, preset, extras
    required = ("system.A", "system.H", "system.Sigma", "system.sigma")
    missing = [k for k in required if k not in cfg]
    if missing:
        raise ConfigError(f"explicit system needs keys {missing}")
    A = np.asarray(cfg["system.A"], dtype=float)
    d = A.shape[0]
    B = np.asarray(_get(cfg, "system.B", np.zeros(d)), dtype=float)
    step = ssmodel.SystemStep(A, B, np.asarray(cfg["system.Sigma"], dtype=float),
                              np.asarray(cfg["system.H"], dtype=float),
                              np.asarray(cfg["system.sigma"], dtype=float))
    large = np.asarray(_get(cfg, "system.large_indices", list(range(d))), dtype=int)
    small = np.array(sorted(set(range(d)) - set(large.tolist())), dtype=int)
    process = ssmodel.ConstantProcess(step)
    gamma_bar = _get(cfg, "system.gamma_bar")
    if gamma_bar is not None:
        process = ssmodel.BernoulliObservationProcess(step, float(gamma_bar))
    try:
        system = ssmodel.TwoScaleSystem(process=process, large_idx=large,
                                        small_idx=small, block_decoupled=True)
    except ValueError:
        system = ssmodel.TwoScaleSystem(process=process, large_idx=large,
                                        small_idx=small, block_decoupled=False)
    return system, None, {"prior": None}


def _write_meta(out: Path, command: str, cfg: dict, seed: int, extra=None) -> None:
    meta = {"command": command, "config": cfg, "seed": seed,
            "written_at": time.strftime("%Y-%m-%dT%H:%M:%S")}
    if extra:
        meta.update(extra)
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2, default=str)
        fh.write("\n")


def _initial_states(system, preset, extras, kind, cfg):
    d = system.d
    eq = None
    if preset is not None:
        eq = turbulence.equilibrium_variances(preset.params)
    r = float(_get(cfg, "filter.r", preset.r if preset else 1.2))
    r_prime = float(_get(cfg, "filter.r_prime", preset.r_prime if preset else 1.21))
    if kind == "kalman":
        R0 = np.diag(eq) if eq is not None else np.eye(d)
        return filters.KalmanState(np.zeros(d), R0)
    if kind == "drkf":
        li, si = system.large_idx, system.small_idx
        if eq is not None:
            C0 = np.diag(eq[li]) * r
            V0 = np.diag(eq[si])
        else:
            C0 = np.eye(len(li))
            V0 = np.eye(len(si))
        return filters.DrkfState(np.zeros(len(li)), C0, np.zeros(len(si)), V0, li, si, r)
    if kind == "rkf":
        prior = extras.get("prior")
        if prior is None:
            raise ConfigError("rkf needs a preset system (for the small-scale prior)")
        li, si = system.large_idx, system.small_idx
        if prior.stationary is not None:
            C0 = prior.stationary.R[np.ix_(li, li)]
        else:
            C0 = np.diag(eq[li]) if eq is not None else np.eye(len(li))
        return filters.RkfState(np.zeros(d), C0, li, si, prior.D_small, r, r_prime)
    raise ConfigError(f"unknown filter kind {kind!r}")


def cmd_simulate(cfg: dict, out: Path, seed: int, trials: int) -> int:
    system, preset, extras = _build_system(cfg)
    n = int(_get(cfg, "run.horizon", 100))
    traj = ssmodel.simulate(system, np.zeros(system.d), n, seed)
    with open(out / "trajectory.csv", "w") as fh:
        ssmodel.trajectory_to_csv(traj, fh)
    _write_meta(out, "simulate", cfg, seed)
    return 0


def cmd_filter(cfg: dict, out: Path, seed: int, trials: int) -> int:
    system, preset, extras = _build_system(cfg)
    kind = _get(cfg, "filter.kind", "kalman")
    n = int(_get(cfg, "run.horizon", 100))
    state0 = _initial_states(system, preset, extras, kind, cfg)
    traj = ssmodel.simulate(system, np.zeros(system.d), n, seed)
    runner = {"kalman": filters.run_kalman, "drkf": filters.run_drkf,
              "rkf": filters.run_rkf}[kind]
    run = runner(traj.path, traj.observations, state0, truth=traj.states)
    with open(out / "trajectory.csv", "w") as fh:
        ssmodel.trajectory_to_csv(traj, fh)
    with open(out / "filter_trace.csv", "w") as fh:
        filters.filter_trace_to_csv(run, fh)

    dim = run.errors.shape[1]
    nan = np.full(n + 1, np.nan)
    psi = psi_se = nan
    if trials >= 100 and kind == "rkf":
        psi_trace = criteria.covariance_domination_monitor(system, state0, n, trials, seed)
        psi, psi_se = psi_trace.psi, psi_trace.se
    nu = nan.copy()
    loewner = np.ones(n + 1, dtype=bool)
    verdicts = {}
    prior = extras.get("prior")
    if kind == "rkf":
        beta_star = float(_get(cfg, "filter.beta_star", preset.beta_star if preset else 0.9))
        n0 = int(_get(cfg, "criteria.n0", 1))
        verdicts["acceptable_reduction"] = criteria.check_acceptable_reduction(
            run.betas[1:], max(n0 - 1, 0), beta_star)
        if prior is not None and prior.stationary is not None:
            R_tilde = prior.stationary.R
            bound = state0.r * R_tilde + state0.full_D()
            for k, st in enumerate(run.states):
                Cfull = st.full_C()
                nu[k] = criteria.min_dominance_ratio(Cfull, R_tilde)
                loewner[k] = criteria.loewner_leq(st.effective_cov(), bound, 1e-8)
            verdicts["reference_projection"] = prior.projection_check
    trace = criteria.DiagnosticsTrace(
        beta=run.betas if run.betas is not None else nan,
        psi=psi, psi_se=psi_se, nu=nu,
        maha_per_dim=run.maha / dim, mse=run.mse, loewner_ok=loewner)
    with open(out / "diagnostics.csv", "w") as fh:
        criteria.diagnostics_to_csv(trace, fh)
    if verdicts:
        with open(out / "verdicts.json", "w") as fh:
            criteria.verdicts_to_json(verdicts, fh)
    _write_meta(out, "filter", cfg, seed)
    return 2 if any(not v.ok for v in verdicts.values() if v is not None) else 0


def cmd_criteria(cfg: dict, out: Path, seed: int, trials: int) -> int:
    cfg = dict(cfg)
    cfg.setdefault("filter.kind", "rkf")
    system, preset, extras = _build_system(cfg)
    if preset is None:
        raise ConfigError("criteria command needs a preset system")
    prior = extras.get("prior")
    verdicts = {}
    report = {}
    if prior is not None and prior.projection_check is not None:
        verdicts["reference_projection"] = prior.projection_check
        report["stationary_iterations"] = prior.stationary.iterations
        report["stationary_residual"] = prior.stationary.residual
        report["stationary_unique"] = prior.stationary.unique
        report["cutoff"] = prior.cutoff
    state0 = _initial_states(system, preset, extras, "rkf", cfg)
    n = int(_get(cfg, "run.horizon", 60))
    traj = ssmodel.simulate(system, np.zeros(system.d), n, seed)
    run = filters.run_rkf(traj.path, traj.observations, state0, truth=traj.states)
    n0 = int(_get(cfg, "criteria.n0", 1))
    verdicts["acceptable_reduction"] = criteria.check_acceptable_reduction(
        run.betas[1:], max(n0 - 1, 0), preset.beta_star)
    if prior is not None and prior.stationary is not None:
        report["adjustment_time"] = criteria.adjustment_time(
            prior.stationary.R, run.states[0].full_C(), preset.r, preset.r_prime)
    with open(out / "criteria_report.json", "w") as fh:
        payload = {k: (bool(v) if isinstance(v, np.bool_) else v) for k, v in report.items()}
        json.dump(payload, fh, sort_keys=True, indent=2, default=float)
        fh.write("\n")
    with open(out / "verdicts.json", "w") as fh:
        criteria.verdicts_to_json(verdicts, fh)
    _write_meta(out, "criteria", cfg, seed)
    return 2 if any(not v.ok for v in verdicts.values()) else 0


def cmd_turbulence(cfg: dict, out: Path, seed: int, trials: int) -> int:
    name = _get(cfg, "system.preset", "kolmogorov-mg13")
    K = int(_get(cfg, "turbulence.K", _get(cfg, "system.K", 200)))
    overrides = {}
    for field, key in (("gamma0", "system.gamma0"), ("nu", "system.nu"),
                       ("alpha", "system.alpha"), ("E0", "system.E0"),
                       ("beta_spec", "system.beta"), ("h", "system.h")):
        if key in cfg:
            overrides[field] = cfg[key]
    preset = turbulence.load_preset(name, K=K, **overrides)
    params = preset.params
    epsilon = float(_get(cfg, "turbulence.epsilon", 0.2))
    sigma_o = float(_get(cfg, "turbulence.sigma_o", 0.1))

    lines = []
    N_drkf = turbulence.drkf_cutoff(params, epsilon, preset.r)
    note = "" if N_drkf <= K else f" (exceeds the truncation K={K})"
    lines.append(f"drkf_cutoff (epsilon={epsilon}): N = {N_drkf}{note}")
    verify = bool(_get(cfg, "turbulence.verify", K <= 120))
    prior = turbulence.rkf_smallscale_prior(params, preset.r, preset.r_prime,
                                            preset.beta_star,
                                            sigma_o=sigma_o if verify else None)
    lines.append(f"rkf_cutoff: N = {prior.cutoff}")
    if prior.projection_check is not None:
        lines.append(f"reference projection criterion: ok = {prior.projection_check.ok}")
        with open(out / "verdicts.json", "w") as fh:
            criteria.verdicts_to_json({"reference_projection": prior.projection_check}, fh)
    lam_amp = turbulence.spectral_gap(params, N_drkf, "amplitude")
    lines.append(f"lambda_S (amplitude, N={N_drkf}) = {lam_amp!r}")
    system = turbulence.build_turbulence_system(params, sigma_o=sigma_o,
                                                large_cutoff=min(N_drkf, K + 1))
    gs = criteria.gamma_sigma(system, horizon=5)
    lines.append(f"gamma_sigma (split at {min(N_drkf, K + 1)}) = {gs!r}")
    gamma_bar = _get(cfg, "turbulence.gamma_bar")
    if gamma_bar is not None:
        gb = float(gamma_bar)
        N_int_d = turbulence.intermittent_drkf_cutoff(params, epsilon, sigma_o,
                                                      K=K, r=preset.r)
        N_int_r, model = turbulence.intermittent_rkf_cutoff(
            params, gb, sigma_o, K=K, r=preset.r, r_prime=preset.r_prime,
            beta_star=preset.beta_star)
        lines.append(f"intermittent drkf_cutoff (sigma_o={sigma_o}, K={K}): N = {N_int_d}")
        lines.append(f"intermittent rkf_cutoff (gamma_bar={gb}): N = {N_int_r}, "
                     f"mean_beta = {model.mean_beta!r}")
    with open(out / "cutoffs.txt", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(out / "smallscale_prior.csv", "w") as fh:
        fh.write("wavenumber,delta\n")
        for k in sorted(prior.delta):
            fh.write(f"{k},{prior.delta[k]!r}\n")
    for line in lines:
        print(line)
    _write_meta(out, "turbulence", cfg, seed)
    return 0


def cmd_bench(cfg: dict, out: Path, seed: int, trials: int, plot: bool = False) -> int:
    kwargs = {}
    if "bench.d_grid" in cfg:
        kwargs["d_grid"] = tuple(int(v) for v in cfg["bench.d_grid"])
    if "bench.q_grid" in cfg:
        kwargs["q_grid"] = tuple(int(v) for v in cfg["bench.q_grid"])
    for name, key in (("fixed_q", "bench.fixed_q"), ("fixed_p", "bench.fixed_p"),
                      ("fixed_d", "bench.fixed_d"), ("reps", "bench.reps"),
                      ("h_nnz_per_row", "bench.nnz_per_row")):
        if key in cfg:
            kwargs[name] = int(cfg[key])
    if "bench.ratio_cell" in cfg:
        cell = cfg["bench.ratio_cell"]
        kwargs["ratio_cell"] = None if cell in (None, "none") else tuple(int(v) for v in cell)
    report = bench_mod.run_scaling(seed=seed, **kwargs)
    with open(out / "bench.csv", "w") as fh:
        bench_mod.report_to_csv(report, fh)
    if plot:
        with open(out / "bench.gp", "w") as fh:
            fh.write(bench_mod.plot_script("bench.csv"))
    _write_meta(out, "bench", cfg, seed, extra={"slopes": report.slopes})
    print(json.dumps(report.slopes, sort_keys=True, indent=2))
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "criteria": cmd_criteria,
    "turbulence": cmd_turbulence,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="reduced-kalman",
        description="Reduced Kalman filter experiments: simulate, filter, criteria, "
                    "turbulence, bench.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", type=Path, default=None, help="key = value config file")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--trials", type=int, default=None, help="override run.trials")
    parser.add_argument("--plot", action="store_true", help="also emit a plot script (bench)")
    args = parser.parse_args(argv)

    try:
        cfg = {}
        if args.config is not None:
            cfg = parse_config(Path(args.config).read_text())
        validate_config(cfg, args.command)
        seed = args.seed if args.seed is not None else int(cfg.get("run.seed", 0))
        trials = args.trials if args.trials is not None else int(cfg.get("run.trials", 1))
        out = args.out if args.out is not None else Path(cfg.get("run.out", "rk-output"))
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "bench":
            return cmd_bench(cfg, out, seed, trials, plot=args.plot)
        return _COMMANDS[args.command](cfg, out, seed, trials)
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
