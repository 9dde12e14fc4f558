"""Empirical complexity scaling of the filter step functions.

Measures median per-step wall-clock of the dense-covariance Kalman filter,
the decoupled reduced filter (with and without the small-scale covariance
update, whose cost is avoidable under constant coefficients), and the
Woodbury-accelerated reduced filter, across a grid of (d, q, p).  Log-log
slopes are fitted per swept variable, and the fast reduced path is checked
against the dense reference path on every grid cell.

Dynamics matrices are block-sparse (rotation-decay pairs, as in the spectral
turbulence model) and the observation matrix has a fixed number of nonzeros
per row; the sparsity level is reported alongside the slopes since the
quadratic cost model assumes it.  Measurements run single-threaded so the
fitted exponents reflect arithmetic, not thread scheduling.
"""

from __future__ import annotations

import gc
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from threadpoolctl import threadpool_limits

from ._rng import substream
from .filters import (DrkfState, KalmanState, RkfState, drkf_step, kalman_step,
                      rkf_step, rkf_step_fast)
from .ssmodel import SystemStep

__all__ = ["BenchCell", "BenchReport", "build_bench_step", "run_scaling",
           "report_to_csv", "plot_script"]


@dataclass
class BenchCell:
    """Median per-step times (seconds) for one (d, q, p) grid cell."""

    d: int
    q: int
    p: int
    sweep: str
    kalman: float
    drkf_cached: float
    drkf_uncached: float
    rkf_fast: float
    rkf_dense: float
    fast_agreement: float


@dataclass
class BenchReport:
    """Grid measurements, fitted log-log slopes, and the headline ratio."""

    cells: list
    slopes: dict
    reps: int
    seed: int
    h_nnz_per_row: int
    ratio_kalman_over_rkf_fast: float | None = None
    notes: list = field(default_factory=list)


def build_bench_step(d: int, q: int, p: int, seed: int, h_nnz_per_row: int = 4):
    """Synthetic sparse system for timing: damped rotation pairs, sparse H.

    Returns ``(step, large_idx, small_idx, D_small)`` with A block-diagonal
    (2x2 rotation-decay blocks), diagonal Sigma, and H carrying
    ``h_nnz_per_row`` nonzeros per row.
    """
    if d % 2 == 0:
        raise ValueError("d must be odd (one scalar mode plus rotation pairs)")
    if p >= d or q > d:
        raise ValueError("require p < d and q <= d")
    rng = substream(seed, "bench-system", d, q, p)
    blocks = [np.array([[np.exp(-0.05)]])]
    n_pairs = (d - 1) // 2
    decay = np.exp(-(0.05 + 2.0 * np.arange(1, n_pairs + 1) / n_pairs))
    angles = rng.uniform(0.0, np.pi, n_pairs)
    for a, w in zip(decay, angles):
        c, s = np.cos(w), np.sin(w)
        blocks.append(a * np.array([[c, s], [-s, c]]))
    A = sp.block_diag(blocks, format="csr")
    sig_diag = 0.5 * np.concatenate([[1.0], np.repeat((1.0 + np.arange(1, n_pairs + 1)) ** -1.5, 2)])
    Sigma = sp.diags(sig_diag, format="csr")
    rows = np.repeat(np.arange(q), h_nnz_per_row)
    cols = rng.integers(0, d, q * h_nnz_per_row)
    vals = rng.standard_normal(q * h_nnz_per_row)
    H = sp.csr_matrix((vals, (rows, cols)), shape=(q, d))
    sigma = 0.1 * np.eye(q)
    step = SystemStep(A, np.zeros(d), Sigma, H, sigma)
    large_idx = np.arange(p)
    small_idx = np.arange(p, d)
    D_small = sp.diags(sig_diag[p:] * 2.0, format="csr")
    return step, large_idx, small_idx, D_small


def _median_time(fn, reps: int) -> float:
    """Median wall-clock of ``fn`` over ``reps`` repetitions, warmup excluded.

    Fast calls are batched until one measurement spans ~10 ms so timer
    resolution and scheduler jitter cannot dominate the medians.
    """
    # Warm until the allocator reaches steady state for this size class;
    # large temporaries otherwise pay page-fault costs that vary run to run.
    deadline = time.perf_counter() + 0.15
    fn()
    while time.perf_counter() < deadline:
        fn()
    t0 = time.perf_counter()
    fn()
    once = time.perf_counter() - t0
    batch = max(1, int(np.ceil(1e-2 / max(once, 1e-9))))
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        for _ in range(batch):
            fn()
        times.append((time.perf_counter() - t0) / batch)
    return float(np.median(times))


def _measure_cell(d: int, q: int, p: int, sweep: str, reps: int, seed: int,
                  h_nnz_per_row: int, time_dense_rkf: bool) -> BenchCell:
    gc.collect()  # start each cell from a compacted heap
    step, large_idx, small_idx, D_small = build_bench_step(d, q, p, seed, h_nnz_per_row)
    rng = substream(seed, "bench-data", d, q, p)
    y = rng.standard_normal(q)

    k_state = KalmanState(np.zeros(d), np.eye(d))
    C0 = np.eye(p) * 0.5
    r_state = RkfState(np.zeros(d), C0, large_idx, small_idx, D_small, r=1.2, r_prime=1.21)
    V0 = sp.diags(np.full(d - p, 0.3)).toarray()
    d_state = DrkfState(np.zeros(p), C0, np.zeros(d - p), V0, large_idx, small_idx, r=1.2)

    t_kalman = _median_time(lambda: kalman_step(k_state, step, y), reps)
    t_drkf_u = _median_time(lambda: drkf_step(d_state, step, y), reps)
    t_drkf_c = _median_time(
        lambda: drkf_step(d_state, step, y, update_small_covariance=False), reps)
    t_fast = _median_time(lambda: rkf_step_fast(r_state, step, y), reps)

    out_fast = rkf_step_fast(r_state, step, y)
    if time_dense_rkf:
        t_dense = _median_time(lambda: rkf_step(r_state, step, y), reps)
        out_dense = rkf_step(r_state, step, y)
    else:
        t0 = time.perf_counter()
        out_dense = rkf_step(r_state, step, y)
        t_dense = time.perf_counter() - t0
    mu_rel = (np.linalg.norm(out_fast.mu - out_dense.mu)
              / max(np.linalg.norm(out_dense.mu), 1e-300))
    C_rel = (np.linalg.norm(out_fast.C_large - out_dense.C_large)
             / max(np.linalg.norm(out_dense.C_large), 1e-300))
    return BenchCell(d=d, q=q, p=p, sweep=sweep, kalman=t_kalman,
                     drkf_cached=t_drkf_c, drkf_uncached=t_drkf_u,
                     rkf_fast=t_fast, rkf_dense=t_dense,
                     fast_agreement=float(max(mu_rel, C_rel)))


def _fit_slope(xs, ts) -> float:
    if len(xs) < 2:
        return float("nan")
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ts, float)), 1)[0])


def run_scaling(d_grid=(201, 401, 801, 1601), q_grid=(25, 51, 101, 201),
                fixed_q: int = 41, fixed_p: int = 11, fixed_d: int = 401,
                ratio_cell=(2001, 101, 21), reps: int = 5, seed: int = 0,
                h_nnz_per_row: int = 4) -> BenchReport:
    """Run the scaling grid and fit per-variable log-log slopes.

    ``d_grid`` sweeps the state dimension at fixed (q, p); ``q_grid`` sweeps
    the observation dimension at fixed (d, p).  ``ratio_cell`` is the single
    large cell on which the Kalman / fast-reduced-filter time ratio is
    reported.  Measurements are single-threaded.
    """
    if reps < 5:
        raise ValueError("reps must be at least 5")
    cells = []
    with threadpool_limits(limits=1):
        # One-time process warmup: BLAS setup and allocator arena growth for
        # the largest temporaries, so the first measured cell is not special.
        dim_max = max(list(d_grid) + [ratio_cell[0] if ratio_cell else 0])
        warm = np.ones((dim_max, dim_max))
        for _ in range(3):
            warm = warm @ warm * 1e-3
        del warm
        gc.collect()
        for d in d_grid:
            cells.append(_measure_cell(int(d), fixed_q, fixed_p, "d", reps, seed,
                                       h_nnz_per_row, time_dense_rkf=d <= 1000))
        for q in q_grid:
            cells.append(_measure_cell(fixed_d, int(q), fixed_p, "q", reps, seed,
                                       h_nnz_per_row, time_dense_rkf=True))
        ratio = None
        if ratio_cell is not None:
            rd, rq, rp = ratio_cell
            cell = _measure_cell(int(rd), int(rq), int(rp), "ratio", reps, seed,
                                 h_nnz_per_row, time_dense_rkf=False)
            cells.append(cell)
            ratio = cell.kalman / cell.rkf_fast

    d_cells = [c for c in cells if c.sweep == "d"]
    q_cells = [c for c in cells if c.sweep == "q"]
    slopes = {
        "kalman_vs_d": _fit_slope([c.d for c in d_cells], [c.kalman for c in d_cells]),
        "kalman_vs_q": _fit_slope([c.q for c in q_cells], [c.kalman for c in q_cells]),
        "drkf_uncached_vs_d": _fit_slope([c.d for c in d_cells],
                                         [c.drkf_uncached for c in d_cells]),
        "drkf_cached_vs_d": _fit_slope([c.d for c in d_cells],
                                       [c.drkf_cached for c in d_cells]),
        "rkf_fast_vs_d": _fit_slope([c.d for c in d_cells], [c.rkf_fast for c in d_cells]),
    }
    return BenchReport(cells=cells, slopes=slopes, reps=reps, seed=seed,
                       h_nnz_per_row=h_nnz_per_row,
                       ratio_kalman_over_rkf_fast=ratio)


def report_to_csv(report: BenchReport, fileobj) -> None:
    """One row per grid cell plus slope rows at the end."""
    header = ["sweep", "d", "q", "p", "kalman_s", "drkf_cached_s", "drkf_uncached_s",
              "rkf_fast_s", "rkf_dense_s", "fast_agreement_rel"]
    fileobj.write(",".join(header) + "\n")
    for c in report.cells:
        fileobj.write(",".join([c.sweep, str(c.d), str(c.q), str(c.p),
                                repr(c.kalman), repr(c.drkf_cached),
                                repr(c.drkf_uncached), repr(c.rkf_fast),
                                repr(c.rkf_dense), repr(c.fast_agreement)]) + "\n")
    for name in sorted(report.slopes):
        fileobj.write(f"slope,{name},,,{report.slopes[name]!r},,,,,\n")
    if report.ratio_kalman_over_rkf_fast is not None:
        fileobj.write(f"ratio,kalman_over_rkf_fast,,,{report.ratio_kalman_over_rkf_fast!r},,,,,\n")


def plot_script(csv_name: str) -> str:
    """Gnuplot-compatible script plotting step time against dimension."""
    return "\n".join([
        "set datafile separator ','",
        "set logscale xy",
        "set xlabel 'state dimension d'",
        "set ylabel 'median step time [s]'",
        "set key left top",
        f"plot '< grep ^d, {csv_name}' using 2:5 with linespoints title 'kalman', \\",
        f"     '< grep ^d, {csv_name}' using 2:7 with linespoints title 'drkf (uncached)', \\",
        f"     '< grep ^d, {csv_name}' using 2:8 with linespoints title 'rkf (fast)'",
        "",
    ])
