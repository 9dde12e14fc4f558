import io

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import conditioning_oracle, rand_pd, rand_step
from reduced_kalman.filters import (DrkfState, KalmanState, RkfState,
                                    StructureError, drkf_step,
                                    filter_trace_to_csv, kalman_step,
                                    kalman_update, replay_means, rkf_step,
                                    rkf_step_fast, run_kalman)
from reduced_kalman.matcore import loewner_leq, spectral_norm
from reduced_kalman.ssmodel import ConstantProcess, SystemStep, TwoScaleSystem, simulate


def decoupled_step(rng, dl, ds, q):
    d = dl + ds
    A = np.zeros((d, d))
    A[:dl, :dl] = 0.6 * rand_pd(rng, dl)
    A[dl:, dl:] = 0.5 * rand_pd(rng, ds)
    Sig = np.zeros((d, d))
    Sig[:dl, :dl] = rand_pd(rng, dl, 0.5)
    Sig[dl:, dl:] = rand_pd(rng, ds, 0.3)
    return SystemStep(A, rng.standard_normal(d), Sig,
                      rng.standard_normal((q, d)), rand_pd(rng, q, 0.4))


class TestKalmanUpdate:
    def test_scalar_half(self):
        out = kalman_update(np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]]))
        assert out[0, 0] == pytest.approx(0.5)

    def test_no_observation(self, rng):
        C = rand_pd(rng, 3)
        out = kalman_update(C, np.zeros((2, 3)), np.eye(2))
        assert np.allclose(out, C)

    def test_joseph_identity(self, rng):
        for _ in range(100):
            d, q = int(rng.integers(1, 6)), int(rng.integers(1, 5))
            C = rand_pd(rng, d)
            H = rng.standard_normal((q, d))
            sig = rand_pd(rng, q, 0.5)
            out = kalman_update(C, H, sig)
            S = sig + H @ C @ H.T
            K = C @ H.T @ np.linalg.inv(S)
            IKH = np.eye(d) - K @ H
            joseph = IKH @ C @ IKH.T + K @ sig @ K.T
            assert spectral_norm(out - joseph) <= 1e-10 * max(1.0, spectral_norm(C))

    def test_matches_conditioning_oracle(self, rng):
        for _ in range(50):
            d, q = 3, 2
            C = rand_pd(rng, d)
            H = rng.standard_normal((q, d))
            sig = rand_pd(rng, q, 0.5)
            # Conditioning (X, HX + noise) directly.
            S = sig + H @ C @ H.T
            expected = C - C @ H.T @ np.linalg.solve(S, H @ C)
            got = kalman_update(C, H, sig)
            assert np.allclose(got, expected, rtol=1e-10, atol=1e-12)

    def test_gain_dominates_noise_term(self, rng):
        # K(C_hat) >= K sigma K^T: the update keeps at least the noise floor.
        for _ in range(50):
            d, q = int(rng.integers(1, 6)), int(rng.integers(1, 4))
            C = rand_pd(rng, d)
            H = rng.standard_normal((q, d))
            sig = rand_pd(rng, q, 0.5)
            S = sig + H @ C @ H.T
            K = C @ H.T @ np.linalg.inv(S)
            assert loewner_leq(K @ sig @ K.T, kalman_update(C, H, sig), 1e-9)


class TestKalmanStep:
    def test_static_identity_observation(self):
        step = SystemStep(np.eye(2), np.zeros(2), np.zeros((2, 2)), np.eye(2), np.eye(2))
        y = np.array([1.0, -2.0])
        out = kalman_step(KalmanState(np.zeros(2), np.eye(2)), step, y)
        assert np.allclose(out.m, y / 2)
        assert np.allclose(out.R, np.eye(2) / 2)

    def test_random_walk_gain_two_thirds(self):
        step = SystemStep(np.eye(2), np.zeros(2), np.eye(2), np.eye(2), np.eye(2))
        y = np.array([3.0, 0.9])
        out = kalman_step(KalmanState(np.zeros(2), np.eye(2)), step, y)
        assert np.allclose(out.m, 2.0 * y / 3.0)
        assert np.allclose(out.R, 2.0 / 3.0 * np.eye(2))

    def test_matches_conditioning_oracle(self, rng):
        for _ in range(100):
            d, q = int(rng.integers(1, 7)), int(rng.integers(1, 5))
            step = rand_step(rng, d, q)
            m, R = rng.standard_normal(d), rand_pd(rng, d)
            y = rng.standard_normal(q)
            out = kalman_step(KalmanState(m, R), step, y)
            m_ref, R_ref = conditioning_oracle(m, R, step, y)
            assert np.allclose(out.m, m_ref, rtol=1e-10, atol=1e-12)
            assert np.allclose(out.R, R_ref, rtol=1e-10, atol=1e-12)

    def test_observation_length_checked(self, rng):
        step = rand_step(rng, 3, 2)
        with pytest.raises(ValueError):
            kalman_step(KalmanState(np.zeros(3), np.eye(3)), step, np.zeros(3))


class TestDrkfStep:
    def test_small_scale_mean_ignores_observation(self, rng):
        step = decoupled_step(rng, 2, 3, 4)
        st = DrkfState(np.zeros(2), np.eye(2), rng.standard_normal(3), np.eye(3),
                       np.arange(2), np.arange(2, 5), r=1.2)
        out1 = drkf_step(st, step, rng.standard_normal(4))
        out2 = drkf_step(st, step, rng.standard_normal(4))
        A_S = np.asarray(step.A)[2:, 2:]
        expected = A_S @ st.mu_S + step.B[2:]
        assert np.allclose(out1.mu_S, expected)
        assert np.allclose(out2.mu_S, expected)

    def test_unobserved_small_scale_reduces_to_large_kalman(self, rng):
        # With H_S = 0 the large-scale block is one Kalman step on the large
        # subsystem; the posterior covariance just carries the inflation.
        dl, ds, q = 2, 2, 2
        step = decoupled_step(rng, dl, ds, q)
        H = np.asarray(step.H).copy()
        H[:, dl:] = 0.0
        step = SystemStep(step.A, step.B, step.Sigma, H, step.sigma)
        r = 1.3
        C0 = rand_pd(rng, dl)
        st = DrkfState(np.zeros(dl), C0, np.zeros(ds), 0.2 * np.eye(ds),
                       np.arange(dl), np.arange(dl, dl + ds), r=r)
        y = rng.standard_normal(q)
        out = drkf_step(st, step, y)
        sub = SystemStep(np.asarray(step.A)[:dl, :dl], step.B[:dl],
                         np.asarray(step.Sigma)[:dl, :dl], H[:, :dl], step.sigma)
        ref = kalman_step(KalmanState(np.zeros(dl), C0), sub, y)
        assert np.allclose(out.mu_L, ref.m, rtol=1e-12)
        assert np.allclose(out.C_L, r * ref.R, rtol=1e-12)

    def test_straight_line_oracle(self):
        # p = 1 large / 1 small scalar blocks, explicit numbers, five steps,
        # against an independently written recursion.
        aL, aS, sL, sS = 0.9, 0.3, 0.4, 0.05
        bL, bS = 0.1, -0.2
        hL, hS, so = 1.0, 0.7, 0.25
        r = 1.2
        A = np.diag([aL, aS])
        Sig = np.diag([sL, sS])
        H = np.array([[hL, hS]])
        step = SystemStep(A, [bL, bS], Sig, H, [[so]])
        st = DrkfState([0.0], [[1.0]], [0.5], [[0.3]], [0], [1], r=r)
        ys = [0.8, -0.3, 1.1, 0.0, 2.0]

        mu_L, C_L, mu_S, V_S = 0.0, 1.0, 0.5, 0.3
        for y in ys:
            st = drkf_step(st, step, np.array([y]))
            # independent straight-line recursion
            mu_S = aS * mu_S + bS
            V_S = aS * V_S * aS + sS
            sigma_L = so + hS * V_S * hS
            y_L = y - hS * mu_S
            mf = aL * mu_L + bL
            Cf = aL * C_L * aL + sL
            gain = Cf * hL / (sigma_L + hL * Cf * hL)
            mu_L = mf + gain * (y_L - hL * mf)
            post = Cf - Cf * hL / (sigma_L + hL * Cf * hL) * hL * Cf
            C_L = r * post
            assert st.mu_L[0] == pytest.approx(mu_L, rel=1e-12)
            assert st.C_L[0, 0] == pytest.approx(C_L, rel=1e-12)
            assert st.mu_S[0] == pytest.approx(mu_S, rel=1e-12)
            assert st.V_S[0, 0] == pytest.approx(V_S, rel=1e-12)

    def test_rejects_coupled_step(self, rng):
        step = rand_step(rng, 4, 2)  # dense A couples the scales
        st = DrkfState(np.zeros(2), np.eye(2), np.zeros(2), np.eye(2),
                       np.arange(2), np.arange(2, 4), r=1.1)
        with pytest.raises(StructureError):
            drkf_step(st, step, np.zeros(2))

    def test_inflation_must_exceed_one(self):
        with pytest.raises(ValueError):
            DrkfState([0.0], [[1.0]], [0.0], [[1.0]], [0], [1], r=1.0)


class TestRkfStep:
    def test_full_scale_matches_kalman(self, rng):
        # p = d and D_S empty: one step equals the Kalman step up to the
        # final inflation of the covariance.
        d, q = 3, 2
        step = rand_step(rng, d, q)
        r = 1.25
        C0 = rand_pd(rng, d)
        st = RkfState(np.zeros(d), C0, np.arange(d), np.arange(d, d),
                      np.zeros((0, 0)), r=r, r_prime=1.3)
        y = rng.standard_normal(q)
        out = rkf_step(st, step, y)
        ref = kalman_step(KalmanState(np.zeros(d), C0), step, y)
        assert np.allclose(out.mu, ref.m, rtol=1e-12)
        assert np.allclose(out.C_large, r * ref.R, rtol=1e-12)

    def test_projection_zeroes_small_block_exactly(self, rng):
        d, q, p = 5, 3, 2
        step = rand_step(rng, d, q)
        st = RkfState(np.zeros(d), rand_pd(rng, p), np.arange(p), np.arange(p, d),
                      0.3 * np.eye(d - p), r=1.2, r_prime=1.21)
        out = rkf_step(st, step, rng.standard_normal(q))
        C = out.full_C()
        assert np.all(C[p:, :] == 0.0)
        assert np.all(C[:, p:] == 0.0)

    def test_straight_line_oracle(self):
        # One scalar large scale, one scalar small scale, explicit numbers.
        a1, a2, s1, s2 = 0.95, 0.4, 0.3, 0.02
        h1, h2, so = 1.0, 0.6, 0.1
        dS, r = 0.08, 1.2
        A = np.diag([a1, a2])
        Sig = np.diag([s1, s2])
        H = np.array([[h1, h2]])
        step = SystemStep(A, np.zeros(2), Sig, H, [[so]])
        st = RkfState(np.zeros(2), [[0.5]], [0], [1], [[dS]], r=r, r_prime=1.21)
        mu = np.zeros(2)
        C = 0.5
        ys = [1.0, -0.5, 0.3]
        for y in ys:
            st = rkf_step(st, step, np.array([y]))
            # independent straight-line recursion on the 2x2 system
            Cp = np.diag([C, dS])
            Cf = A @ Cp @ A.T + Sig
            S = so + (H @ Cf @ H.T)[0, 0]
            K = (Cf @ H.T / S).ravel()
            mf = A @ mu
            mu = mf + K * (y - (H @ mf)[0])
            post = Cf - np.outer(K, H @ Cf)
            C = r * post[0, 0]
            assert np.allclose(st.mu, mu, rtol=1e-12)
            assert st.C_large[0, 0] == pytest.approx(C, rel=1e-12)

    def test_reports_unprojected_update(self, rng):
        d, q, p = 4, 2, 2
        step = rand_step(rng, d, q)
        st = RkfState(np.zeros(d), rand_pd(rng, p), np.arange(p), np.arange(p, d),
                      0.2 * np.eye(d - p), r=1.2, r_prime=1.21)
        out, det = rkf_step(st, step, rng.standard_normal(q), details=True)
        A = np.asarray(step.A)
        forecast = A @ st.effective_cov() @ A.T + np.asarray(step.Sigma)
        expected = kalman_update(forecast, step.H, step.sigma)
        assert np.allclose(det.kalman_updated, expected, rtol=1e-9, atol=1e-11)
        LL = np.ix_(np.arange(p), np.arange(p))
        assert np.allclose(out.C_large, 1.2 * det.kalman_updated[LL], rtol=1e-12)


class TestRkfFastPath:
    def _sparse_system(self, rng, d, q, p):
        blocks = [np.array([[0.9]])]
        for k in range((d - 1) // 2):
            th = rng.uniform(0, np.pi)
            decay = rng.uniform(0.3, 0.95)
            c, s = np.cos(th), np.sin(th)
            blocks.append(decay * np.array([[c, s], [-s, c]]))
        A = sp.block_diag(blocks, format="csr")
        Sig = sp.diags(rng.uniform(0.05, 0.5, d), format="csr")
        rows = np.repeat(np.arange(q), 3)
        cols = rng.integers(0, d, 3 * q)
        vals = rng.standard_normal(3 * q)
        H = sp.csr_matrix((vals, (rows, cols)), shape=(q, d))
        step = SystemStep(A, rng.standard_normal(d), Sig, H, 0.2 * np.eye(q))
        st = RkfState(rng.standard_normal(d), rand_pd(rng, p),
                      np.arange(p), np.arange(p, d),
                      np.diag(rng.uniform(0.05, 0.4, d - p)), r=1.2, r_prime=1.21)
        return step, st

    def test_agrees_with_dense_path(self, rng):
        for trial in range(8):
            d = int(rng.integers(7, 41)) | 1  # odd
            q = int(rng.integers(2, 12))
            p = int(rng.integers(1, min(6, d - 1)))
            step, st = self._sparse_system(rng, d, q, p)
            y = rng.standard_normal(q)
            fast = rkf_step_fast(st, step, y)
            dense = rkf_step(RkfState(st.mu, st.C_large, st.large_idx, st.small_idx,
                                      st.D_small, st.r, st.r_prime),
                             step.dense(), y)
            assert np.allclose(fast.mu, dense.mu, rtol=1e-8, atol=1e-10)
            assert np.allclose(fast.C_large, dense.C_large, rtol=1e-8, atol=1e-10)

    def test_agreement_over_a_run(self, rng):
        step, st = self._sparse_system(rng, 21, 6, 4)
        st_fast = st
        st_dense = st
        dense_step = step.dense()
        for k in range(10):
            y = rng.standard_normal(6)
            st_fast = rkf_step_fast(st_fast, step, y)
            st_dense = rkf_step(st_dense, dense_step, y)
        assert np.allclose(st_fast.mu, st_dense.mu, rtol=1e-8)
        assert np.allclose(st_fast.C_large, st_dense.C_large, rtol=1e-8)

    def test_details_match_dense_path(self, rng):
        step, st = self._sparse_system(rng, 15, 5, 3)
        y = rng.standard_normal(5)
        _, det_fast = rkf_step_fast(st, step, y, details=True)
        _, det_dense = rkf_step(st, step.dense(), y, details=True)
        assert np.allclose(det_fast.kalman_updated, det_dense.kalman_updated,
                           rtol=1e-8, atol=1e-11)
        assert np.allclose(det_fast.gain, det_dense.gain, rtol=1e-8, atol=1e-11)


class TestRuns:
    def _system(self, rng, d=3, q=2):
        step = rand_step(rng, d, q)
        return TwoScaleSystem(process=ConstantProcess(step), large_idx=np.arange(d),
                              small_idx=np.arange(d, d), block_decoupled=False)

    def test_run_kalman_records_errors_and_maha(self, rng):
        sys_ = self._system(rng)
        traj = simulate(sys_, np.zeros(3), 30, seed=1)
        run = run_kalman(traj.path, traj.observations,
                         KalmanState(np.zeros(3), np.eye(3)), truth=traj.states)
        assert run.maha.shape == (31,)
        assert np.all(run.maha >= 0)
        assert run.mse[5] == pytest.approx(float(run.errors[5] @ run.errors[5]))

    def test_stability_rate_no_observation(self, rng):
        # H = 0 and A = a I make every factor a I: the rate is log a exactly.
        a, d = 0.85, 2
        step = SystemStep(a * np.eye(d), np.zeros(d), 0.1 * np.eye(d),
                          np.zeros((1, d)), np.eye(1))
        sys_ = TwoScaleSystem(process=ConstantProcess(step), large_idx=np.arange(d),
                              small_idx=np.arange(d, d), block_decoupled=False)
        traj = simulate(sys_, np.zeros(d), 60, seed=3)
        run = run_kalman(traj.path, traj.observations,
                         KalmanState(np.zeros(d), np.eye(d)))
        assert run.stability_rate() == pytest.approx(np.log(a), rel=1e-9)

    def test_replay_means_matches_run(self, rng):
        sys_ = self._system(rng)
        traj = simulate(sys_, np.zeros(3), 20, seed=5)
        run = run_kalman(traj.path, traj.observations,
                         KalmanState(np.zeros(3), np.eye(3)), store_covariances=True)
        mus = replay_means(traj.path, run.gains, traj.observations, np.zeros(3))
        assert np.allclose(mus, run.means, atol=1e-12)

    def test_trace_csv(self, rng):
        sys_ = self._system(rng)
        traj = simulate(sys_, np.zeros(3), 5, seed=7)
        run = run_kalman(traj.path, traj.observations,
                         KalmanState(np.zeros(3), np.eye(3)), truth=traj.states)
        buf = io.StringIO()
        filter_trace_to_csv(run, buf)
        lines = buf.getvalue().strip().split("\n")
        assert len(lines) == 7
        assert lines[0].startswith("step,mean_0")
