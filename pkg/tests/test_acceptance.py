"""Acceptance suite: one printed PASS/FAIL line per criterion."""
import dataclasses
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from rhyde import detect, hsi, metrics, noise, pipeline, solver
from rhyde.solver import RhydeParams
from rhyde.subspace import SubspaceBasis, estimate_basis, project, reconstruct

from conftest import CASE3, CASE3_PARAMS
from oracles import central_gradient, chi2_quantile_bisect, dense_a_update, prox_l2_newton

pytestmark = pytest.mark.slow

TESTS = Path(__file__).parent


def test_criterion_01_prox_oracle(criterion):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 20))
        x = rng.standard_normal(n) * rng.uniform(0.01, 10)
        # straddle the kink: thresholds below, near and above the norm
        tau = float(np.linalg.norm(x) * rng.uniform(0, 2))
        worst = max(worst, float(np.abs(solver.vector_soft_threshold(x, tau) - prox_l2_newton(x, tau)).max()))
    secs = time.perf_counter() - t0
    ok = criterion(1, worst <= 1e-6 and secs < 5, f"max error {worst:.2e} <= 1e-6, {secs:.2f}s < 5s")
    assert ok


def _dense_v1(y, a, d1, mu1, e):
    # argmin 0.5||Y - V||^2 + 0.5 mu1 ||V - (E Z + S) - D1||^2 as a stacked least-squares problem
    target = e @ a[:e.shape[1]] + a[e.shape[1]:] + d1
    n_b = y.shape[0]
    lhs = np.vstack([np.eye(n_b), np.sqrt(mu1) * np.eye(n_b)])
    rhs = np.vstack([y, np.sqrt(mu1) * target])
    return np.linalg.lstsq(lhs, rhs, rcond=None)[0]


def test_criterion_02_closed_form_updates(criterion):
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst_grad = worst_dense = 0.0
    for _ in range(50):
        n_b = int(rng.integers(2, 11))
        p = int(rng.integers(1, min(3, n_b - 1) + 1))
        n = int(rng.integers(1, 9))
        mu = tuple(float(m) for m in rng.uniform(0.2, 5.0, 3))
        e, _ = np.linalg.qr(rng.standard_normal((n_b, p)))
        sb = SubspaceBasis(e, np.ones(p))
        params = RhydeParams(p=p, mu1=mu[0], mu2=mu[1], mu3=mu[2])
        st = solver.SolverState(
            A=rng.standard_normal((p + n_b, n)),
            V1=rng.standard_normal((n_b, n)), V2=rng.standard_normal((p, n)), V3=rng.standard_normal((n_b, n)),
            D1=rng.standard_normal((n_b, n)), D2=rng.standard_normal((p, n)), D3=rng.standard_normal((n_b, n)),
        )

        a = solver.update_A(st, params, sb)

        def obj_a(x):
            return 0.5 * (mu[0] * np.sum((st.V1 - (e @ x[:p] + x[p:]) - st.D1) ** 2)
                          + mu[1] * np.sum((st.V2 - x[:p] - st.D2) ** 2)
                          + mu[2] * np.sum((st.V3 - x[p:] - st.D3) ** 2))

        # gradient relative to the gradient at zero, i.e. to the right-hand side
        g0 = np.linalg.norm(central_gradient(obj_a, np.zeros_like(a)))
        worst_grad = max(worst_grad, np.linalg.norm(central_gradient(obj_a, a)) / g0)
        want = dense_a_update(e, st.V1, st.V2, st.V3, st.D1, st.D2, st.D3, mu)
        worst_dense = max(worst_dense, float(np.abs(a - want).max()))

        y = rng.standard_normal((n_b, n))
        v1 = solver.update_V1(y, st.A, st.D1, mu[0], sb)
        target = solver.apply_E_I(st.A, sb) + st.D1

        def obj_v(v):
            return 0.5 * np.sum((y - v) ** 2) + 0.5 * mu[0] * np.sum((v - target) ** 2)

        g0 = np.linalg.norm(central_gradient(obj_v, np.zeros_like(v1)))
        worst_grad = max(worst_grad, np.linalg.norm(central_gradient(obj_v, v1)) / g0)
        worst_dense = max(worst_dense, float(np.abs(v1 - _dense_v1(y, st.A, st.D1, mu[0], e)).max()))
    secs = time.perf_counter() - t0
    ok = worst_grad < 1e-6 and worst_dense <= 1e-8 and secs < 10
    assert criterion(2, ok, f"relative gradient {worst_grad:.1e} < 1e-6, dense gap {worst_dense:.1e} <= 1e-8, "
                            f"{secs:.2f}s < 10s")


def test_criterion_03_convergence(case3, criterion):
    trace = case3.run.solver.trace
    hit = next((k + 1 for k, v in enumerate(trace) if v < 1e-3), None)
    ok = hit is not None and hit <= 30 and case3.seconds < 300
    assert criterion(3, ok, f"rel change {trace[-1]:.2e} < 1e-3 at iteration {hit} <= 30, "
                            f"{case3.seconds:.1f}s < 300s")


def test_criterion_04_denoising_gain(case3, criterion):
    sim = case3.sim
    before = metrics.mpsnr(sim.clean, sim.noisy)
    after = metrics.mpsnr(sim.clean, case3.run.x_hat)
    assert criterion(4, after - before >= 10, f"MPSNR {before:.2f} -> {after:.2f} dB, gain {after - before:.2f} >= 10")


def test_criterion_05_rare_pixel_preservation(case3, criterion):
    sim = case3.sim
    mask = sim.mask
    rel = np.linalg.norm(case3.run.x_hat - sim.clean, axis=0) / np.linalg.norm(sim.clean, axis=0)
    bound = 3 * np.median(rel[~mask])
    worst = rel[mask].max()
    scores = detect.rhyde_scores(case3.run.solver.s_hat)
    p999 = np.percentile(scores[~mask], 99.9)
    roc = detect.roc_curve(scores, mask)
    err_ok = worst <= bound
    rank_ok = bool(np.all(scores[mask] > p999)) and roc.auc >= 0.99
    assert criterion(5, err_ok and rank_ok,
                     f"implant rel error {worst:.3f} vs 3x background median {bound:.3f}; "
                     f"min implant score {scores[mask].min():.2f} > 99.9th pct {p999:.2f}, AUC {roc.auc:.4f} >= 0.99")


def test_criterion_06_detection_not_degraded(case3, case3_suppressed, criterion):
    mask = case3.sim.mask
    auc_rhyde = detect.roc_curve(detect.global_rx(case3.run.x_hat), mask).auc
    auc_plain = detect.roc_curve(detect.global_rx(case3_suppressed.x_hat), mask).auc
    assert criterion(6, auc_rhyde >= auc_plain, f"RX AUC on RhyDe output {auc_rhyde:.4f} >= low-rank output {auc_plain:.4f}")


def _gamma(sim):
    # measured where the detector works: after whitening with the true band noise levels
    w = 1.0 / sim.noise_std[:, None]
    basis, _ = np.linalg.qr(w * sim.basis)
    return hsi.orthogonal_residual_power_ratio(w * sim.clean, w * sim.noise, basis, columns=sim.mask)


def test_criterion_07_gamma_monotonicity(criterion):
    # gamma is linear in the anomaly amplitude; sites, background and noise come
    # from separate streams and stay fixed across the sweep
    unit = _gamma(hsi.simulate_semireal(CASE3))
    shape = (CASE3.rows, CASE3.cols)
    rows = []
    for target in (0.5, 1.0, 2.0, 4.0):
        sim = hsi.simulate_semireal(dataclasses.replace(CASE3, anomaly_scale=target / unit))
        run = pipeline.denoise(sim.noisy, shape, CASE3_PARAMS, "collab")
        scores = detect.rhyde_scores(run.solver.s_hat)
        roc = detect.roc_curve(scores, sim.mask)
        # weakest implant over strongest background pixel, reported for context
        margin = scores[sim.mask].min() / scores[~sim.mask].max()
        rows.append((_gamma(sim), roc.min_fa_at_full_detection, margin))
    fa = [r[1] for r in rows]
    ok = all(b <= a for a, b in zip(fa, fa[1:]))
    detail = ", ".join(f"gamma {g:.2f}: min_fa {f:.4f} margin {m:.2f}" for g, f, m in rows)
    assert criterion(7, ok, detail + "; non-increasing")


def test_criterion_08_whitening_identity(criterion):
    rng = np.random.default_rng(808)
    n_b, n = 20, 50_000
    a = rng.standard_normal((n_b, n_b))
    nm = noise.NoiseModel.from_cov(a @ a.T + 0.1 * np.eye(n_b))
    samples = nm.sqrt_cov @ rng.standard_normal((n_b, n))
    w = noise.whiten(samples, nm)
    dist = np.linalg.norm(w @ w.T / n - np.eye(n_b))
    assert criterion(8, dist <= 0.05 * n_b, f"Frobenius distance {dist:.4f} <= {0.05 * n_b:.2f}")


def test_criterion_09_lambda2_rule(criterion):
    gaps = {}
    for n_b in (1, 50, 191):
        gaps[n_b] = abs(solver.lambda2_from_pvalue(1e-2, n_b) - np.sqrt(chi2_quantile_bisect(0.99, n_b)))
    ok = max(gaps.values()) <= 1e-6
    assert criterion(9, ok, ", ".join(f"n_b={k}: gap {v:.1e}" for k, v in gaps.items()) + " <= 1e-6")


def test_criterion_10_subspace_energy(case3, criterion):
    sim = case3.sim
    sb = estimate_basis(sim.noisy, CASE3.p_true)
    kept = np.sum(reconstruct(project(sim.clean, sb), sb) ** 2) / np.sum(sim.clean ** 2)
    assert criterion(10, kept >= 0.999, f"retained energy {kept:.6f} >= 0.999")


def test_criterion_11_invariant_suites(criterion):
    t0 = time.perf_counter()
    env = dict(os.environ, PYTHONDONTWRITEBYTECODE="1")
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-m", "invariant", "-p", "no:cacheprovider",
         "--ignore", str(TESTS / "test_acceptance.py"), str(TESTS)],
        capture_output=True, text=True, env=env, cwd=TESTS.parent)
    secs = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    ok = proc.returncode == 0 and secs < 120
    assert criterion(11, ok, f"{tail}, {secs:.1f}s < 120s")
