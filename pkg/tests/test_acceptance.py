"""Acceptance criteria, one test each; every test prints a PASS/FAIL line with its numbers."""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest

from jacobiloc.cli import main
from jacobiloc.jacobian import IdentityReport, determinant_sweep, verify_eigen_identity
from jacobiloc.kernels.bounds import a_table, fit_gamma_prime, norm_suite, product_check, verify_A_bound
from jacobiloc.kernels.chain import rho_chain_check
from jacobiloc.kernels.fourier import find_C0, fourier_profile
from jacobiloc.localization import (
    decompose_sample,
    default_t_grid,
    fit_decay,
    monte_carlo_correlator,
    perturb_construction,
    rho_row,
    sup_amplitude_row,
)
from jacobiloc.model import ModelConfig, SequenceSpec, SingleSiteDensity, sample_operator

pytestmark = pytest.mark.slow

ANDERSON = ModelConfig(SingleSiteDensity.uniform(0.0, 1.0), L=50, master_seed=0, samples=200)
FIT_RANGE = range(-30, 31)


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\ncriterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {number}: {detail}"

    return emit


def test_criterion_01_determinant_agreement(report):
    t0 = time.perf_counter()
    sweep = determinant_sweep(instances=200, L_max=8, seed=0)
    eig_cfg = ModelConfig(SingleSiteDensity.uniform(0.0, 1.0), SequenceSpec.periodic([0.7, 1.3, 1.9]), L=6,
                          master_seed=0, samples=100)
    rep = IdentityReport()
    for i in range(eig_cfg.samples):
        s = sample_operator(eig_cfg, i)
        rep = rep.merge(verify_eigen_identity(decompose_sample(eig_cfg, i), s.a))
    elapsed = time.perf_counter() - t0
    ok = sweep.max_rel_error <= 1e-6 and rep.det_vs_phi0 <= 1e-8 and rep.checked > 0 and elapsed < 30
    report(1, ok, f"recursive vs numeric {sweep.max_rel_error:.2e} (<= 1e-6), recursive vs prod(a) phi(0)^-2 "
                  f"{rep.det_vs_phi0:.2e} (<= 1e-8) over {rep.checked} eigenvectors, {elapsed:.1f} s (< 30 s)")


def test_criterion_02_samplewise_chain(report):
    t = default_t_grid()
    worst_excess, worst_diag = -math.inf, 0.0
    for i in range(ANDERSON.samples):
        es = decompose_sample(ANDERSON, i)
        for n in (0, 1):
            rho = rho_row(es, n)
            amp = sup_amplitude_row(es, n, t)
            worst_excess = max(worst_excess, float(np.max(amp - rho)))
            worst_diag = max(worst_diag, abs(rho[n + es.L] - 1.0))
    # both sides sum the same 2L+1 products in different orders; allow their rounding only
    roundoff = (2 * ANDERSON.L + 1) * np.finfo(float).eps
    ok = worst_excess <= roundoff and worst_diag <= 1e-10
    report(2, ok, f"max(sup amplitude - rho) = {worst_excess:.2e} (<= roundoff {roundoff:.1e}), "
                  f"max |rho(m,m) - 1| = {worst_diag:.2e} "
                  f"(<= 1e-10) over {ANDERSON.samples} samples, {t.size} times")


def test_criterion_03_exponential_decay(report):
    t0 = time.perf_counter()
    table = monte_carlo_correlator(ANDERSON, 0, FIT_RANGE)
    fit = fit_decay(table, "exponential", m_min=5, m_max=30)
    elapsed = time.perf_counter() - t0
    ok = fit.gamma > 0.05 and fit.r2 >= 0.9 and elapsed < 120
    report(3, ok, f"gamma = {fit.gamma:.4f} (> 0.05), R^2 = {fit.r2:.4f} (>= 0.9), {elapsed:.1f} s (< 120 s)")


def test_criterion_04_stretched_decay(report):
    cfg = ModelConfig(ANDERSON.density, d_spec=SequenceSpec.power(1.0, 0.25), L=50, master_seed=0, samples=200)
    fit = fit_decay(monte_carlo_correlator(cfg, 0, FIT_RANGE), "stretched", zeta=0.25, m_min=5, m_max=30)
    report(4, fit.gamma > 0 and fit.r2 >= 0.8, f"gamma'' = {fit.gamma:.4f} (> 0), R^2 = {fit.r2:.4f} (>= 0.8)")


def test_criterion_05_norm_bounds(report):
    cfg = ModelConfig(SingleSiteDensity.uniform(-0.5, 0.5), L=5, samples=1)
    suite = norm_suite(cfg)
    sweep = verify_A_bound(cfg)
    certs = suite + sweep.certificates
    bad = [c for c in certs if c.verdict != "PASS"]
    gaps = max(c.stability_gap for c in certs)
    pairs = len(sweep.certificates)
    ok = not bad and pairs == 75
    report(5, ok, f"{len(certs)} certificates ({pairs} pair norms over 5x5x3), {len(bad)} failing, "
                  f"max pair estimate {sweep.max_estimate:.6f} vs A = {sweep.q:.9f}, max refinement gap {gaps:.1e}")


def test_criterion_06_fourier_facts(report):
    model = fourier_profile(ANDERSON.density)
    centred = fourier_profile(SingleSiteDensity.uniform(-0.5, 0.5))
    r0 = abs(model.at(0.0)[0])
    far = model.modulus_max(0.05)
    target = -2 * math.pi**2 / 3
    ok = abs(r0 - 1) <= 1e-9 and far < 1 and model.curvature < 0 and abs(centred.curvature - target) <= 1e-6
    report(6, ok, f"|r^(0)| - 1 = {r0 - 1:.1e}, max |r^| on [0.05, {model.k_max:g}] = {far:.6f}, "
                  f"curvature {model.curvature:.9f}, centred curvature error {abs(centred.curvature - target):.1e}")


def test_criterion_07_product_bound(report):
    zeta = 0.25
    profile = fourier_profile(ANDERSON.density)
    A = a_table(profile, SequenceSpec.power(1.0, zeta), find_C0().C0, 1.0, 20)
    gamma = fit_gamma_prime(A, zeta)
    rows = product_check(A, gamma, zeta)
    ok = gamma > 0 and all(r.pointwise_ok and r.product_ok for r in rows)
    report(7, ok, f"gamma' = {gamma:.6e}, {sum(r.product_ok for r in rows)}/20 products and "
                  f"{sum(r.pointwise_ok for r in rows)}/20 pointwise bounds hold (exact rational comparison)")


def test_criterion_08_chain_check(report):
    t0 = time.perf_counter()
    reps = [rho_chain_check(ANDERSON, L, m, samples=10_000) for L, m in ((1, 1), (2, 1))]
    elapsed = time.perf_counter() - t0
    ok = all(r.passed for r in reps) and elapsed < 300
    detail = "; ".join(f"(L={r.L}, m={r.m}) MC {r.mc_mean:.5f} +- {r.mc_stderr:.5f} vs quadrature "
                       f"{r.best_quadrature:.5f} (tol {r.quadrature_tol:.1e}, slack {r.slack:.4f})" for r in reps)
    report(8, ok, f"{detail}; {elapsed:.1f} s (< 300 s)")


def test_criterion_09_perturbation(report):
    eps = 0.01
    b = SequenceSpec.constant(0.0)
    cfg = perturb_construction(SequenceSpec.constant(1.0), b, eps, ANDERSON.density.scaled(0.005), L=50,
                               master_seed=0, samples=200)
    worst = max(float(np.max(np.abs(sample_operator(cfg, i).b - b(cfg.sites)))) for i in range(cfg.samples))
    fit = fit_decay(monte_carlo_correlator(cfg, 0, FIT_RANGE), "exponential", m_min=5, m_max=30)
    ok = worst < eps and fit.gamma > 0
    report(9, ok, f"max ||b~ - b||_inf = {worst:.5f} (< {eps}), fitted gamma = {fit.gamma:.4f} (> 0)")


def test_criterion_10_reproducibility(report, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text("[model]\nL = 30\nsamples = 40\nmaster_seed = 7\n\n[decay]\nm_min = -30\nm_max = 30\n")
    first, replay = tmp_path / "first", tmp_path / "replay"
    codes = [
        main(["decay", "--config", str(cfg), "--out", str(first), "--workers", "1"]),
        main(["decay", "--config", str(first / "manifest.json"), "--out", str(replay), "--workers", "4"]),
    ]
    names = sorted(json.loads((first / "manifest.json").read_text())["outputs"]) + ["manifest.json"]
    same = all((first / n).read_bytes() == (replay / n).read_bytes() for n in names)
    report(10, codes == [0, 0] and same, f"exit codes {codes}; {len(names)} files compared byte-for-byte "
                                         f"(1 vs 4 workers): {'identical' if same else 'different'}")
