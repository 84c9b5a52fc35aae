from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import free_system
from jacobiloc.localization import (
    CorrelatorTable,
    decompose_sample,
    epsilon_radius,
    fit_decay,
    monte_carlo_correlator,
    perturb_construction,
    rho_row,
    rho_single,
    sampled_sup_amplitude,
    sup_amplitude_row,
    table_from_samples,
    tail_mass,
    tail_profile,
)
from jacobiloc.model import ModelConfig, SequenceSpec, SingleSiteDensity, sample_operator


def synthetic_table(values, m):
    m = np.asarray(m)
    v = np.asarray(values, dtype=float)
    return CorrelatorTable(0, m, v, np.zeros_like(v), v, v, 1, int(np.max(np.abs(m))))


def test_rho_diagonal_and_free_matrix_value():
    es = free_system(1)
    assert rho_single(es, 0, 0) == pytest.approx(1.0, abs=1e-14)
    # eigenvectors (1, sqrt2, 1)/2, (1, 0, -1)/sqrt2, (1, -sqrt2, 1)/2: 1/4 + 1/2 + 1/4
    assert rho_single(es, 1, -1) == pytest.approx(1.0, abs=1e-14)
    assert rho_single(es, 1, 0) == pytest.approx(math.sqrt(2) / 2, abs=1e-14)


@given(st.integers(0, 2**32 - 1))
def test_rho_bounds_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    es = free_system(4, rng.uniform(-2, 2, 9), rng.uniform(0.3, 2, 8))
    R = np.array([rho_row(es, n) for n in range(-4, 5)])
    assert np.allclose(np.diag(R), 1.0, atol=1e-12)
    assert np.all(R <= 1 + 1e-12) and np.all(R >= 0)
    assert np.allclose(R, R.T, atol=1e-14)


def test_sup_amplitude_on_zero_grid_is_diagonal_one():
    es = free_system(2, np.linspace(0, 1, 5))
    assert sampled_sup_amplitude(es, 1, 1, [0.0]) == pytest.approx(1.0, abs=1e-14)
    assert sampled_sup_amplitude(es, 1, 1, [0.0]) == pytest.approx(rho_single(es, 1, 1), abs=1e-14)


def test_sup_amplitude_free_matrix_approaches_half():
    es = free_system(1)
    t = np.linspace(0.0, 100.0, 200_001)
    # analytic amplitude (cos(sqrt 2 t) - 1) / 2 has sup 1
    amp = (np.cos(np.sqrt(2) * t) - 1) / 2
    assert np.max(np.abs(amp)) == pytest.approx(1.0, abs=1e-3)
    # the eigen-expansion reproduces the closed form on the grid
    direct = np.abs([complex(np.sum(np.exp(-1j * s * es.eigenvalues) * es.row(1) * es.row(-1))) for s in t[::1000]])
    assert np.allclose(direct, np.abs(amp[::1000]), atol=1e-12)
    assert sampled_sup_amplitude(es, 1, -1, t) == pytest.approx(np.max(np.abs(amp)), abs=1e-9)
    assert sampled_sup_amplitude(es, 1, -1, t) == pytest.approx(rho_single(es, 1, -1), abs=1e-3)


def test_sup_amplitude_row_matches_pointwise():
    rng = np.random.default_rng(1)
    es = free_system(3, rng.uniform(0, 1, 7))
    t = np.linspace(0, 50, 3001)
    row = sup_amplitude_row(es, 0, t)
    assert np.allclose(row, [sampled_sup_amplitude(es, m, 0, t) for m in range(-3, 4)], atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(-5, 5), st.integers(0, 1))
def test_samplewise_sup_amplitude_below_rho(seed, m, n):
    rng = np.random.default_rng(seed)
    es = free_system(5, rng.uniform(0, 1, 11))
    t = np.linspace(0, 200, 2000)
    assert sampled_sup_amplitude(es, m, n, t) <= rho_single(es, m, n) + 1e-12


def test_monte_carlo_single_sample_matches_rho():
    cfg = ModelConfig(SingleSiteDensity.uniform(0, 1), L=8, master_seed=4, samples=1)
    table = monte_carlo_correlator(cfg, 0, range(-8, 9))
    es = decompose_sample(cfg, 0)
    assert np.allclose(table.mean, [rho_single(es, m, 0) for m in range(-8, 9)], atol=1e-15, rtol=0)
    assert np.all(table.stderr == 0)


def test_monte_carlo_diagonal_and_errors():
    cfg = ModelConfig(SingleSiteDensity.uniform(0, 1), L=8, master_seed=4, samples=20)
    for n in (0, 1):
        table = monte_carlo_correlator(cfg, n, range(-8, 9))
        assert table.value(n) == pytest.approx(1.0, abs=1e-10)
        assert np.all((table.mean >= 0) & (table.mean <= 1))
    with pytest.raises(ValueError):
        monte_carlo_correlator(cfg, 2, [0])
    with pytest.raises(ValueError):
        monte_carlo_correlator(cfg, 0, [9])


def test_monte_carlo_independent_of_workers():
    cfg = ModelConfig(SingleSiteDensity.uniform(0, 1), L=10, master_seed=8, samples=13)
    one = monte_carlo_correlator(cfg, 0, range(-10, 11), workers=1)
    three = monte_carlo_correlator(cfg, 0, range(-10, 11), workers=3)
    assert one.mean.tobytes() == three.mean.tobytes()
    assert one.stderr.tobytes() == three.stderr.tobytes()


def test_table_rejects_out_of_range_entries():
    with pytest.raises(ValueError):
        table_from_samples(np.array([[1.5]]), 0, [0], 1)


def test_nested_window_stability():
    base = dict(density=SingleSiteDensity.uniform(-1.5, 1.5), master_seed=2, samples=200)
    small = monte_carlo_correlator(ModelConfig(L=10, **base), 0, range(-5, 6))
    big = monte_carlo_correlator(ModelConfig(L=20, **base), 0, range(-5, 6))
    err = np.hypot(small.stderr, big.stderr)
    assert np.all(np.abs(small.mean - big.mean) <= 3 * err + 1e-12)


def test_exponential_fit_recovers_rate():
    m = np.arange(-30, 31)
    fit = fit_decay(synthetic_table(np.exp(-0.3 * np.abs(m)), m), "exponential")
    assert fit.gamma == pytest.approx(0.3, abs=1e-9)
    assert fit.C == pytest.approx(1.0, rel=1e-9)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_stretched_fit_recovers_rate():
    m = np.arange(-30, 31)
    r = np.maximum(np.abs(m), 1)
    vals = r**0.125 * np.exp(-0.2 * r**0.5)
    fit = fit_decay(synthetic_table(vals, m), "stretched", zeta=0.25)
    assert fit.gamma == pytest.approx(0.2, abs=1e-9)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_power_law_exponent():
    m = np.arange(1, 31)
    fit = fit_decay(synthetic_table(3.0 * m**-2.0, m), "exponential", m_min=5, m_max=30)
    assert fit.tau == pytest.approx(2.0, abs=1e-9)


def test_fit_needs_four_usable_points():
    m = np.arange(0, 9)
    vals = np.exp(-np.abs(m) * 1.0)
    with pytest.raises(ValueError):
        fit_decay(synthetic_table(vals, m), "exponential", m_min=5, m_max=7)
    noisy = CorrelatorTable(0, m, vals, vals, vals, vals, 10, 8)  # mean within 2 stderr of 0
    with pytest.raises(ValueError):
        fit_decay(noisy, "exponential", m_min=1, m_max=8)


def test_tail_mass_properties():
    rng = np.random.default_rng(3)
    es = free_system(6, rng.uniform(0, 1, 13))
    prof = tail_profile(es, 0)
    assert prof[0] >= 1.0
    assert np.all(np.diff(prof) <= 1e-15)
    assert all(tail_mass(es, 0, M) == pytest.approx(prof[M], abs=1e-14) for M in range(7))
    with pytest.raises(ValueError):
        tail_mass(es, 0, 7)


def test_epsilon_radius_edges():
    rng = np.random.default_rng(3)
    es = free_system(6, rng.uniform(0, 1, 13))
    assert epsilon_radius(es, 0, 10.0) == 0
    assert epsilon_radius(es, 0, tail_mass(es, 0, 6) / 2) is None


def test_strong_disorder_tail_is_small():
    cfg = ModelConfig(SingleSiteDensity.uniform(-5, 5), L=20, master_seed=1, samples=50)
    tails = [tail_mass(decompose_sample(cfg, i), 0, 10) for i in range(cfg.samples)]
    assert np.median(tails) < 1e-3
    radii = [epsilon_radius(decompose_sample(cfg, i), 0, 1e-3) for i in range(cfg.samples)]
    assert sum(r is not None and r < 10 for r in radii) > cfg.samples / 2


def test_perturb_construction_support():
    dens = SingleSiteDensity.uniform(-1, 1).scaled(0.05)
    b = SequenceSpec.periodic([0.0, 1.0, -0.5])
    cfg = perturb_construction(SequenceSpec.constant(1.0), b, 0.1, dens, L=10, samples=20)
    for i in range(cfg.samples):
        s = sample_operator(cfg, i)
        assert np.max(np.abs(s.b - b(cfg.sites))) <= 0.05
        assert np.array_equal(s.a, np.ones(20))
    with pytest.raises(ValueError):
        perturb_construction(SequenceSpec.constant(1.0), b, 0.1, SingleSiteDensity.uniform(-0.2, 0.2))
