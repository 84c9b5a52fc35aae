from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import free_system
from jacobiloc.model import JacobiSample
from jacobiloc.tridiag import (
    EigenSolverError,
    InvariantViolation,
    amplitude_table,
    build_truncation,
    check_eigensystem,
    eigen_decompose,
    time_amplitude,
)


def test_build_truncation_places_entries():
    t = build_truncation(JacobiSample(b=np.array([1.0, 2.0, 3.0]), a=np.array([4.0, 5.0]), L=1))
    assert np.array_equal(t.matrix(), [[1, 4, 0], [4, 2, 5], [0, 5, 3]])
    free = build_truncation(JacobiSample(b=np.zeros(3), a=np.ones(2), L=1)).matrix()
    assert np.array_equal(free, free.T)


def test_scalar_window():
    es = free_system(0, b=[0.7], a=[])
    assert es.eigenvalues.tolist() == [0.7]
    assert es.eigenvectors.tolist() == [[1.0]]


def test_free_three_site_spectrum():
    es = free_system(1)
    assert np.allclose(es.eigenvalues, [-np.sqrt(2), 0.0, np.sqrt(2)], atol=1e-14)
    # characteristic polynomial lambda^3 - 2 lambda
    assert np.allclose(np.polyval([1, 0, -2, 0], es.eigenvalues), 0.0, atol=1e-13)


def test_sign_convention_first_component_positive():
    rng = np.random.default_rng(2)
    es = free_system(5, b=rng.uniform(-1, 1, 11), a=rng.uniform(0.5, 2, 10))
    v = es.eigenvectors
    first = np.argmax(np.abs(v) > 1e-12, axis=0)
    assert np.all(v[first, np.arange(v.shape[1])] > 0)


jacobi = st.integers(0, 12).flatmap(lambda L: st.tuples(
    st.just(L),
    arrays(float, 2 * L + 1, elements=st.floats(-3, 3)),
    arrays(float, 2 * L, elements=st.floats(0.05, 3)),
))


@given(jacobi)
def test_eigensystem_matches_scipy_and_invariants(case):
    L, b, a = case
    es = free_system(L, b, a)
    ref = scipy.linalg.eigh_tridiagonal(b, a, eigvals_only=True)
    assert np.allclose(es.eigenvalues, ref, atol=1e-10)
    v = es.eigenvectors
    assert np.max(np.abs(v.T @ v - np.eye(2 * L + 1))) <= 1e-10
    if L:
        assert np.all(np.diff(es.eigenvalues) > 0)


def test_random_21_site_residuals():
    rng = np.random.default_rng(0)
    b, a = rng.uniform(0, 1, 21), np.ones(20)
    t = build_truncation(JacobiSample(b=b, a=a, L=10))
    es = eigen_decompose(t)
    J = t.matrix()
    res = np.linalg.norm(J @ es.eigenvectors - es.eigenvectors * es.eigenvalues, axis=0)
    assert np.max(res) <= 1e-10 * np.linalg.norm(J, 2)


def test_check_eigensystem_rejects_corrupted_vectors():
    t = build_truncation(JacobiSample(b=np.zeros(3), a=np.ones(2), L=1))
    es = eigen_decompose(t)
    bad = type(es)(es.eigenvalues, es.eigenvectors * 1.01, es.L)
    with pytest.raises(InvariantViolation):
        check_eigensystem(t, bad)


def test_nonconvergence_dumps_matrix(monkeypatch, tmp_path):
    import jacobiloc.tridiag as tri

    monkeypatch.setattr(tri, "MAX_SWEEPS", 0)
    monkeypatch.chdir(tmp_path)
    t = build_truncation(JacobiSample(b=np.array([0.0, 1.0, 3.0]), a=np.array([1.0, 1.0]), L=1))
    with pytest.raises(EigenSolverError) as info:
        tri.eigen_decompose(t)
    assert info.value.dump_path is not None


def test_time_amplitude_at_zero_is_kronecker():
    es = free_system(4, b=np.linspace(-1, 1, 9), a=np.full(8, 0.8))
    for m in range(-4, 5):
        for n in range(-4, 5):
            assert abs(time_amplitude(es, m, n, 0.0) - (m == n)) <= 1e-12


def test_time_amplitude_small_t_series():
    b, a = np.array([0.3, -0.2, 0.5, 0.1, 0.0]), np.array([1.0, 0.7, 1.3, 0.9])
    es = free_system(2, b, a)
    J = build_truncation(JacobiSample(b=b, a=a, L=2)).matrix()
    t = 1e-4
    for m in range(-2, 3):
        for n in range(-2, 3):
            approx = (m == n) - 1j * t * J[m + 2, n + 2]
            assert abs(time_amplitude(es, m, n, t) - approx) <= 10 * t**2


def test_time_amplitude_rejects_outside_window():
    with pytest.raises(IndexError):
        time_amplitude(free_system(1), 2, 0, 0.0)


@given(st.floats(-50, 50), st.integers(-3, 3))
def test_unitarity_and_conjugate_symmetry(t, n):
    rng = np.random.default_rng(4)
    es = free_system(3, rng.uniform(-1, 1, 7), rng.uniform(0.5, 1.5, 6))
    col = amplitude_table(es, n, [t])[:, 0]
    assert abs(np.sum(np.abs(col) ** 2) - 1.0) <= 1e-9
    assert np.all(np.abs(col) <= 1 + 1e-12)
    back = amplitude_table(es, n, [-t])[:, 0]
    assert np.allclose(back, np.conj(col), atol=1e-12)
