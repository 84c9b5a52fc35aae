"""Ratio change of variables ``(x, E) -> b`` and its Jacobian determinant.

Coordinates are ``x_n = phi(n+1)/phi(n)`` for ``n < 0`` and
``x_n = phi(n-1)/phi(n)`` for ``n > 0``; the boundary inverses
``x_{-L-1}^{-1}`` and ``x_{L+1}^{-1}`` are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .tridiag import EigenSystem

DEGENERATE_TOL = 1e-13

# Test hook: flips the sign of the negative-side bracket in det_recursive.
_inject_sign_fault = False


class DegenerateSampleError(ValueError):
    """An eigenvector component vanishes, so the ratio coordinates are undefined."""


@dataclass(frozen=True)
class RatioCoordinates:
    x_neg: np.ndarray  # x_{-L}, ..., x_{-1}
    E: float
    x_pos: np.ndarray  # x_1, ..., x_L

    def __post_init__(self):
        xs = np.concatenate([self.x_neg, self.x_pos])
        if self.x_neg.size != self.x_pos.size:
            raise ValueError("x_neg and x_pos must both have length L")
        if not np.all(np.isfinite(xs)) or np.any(xs == 0) or not np.isfinite(self.E):
            raise ValueError("ratio coordinates must be finite and nonzero")

    @property
    def L(self) -> int:
        return self.x_pos.size

    def vector(self) -> np.ndarray:
        """Variables in the order ``(x_{-L}..x_{-1}, E, x_1..x_L)``."""
        return np.concatenate([self.x_neg, [self.E], self.x_pos])

    @classmethod
    def from_vector(cls, v) -> "RatioCoordinates":
        v = np.asarray(v, dtype=float)
        L = (v.size - 1) // 2
        return cls(v[:L].copy(), float(v[L]), v[L + 1 :].copy())


def eigen_to_ratios(es: EigenSystem, k: int) -> RatioCoordinates:
    phi = es.eigenvectors[:, k]
    if np.any(np.abs(phi) < DEGENERATE_TOL):
        raise DegenerateSampleError(f"eigenvector {k} has a component below {DEGENERATE_TOL}")
    L = es.L
    # phi index j corresponds to site j - L
    x_neg = phi[1 : L + 1] / phi[:L]
    x_pos = phi[L : 2 * L] / phi[L + 1 :]
    return RatioCoordinates(x_neg, float(es.eigenvalues[k]), x_pos)


def _split_a(a_seq, L: int) -> np.ndarray:
    a = np.asarray(a_seq, dtype=float)
    if a.size != 2 * L:
        raise ValueError(f"expected {2 * L} off-diagonal values a_{-L}..a_{L - 1}, got {a.size}")
    return a


def ratios_to_potential(rc: RatioCoordinates, a_seq) -> np.ndarray:
    """``b_{-L}..b_L`` from the three-branch formula."""
    L = rc.L
    a = _split_a(a_seq, L)
    A = lambda n: a[n + L]  # noqa: E731
    inv = lambda x: 1.0 / x  # noqa: E731
    xn = {n: rc.x_neg[n + L] for n in range(-L, 0)}
    xp = {n: rc.x_pos[n - 1] for n in range(1, L + 1)}
    E = rc.E
    b = np.empty(2 * L + 1)
    for n in range(-L, 0):
        left = A(n - 1) * inv(xn[n - 1]) if n - 1 >= -L else 0.0
        b[n + L] = E - left - A(n) * xn[n]
    if L == 0:
        b[0] = E
        return b
    b[L] = E - A(-1) * inv(xn[-1]) - A(0) * inv(xp[1])
    for n in range(1, L + 1):
        right = A(n) * inv(xp[n + 1]) if n + 1 <= L else 0.0
        b[n + L] = E - right - A(n - 1) * xp[n]
    return b


def _nested(xs) -> float:
    """``x_1^-2 {1 + x_2^-2 {1 + ... {1 + x_L^-2}}}`` for ``xs = (x_1..x_L)``."""
    acc = 0.0
    for x in reversed(np.asarray(xs, dtype=float)):
        acc = (1.0 + acc) / (x * x)
    return acc


def det_recursive(rc: RatioCoordinates, a_seq) -> float:
    """Closed-form Jacobian determinant ``(prod a)(1 + P + N)`` of the nested brackets."""
    a = _split_a(a_seq, rc.L)
    pos = _nested(rc.x_pos)
    neg = _nested(rc.x_neg[::-1])
    if _inject_sign_fault:
        neg = -neg
    return float(np.prod(a) * (1.0 + pos + neg))


def jacobian_matrix(rc: RatioCoordinates, a_seq, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian ``d b_i / d v_j`` (rows ``b_{-L}..b_L``)."""
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    v0 = rc.vector()
    n = v0.size
    jac = np.empty((n, n))
    for j in range(n):
        vp = v0.copy()
        vm = v0.copy()
        vp[j] += h
        vm[j] -= h
        bp = ratios_to_potential(RatioCoordinates.from_vector(vp), a_seq)
        bm = ratios_to_potential(RatioCoordinates.from_vector(vm), a_seq)
        jac[:, j] = (bp - bm) / (2.0 * h)
    return jac


def det_numeric(rc: RatioCoordinates, a_seq, h: float = 1e-5) -> float:
    """Independent determinant: finite-difference Jacobian, LU factorization."""
    jac = jacobian_matrix(rc, a_seq, h)
    lu, piv = scipy.linalg.lu_factor(jac, check_finite=True)
    diag = np.diag(lu)
    if np.min(np.abs(diag)) < 1e-14:
        raise DegenerateSampleError("singular pivot in finite-difference Jacobian")
    swaps = np.count_nonzero(piv != np.arange(piv.size))
    return float((-1.0) ** swaps * np.prod(diag))


@dataclass
class IdentityReport:
    """Worst relative error per identity over the checked eigenvalue indices."""

    det_vs_phi0: float = 0.0
    partial_sums: float = 0.0
    ratio_products: float = 0.0
    checked: int = 0
    skipped: int = 0

    def merge(self, other: "IdentityReport") -> "IdentityReport":
        return IdentityReport(
            max(self.det_vs_phi0, other.det_vs_phi0),
            max(self.partial_sums, other.partial_sums),
            max(self.ratio_products, other.ratio_products),
            self.checked + other.checked,
            self.skipped + other.skipped,
        )

    def passed(self, tol: float = 1e-8) -> bool:
        return max(self.det_vs_phi0, self.partial_sums, self.ratio_products) <= tol


def _rel(x: float, y: float) -> float:
    return abs(x - y) / max(abs(y), 1e-300)


def verify_eigen_identity(es: EigenSystem, a_seq) -> IdentityReport:
    L = es.L
    a = _split_a(a_seq, L)
    report = IdentityReport()
    for k in range(es.eigenvalues.size):
        try:
            rc = eigen_to_ratios(es, k)
        except DegenerateSampleError:
            report.skipped += 1
            continue
        phi = es.eigenvectors[:, k]
        p0 = phi[L]
        det = det_recursive(rc, a)
        e1 = _rel(det, float(np.prod(a)) / p0**2)
        pos_sum = float(np.sum(phi[L + 1 :] ** 2)) / p0**2
        neg_sum = float(np.sum(phi[:L] ** 2)) / p0**2
        e2 = max(_rel(_nested(rc.x_pos), pos_sum), _rel(_nested(rc.x_neg[::-1]), neg_sum)) if L else 0.0
        prods = np.concatenate(([1.0], np.abs(np.cumprod(1.0 / rc.x_pos))))
        e3 = max(_rel(p, abs(phi[L + m]) / abs(p0)) for m, p in enumerate(prods))
        report = report.merge(IdentityReport(e1, e2, e3, 1, 0))
    return report


@dataclass(frozen=True)
class DeterminantSweep:
    """Worst ``det_recursive`` vs ``det_numeric`` relative error over random instances."""

    instances: int
    max_rel_error: float
    worst_L: int
    skipped: int


def random_coordinates(rng: np.random.Generator, L: int, x_range=(0.1, 10.0), a_range=(0.5, 2.0)):
    """Random ``x`` uniform in ``x_range``, ``E`` in ``[-3, 3]`` and ``a`` uniform in ``a_range``."""
    x = rng.uniform(*x_range, 2 * L)
    E = float(rng.uniform(-3.0, 3.0))
    a = rng.uniform(*a_range, 2 * L)
    return RatioCoordinates(x[:L], E, x[L:]), a


def determinant_sweep(
    instances: int = 200,
    L_max: int = 8,
    seed: int = 0,
    h: float = 1e-5,
    x_range=(0.1, 10.0),
    a_range=(0.5, 2.0),
) -> DeterminantSweep:
    rng = np.random.default_rng(seed)
    worst, worst_L, skipped = 0.0, 0, 0
    for i in range(instances):
        L = 1 + i % L_max
        rc, a = random_coordinates(rng, L, x_range, a_range)
        try:
            num = det_numeric(rc, a, h)
        except DegenerateSampleError:
            skipped += 1
            continue
        err = _rel(num, det_recursive(rc, a))
        if err > worst:
            worst, worst_L = err, L
    return DeterminantSweep(instances, worst, worst_L, skipped)
