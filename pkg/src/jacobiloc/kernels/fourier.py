"""Fourier-side constants: ``r^(k)``, the curvature of ``|r^|^2`` at 0, ``A(n, n+1)`` and ``C0``.

Convention: ``r^(k) = int exp(-2 pi i k x) r(x) dx``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..model import SingleSiteDensity

_CHUNK = 4096
CONTRACTION_TARGET = 7.0 / 16.0


@dataclass(frozen=True)
class FourierProfile:
    """``r^`` sampled on ``k = 0, dk, ..., k_max`` (``|r^|`` is even in ``k``)."""

    density: SingleSiteDensity
    k: np.ndarray
    rhat: np.ndarray
    curvature: float
    curvature_moments: float
    k_max: float
    dk: float
    nodes: np.ndarray
    weights: np.ndarray

    def at(self, k) -> np.ndarray:
        """``r^(k)`` at arbitrary frequencies by the same quadrature as the grid."""
        k = np.atleast_1d(np.asarray(k, dtype=float))
        return np.exp(-2j * np.pi * np.outer(k, self.nodes)) @ self.weights

    def tail_envelope(self, k: float) -> float:
        """``|r^(k)| <= TV(r) / (2 pi |k|)`` (integration by parts)."""
        return self.density.variation / (2.0 * math.pi * abs(k))

    def modulus_max(self, k_lo: float) -> float:
        """``max |r^(k)|`` over sampled ``k >= k_lo``, the point ``k_lo`` itself, and the tail bound past ``k_max``."""
        if k_lo > self.k_max:
            raise ValueError(f"k_lo = {k_lo} beyond the profile range {self.k_max}")
        on_grid = np.abs(self.rhat[self.k >= k_lo])
        best = max(float(np.max(on_grid)) if on_grid.size else 0.0, float(np.abs(self.at(k_lo))[0]))
        return max(best, min(1.0, self.tail_envelope(self.k_max)))


def _quadrature(density: SingleSiteDensity, k_max: float):
    # one piece per unit of phase keeps the 32-point rule exact to rounding
    pieces = max(1, int(math.ceil(k_max * density.width / max(1, len(density.breakpoints) - 1))) + 1)
    return density.quadrature(min_pieces=pieces)


def one_minus_modulus_sq(density: SingleSiteDensity, k, nodes=None, weights=None) -> np.ndarray:
    """``1 - |r^(k)|^2 = 2 int int sin^2(pi k (x - y)) r(x) r(y)``, free of cancellation."""
    if nodes is None:
        nodes, weights = density.quadrature(min_pieces=2)
    k = np.atleast_1d(np.asarray(k, dtype=float))
    diff = nodes[:, None] - nodes[None, :]
    ww = weights[:, None] * weights[None, :]
    return np.array([2.0 * np.sum(ww * np.sin(math.pi * kk * diff) ** 2) for kk in k])


def modulus_sq_curvature(density: SingleSiteDensity, step: float = 1e-3) -> float:
    """Second derivative of ``|r^|^2`` at 0 by a Richardson-extrapolated central difference."""
    nodes, weights = density.quadrature(min_pieces=2)

    def second_diff(s):
        # |r^|^2 is even with value 1 at 0
        return -2.0 * one_minus_modulus_sq(density, [s], nodes, weights)[0] / s**2

    return (4.0 * second_diff(step / 2) - second_diff(step)) / 3.0


def fourier_profile(density: SingleSiteDensity, k_max: float = 20.0, dk: float = 1e-3) -> FourierProfile:
    if k_max <= 0 or dk <= 0:
        raise ValueError("need k_max > 0 and dk > 0")
    nodes, weights = _quadrature(density, k_max)
    count = int(round(k_max / dk))
    k = dk * np.arange(count + 1)
    rhat = np.empty(k.size, dtype=complex)
    for s in range(0, k.size, _CHUNK):
        kk = k[s : s + _CHUNK]
        rhat[s : s + _CHUNK] = np.exp(-2j * np.pi * np.outer(kk, nodes)) @ weights
    m1, m2 = density.moments()
    return FourierProfile(
        density=density, k=k, rhat=rhat,
        curvature=modulus_sq_curvature(density),
        curvature_moments=8.0 * math.pi**2 * (m1**2 - m2),
        k_max=float(k[-1]), dk=dk, nodes=nodes, weights=weights,
    )


def contraction_constant(sup_sq: float) -> float:
    """``(15/16 + sup/16)^(1/2)``."""
    return math.sqrt(15.0 / 16.0 + min(1.0, max(0.0, sup_sq)) / 16.0)


def compute_A(profile: FourierProfile, t: float, C0: float, a_sup: float) -> float:
    """``A = (15/16 + 1/16 sup_{|k| >= t C0 / a_sup} |r^(k)|^2)^(1/2)``."""
    if not 0 < t <= 1:
        raise ValueError("t must lie in (0, 1]")
    if C0 <= 0 or a_sup <= 0:
        raise ValueError("C0 and a_sup must be positive")
    cutoff = t * C0 / a_sup
    if profile.k_max < cutoff:
        raise ValueError(f"profile k_max = {profile.k_max} cannot see the cutoff {cutoff}")
    return contraction_constant(profile.modulus_max(cutoff) ** 2)


# --- the low-frequency constant C0 ----------------------------------------


def smoothstep_cutoff(plateau: float, support: float):
    """``g1``: 1 on ``|u| <= plateau``, 0 on ``|u| >= support``, cubic smoothstep in between."""
    if not 0 < plateau < support < math.inf:
        raise ValueError(f"cutoff needs 0 < plateau < support < inf (got {plateau}, {support})")

    def g1(u):
        t = np.clip((np.abs(u) - plateau) / (support - plateau), 0.0, 1.0)
        return 1.0 - t * t * (3.0 - 2.0 * t)

    return g1


@dataclass(frozen=True)
class C0Result:
    C0: float
    I1: float
    I2: float
    B: float
    lhs: float
    iterations: int


def _gl(f, a: float, b: float, pieces: int = 64, nodes: int = 16) -> float:
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(a, b, pieces + 1)
    half = 0.5 * np.diff(edges)[:, None]
    pts = 0.5 * (edges[:-1] + edges[1:])[:, None] + half * gx[None, :]
    return float(np.sum(half * gw[None, :] * f(pts)))


def cutoff_integrals(plateau: float, support: float) -> tuple[float, float]:
    """``I1 = int |g1(1/p)|^2 / p^2 dp`` and ``I2 = int |g2(y)|^2 / y^2 dy`` with ``g2 = 1 - g1``.

    Both are even; the tails where the integrand is exactly ``1/p^2`` (resp.
    ``1/y^2``) are integrated in closed form.
    """
    if not (math.isfinite(plateau) and math.isfinite(support)) or plateau <= 0 or support <= plateau:
        raise ValueError(
            f"cutoff integrals diverge unless 0 < plateau < support < inf (got plateau={plateau}, support={support})"
        )
    g1 = smoothstep_cutoff(plateau, support)
    i1 = 2.0 * (_gl(lambda p: g1(1.0 / p) ** 2 / p**2, 1.0 / support, 1.0 / plateau) + plateau)
    i2 = 2.0 * (_gl(lambda y: (1.0 - g1(y)) ** 2 / y**2, plateau, support) + 1.0 / support)
    return i1, i2


def c0_condition(C0: float, I1: float, I2: float, a_sup: float, delta: float) -> float:
    """``B sqrt(2 C0) sqrt(2 pi) (I1^(1/2) + sqrt(a_sup/delta) I2^(1/2))`` with ``B = sqrt(a_sup/delta)``."""
    ratio = math.sqrt(a_sup / delta)
    return ratio * math.sqrt(2.0 * C0) * math.sqrt(2.0 * math.pi) * (math.sqrt(I1) + ratio * math.sqrt(I2))


def find_C0(g1_plateau: float = 1.0, g1_support: float = 2.0, a_sup: float = 1.0, delta: float = 1.0) -> C0Result:
    """Largest ``C0`` satisfying the sufficient ``<= 7/16`` condition, by bisection."""
    if a_sup <= 0 or delta <= 0 or delta > a_sup:
        raise ValueError("need 0 < delta <= a_sup")
    i1, i2 = cutoff_integrals(g1_plateau, g1_support)
    ok = lambda c: c0_condition(c, i1, i2, a_sup, delta) <= CONTRACTION_TARGET  # noqa: E731
    lo, hi = 0.0, 1.0
    while ok(hi):
        lo, hi = hi, 2.0 * hi
    it = 0
    while hi - lo > 1e-15 * hi and it < 200:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        it += 1
    return C0Result(lo, i1, i2, math.sqrt(a_sup / delta), c0_condition(lo, i1, i2, a_sup, delta), it)
