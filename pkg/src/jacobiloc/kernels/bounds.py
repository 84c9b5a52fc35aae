"""Numerical validation of the operator-norm bounds over parameter sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..model import ModelConfig, SequenceSpec, spectral_window
from .fourier import FourierProfile, compute_A, find_C0, fourier_profile
from .grid import CellMesh
from .norms import (
    HSEvidence,
    NormCertificate,
    chain_operator,
    hs_norm,
    norm11_certificate,
    norm12_certificate,
    opnorm22,
    top_singular,
)
from .operators import KernelParams, s_operator, t_operator

DEFAULT_SITES = (1, 2, 3)
GAMMA_SAFETY = 1.0 - 1e-9


def default_mesh(X: float = 1000.0, h: float = 0.05, grade_from: float = 4.0) -> CellMesh:
    return CellMesh.graded(X, h, pivot=1.0, grade_from=grade_from)


def sweep_energies(config: ModelConfig, count: int = 5) -> np.ndarray:
    lo, hi = spectral_window(config)
    return np.linspace(lo, hi, count)


class _OperatorCache:
    def __init__(self, config: ModelConfig):
        self.config = config
        self._store = {}

    def params(self, n: int, alpha: float) -> KernelParams:
        c = self.config
        return KernelParams(n, float(alpha), c.a_spec, c.d_spec, c.density)

    def get(self, kind: str, n: int, alpha: float, mesh: CellMesh):
        # keyed by the kernel itself: sites with equal coefficients share one matrix
        p = self.params(n, alpha)
        spec = p.t_kernel() if kind == "T" else p.s_kernel()
        key = (spec, mesh.kind, mesh.X, mesh.h, mesh.size)
        if key not in self._store:
            self._store[key] = (t_operator if kind == "T" else s_operator)(p, mesh)
        return self._store[key]


def a_constant(profile: FourierProfile, config: ModelConfig, n: int, C0: float) -> float:
    """``A(n, n+1)`` with ``t_n = min(d_n, d_{n+1})``."""
    t = float(min(config.d_spec(n), config.d_spec(n + 1)))
    return compute_A(profile, t, C0, config.a_sup)


def q_constant(profile: FourierProfile, C0: float, a_sup: float) -> float:
    """Undamped contraction ``q = A`` at ``t = 1``."""
    return compute_A(profile, 1.0, C0, a_sup)


@dataclass(frozen=True)
class SweepSummary:
    certificates: list
    q: float
    C0: float
    max_estimate: float

    @property
    def failures(self) -> list:
        return [c for c in self.certificates if c.verdict != "PASS"]


def verify_A_bound(
    config: ModelConfig,
    alphas=None,
    betas=None,
    sites=DEFAULT_SITES,
    mesh: CellMesh | None = None,
    refine: bool = True,
    profile: FourierProfile | None = None,
    C0: float | None = None,
) -> SweepSummary:
    """``||T_alpha^(n) T_beta^(n+1)||_{2,2} <= A(n, n+1)`` over an ``(alpha, beta, n)`` grid."""
    mesh = mesh or default_mesh()
    alphas = sweep_energies(config) if alphas is None else np.asarray(alphas, float)
    betas = alphas if betas is None else np.asarray(betas, float)
    profile = profile or fourier_profile(config.density)
    C0 = C0 if C0 is not None else find_C0(a_sup=config.a_sup, delta=config.delta).C0
    cache = _OperatorCache(config)
    certs = []
    for n in sites:
        if n < 1:
            raise ValueError("T-pairs need sites n >= 1")
        bound = a_constant(profile, config, n, C0)
        for al in alphas:
            for be in betas:
                build = lambda m, n=n, al=al, be=be: chain_operator(  # noqa: E731
                    cache.get("T", n, al, m), cache.get("T", n + 1, be, m))
                certs.append(opnorm22(
                    build, mesh, bound, f"T^({n})T^({n + 1})", refine,
                    params={"n": n, "alpha": float(al), "beta": float(be), "C0": C0},
                ))
    q = max(a_constant(profile, config, n, C0) for n in sites)
    return SweepSummary(certs, q, C0, max(c.estimate for c in certs))


def norm_suite(
    config: ModelConfig,
    alphas=None,
    sites=DEFAULT_SITES,
    mesh: CellMesh | None = None,
    refine: bool = True,
) -> list[NormCertificate]:
    """``||S||_{1,1} <= 1``, ``||S||_{1,2} <= sqrt(a ||r||_inf / d_n)``, ``||T||_{2,2} <= 1``."""
    mesh = mesh or default_mesh()
    alphas = sweep_energies(config) if alphas is None else np.asarray(alphas, float)
    cache = _OperatorCache(config)
    s_sites = sorted({0, *sites, *(-s for s in sites)})
    certs = []
    for al in alphas:
        for n in s_sites:
            p = cache.params(n, al)
            build = lambda m, n=n, al=al: cache.get("S", n, al, m)  # noqa: E731
            meta = {"n": n, "alpha": float(al)}
            certs.append(norm11_certificate(build, mesh, 1.0, f"S^({n})", refine, params=meta))
            certs.append(norm12_certificate(build, mesh, p.s_bound_12(), f"S^({n})", refine, params=meta))
        for n in sites:
            build = lambda m, n=n, al=al: chain_operator(cache.get("T", n, al, m))  # noqa: E731
            certs.append(opnorm22(build, mesh, 1.0, f"T^({n})", refine, params={"n": n, "alpha": float(al)}))
    return certs


# --- damped case: A(s) table and the product bound ---------------------------


def a_table(profile: FourierProfile, d_spec: SequenceSpec, C0: float, a_sup: float, s_max: int = 20) -> np.ndarray:
    """``A(s)`` for ``s = 1..s_max`` with ``t_s = min(d_{2s-1}, d_{2s})``."""
    out = np.empty(s_max)
    for s in range(1, s_max + 1):
        t = float(min(d_spec(2 * s - 1), d_spec(2 * s)))
        out[s - 1] = compute_A(profile, t, C0, a_sup)
    return out


def fit_gamma_prime(A: np.ndarray, zeta: float) -> float:
    """Largest ``gamma'`` with ``A(s) <= exp(-gamma' s^(-2 zeta))`` at every tabulated ``s``, shrunk by 1e-9."""
    s = np.arange(1, A.size + 1, dtype=float)
    if np.any(A >= 1.0) or np.any(A <= 0):
        raise ValueError("A(s) must lie in (0, 1) to fit gamma'")
    return GAMMA_SAFETY * float(np.min(-np.log(A) * s ** (2.0 * zeta)))


@dataclass(frozen=True)
class ProductRow:
    s: int
    A: float
    pointwise_bound: float
    product: float
    product_bound: float
    pointwise_ok: bool
    product_ok: bool


def product_check(A: np.ndarray, gamma: float, zeta: float) -> list[ProductRow]:
    """Pointwise ``A(s) <= exp(-gamma' s^-2zeta)`` and ``prod_{u<=s} A(u) <= exp(-gamma' s^(1-2zeta))``.

    Comparisons are exact: the float values are converted to rationals and the
    running product is kept as a rational.
    """
    rows = []
    prod = Fraction(1)
    for s in range(1, A.size + 1):
        a = float(A[s - 1])
        prod *= Fraction(a)
        point = math.exp(-gamma * s ** (-2.0 * zeta))
        bound = math.exp(-gamma * s ** (1.0 - 2.0 * zeta))
        rows.append(ProductRow(
            s, a, point, float(prod), bound,
            Fraction(a) <= Fraction(point), prod <= Fraction(bound),
        ))
    return rows


def hs_norm_evidence(p1: KernelParams, p2: KernelParams, mesh: CellMesh | None = None, refine: bool = True) -> HSEvidence:
    """Hilbert-Schmidt norm of the discretized ``T^(n) T^(n+1)`` and its 2->2 norm on the same mesh."""
    mesh = mesh or default_mesh()

    def evaluate(m):
        t1, t2 = t_operator(p1, m), t_operator(p2, m)
        return hs_norm(t1, t2), top_singular(chain_operator(t1, t2)).value

    value, op = evaluate(mesh)
    refined = change = None
    if refine:
        refined, _ = evaluate(mesh.refined())
        change = abs(refined - value) / value if value > 0 else (0.0 if refined == 0 else math.inf)
    return HSEvidence(value, refined, op, change, mesh.X, mesh.h)
