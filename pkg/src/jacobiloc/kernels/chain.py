"""Small-window check of the correlator identity behind the localization bounds.

After the ratio change of variables, ``rho_L(m, 0)`` equals

    P * int_{Sigma_0} < T^(1)..T^(m-1) S^(m)..S^(L-1) phi_+ , U S^(0) S^(-1)..S^(-L+1) phi_- > dE

with ``phi_+(x) = r_L(E - c_L - a_{L-1} x)``, ``phi_-(x) = r_{-L}(E - c_{-L} - a_{-L} x)``,
every operator at site ``n`` evaluated at ``alpha = E - c_n``, and
``P = a_{-L} a_{L-1} / sqrt(a_0 a_{m-1})``. The Monte Carlo side estimates the
left-hand side directly from eigenvectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..localization import monte_carlo_correlator
from ..model import ModelConfig, spectral_window
from .galerkin import assemble
from .grid import CellMesh, GridFunction
from .operators import KernelParams, density_profile, u_operator

DEFAULT_SAMPLES = 10_000
DEFAULT_PANELS = 40
NODES_PER_PANEL = 4
QUAD_TOL_MAX = 1e-2


def chain_prefactor(config: ModelConfig, L: int, m: int) -> float:
    a = lambda k: float(config.a_spec(k))  # noqa: E731
    return a(-L) * a(L - 1) / math.sqrt(a(0) * a(m - 1))


def _apply(spec, f: GridFunction) -> GridFunction:
    cols = np.flatnonzero(f.values)
    if cols.size == 0:
        return GridFunction.zeros(f.mesh)
    mat = assemble(spec, f.mesh, f.mesh, columns=cols)
    return GridFunction(f.mesh, mat @ f.values)


def chain_integrand(config: ModelConfig, L: int, m: int, E: float, mesh: CellMesh, u_matrix=None) -> float:
    """The inner product at one energy ``E`` (without the prefactor)."""
    a = lambda k: float(config.a_spec(k))  # noqa: E731
    d = lambda k: float(config.d_spec(k))  # noqa: E731
    c = lambda k: float(config.c_spec(k))  # noqa: E731
    dens = config.density
    params = lambda n: KernelParams.from_config(config, n, E)  # noqa: E731

    right = density_profile(dens, d(L), E - c(L), a(L - 1), mesh)
    for n in range(L - 1, m - 1, -1):
        right = _apply(params(n).s_kernel(), right)
    for n in range(m - 1, 0, -1):
        right = _apply(params(n).t_kernel(), right)

    left = density_profile(dens, d(-L), E - c(-L), a(-L), mesh)
    for n in range(-L + 1, 1):
        left = _apply(params(n).s_kernel(), left)
    u = u_matrix if u_matrix is not None else u_operator(mesh).matrix
    left = GridFunction(mesh, u @ left.values)
    return right.inner(left)


def energy_rule(config: ModelConfig, panels: int, nodes: int = NODES_PER_PANEL) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on ``Sigma_0``."""
    lo, hi = spectral_window(config)
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)[:, None]
    pts = 0.5 * (edges[:-1] + edges[1:])[:, None] + half * gx[None, :]
    return pts.ravel(), (half * gw[None, :]).ravel()


def chain_quadrature(config: ModelConfig, L: int, m: int, mesh: CellMesh, panels: int = DEFAULT_PANELS) -> float:
    """Right-hand side of the identity, including the prefactor."""
    u = u_operator(mesh).matrix
    E, w = energy_rule(config, panels)
    vals = np.array([chain_integrand(config, L, m, float(e), mesh, u) for e in E])
    return chain_prefactor(config, L, m) * float(np.sum(w * vals))


@dataclass(frozen=True)
class ChainReport:
    L: int
    m: int
    mc_mean: float
    mc_stderr: float
    samples: int
    quadrature: float
    quadrature_refined: float | None
    quadrature_tol: float
    prefactor: float
    mesh: str

    @property
    def allowance(self) -> float:
        return 3.0 * (self.mc_stderr + self.quadrature_tol)

    @property
    def slack(self) -> float:
        """``quadrature + allowance - mc``; nonnegative when the inequality holds."""
        return self.best_quadrature + self.allowance - self.mc_mean

    @property
    def best_quadrature(self) -> float:
        return self.quadrature_refined if self.quadrature_refined is not None else self.quadrature

    @property
    def inconclusive(self) -> bool:
        return not self.quadrature_tol <= QUAD_TOL_MAX

    @property
    def passed(self) -> bool:
        return (not self.inconclusive) and self.slack >= 0.0

    @property
    def verdict(self) -> str:
        return "INCONCLUSIVE" if self.inconclusive else ("PASS" if self.passed else "FAIL")


def default_chain_mesh(X: float = 200.0, h: float = 0.1) -> CellMesh:
    return CellMesh.graded(X, h, pivot=1.0, grade_from=2.0)


def rho_chain_check(
    config: ModelConfig,
    L: int,
    m: int,
    mesh: CellMesh | None = None,
    panels: int = DEFAULT_PANELS,
    samples: int = DEFAULT_SAMPLES,
    refine: bool = True,
    workers: int = 1,
) -> ChainReport:
    """Compare Monte Carlo ``rho_L(m, 0)`` with the operator-chain quadrature.

    The quadrature tolerance is the change under ``(X, h, panels) -> (2X, h/2, 2 panels)``.
    """
    if L not in (1, 2):
        raise ValueError("chain check supports L in {1, 2}")
    if not 1 <= m <= L:
        raise ValueError(f"m must lie in [1, {L}]")
    mesh = mesh or default_chain_mesh()
    cfg = ModelConfig(config.density, config.a_spec, config.c_spec, config.d_spec, L, config.master_seed, samples)
    if config.density.mass == 0.0:
        # null measure: the expectation vanishes identically
        mc_mean, mc_err = 0.0, 0.0
    else:
        table = monte_carlo_correlator(cfg, 0, [m], workers=workers)
        mc_mean, mc_err = float(table.mean[0]), float(table.stderr[0])
    quad = chain_quadrature(cfg, L, m, mesh, panels)
    refined = None
    tol = 0.0
    if refine:
        refined = chain_quadrature(cfg, L, m, mesh.refined(), 2 * panels)
        tol = abs(refined - quad)
    return ChainReport(L, m, mc_mean, mc_err, samples, quad, refined, tol, chain_prefactor(cfg, L, m), mesh.describe())
