"""Eigenfunction correlators, sup-in-time amplitudes, decay fits and tail diagnostics."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import ModelConfig, SequenceSpec, SingleSiteDensity, sample_operator
from .tridiag import EigenSystem, amplitude_table, build_truncation, eigen_decompose

logger = logging.getLogger(__name__)

DEFAULT_T_MAX = 1e3
DEFAULT_T_POINTS = 10_000
# rounding allowance for |sum z_k| <= sum |z_k| evaluated in floating point
ROUNDING_SLACK = 1e-12


def default_t_grid(t_max: float = DEFAULT_T_MAX, points: int = DEFAULT_T_POINTS) -> np.ndarray:
    return np.linspace(0.0, t_max, points)


def rho_single(es: EigenSystem, m: int, n: int) -> float:
    """``sum_k |phi_k(m)| |phi_k(n)|`` for one realization."""
    return float(np.sum(np.abs(es.row(m)) * np.abs(es.row(n))))


def rho_row(es: EigenSystem, n: int) -> np.ndarray:
    """``rho_single(es, m, n)`` for every site ``m = -L..L``."""
    return np.abs(es.eigenvectors) @ np.abs(es.row(n))


def sampled_sup_amplitude(es: EigenSystem, m: int, n: int, t_grid) -> float:
    """Grid maximum of ``|<delta_m, exp(-itJ) delta_n>|``; a lower bound for the sup over all t."""
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t_grid.size == 0:
        raise ValueError("t_grid must be nonempty")
    pm = es.row(m) * es.row(n)
    best = 0.0
    for chunk in np.array_split(t_grid, max(1, t_grid.size // 2048)):
        amp = np.exp(-1j * np.outer(chunk, es.eigenvalues)) @ pm
        best = max(best, float(np.max(np.abs(amp))))
    return best


def sup_amplitude_row(es: EigenSystem, n: int, t_grid) -> np.ndarray:
    """:func:`sampled_sup_amplitude` for all sites ``m`` at once."""
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t_grid.size == 0:
        raise ValueError("t_grid must be nonempty")
    best = np.zeros(es.eigenvalues.size)
    for chunk in np.array_split(t_grid, max(1, t_grid.size // 1024)):
        best = np.maximum(best, np.max(np.abs(amplitude_table(es, n, chunk)), axis=1))
    return best


@dataclass(frozen=True)
class CorrelatorTable:
    """Monte Carlo estimate of ``rho_L(m, n_ref)`` over ``N`` samples."""

    n_ref: int
    m: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    min: np.ndarray
    max: np.ndarray
    N: int
    L: int
    fingerprint: str = ""

    def value(self, m: int) -> float:
        return float(self.mean[np.flatnonzero(self.m == m)[0]])

    def rows(self):
        for i in range(self.m.size):
            yield (int(self.m[i]), self.n_ref, self.mean[i], self.stderr[i], self.min[i], self.max[i])


def decompose_sample(config: ModelConfig, index: int) -> EigenSystem:
    return eigen_decompose(build_truncation(sample_operator(config, index)))


def _rho_rows(args) -> np.ndarray:
    config, indices, n_refs, cols = args
    out = np.empty((len(indices), len(n_refs), len(cols)))
    for i, idx in enumerate(indices):
        es = decompose_sample(config, idx)
        for j, n in enumerate(n_refs):
            out[i, j] = rho_row(es, n)[cols]
    return out


def sample_matrix(config: ModelConfig, n_refs, m_values, workers: int = 1) -> np.ndarray:
    """Per-sample correlator values, shape ``(N, len(n_refs), len(m_values))``, in sample order."""
    cols = np.asarray(m_values, dtype=int) + config.L
    n_refs = list(n_refs)
    chunks = [list(c) for c in np.array_split(np.arange(config.samples), max(1, workers * 4)) if c.size]
    jobs = [(config, c, n_refs, cols) for c in chunks]
    if workers <= 1:
        parts = [_rho_rows(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_rho_rows, jobs))
    return np.concatenate(parts, axis=0)


def table_from_samples(values: np.ndarray, n_ref: int, m_values, L: int, fingerprint: str = "") -> CorrelatorTable:
    values = np.asarray(values, dtype=float)
    N = values.shape[0]
    mean = values.mean(axis=0)
    stderr = values.std(axis=0, ddof=1) / np.sqrt(N) if N > 1 else np.zeros_like(mean)
    table = CorrelatorTable(
        n_ref=n_ref,
        m=np.asarray(m_values, dtype=int),
        mean=mean,
        stderr=stderr,
        min=values.min(axis=0),
        max=values.max(axis=0),
        N=N,
        L=L,
        fingerprint=fingerprint,
    )
    if np.any(table.min < -ROUNDING_SLACK) or np.any(table.max > 1.0 + 1e-10):
        raise ValueError("correlator entries left [0, 1]")
    return table


def monte_carlo_correlator(config: ModelConfig, n_ref: int, m_range, workers: int = 1) -> CorrelatorTable:
    """Sample-mean estimate of ``rho_L(m, n_ref)`` for ``m`` in ``m_range``.

    The reduction runs in sample-index order, so the table does not depend
    on ``workers``.
    """
    if n_ref not in (0, 1):
        raise ValueError("n_ref must be 0 or 1")
    if config.samples < 1:
        raise ValueError("need at least one sample")
    m_values = np.asarray(list(m_range), dtype=int)
    if m_values.size == 0 or np.any(np.abs(m_values) > config.L):
        raise ValueError(f"m_range must be a nonempty subset of [-{config.L}, {config.L}]")
    vals = sample_matrix(config, [n_ref], m_values, workers)[:, 0, :]
    return table_from_samples(vals, n_ref, m_values, config.L, config.fingerprint())


@dataclass(frozen=True)
class DecayFit:
    """Log-domain least-squares fit of a correlator table.

    exponential: ``mean ~ C exp(-gamma |m - n_ref|)``;
    stretched: ``mean ~ C |m - n_ref|^(zeta/2) exp(-gamma |m - n_ref|^(1 - 2 zeta))``.
    ``tau`` is the slope of a power-law fit ``mean ~ C'' |m|^-tau`` over the same points.
    """

    kind: str
    C: float
    gamma: float
    zeta: float
    m_min: int
    m_max: int
    r2: float
    points: int
    tau: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "C": self.C, "gamma": self.gamma, "zeta": self.zeta,
            "m_min": self.m_min, "m_max": self.m_max, "r2": self.r2, "points": self.points, "tau": self.tau,
        }


def _linfit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    A = np.column_stack([np.ones_like(x), x])
    (c0, c1), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (c0 + c1 * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(c0), float(c1), min(1.0, max(0.0, r2))


def fit_decay(
    table: CorrelatorTable,
    kind: str = "exponential",
    zeta: float | None = None,
    m_min: int = 5,
    m_max: int = 30,
) -> DecayFit:
    dist = np.abs(table.m - table.n_ref)
    usable = (dist >= m_min) & (dist <= m_max) & (table.mean > 0) & (table.mean > 2.0 * table.stderr)
    if np.count_nonzero(usable) < 4:
        raise ValueError(f"only {np.count_nonzero(usable)} usable points in [{m_min}, {m_max}]; need 4")
    r = dist[usable].astype(float)
    y = np.log(table.mean[usable])
    _, slope_tau, _ = _linfit(np.log(r), y)
    if kind == "exponential":
        c0, c1, r2 = _linfit(r, y)
        return DecayFit("exponential", float(np.exp(c0)), -c1, 0.0, m_min, m_max, r2, r.size, -slope_tau)
    if kind == "stretched":
        if zeta is None or not 0.0 <= zeta < 0.5:
            raise ValueError("stretched fit needs 0 <= zeta < 1/2")
        c0, c1, r2 = _linfit(r ** (1.0 - 2.0 * zeta), y - 0.5 * zeta * np.log(r))
        return DecayFit("stretched", float(np.exp(c0)), -c1, float(zeta), m_min, m_max, r2, r.size, -slope_tau)
    raise ValueError(f"unknown fit kind {kind!r}")


def tail_mass(es: EigenSystem, n: int, M: int) -> float:
    """``sum_{|m| >= M} rho(m, n)^2`` over the window."""
    if M > es.L or M < 0:
        raise ValueError(f"M = {M} must lie in [0, {es.L}]")
    rho = rho_row(es, n)
    sites = np.arange(-es.L, es.L + 1)
    return float(np.sum(rho[np.abs(sites) >= M] ** 2))


def tail_profile(es: EigenSystem, n: int) -> np.ndarray:
    """``tail_mass(es, n, M)`` for ``M = 0..L``."""
    rho2 = rho_row(es, n) ** 2
    L = es.L
    by_radius = np.zeros(L + 1)
    np.add.at(by_radius, np.abs(np.arange(-L, L + 1)), rho2)
    return np.cumsum(by_radius[::-1])[::-1]


def epsilon_radius(es: EigenSystem, n: int, eps: float) -> int | None:
    """Smallest ``M`` in ``[0, L]`` with ``tail_mass < eps``; ``None`` if never reached."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    hits = np.flatnonzero(tail_profile(es, n) < eps)
    return int(hits[0]) if hits.size else None


def perturb_construction(
    a_seq: SequenceSpec,
    b_seq: SequenceSpec,
    eps: float,
    density: SingleSiteDensity,
    L: int = 50,
    master_seed: int = 0,
    samples: int = 200,
) -> ModelConfig:
    """Random family around ``J(a, b)``: same ``a``, diagonal ``b + eta`` with ``|eta| <= M < eps``.

    The density is used as given; scale it (``density.scaled``) so that its
    half-width is below ``eps``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if density.half_width >= eps:
        raise ValueError(f"density half-width {density.half_width} must be < eps = {eps}; rescale the density")
    return ModelConfig(
        density=density,
        a_spec=a_seq,
        c_spec=b_seq,
        d_spec=SequenceSpec.constant(1.0),
        L=L,
        master_seed=master_seed,
        samples=samples,
    )
