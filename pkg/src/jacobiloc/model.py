"""Random Jacobi operator family: single-site densities, coefficient sequences, sampling."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Gauss-Legendre rule used for all piecewise integrals against a density.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)

DENSITY_KINDS = ("uniform", "triangular", "bump", "piecewise")
SEQUENCE_KINDS = ("constant", "periodic", "list", "power")


@dataclass(frozen=True)
class SingleSiteDensity:
    """Bounded, compactly supported probability density ``r`` on ``[lo, hi]``.

    ``uniform``, ``triangular`` (symmetric tent) and ``bump`` (raised cosine) are
    determined by the support; ``piecewise`` takes ``breaks`` (K+1 increasing
    points) and ``heights`` (K values).
    """

    kind: str
    lo: float
    hi: float
    breaks: tuple[float, ...] = ()
    heights: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in DENSITY_KINDS:
            raise ValueError(f"unknown density kind {self.kind!r}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.hi <= self.lo:
            raise ValueError(f"density support must be a finite interval, got [{self.lo}, {self.hi}]")
        if self.kind == "piecewise":
            b = np.asarray(self.breaks, dtype=float)
            h = np.asarray(self.heights, dtype=float)
            if b.size < 2 or h.size != b.size - 1:
                raise ValueError("piecewise density needs len(heights) == len(breaks) - 1 >= 1")
            if np.any(np.diff(b) <= 0) or np.any(h < 0):
                raise ValueError("piecewise breaks must increase and heights be nonnegative")
            if b[0] != self.lo or b[-1] != self.hi:
                raise ValueError("piecewise breaks must start at lo and end at hi")

    # constructors -------------------------------------------------------

    @classmethod
    def uniform(cls, lo: float = -0.5, hi: float = 0.5) -> "SingleSiteDensity":
        return cls("uniform", float(lo), float(hi))

    @classmethod
    def triangular(cls, lo: float = -0.5, hi: float = 0.5) -> "SingleSiteDensity":
        return cls("triangular", float(lo), float(hi))

    @classmethod
    def bump(cls, lo: float = -0.5, hi: float = 0.5) -> "SingleSiteDensity":
        return cls("bump", float(lo), float(hi))

    @classmethod
    def piecewise(cls, breaks, heights, normalize: bool = False) -> "SingleSiteDensity":
        b = tuple(float(v) for v in breaks)
        h = np.asarray(heights, dtype=float)
        if normalize:
            total = float(np.sum(h * np.diff(b)))
            if total <= 0:
                raise ValueError("cannot normalize a density with zero mass")
            h = h / total
        dens = cls("piecewise", b[0], b[-1], b, tuple(float(v) for v in h))
        dens.check()
        return dens

    def scaled(self, factor: float) -> "SingleSiteDensity":
        """Density of ``factor * X`` for ``X ~ r`` (``factor > 0``)."""
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        if self.kind == "piecewise":
            return SingleSiteDensity(
                "piecewise", self.lo * factor, self.hi * factor,
                tuple(v * factor for v in self.breaks),
                tuple(v / factor for v in self.heights),
            )
        return SingleSiteDensity(self.kind, self.lo * factor, self.hi * factor)

    # geometry -----------------------------------------------------------

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_width(self) -> float:
        """``M = sup{|E| : E in supp r}``."""
        return max(abs(self.lo), abs(self.hi))

    @property
    def breakpoints(self) -> np.ndarray:
        """Points where the density (hence the CDF's smoothness) may break."""
        if self.kind == "triangular":
            return np.array([self.lo, self.mid, self.hi])
        if self.kind == "piecewise":
            return np.asarray(self.breaks, dtype=float)
        return np.array([self.lo, self.hi])

    @property
    def bound(self) -> float:
        """``||r||_inf``."""
        if self.kind == "uniform":
            return 1.0 / self.width
        if self.kind in ("triangular", "bump"):
            return 2.0 / self.width
        return float(max(self.heights))

    @property
    def variation(self) -> float:
        """Total variation of ``r`` on the real line."""
        if self.kind == "uniform":
            return 2.0 / self.width
        if self.kind in ("triangular", "bump"):
            return 4.0 / self.width
        h = np.concatenate(([0.0], self.heights, [0.0]))
        return float(np.sum(np.abs(np.diff(h))))

    # evaluation ---------------------------------------------------------

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        if self.kind == "uniform":
            val = np.full_like(x, 1.0 / self.width)
        elif self.kind == "triangular":
            val = (2.0 / self.width) * (1.0 - np.abs(x - self.mid) / (0.5 * self.width))
        elif self.kind == "bump":
            w = 0.5 * self.width
            val = (1.0 + np.cos(np.pi * (x - self.mid) / w)) / (2.0 * w)
        else:
            b = np.asarray(self.breaks)
            idx = np.clip(np.searchsorted(b, x, side="right") - 1, 0, len(self.heights) - 1)
            val = np.asarray(self.heights)[idx]
        return np.where(inside, np.maximum(val, 0.0), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        t = np.clip(x, self.lo, self.hi)
        if self.kind == "uniform":
            return (t - self.lo) / self.width
        if self.kind == "triangular":
            w = 0.5 * self.width
            u = (t - self.mid) / w
            return np.where(u <= 0, 0.5 * (1.0 + u) ** 2, 1.0 - 0.5 * (1.0 - u) ** 2)
        if self.kind == "bump":
            w = 0.5 * self.width
            s = t - self.mid
            return (s + w + (w / np.pi) * np.sin(np.pi * s / w)) / (2.0 * w)
        b = np.asarray(self.breaks)
        h = np.asarray(self.heights)
        cum = np.concatenate(([0.0], np.cumsum(h * np.diff(b))))
        idx = np.clip(np.searchsorted(b, t, side="right") - 1, 0, len(h) - 1)
        return cum[idx] + h[idx] * (t - b[idx])

    def ppf(self, u):
        """Inverse CDF on ``[0, 1]``."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return self.lo + u * self.width
        if self.kind == "triangular":
            w = 0.5 * self.width
            left = -1.0 + np.sqrt(2.0 * np.minimum(u, 0.5))
            right = 1.0 - np.sqrt(2.0 * (1.0 - np.maximum(u, 0.5)))
            return self.mid + w * np.where(u <= 0.5, left, right)
        if self.kind == "piecewise":
            b = np.asarray(self.breaks)
            h = np.asarray(self.heights)
            cum = np.concatenate(([0.0], np.cumsum(h * np.diff(b))))
            # side="right" lands past zero-height pieces (repeated cum values)
            idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(h) - 1)
            safe = np.where(h[idx] > 0, h[idx], 1.0)
            return np.clip(b[idx] + (u - cum[idx]) / safe, self.lo, self.hi)
        # bump: CDF is strictly increasing and smooth, bisection is enough
        lo = np.full_like(u, self.lo)
        hi = np.full_like(u, self.hi)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    # integrals ----------------------------------------------------------

    def pieces(self, min_pieces: int = 1) -> np.ndarray:
        """Smooth sub-intervals of the support as an ``(n, 2)`` array."""
        bp = self.breakpoints
        out = []
        for a, b in zip(bp[:-1], bp[1:]):
            edges = np.linspace(a, b, max(1, int(min_pieces)) + 1)
            out.extend(zip(edges[:-1], edges[1:]))
        return np.asarray(out, dtype=float)

    def quadrature(self, min_pieces: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights (density already folded in) for ``int g(x) r(x) dx``."""
        p = self.pieces(min_pieces)
        half = 0.5 * (p[:, 1] - p[:, 0])[:, None]
        nodes = 0.5 * (p[:, 1] + p[:, 0])[:, None] + half * _GL_X[None, :]
        weights = half * _GL_W[None, :] * self.pdf(nodes)
        return nodes.ravel(), weights.ravel()

    def expect(self, g: Callable[[np.ndarray], np.ndarray], min_pieces: int = 1) -> float:
        x, w = self.quadrature(min_pieces)
        return float(np.sum(w * g(x)))

    @property
    def mass(self) -> float:
        return self.expect(np.ones_like)

    def moments(self) -> tuple[float, float]:
        """First and second moments ``(int x r, int x^2 r)``."""
        return self.expect(lambda x: x), self.expect(lambda x: x * x)

    def check(self) -> None:
        m = self.mass
        if abs(m - 1.0) > 1e-9:
            raise ValueError(f"density mass is {m!r}, expected 1")

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "lo": self.lo, "hi": self.hi}
        if self.kind == "piecewise":
            out["breaks"] = list(self.breaks)
            out["heights"] = list(self.heights)
        return out


@dataclass(frozen=True)
class SequenceSpec:
    """A bounded two-sided sequence ``n -> s(n)``.

    kinds: ``constant`` (``value``), ``periodic`` (``values`` repeated with
    period ``len(values)``, ``values[0]`` at ``n = 0``), ``list`` (``values``
    for ``n = start, start+1, ...``, ``fill`` elsewhere) and ``power``
    (``min(1, C |n|^-zeta)`` with the value 1 at ``n = 0``).
    """

    kind: str = "constant"
    value: float = 1.0
    values: tuple[float, ...] = ()
    start: int = 0
    fill: float = 1.0
    C: float = 1.0
    zeta: float = 0.0

    def __post_init__(self):
        if self.kind not in SEQUENCE_KINDS:
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        if self.kind in ("periodic", "list") and not self.values:
            raise ValueError(f"{self.kind} sequence needs values")
        if self.kind == "power":
            if self.C <= 0:
                raise ValueError("power-law damping needs C > 0")
            if not 0.0 <= self.zeta < 0.5:
                raise ValueError("power-law damping needs 0 <= zeta < 1/2")

    @classmethod
    def constant(cls, value: float) -> "SequenceSpec":
        return cls("constant", value=float(value))

    @classmethod
    def periodic(cls, values) -> "SequenceSpec":
        return cls("periodic", values=tuple(float(v) for v in values))

    @classmethod
    def explicit(cls, values, start: int = 0, fill: float = 1.0) -> "SequenceSpec":
        return cls("list", values=tuple(float(v) for v in values), start=int(start), fill=float(fill))

    @classmethod
    def power(cls, C: float, zeta: float) -> "SequenceSpec":
        return cls("power", C=float(C), zeta=float(zeta))

    def __call__(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=np.int64)
        if self.kind == "constant":
            return np.full(n.shape, self.value, dtype=float)
        if self.kind == "periodic":
            v = np.asarray(self.values, dtype=float)
            return v[np.mod(n, v.size)]
        if self.kind == "list":
            v = np.asarray(self.values, dtype=float)
            k = n - self.start
            ok = (k >= 0) & (k < v.size)
            return np.where(ok, v[np.clip(k, 0, v.size - 1)], self.fill)
        absn = np.abs(n).astype(float)
        with np.errstate(divide="ignore"):
            val = np.minimum(1.0, self.C * absn ** (-self.zeta))
        return np.where(n == 0, 1.0, val)

    @property
    def sup(self) -> float:
        """``sup_n |s(n)|``."""
        if self.kind == "constant":
            return abs(self.value)
        if self.kind == "periodic":
            return float(np.max(np.abs(self.values)))
        if self.kind == "list":
            return float(max(np.max(np.abs(self.values)), abs(self.fill)))
        return 1.0

    @property
    def inf(self) -> float:
        """``inf_n s(n)``."""
        if self.kind == "constant":
            return self.value
        if self.kind == "periodic":
            return float(np.min(self.values))
        if self.kind == "list":
            return float(min(np.min(self.values), self.fill))
        return 0.0 if self.zeta > 0 else min(1.0, self.C)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "periodic":
            return {"kind": "periodic", "values": list(self.values)}
        if self.kind == "list":
            return {"kind": "list", "values": list(self.values), "start": self.start, "fill": self.fill}
        return {"kind": "power", "C": self.C, "zeta": self.zeta}


@dataclass(frozen=True)
class ModelConfig:
    density: SingleSiteDensity
    a_spec: SequenceSpec = field(default_factory=lambda: SequenceSpec.constant(1.0))
    c_spec: SequenceSpec = field(default_factory=lambda: SequenceSpec.constant(0.0))
    d_spec: SequenceSpec = field(default_factory=lambda: SequenceSpec.constant(1.0))
    L: int = 50
    master_seed: int = 0
    samples: int = 200

    def __post_init__(self):
        if self.L < 0:
            raise ValueError("L must be nonnegative")
        if self.samples < 1:
            raise ValueError("sample count must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.a_spec.inf <= 0:
            raise ValueError("off-diagonal sequence a must be bounded below by some delta > 0")
        sites = self.sites
        d = self.d_spec(sites)
        if np.any(d <= 0) or np.any(d > 1):
            raise ValueError("damping sequence d must take values in (0, 1]")

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.L, self.L + 1)

    @property
    def delta(self) -> float:
        return self.a_spec.inf

    @property
    def a_sup(self) -> float:
        return self.a_spec.sup

    @property
    def c_sup(self) -> float:
        return self.c_spec.sup

    @property
    def M(self) -> float:
        return self.density.half_width

    def scaled_density(self, n: int) -> SingleSiteDensity:
        """``r_n(x) = d_n^-1 r(x / d_n)``."""
        return self.density.scaled(float(self.d_spec(n)))

    def to_dict(self) -> dict:
        return {
            "density": self.density.to_dict(),
            "a": self.a_spec.to_dict(),
            "c": self.c_spec.to_dict(),
            "d": self.d_spec.to_dict(),
            "L": self.L,
            "master_seed": self.master_seed,
            "samples": self.samples,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class JacobiSample:
    """One realization on the window ``[-L, L]``; ``a[k]`` couples sites ``k-L`` and ``k-L+1``."""

    b: np.ndarray
    a: np.ndarray
    L: int
    sample_index: int = 0
    seed: int = 0

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.L, self.L + 1)


def sample_site(density: SingleSiteDensity, d: float, rng: np.random.Generator) -> float:
    """Draw ``eta ~ r_d`` (density ``d^-1 r(x/d)``) by inverse CDF."""
    if not 0 < d <= 1:
        raise ValueError("scale d must lie in (0, 1]")
    u = rng.random()
    if not math.isfinite(u):
        raise RuntimeError("random stream produced a non-finite value")
    return float(d * density.ppf(u))


def sample_seed(master_seed: int, sample_index: int) -> int:
    ss = np.random.SeedSequence([int(master_seed), int(sample_index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _site_key(n: int) -> int:
    # zigzag so negative sites give distinct nonnegative entropy words
    return 2 * n if n >= 0 else -2 * n - 1


def site_rng(seed: int, n: int) -> np.random.Generator:
    return np.random.default_rng([seed, _site_key(int(n))])


def sample_operator(config: ModelConfig, sample_index: int) -> JacobiSample:
    """Realization ``b(n) = c(n) + eta_n``, ``eta_n ~ r_n``.

    The draw at site ``n`` depends only on ``(master_seed, sample_index, n)``,
    so nested windows share their common sites.
    """
    if not 0 <= sample_index < config.samples:
        raise ValueError(f"sample_index {sample_index} outside [0, {config.samples})")
    seed = sample_seed(config.master_seed, sample_index)
    sites = config.sites
    d = config.d_spec(sites)
    c = config.c_spec(sites)
    eta = np.array([sample_site(config.density, float(dn), site_rng(seed, n)) for n, dn in zip(sites, d)])
    b = c + eta
    a = config.a_spec(np.arange(-config.L, config.L))
    return JacobiSample(b=b, a=a, L=config.L, sample_index=sample_index, seed=seed)


def spectral_window(config: ModelConfig) -> tuple[float, float]:
    """Interval ``Sigma_0`` containing the spectrum of every realization and truncation."""
    half = 2.0 * config.a_sup + config.M + config.c_sup
    return (-half, half)
