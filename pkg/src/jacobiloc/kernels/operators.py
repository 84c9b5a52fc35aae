"""The integral operators ``U``, ``S^(n)``, ``T^(n)``, ``Ubar^(n)`` and ``K^(n)`` on cell meshes.

With ``alpha = E - c_m`` the kernels are

* ``S^(n)``, ``n > 0``: ``a_{n-1} r_n(alpha - a_{n-1} x - a_n / y)``
* ``S^(0)``: ``a_0 r_0(alpha - a_0 x - a_{-1} / y)``
* ``S^(n)``, ``n < 0``: ``a_n r_n(alpha - a_n x - a_{n-1} / y)``
* ``T^(n)``, ``n > 0``: ``sqrt(a_{n-1} a_n) r_n(alpha - a_{n-1} x - a_n / y) |y|^-1``

and ``T^(n) = a_{n-1} K^(n) Ubar^(n)`` with ``K^(n)`` the convolution by
``r_n(alpha - a_{n-1} x)`` and ``Ubar^(n) f(x) = sqrt(c) |x|^-1 f(-c/x)``,
``c = a_n / a_{n-1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..model import ModelConfig, SequenceSpec, SingleSiteDensity
from .galerkin import KernelSpec, assemble, reflection_matrix
from .grid import CellMesh, GridFunction

ESCAPE_TOL = 1e-6


class TruncationError(RuntimeError):
    """Too much of the output left the mesh window; enlarge ``X``."""

    def __init__(self, operator: str, escaped: float):
        super().__init__(f"{operator}: fraction {escaped:.3e} of the output mass left the window (limit {ESCAPE_TOL:g})")
        self.escaped = escaped


@dataclass(frozen=True)
class KernelParams:
    """Site ``n``, shifted energy ``alpha``, and the model sequences."""

    n: int
    alpha: float
    a: SequenceSpec
    d: SequenceSpec
    density: SingleSiteDensity
    E: float | None = None

    @classmethod
    def from_config(cls, config: ModelConfig, n: int, E: float, m: int | None = None) -> "KernelParams":
        """Parameters at energy ``E`` shifted by ``c_m`` (``m`` defaults to ``n``)."""
        shift = float(config.c_spec(n if m is None else m))
        return cls(n, E - shift, config.a_spec, config.d_spec, config.density, E)

    def _a(self, k: int) -> float:
        return float(self.a(k))

    @property
    def d_n(self) -> float:
        return float(self.d(self.n))

    def s_kernel(self) -> KernelSpec:
        n = self.n
        if n > 0:
            A, B = self._a(n - 1), self._a(n)
        elif n == 0:
            A, B = self._a(0), self._a(-1)
        else:
            A, B = self._a(n), self._a(n - 1)
        return KernelSpec(self.density, self.d_n, self.alpha, A, B, coef=A, q=0)

    def t_kernel(self) -> KernelSpec:
        if self.n <= 0:
            raise ValueError("T^(n) is defined for n > 0 only")
        A, B = self._a(self.n - 1), self._a(self.n)
        return KernelSpec(self.density, self.d_n, self.alpha, A, B, coef=math.sqrt(A * B), q=1)

    def k_kernel(self) -> KernelSpec:
        """Convolution ``f -> int r_n(alpha - a_{n-1} x + a_{n-1} y) f(y) dy``."""
        A = self._a(self.n - 1)
        return KernelSpec(self.density, self.d_n, self.alpha, A, -A, coef=1.0, q=0, reciprocal=False)

    @property
    def ubar_ratio(self) -> float:
        """``c = a_n / a_{n-1}``."""
        return self._a(self.n) / self._a(self.n - 1)

    def s_bound_12(self) -> float:
        """``sqrt(d_n^-1 a ||r||_inf)`` with ``a`` the branch coefficient."""
        spec = self.s_kernel()
        return math.sqrt(spec.coef * self.density.bound / self.d_n)

    def describe(self) -> str:
        return f"n={self.n}, alpha={self.alpha:.17g}"


@dataclass
class DiscreteOperator:
    """Galerkin matrix between two meshes plus the mass bookkeeping for escape checks."""

    name: str
    matrix: sp.csr_matrix
    out_mesh: CellMesh
    in_mesh: CellMesh
    column_mass: np.ndarray | None = None
    _weighted: sp.csr_matrix | None = field(default=None, repr=False)

    def __call__(self, f: GridFunction, check_escape: bool = True) -> GridFunction:
        if f.mesh.size != self.in_mesh.size:
            raise ValueError(f"{self.name}: input lives on a different mesh")
        g = self.matrix @ f.values
        if check_escape and self.column_mass is not None:
            esc = self.escape_fraction(f)
            if esc > ESCAPE_TOL:
                raise TruncationError(self.name, esc)
        return GridFunction(self.out_mesh, g)

    def captured_mass(self) -> np.ndarray:
        """``int_{window} int_{c_j} k`` per input cell."""
        w = self.out_mesh.widths
        return np.asarray(self.matrix.multiply(w[:, None]).sum(axis=0)).ravel()

    def escape_fraction(self, f: GridFunction) -> float:
        """Share of ``int |K f|`` (for ``|f|``) that lands outside the output window."""
        total = self.column_mass
        af = np.abs(f.values)
        used = af > 0
        if not np.any(used):
            return 0.0
        if np.any(~np.isfinite(total[used])):
            return 1.0
        af, total = af[used], total[used]
        denom = float(np.sum(af * total))
        if denom == 0.0:
            return 0.0
        lost = float(np.sum(af * np.maximum(total - self.captured_mass()[used], 0.0)))
        return lost / denom

    def weighted(self) -> sp.csr_matrix:
        """Matrix in the orthonormal cell basis, so Euclidean norms are ``L^2`` norms."""
        if self._weighted is None:
            so = np.sqrt(self.out_mesh.widths)
            si = np.sqrt(self.in_mesh.widths)
            self._weighted = self.matrix.multiply(so[:, None]).multiply(1.0 / si[None, :]).tocsr()
        return self._weighted


def _kernel_op(name: str, spec: KernelSpec, out: CellMesh, inp: CellMesh) -> DiscreteOperator:
    return DiscreteOperator(name, assemble(spec, out, inp), out, inp, spec.column_mass(inp))


def s_operator(p: KernelParams, mesh: CellMesh, out: CellMesh | None = None) -> DiscreteOperator:
    return _kernel_op(f"S^({p.n})[{p.describe()}]", p.s_kernel(), out or mesh, mesh)


def t_operator(p: KernelParams, mesh: CellMesh, out: CellMesh | None = None) -> DiscreteOperator:
    return _kernel_op(f"T^({p.n})[{p.describe()}]", p.t_kernel(), out or mesh, mesh)


def k_operator(p: KernelParams, mesh: CellMesh, out: CellMesh | None = None) -> DiscreteOperator:
    return _kernel_op(f"K^({p.n})[{p.describe()}]", p.k_kernel(), out or mesh, mesh)


def u_operator(mesh: CellMesh, out: CellMesh | None = None) -> DiscreteOperator:
    out = out or mesh
    return DiscreteOperator("U", reflection_matrix(out, mesh, 1.0, 1.0), out, mesh)


def ubar_operator(p: KernelParams, mesh: CellMesh, out: CellMesh | None = None) -> DiscreteOperator:
    out = out or mesh
    c = p.ubar_ratio
    return DiscreteOperator(f"Ubar^({p.n})", reflection_matrix(out, mesh, -c, math.sqrt(c)), out, mesh)


def _zero_cells(mesh: CellMesh) -> tuple[int, ...]:
    e = mesh.edges
    return tuple(int(i) for i in np.flatnonzero((e[:-1] <= 0) & (e[1:] >= 0)))


def apply_U(f: GridFunction) -> GridFunction:
    """``|x|^-1 f(1/x)``, zero outside the window; the cell at the origin is flagged."""
    g = u_operator(f.mesh)(f)
    return g.with_values(g.values, _zero_cells(f.mesh))


def apply_Ubar(p: KernelParams, f: GridFunction) -> GridFunction:
    g = ubar_operator(p, f.mesh)(f)
    return g.with_values(g.values, _zero_cells(f.mesh))


def apply_S(p: KernelParams, f: GridFunction, check_escape: bool = True) -> GridFunction:
    return s_operator(p, f.mesh)(f, check_escape)


def apply_T(p: KernelParams, f: GridFunction, check_escape: bool = True) -> GridFunction:
    return t_operator(p, f.mesh)(f, check_escape)


def apply_K(p: KernelParams, f: GridFunction, check_escape: bool = True) -> GridFunction:
    return k_operator(p, f.mesh)(f, check_escape)


def apply_T_factored(p: KernelParams, f: GridFunction) -> GridFunction:
    """``a_{n-1} K^(n) Ubar^(n) f``: the second path to ``T^(n) f``."""
    a_prev = float(p.a(p.n - 1))
    g = apply_K(p, apply_Ubar(p, f), check_escape=False)
    return g.with_values(a_prev * g.values)


def density_profile(density: SingleSiteDensity, d: float, shift: float, slope: float, mesh: CellMesh) -> GridFunction:
    """Cell averages of ``x -> r_d(shift - slope x)`` (``slope > 0``), exact via the CDF."""
    if slope <= 0:
        raise ValueError("slope must be positive")
    x1, x2 = mesh.edges[:-1], mesh.edges[1:]
    vals = (density.cdf((shift - slope * x1) / d) - density.cdf((shift - slope * x2) / d)) / (slope * (x2 - x1))
    return GridFunction(mesh, vals)
