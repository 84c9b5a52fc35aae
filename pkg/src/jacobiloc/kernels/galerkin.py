"""Cell-averaged (Galerkin) matrices of the integral kernels.

For a kernel ``k`` and meshes ``out``/``inp`` the matrix entry is
``M[i, j] = |c_i|^-1 int_{c_i} int_{c_j} k(x, y) dy dx``, so that
``(M f)_i`` is the average over ``c_i`` of ``K f`` for ``f`` piecewise constant.
This is ``P K P`` with ``P`` the averaging projection, a contraction on every
``L^p``, so discrete norms never exceed the continuum norms.

Supported kernels all have the form ``coef * r_d(alpha - A x - B w(y)) * |y|^-q``
with ``r_d(z) = d^-1 r(z/d)`` and ``w(y) = 1/y`` (reciprocal) or ``w(y) = y``
(shift). The ``x`` integral is done exactly with the CDF of ``r``; the ``y``
integral by Gauss-Legendre between the points where the integrand has kinks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..model import SingleSiteDensity
from ..tridiag import njit
from .grid import CellMesh

GL_NODES = 8
_KIND_CODES = {"uniform": 0, "triangular": 1, "bump": 2, "piecewise": 3}


@njit(cache=True)
def _cdf(kind, lo, hi, breaks, cum, heights, z):
    if z <= lo:
        return 0.0
    if z >= hi:
        # total mass; only piecewise test doubles may carry mass other than 1
        return cum[cum.shape[0] - 1] if kind == 3 else 1.0
    if kind == 0:
        return (z - lo) / (hi - lo)
    w = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    if kind == 1:
        u = (z - mid) / w
        if u <= 0.0:
            return 0.5 * (1.0 + u) ** 2
        return 1.0 - 0.5 * (1.0 - u) ** 2
    if kind == 2:
        s = z - mid
        return (s + w + (w / np.pi) * np.sin(np.pi * s / w)) / (2.0 * w)
    k = 0
    while k < heights.shape[0] - 1 and z >= breaks[k + 1]:
        k += 1
    return cum[k] + heights[k] * (z - breaks[k])


@njit(cache=True)
def _assemble(x_edges, w_lo, w_hi, col_of, istart, istop, reciprocal, q,
              alpha, A, B, coef, d, kind, lo, hi, breaks, cum, heights, kinks,
              gl_x, gl_w, rows, cols, vals):
    n = 0
    npts = kinks.shape[0] * 2 + 2
    pts = np.empty(npts)
    for jj in range(w_lo.shape[0]):
        for i in range(istart[jj], istop[jj]):
            x1 = x_edges[i]
            x2 = x_edges[i + 1]
            e1 = (alpha - A * x2 - d * hi) / B
            e2 = (alpha - A * x1 - d * lo) / B
            a_ = max(min(e1, e2), w_lo[jj])
            b_ = min(max(e1, e2), w_hi[jj])
            if not b_ > a_:
                continue
            m = 0
            pts[m] = a_
            m += 1
            pts[m] = b_
            m += 1
            for xe in (x1, x2):
                for kb in range(kinks.shape[0]):
                    p = (alpha - A * xe - d * kinks[kb]) / B
                    if a_ < p < b_:
                        pts[m] = p
                        m += 1
            seg = np.sort(pts[:m])
            total = 0.0
            for s in range(m - 1):
                pa = seg[s]
                pb = seg[s + 1]
                if not pb > pa:
                    continue
                if reciprocal:
                    sign = 1.0 if pa > 0 else -1.0
                    sa = np.log(abs(pa))
                    sb = np.log(abs(pb))
                else:
                    sign = 1.0
                    sa = pa
                    sb = pb
                half = 0.5 * (sb - sa)
                mid = 0.5 * (sb + sa)
                acc = 0.0
                for g in range(gl_x.shape[0]):
                    t = mid + half * gl_x[g]
                    if reciprocal:
                        w = sign * np.exp(t)
                        jac = abs(w) ** (q - 1.0)
                    else:
                        w = t
                        jac = 1.0
                    base = alpha - B * w
                    f = _cdf(kind, lo, hi, breaks, cum, heights, (base - A * x1) / d) - _cdf(
                        kind, lo, hi, breaks, cum, heights, (base - A * x2) / d)
                    acc += gl_w[g] * f * jac
                total += abs(half) * acc
            if total != 0.0:
                rows[n] = i
                cols[n] = col_of[jj]
                vals[n] = coef * total / (A * (x2 - x1))
                n += 1
    return n


@dataclass(frozen=True)
class KernelSpec:
    """``coef * r_d(alpha - A x - B w(y)) * |y|^-q``; ``w(y) = 1/y`` when ``reciprocal``."""

    density: SingleSiteDensity
    d: float
    alpha: float
    A: float
    B: float
    coef: float
    q: int = 0
    reciprocal: bool = True

    def __post_init__(self):
        if self.A <= 0 or self.coef < 0 or self.d <= 0:
            raise ValueError("kernel needs A > 0, coef >= 0, d > 0")
        if self.reciprocal and self.B <= 0:
            raise ValueError("reciprocal kernel needs B > 0")
        if not self.reciprocal and (self.q != 0 or self.B == 0):
            raise ValueError("shift kernel needs q = 0 and B != 0")

    def column_mass(self, inp: CellMesh) -> np.ndarray:
        """``int_{c_j} int_R k(x, y) dx dy`` (``inf`` where divergent)."""
        edges = inp.edges
        scale = self.coef / self.A
        if self.q == 0:
            return scale * np.diff(edges)
        lo, hi = edges[:-1], edges[1:]
        out = np.full(lo.size, np.inf)
        same = (lo > 0) | (hi < 0)
        out[same] = scale * np.abs(np.log(hi[same] / lo[same]))
        return out


def _density_arrays(dens: SingleSiteDensity):
    if dens.kind == "piecewise":
        b = np.asarray(dens.breaks, dtype=float)
        h = np.asarray(dens.heights, dtype=float)
    else:
        b = np.array([dens.lo, dens.hi])
        h = np.zeros(1)
    cum = np.concatenate(([0.0], np.cumsum(h * np.diff(b))))
    return _KIND_CODES[dens.kind], float(dens.lo), float(dens.hi), b, cum, h, np.asarray(dens.breakpoints, float)


def _input_cells(kernel: KernelSpec, inp: CellMesh, columns=None):
    """Input cells in the ``w`` variable, with the cell through 0 split in two."""
    e = inp.edges
    lo, hi, col = [], [], []
    for j in (range(inp.size) if columns is None else columns):
        y1, y2 = e[j], e[j + 1]
        parts = [(y1, 0.0), (0.0, y2)] if (y1 < 0 < y2 and kernel.reciprocal) else [(y1, y2)]
        for a, b in parts:
            if kernel.reciprocal:
                # 1/y decreases on each half-line; 1/0 is -inf from the left, +inf from the right
                lo.append(-np.inf if b == 0 else 1.0 / b)
                hi.append(np.inf if a == 0 else 1.0 / a)
            else:
                lo.append(a)
                hi.append(b)
            col.append(j)
    return np.array(lo), np.array(hi), np.array(col, dtype=np.int64)


def assemble(kernel: KernelSpec, out: CellMesh, inp: CellMesh, nodes: int = GL_NODES, columns=None) -> sp.csr_matrix:
    """Sparse Galerkin matrix of ``kernel`` from ``inp`` cells to ``out`` cells.

    ``columns`` restricts the work to those input cells (other columns are zero).
    """
    kind, lo, hi, breaks, cum, heights, kinks = _density_arrays(kernel.density)
    x = out.edges
    w_lo, w_hi, col_of = _input_cells(kernel, inp, columns)
    # support of the kernel row i in the w variable: between e_lo[i] and e_hi[i]
    a1 = (kernel.alpha - kernel.A * x[1:] - kernel.d * hi) / kernel.B
    a2 = (kernel.alpha - kernel.A * x[:-1] - kernel.d * lo) / kernel.B
    s_lo, s_hi = np.minimum(a1, a2), np.maximum(a1, a2)
    if kernel.B > 0:
        # both ends decrease with i
        istart = np.searchsorted(-s_lo, -w_hi, side="right")
        istop = np.searchsorted(-s_hi, -w_lo, side="left")
    else:
        istart = np.searchsorted(s_hi, w_lo, side="right")
        istop = np.searchsorted(s_lo, w_hi, side="left")
    istop = np.maximum(istop, istart)
    count = int(np.sum(istop - istart))
    rows = np.empty(count, dtype=np.int64)
    cols = np.empty(count, dtype=np.int64)
    vals = np.empty(count)
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    n = _assemble(x, w_lo, w_hi, col_of, istart.astype(np.int64), istop.astype(np.int64),
                  kernel.reciprocal, float(kernel.q), float(kernel.alpha), float(kernel.A),
                  float(kernel.B), float(kernel.coef), float(kernel.d), kind, lo, hi,
                  breaks, cum, heights, kinks, gx, gw, rows, cols, vals)
    return sp.csr_matrix((vals[:n], (rows[:n], cols[:n])), shape=(out.size, inp.size))


def reflection_matrix(out: CellMesh, inp: CellMesh, kappa: float, scale: float) -> sp.csr_matrix:
    """Galerkin matrix of ``f -> scale |x|^-1 f(kappa / x)``.

    The line is cut at every output edge and every preimage of an input edge;
    each elementary segment couples one output cell with one input cell and
    contributes ``|log(s2/s1)|``.
    """
    if kappa == 0:
        raise ValueError("kappa must be nonzero")
    ie = inp.edges
    pre = kappa / ie[ie != 0]
    cuts = np.unique(np.concatenate([out.edges, pre, [0.0]]))
    cuts = cuts[(cuts >= out.lo) & (cuts <= out.hi)]
    s1, s2 = cuts[:-1], cuts[1:]
    keep = (s1 >= 0) | (s2 <= 0)  # never straddle 0 (0 is a cut)
    s1, s2 = s1[keep], s2[keep]
    nz = (s1 != 0) & (s2 != 0)
    s1, s2 = s1[nz], s2[nz]
    mid = 0.5 * (s1 + s2)
    ymid = kappa / mid
    inside = (ymid > inp.lo) & (ymid < inp.hi)
    s1, s2, mid, ymid = s1[inside], s2[inside], mid[inside], ymid[inside]
    i = np.searchsorted(out.edges, mid, side="right") - 1
    j = np.searchsorted(inp.edges, ymid, side="right") - 1
    vals = scale * np.abs(np.log(s2 / s1)) / out.widths[i]
    return sp.csr_matrix((vals, (i, j)), shape=(out.size, inp.size))
