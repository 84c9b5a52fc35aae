"""Finite-volume truncations ``J^(L)`` and their full eigensystems."""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .model import JacobiSample

try:
    from numba import njit
except ImportError:  # pragma: no cover - pure-Python fallback is slow but exact
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

MAX_SWEEPS = 50
ORTHO_TOL = 1e-10
RESIDUAL_TOL = 1e-10


class EigenSolverError(RuntimeError):
    """QL iteration failed to converge; ``dump_path`` holds the offending matrix."""

    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message if dump_path is None else f"{message} (matrix saved to {dump_path})")
        self.dump_path = dump_path


class InvariantViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class Truncation:
    diag: np.ndarray
    offdiag: np.ndarray
    L: int

    @property
    def size(self) -> int:
        return self.diag.size

    def index(self, n: int) -> int:
        if not -self.L <= n <= self.L:
            raise IndexError(f"site {n} outside window [-{self.L}, {self.L}]")
        return n + self.L

    def matrix(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)


@dataclass(frozen=True)
class EigenSystem:
    """Ascending eigenvalues and orthonormal eigenvectors (columns) of a truncation."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    L: int

    def index(self, n: int) -> int:
        if not -self.L <= n <= self.L:
            raise IndexError(f"site {n} outside window [-{self.L}, {self.L}]")
        return n + self.L

    def row(self, n: int) -> np.ndarray:
        """``(phi_k(n))_k``."""
        return self.eigenvectors[self.index(n)]


def build_truncation(sample: JacobiSample) -> Truncation:
    diag = np.asarray(sample.b, dtype=float).copy()
    off = np.asarray(sample.a, dtype=float).copy()
    if diag.size != 2 * sample.L + 1 or off.size != 2 * sample.L:
        raise ValueError("sample arrays do not match window size")
    if np.any(off <= 0):
        raise ValueError("off-diagonal entries must be positive")
    return Truncation(diag=diag, offdiag=off, L=sample.L)


@njit(cache=True)
def _tql(d, e, z, max_sweeps):
    # Implicit-shift QL on a symmetric tridiagonal matrix (d diagonal, e[i]
    # couples i and i+1, e[n-1] = 0). Rotations are accumulated into z.
    n = d.shape[0]
    eps = 2.220446049250313e-16
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            if it == max_sweeps:
                return l
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                for k in range(n):
                    f = z[k, i + 1]
                    z[k, i + 1] = s * z[k, i] + c * f
                    z[k, i] = c * z[k, i] - s * f
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


def _dump(t: Truncation) -> str:
    fd, path = tempfile.mkstemp(prefix="jacobiloc-ql-", suffix=".npz")
    os.close(fd)
    np.savez(path, diag=t.diag, offdiag=t.offdiag, L=t.L)
    return path


def eigen_decompose(t: Truncation, check: bool = True) -> EigenSystem:
    """Full eigensystem by implicit-shift QL.

    Eigenvectors are signed so their first non-negligible component is
    positive. With ``check`` the orthonormality, residual and strict-ordering
    invariants are asserted.
    """
    n = t.size
    d = t.diag.astype(float).copy()
    e = np.zeros(n)
    e[: n - 1] = t.offdiag
    z = np.eye(n)
    failed = _tql(d, e, z, MAX_SWEEPS)
    if failed >= 0:
        raise EigenSolverError(f"QL did not converge for eigenvalue {failed} after {MAX_SWEEPS} sweeps", _dump(t))
    order = np.argsort(d, kind="stable")
    w = d[order]
    v = z[:, order]
    first = np.argmax(np.abs(v) > 1e-12 * np.max(np.abs(v), axis=0), axis=0)
    signs = np.sign(v[first, np.arange(n)])
    signs[signs == 0] = 1.0
    v = v * signs
    es = EigenSystem(eigenvalues=w, eigenvectors=v, L=t.L)
    if check:
        check_eigensystem(t, es)
    return es


def check_eigensystem(t: Truncation, es: EigenSystem) -> None:
    v = es.eigenvectors
    w = es.eigenvalues
    n = w.size
    ortho = np.max(np.abs(v.T @ v - np.eye(n)))
    if ortho > ORTHO_TOL:
        raise InvariantViolation(f"eigenvectors not orthonormal: {ortho:.3e}")
    jnorm = np.max(np.abs(t.diag)) + 2.0 * (np.max(t.offdiag) if t.offdiag.size else 0.0)
    jv = t.diag[:, None] * v
    if n > 1:
        jv[:-1] += t.offdiag[:, None] * v[1:]
        jv[1:] += t.offdiag[:, None] * v[:-1]
    resid = np.max(np.linalg.norm(jv - v * w, axis=0))
    if resid > RESIDUAL_TOL * max(jnorm, 1.0):
        raise InvariantViolation(f"eigen-residual {resid:.3e} exceeds tolerance")
    if n > 1 and not np.all(np.diff(w) > 0):
        raise InvariantViolation("eigenvalues are not strictly increasing")


def time_amplitude(es: EigenSystem, m: int, n: int, t: float) -> complex:
    """``<delta_m, exp(-i t J) delta_n>``."""
    pm = es.row(m)
    pn = es.row(n)
    return complex(np.sum(np.exp(-1j * t * es.eigenvalues) * pm * pn))


def amplitude_table(es: EigenSystem, n: int, times) -> np.ndarray:
    """``<delta_m, exp(-i t J) delta_n>`` for all sites ``m`` (rows) and ``times`` (columns)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    phases = np.exp(-1j * np.outer(es.eigenvalues, times))
    weights = es.eigenvectors * es.row(n)[None, :]
    return weights @ phases
