"""Cell meshes on a truncated real line and piecewise-constant functions on them.

A function is stored by its cell averages. Norms are the exact ``L^p`` norms
of the piecewise-constant function, which for a uniform mesh coincide with
the rectangle rule on the cell centres.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class CellMesh:
    """Strictly increasing cell edges; ``X`` and ``h`` record how the mesh was built."""

    edges: np.ndarray
    X: float
    h: float
    kind: str = "uniform"
    pivot: float = 1.0

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or e.size < 2 or not np.all(np.isfinite(e)) or np.any(np.diff(e) <= 0):
            raise ValueError("mesh edges must be finite and strictly increasing")
        if self.h <= 0 or self.X <= 0:
            raise ValueError("mesh needs h > 0 and X > 0")
        object.__setattr__(self, "edges", e)

    @classmethod
    def uniform(cls, X: float, h: float) -> "CellMesh":
        """Cells of width ``h`` centred at ``x_j = -X + j h``; the count is odd so 0 is a centre."""
        if h <= 0 or X <= 0:
            raise ValueError("mesh needs h > 0 and X > 0")
        half = int(round(X / h))
        if half < 1 or abs(half * h - X) > 1e-9 * X:
            raise ValueError(f"X = {X} must be a positive multiple of h = {h}")
        centres = h * np.arange(-half, half + 1)
        return cls(np.concatenate([centres - 0.5 * h, [centres[-1] + 0.5 * h]]), X, h, "uniform")

    @classmethod
    def reciprocal(cls, X: float, h: float, pivot: float = 1.0) -> "CellMesh":
        """Mesh invariant under ``x -> -pivot^2 / x`` and ``x -> pivot^2 / x``.

        Uniform spacing ``h`` on ``pivot <= |x| <= X``, its reciprocal image on
        ``pivot^2/X <= |x| <= pivot``, and one cell ``[-pivot^2/X, pivot^2/X]``
        around the origin.
        """
        if not 0 < pivot < X:
            raise ValueError("reciprocal mesh needs 0 < pivot < X")
        count = max(1, int(round((X - pivot) / h)))
        outer = np.linspace(pivot, X, count + 1)
        inner = pivot**2 / outer[::-1]
        pos = np.concatenate([inner, outer[1:]])
        return cls(np.concatenate([-pos[::-1], pos]), X, h, "reciprocal", pivot)

    @classmethod
    def graded(cls, X: float, h: float, pivot: float = 1.0, grade_from: float = 4.0) -> "CellMesh":
        """Reciprocal-symmetric mesh whose cells grow geometrically far out.

        Width ``h`` on ``pivot <= |x| <= grade_from``, then each cell is
        ``1 + h/grade_from`` times wider than the previous one up to ``X``;
        mirrored by ``x -> pivot^2/x`` inside ``|x| < pivot``. The cell count
        grows like ``log X``.
        """
        if not 0 < pivot < grade_from < X:
            raise ValueError("graded mesh needs 0 < pivot < grade_from < X")
        count = max(1, int(round((grade_from - pivot) / h)))
        outer = list(np.linspace(pivot, grade_from, count + 1))
        ratio = 1.0 + h / grade_from
        while outer[-1] < X:
            outer.append(min(X, outer[-1] * ratio))
        if outer[-1] - outer[-2] < 0.5 * (outer[-2] - outer[-3]):
            outer.pop(-2)  # merge a sliver at the end
        outer = np.asarray(outer)
        pos = np.concatenate([pivot**2 / outer[::-1], outer[1:]])
        mesh = cls(np.concatenate([-pos[::-1], pos]), X, h, "graded", pivot)
        object.__setattr__(mesh, "grade_from", grade_from)
        return mesh

    def refined(self) -> "CellMesh":
        """The ``(2X, h/2)`` mesh of the same family."""
        if self.kind == "uniform":
            return CellMesh.uniform(2.0 * self.X, 0.5 * self.h)
        if self.kind == "reciprocal":
            return CellMesh.reciprocal(2.0 * self.X, 0.5 * self.h, self.pivot)
        if self.kind == "graded":
            return CellMesh.graded(2.0 * self.X, 0.5 * self.h, self.pivot, getattr(self, "grade_from", 4.0))
        raise ValueError(f"mesh kind {self.kind!r} has no refinement rule")

    @property
    def size(self) -> int:
        return self.edges.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centres(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def lo(self) -> float:
        return float(self.edges[0])

    @property
    def hi(self) -> float:
        return float(self.edges[-1])

    def describe(self) -> str:
        return f"{self.kind}(X={self.X:g}, h={self.h:g}, cells={self.size})"


@dataclass(frozen=True)
class GridFunction:
    mesh: CellMesh
    values: np.ndarray
    # cells where the value was set to 0 because the map hit a singular point
    flagged: tuple[int, ...] = field(default=())

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.size,):
            raise ValueError(f"expected {self.mesh.size} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, mesh: CellMesh, f: Callable[[np.ndarray], np.ndarray], nodes: int = 8) -> "GridFunction":
        """Cell averages of ``f`` by Gauss-Legendre on each cell."""
        gx, gw = np.polynomial.legendre.leggauss(nodes)
        half = 0.5 * mesh.widths[:, None]
        pts = mesh.centres[:, None] + half * gx[None, :]
        return cls(mesh, 0.5 * np.sum(gw[None, :] * f(pts), axis=1))

    @classmethod
    def zeros(cls, mesh: CellMesh) -> "GridFunction":
        return cls(mesh, np.zeros(mesh.size))

    @property
    def x(self) -> np.ndarray:
        return self.mesh.centres

    def norm(self, p: float = 2) -> float:
        w = self.mesh.widths
        if p == 1:
            return float(np.sum(w * np.abs(self.values)))
        if p == 2:
            return float(np.sqrt(np.sum(w * self.values**2)))
        if p == np.inf:
            return float(np.max(np.abs(self.values)))
        raise ValueError("p must be 1, 2 or inf")

    def inner(self, other: "GridFunction") -> float:
        if other.mesh is not self.mesh and not np.array_equal(other.mesh.edges, self.mesh.edges):
            raise ValueError("grid functions live on different meshes")
        return float(np.sum(self.mesh.widths * self.values * other.values))

    def with_values(self, values, flagged=()) -> "GridFunction":
        return GridFunction(self.mesh, values, tuple(flagged))
