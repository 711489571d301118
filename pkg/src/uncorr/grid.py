"""Uniform log-price mesh, node fields, divided differences and ghost nodes.

Node indices are 1-based as in the scheme's formulas: ``i = 1..N1`` along
x1 and ``j = 1..N2`` along x2. Values are stored 0-based in an
``(N1, N2)`` array, so node ``(i, j)`` lives at ``values[i - 1, j - 1]``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Mesh:
    x1_min: float
    x1_max: float
    x2_min: float
    x2_max: float
    N1: int
    N2: int

    def __post_init__(self):
        if self.N1 < 3 or self.N2 < 3:
            raise ValueError("need at least 3 nodes per direction")
        if not (self.x1_max > self.x1_min and self.x2_max > self.x2_min):
            raise ValueError("mesh bounds must be increasing")

    @classmethod
    def square(cls, lo: float, hi: float, N: int) -> "Mesh":
        return cls(lo, hi, lo, hi, N, N)

    @property
    def h1(self) -> float:
        return (self.x1_max - self.x1_min) / (self.N1 - 1)

    @property
    def h2(self) -> float:
        return (self.x2_max - self.x2_min) / (self.N2 - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N1, self.N2)

    @property
    def size(self) -> int:
        return self.N1 * self.N2

    def x1_at(self, i):
        """Coordinate of 1-based index ``i``; ghost indices 0 and N1+1 allowed."""
        return self.x1_min + (np.asarray(i) - 1) * self.h1

    def x2_at(self, j):
        return self.x2_min + (np.asarray(j) - 1) * self.h2

    @property
    def x1(self) -> np.ndarray:
        return self.x1_at(np.arange(1, self.N1 + 1))

    @property
    def x2(self) -> np.ndarray:
        return self.x2_at(np.arange(1, self.N2 + 1))

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def k(self, i: int, j: int) -> int:
        """0-based unknown index of node (i, j); ordering ``k = i + (j-1) N1`` shifted by one."""
        return (i - 1) + (j - 1) * self.N1

    def refine(self) -> "Mesh":
        """Nested refinement N -> 2N - 1."""
        return Mesh(self.x1_min, self.x1_max, self.x2_min, self.x2_max,
                    2 * self.N1 - 1, 2 * self.N2 - 1)


@dataclass
class Field:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.mesh.shape:
            raise ValueError(f"values shape {self.values.shape} does not match mesh {self.mesh.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    @classmethod
    def from_function(cls, mesh: Mesh, fn) -> "Field":
        X1, X2 = mesh.coords()
        return cls(mesh, np.broadcast_to(fn(X1, X2), mesh.shape).astype(float))

    def __getitem__(self, node):
        i, j = node
        return self.values[i - 1, j - 1]

    def flat(self) -> np.ndarray:
        """Values in unknown order (i fastest)."""
        return self.values.ravel(order="F")

    @classmethod
    def from_flat(cls, mesh: Mesh, u: np.ndarray) -> "Field":
        return cls(mesh, np.asarray(u).reshape(mesh.shape, order="F"))

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class GhostFrame:
    """Extrapolated values just outside the mesh.

    ``west[j-1] = u_{0,j}``, ``east[j-1] = u_{N1+1,j}``, ``south[i-1] = u_{i,0}``,
    ``north[i-1] = u_{i,N2+1}``.
    """
    west: np.ndarray
    east: np.ndarray
    south: np.ndarray
    north: np.ndarray


def extrapolate_ghost(field: Field) -> GhostFrame:
    u = field.values
    return GhostFrame(
        west=3 * u[0, :] - 3 * u[1, :] + u[2, :],
        east=3 * u[-1, :] - 3 * u[-2, :] + u[-3, :],
        south=3 * u[:, 0] - 3 * u[:, 1] + u[:, 2],
        north=3 * u[:, -1] - 3 * u[:, -2] + u[:, -3],
    )


def padded(field: Field, ghosts: GhostFrame) -> np.ndarray:
    """``(N1+2, N2+2)`` array holding the field and its ghost frame.

    The four corner cells have no extrapolated value and are NaN.
    """
    N1, N2 = field.mesh.shape
    P = np.full((N1 + 2, N2 + 2), np.nan)
    P[1:-1, 1:-1] = field.values
    P[0, 1:-1] = ghosts.west
    P[-1, 1:-1] = ghosts.east
    P[1:-1, 0] = ghosts.south
    P[1:-1, -1] = ghosts.north
    return P


DIFF_KINDS = ("backward1", "forward1", "central1", "second",
              "mixed_minus", "mixed_plus", "mixed_central")


def _value(field: Field, ghosts: GhostFrame | None, i: int, j: int) -> float:
    N1, N2 = field.mesh.shape
    if 1 <= i <= N1 and 1 <= j <= N2:
        return float(field.values[i - 1, j - 1])
    if ghosts is not None:
        if i == 0 and 1 <= j <= N2:
            return float(ghosts.west[j - 1])
        if i == N1 + 1 and 1 <= j <= N2:
            return float(ghosts.east[j - 1])
        if j == 0 and 1 <= i <= N1:
            return float(ghosts.south[i - 1])
        if j == N2 + 1 and 1 <= i <= N1:
            return float(ghosts.north[i - 1])
    raise IndexError(f"stencil node ({i}, {j}) is outside the mesh and has no ghost value")


def diff(field: Field, node: tuple[int, int], kind: str, direction: int = 1,
         ghosts: GhostFrame | None = None) -> float:
    """Divided difference at a 1-based node.

    ``direction`` (1 or 2) selects the axis for the one-directional kinds;
    the mixed kinds always act on both axes.
    """
    if kind not in DIFF_KINDS:
        raise ValueError(f"unknown difference kind {kind!r}")
    i, j = node
    h1, h2 = field.mesh.h1, field.mesh.h2

    def u(a, b):
        return _value(field, ghosts, a, b)

    if kind in ("backward1", "forward1", "central1", "second"):
        if direction == 1:
            di, dj, h = 1, 0, h1
        elif direction == 2:
            di, dj, h = 0, 1, h2
        else:
            raise ValueError("direction must be 1 or 2")
        um, uc, up = u(i - di, j - dj), u(i, j), u(i + di, j + dj)
        if kind == "backward1":
            return (uc - um) / h
        if kind == "forward1":
            return (up - uc) / h
        if kind == "central1":
            return (up - um) / (2 * h)
        return (up - 2 * uc + um) / (h * h)

    hh = h1 * h2
    if kind == "mixed_central":
        return (u(i + 1, j + 1) - u(i + 1, j - 1) - u(i - 1, j + 1) + u(i - 1, j - 1)) / (4 * hh)
    # one-sided cross differences u_{x1 x2}, u_{x1bar x2bar}, u_{x1bar x2}, u_{x1 x2bar}
    ff = (u(i + 1, j + 1) - u(i + 1, j) - u(i, j + 1) + u(i, j)) / hh
    bb = (u(i, j) - u(i - 1, j) - u(i, j - 1) + u(i - 1, j - 1)) / hh
    bf = (u(i, j + 1) - u(i, j) - u(i - 1, j + 1) + u(i - 1, j)) / hh
    fb = (u(i + 1, j) - u(i, j) - u(i + 1, j - 1) + u(i, j - 1)) / hh
    if kind == "mixed_plus":
        return 0.5 * (ff + bb)
    return 0.5 * (bf + fb)


def mixed_central_interior(values: np.ndarray, h1: float, h2: float) -> np.ndarray:
    """Centered cross difference at nodes 2..N1-1 x 2..N2-1."""
    u = values
    return (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4 * h1 * h2)


def write_field_csv(field: Field, path) -> None:
    """CSV with header ``i,j,x1,x2,S1,S2,u``; j outer, i inner."""
    m = field.mesh
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x1", "x2", "S1", "S2", "u"])
        x1, x2 = m.x1, m.x2
        for j in range(1, m.N2 + 1):
            for i in range(1, m.N1 + 1):
                a, b = x1[i - 1], x2[j - 1]
                w.writerow([i, j, f"{a:.16g}", f"{b:.16g}", f"{np.exp(a):.16g}",
                            f"{np.exp(b):.16g}", f"{field.values[i - 1, j - 1]:.16g}"])
