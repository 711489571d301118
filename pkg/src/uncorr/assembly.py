"""Per-step implicit operator and right-hand side.

Each row is written in the compact form

    C_c u_c - sum_n C_n u_n = f

with the eight neighbour coefficients ``C_n`` and the centre ``C_c``. The
diffusion/reaction part is implicit, the correlation switch and the limited
drift terms are frozen at the old level.

Rows on a Neumann edge are obtained from the interior nine-point pattern by
eliminating the ghost nodes with the discrete condition
``u_ghost = u_mirror + 2 h g``; the doubly-ghost node at a Neumann-Neumann
corner uses the average of the two elimination orders.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Callable

import numpy as np

from .grid import Field, GhostFrame, Mesh, diff, extrapolate_ghost, mixed_central_interior
from .limiter import RatioConfig, convection_terms, explicit_convection, lambda_factors
from .model import CorrelationBand, DriftPair, Edge, MarketParams, select_rho


class EdgeKind(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


# outward normal of each edge: (axis, sign)
NORMAL = {Edge.W: (1, -1), Edge.E: (1, 1), Edge.S: (2, -1), Edge.N: (2, 1)}
CORNERS = {"NW": (Edge.W, Edge.N), "NE": (Edge.E, Edge.N),
           "SE": (Edge.E, Edge.S), "SW": (Edge.W, Edge.S)}
# (di, dj) of the nine bands, in increasing unknown offset di + dj * N1
BAND_ORDER = ((-1, -1), (0, -1), (1, -1), (-1, 0), (0, 0), (1, 0), (-1, 1), (0, 1), (1, 1))


@dataclass(frozen=True)
class BoundaryLayout:
    W: EdgeKind = EdgeKind.DIRICHLET
    E: EdgeKind = EdgeKind.DIRICHLET
    S: EdgeKind = EdgeKind.DIRICHLET
    N: EdgeKind = EdgeKind.DIRICHLET

    def __post_init__(self):
        for e in Edge:
            object.__setattr__(self, e.value, EdgeKind(getattr(self, e.value)))

    def kind(self, edge: Edge) -> EdgeKind:
        return getattr(self, Edge(edge).value)

    def is_dirichlet(self, edge: Edge) -> bool:
        return self.kind(edge) is EdgeKind.DIRICHLET

    def b(self, edge: Edge) -> int:
        return int(self.is_dirichlet(edge))

    @classmethod
    def uniform(cls, kind: EdgeKind) -> "BoundaryLayout":
        return cls(kind, kind, kind, kind)

    def dirichlet_mask(self, mesh: Mesh) -> np.ndarray:
        mask = np.zeros(mesh.shape, dtype=bool)
        if self.is_dirichlet(Edge.W):
            mask[0, :] = True
        if self.is_dirichlet(Edge.E):
            mask[-1, :] = True
        if self.is_dirichlet(Edge.S):
            mask[:, 0] = True
        if self.is_dirichlet(Edge.N):
            mask[:, -1] = True
        return mask


@dataclass
class BoundaryData:
    """Log-space boundary data ``fn(x1, x2, tau)`` per edge.

    Dirichlet edges carry the value, Neumann edges the outward derivative.
    """
    layout: BoundaryLayout
    funcs: dict = dc_field(default_factory=dict)

    def __call__(self, edge: Edge, x1, x2, tau) -> np.ndarray:
        fn = self.funcs.get(Edge(edge))
        shape = np.broadcast(np.asarray(x1), np.asarray(x2)).shape
        if fn is None:
            return np.zeros(shape)
        return np.broadcast_to(np.asarray(fn(x1, x2, tau), dtype=float), shape)


@dataclass
class StencilRow:
    c_center: float
    c_neighbors: dict
    f: float

    def neighbor(self, di: int, dj: int) -> float:
        return self.c_neighbors.get((di, dj), 0.0)


@dataclass
class SystemMatrix:
    """Nine-band matrix; ``diags[d, k]`` is ``M[k, k + offsets[d]]``."""
    mesh: Mesh
    diags: np.ndarray
    offsets: tuple

    @property
    def n(self) -> int:
        return self.mesh.size

    @property
    def center_index(self) -> int:
        return self.offsets.index(0)

    def diagonal(self) -> np.ndarray:
        return self.diags[self.center_index]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = np.zeros_like(x, dtype=float)
        n = self.n
        for d, off in enumerate(self.offsets):
            if off >= 0:
                y[: n - off] += self.diags[d, : n - off] * x[off:]
            else:
                y[-off:] += self.diags[d, -off:] * x[: n + off]
        return y

    def to_csr(self):
        from scipy import sparse
        rows, cols, vals = self.triplets()
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def triplets(self):
        n = self.n
        k = np.arange(n)
        rows, cols, vals = [], [], []
        for d, off in enumerate(self.offsets):
            kk = k + off
            ok = (kk >= 0) & (kk < n) & (self.diags[d] != 0.0)
            rows.append(k[ok])
            cols.append(kk[ok])
            vals.append(self.diags[d][ok])
        rows, cols, vals = (np.concatenate(a) for a in (rows, cols, vals))
        order = np.lexsort((cols, rows))
        return rows[order], cols[order], vals[order]

    def to_banded(self):
        """LAPACK band storage ``(ab, (l, u))`` for ``scipy.linalg.solve_banded``."""
        bw = self.mesh.N1 + 1
        n = self.n
        ab = np.zeros((2 * bw + 1, n))
        k = np.arange(n)
        for d, off in enumerate(self.offsets):
            kk = k + off
            ok = (kk >= 0) & (kk < n)
            ab[bw - off, kk[ok]] = self.diags[d][ok]
        return ab, (bw, bw)

    def row(self, i: int, j: int) -> StencilRow:
        k = self.mesh.k(i, j)
        c = self.diags[self.center_index, k]
        nb = {}
        for d, o in enumerate(BAND_ORDER):
            if o != (0, 0) and self.diags[d, k] != 0.0:
                nb[o] = -self.diags[d, k]
        return StencilRow(c, nb, np.nan)

    def write_triplets(self, path, F: np.ndarray | None = None) -> None:
        """Plain-text dump ``k,k',value`` with 1-based indices; F as ``k,value``."""
        rows, cols, vals = self.triplets()
        with open(path, "w") as fh:
            fh.write("k,k',value\n")
            for a, b, v in zip(rows, cols, vals):
                fh.write(f"{a + 1},{b + 1},{v:.17g}\n")
            if F is not None:
                fh.write("k,f\n")
                for a, v in enumerate(F):
                    fh.write(f"{a + 1},{v:.17g}\n")


def _band_offsets(N1: int) -> tuple:
    return tuple(di + dj * N1 for di, dj in BAND_ORDER)


# ---------------------------------------------------------------------------
# correlation field

def _tangent_central(data: BoundaryData, edge: Edge, mesh: Mesh, idx, tau):
    """Central difference of an edge's data along that edge at 1-based ``idx``."""
    axis, sign = NORMAL[edge]
    if axis == 1:
        x1 = mesh.x1_max if sign > 0 else mesh.x1_min
        return (data(edge, x1, mesh.x2_at(idx + 1), tau) - data(edge, x1, mesh.x2_at(idx - 1), tau)) / (2 * mesh.h2)
    x2 = mesh.x2_max if sign > 0 else mesh.x2_min
    return (data(edge, mesh.x1_at(idx + 1), x2, tau) - data(edge, mesh.x1_at(idx - 1), x2, tau)) / (2 * mesh.h1)


def cross_gamma(old: Field, data: BoundaryData, tau_new: float) -> np.ndarray:
    """Sign carrier of the cross gamma at every node.

    Interior: centred cross difference of the old field. Neumann edges: the
    tangential derivative of the edge data times the outward sign; at a
    Neumann-Neumann corner the two edge contributions are added. Dirichlet
    rows get 0.
    """
    mesh = old.mesh
    layout = data.layout
    gam = np.zeros(mesh.shape)
    gam[1:-1, 1:-1] = mixed_central_interior(old.values, mesh.h1, mesh.h2)
    jj = np.arange(1, mesh.N2 + 1)
    ii = np.arange(1, mesh.N1 + 1)
    contrib = {}
    for edge in Edge:
        if layout.is_dirichlet(edge):
            continue
        axis, sign = NORMAL[edge]
        idx = jj if axis == 1 else ii
        contrib[edge] = sign * _tangent_central(data, edge, mesh, idx, tau_new)
    for edge, c in contrib.items():
        axis, sign = NORMAL[edge]
        if axis == 1:
            line = 0 if sign < 0 else -1
            gam[line, 1:-1] = c[1:-1]
        else:
            line = 0 if sign < 0 else -1
            gam[1:-1, line] = c[1:-1]
    for name, (ea, eb) in CORNERS.items():
        if ea in contrib and eb in contrib:
            i = 0 if NORMAL[ea][1] < 0 else -1
            j = 0 if NORMAL[eb][1] < 0 else -1
            gam[i, j] = contrib[ea][j] + contrib[eb][i]
    gam[layout.dirichlet_mask(mesh)] = 0.0
    return gam


def rho_field(old: Field, data: BoundaryData, band: CorrelationBand, tau_new: float):
    """Per-node ``(rho+, rho-)`` arrays picked by the cross-gamma sign."""
    return select_rho(np.sign(cross_gamma(old, data, tau_new)), band)


# ---------------------------------------------------------------------------
# vectorized assembly

@dataclass
class Stencil:
    center: np.ndarray
    neighbors: dict
    f: np.ndarray

    def row(self, i: int, j: int) -> StencilRow:
        nb = {o: float(c[i - 1, j - 1]) for o, c in self.neighbors.items() if c[i - 1, j - 1] != 0.0}
        return StencilRow(float(self.center[i - 1, j - 1]), nb, float(self.f[i - 1, j - 1]))


def _interior_pattern(params: MarketParams, rp, rm, h1, h2, dt):
    s1, s2 = params.sigma1, params.sigma2
    s = s1 * s2 / (h1 * h2)
    absr = rp + rm
    a1 = 0.5 * (s1 * s1 / (h1 * h1) - s * absr)
    a2 = 0.5 * (s2 * s2 / (h2 * h2) - s * absr)
    p = 0.5 * s * rp
    m = 0.5 * s * rm
    center = 1.0 / dt + s1 * s1 / (h1 * h1) + s2 * s2 / (h2 * h2) - s * absr + params.r
    nb = {(1, 0): a1, (-1, 0): a1, (0, 1): a2, (0, -1): a2,
          (1, 1): p, (-1, -1): p, (-1, 1): m, (1, -1): m}
    return center, nb


def build_stencil(old: Field, data: BoundaryData, params: MarketParams, band: CorrelationBand,
                  drift: DriftPair, dt: float, tau_new: float, cfg: RatioConfig = RatioConfig(),
                  source: Callable | None = None, rho=None) -> Stencil:
    mesh = old.mesh
    layout = data.layout
    h1, h2 = mesh.h1, mesh.h2
    if rho is None:
        rho = rho_field(old, data, band, tau_new)
    rp, rm = (np.broadcast_to(a, mesh.shape) for a in rho)
    center, nb0 = _interior_pattern(params, rp, rm, h1, h2, dt)
    center = np.broadcast_to(center, mesh.shape).copy()
    nb = {o: np.broadcast_to(c, mesh.shape).copy() for o, c in nb0.items()}

    ghosts = extrapolate_ghost(old)
    conv = convection_terms(old, ghosts, drift, cfg)
    f = old.values / dt + conv.total()
    X1, X2 = mesh.coords()
    if source is not None:
        f = f + source(X1, X2, tau_new)

    x1g = mesh.x1_at(np.arange(0, mesh.N1 + 2))  # ghost-inclusive coordinates
    x2g = mesh.x2_at(np.arange(0, mesh.N2 + 2))
    neumann = [e for e in Edge if not layout.is_dirichlet(e)]

    # doubly-ghost corner node: average of the two elimination orders
    for ea, eb in CORNERS.values():
        if ea in neumann and eb in neumann:
            sa, sb = NORMAL[ea][1], NORMAL[eb][1]
            i = 0 if sa < 0 else mesh.N1 - 1
            j = 0 if sb < 0 else mesh.N2 - 1
            ic, jc = i + 1, j + 1  # positions in the ghost-inclusive coordinate arrays
            xa, xb = x1g[ic], x2g[jc]
            avg = (h1 * (data(ea, xa, x2g[jc + sb], tau_new) + data(ea, xa, x2g[jc - sb], tau_new))
                   + h2 * (data(eb, x1g[ic + sa], xb, tau_new) + data(eb, x1g[ic - sa], xb, tau_new)))
            c = nb[(sa, sb)][i, j]
            nb[(-sa, -sb)][i, j] += c
            f[i, j] += c * float(avg)
            nb[(sa, sb)][i, j] = 0.0

    for edge in neumann:
        axis, sign = NORMAL[edge]
        if axis == 1:
            line = 0 if sign < 0 else mesh.N1 - 1
            xe = mesh.x1_min if sign < 0 else mesh.x1_max
            for dj in (-1, 0, 1):
                c = nb[(sign, dj)][line, :].copy()
                g = data(edge, xe, x2g[1 + dj: 1 + dj + mesh.N2], tau_new)
                nb[(-sign, dj)][line, :] += c
                f[line, :] += c * 2.0 * h1 * g
                nb[(sign, dj)][line, :] = 0.0
            gc = data(edge, xe, mesh.x2, tau_new)
            if sign > 0:
                f[line, :] += -conv.plus1[line, :] + drift.A1p * gc
            else:
                f[line, :] += conv.minus1[line, :] + drift.A1m * gc
        else:
            line = 0 if sign < 0 else mesh.N2 - 1
            xe = mesh.x2_min if sign < 0 else mesh.x2_max
            for di in (-1, 0, 1):
                c = nb[(di, sign)][:, line].copy()
                g = data(edge, x1g[1 + di: 1 + di + mesh.N1], xe, tau_new)
                nb[(di, -sign)][:, line] += c
                f[:, line] += c * 2.0 * h2 * g
                nb[(di, sign)][:, line] = 0.0
            gc = data(edge, mesh.x1, xe, tau_new)
            if sign > 0:
                f[:, line] += -conv.plus2[:, line] + drift.A2p * gc
            else:
                f[:, line] += conv.minus2[:, line] + drift.A2m * gc

    dmask = layout.dirichlet_mask(mesh)
    if dmask.any():
        center[dmask] = 1.0
        for c in nb.values():
            c[dmask] = 0.0
        f[dmask] = dirichlet_values(data, mesh, tau_new)[dmask]
    return Stencil(center, nb, f)


def dirichlet_values(data: BoundaryData, mesh: Mesh, tau: float) -> np.ndarray:
    """Dirichlet data on every Dirichlet node; W/E data win at corners."""
    layout = data.layout
    out = np.zeros(mesh.shape)
    for edge in (Edge.S, Edge.N, Edge.W, Edge.E):
        if not layout.is_dirichlet(edge):
            continue
        axis, sign = NORMAL[edge]
        if axis == 1:
            line = 0 if sign < 0 else -1
            out[line, :] = data(edge, mesh.x1_min if sign < 0 else mesh.x1_max, mesh.x2, tau)
        else:
            line = 0 if sign < 0 else -1
            out[:, line] = data(edge, mesh.x1, mesh.x2_min if sign < 0 else mesh.x2_max, tau)
    return out


def to_matrix(stencil: Stencil, mesh: Mesh) -> tuple[SystemMatrix, np.ndarray]:
    offsets = _band_offsets(mesh.N1)
    diags = np.zeros((9, mesh.size))
    for d, o in enumerate(BAND_ORDER):
        if o == (0, 0):
            diags[d] = stencil.center.ravel(order="F")
        else:
            diags[d] = -stencil.neighbors[o].ravel(order="F")
    return SystemMatrix(mesh, diags, offsets), stencil.f.ravel(order="F").copy()


def assemble(old: Field, data: BoundaryData, params: MarketParams, band: CorrelationBand,
             drift: DriftPair, dt: float, tau_new: float, cfg: RatioConfig = RatioConfig(),
             source: Callable | None = None, rho=None) -> tuple[SystemMatrix, np.ndarray]:
    st = build_stencil(old, data, params, band, drift, dt, tau_new, cfg, source, rho)
    return to_matrix(st, old.mesh)


# ---------------------------------------------------------------------------
# single-row builders

def interior_row(old: Field, ghosts: GhostFrame, node, params: MarketParams, rho,
                 drift: DriftPair, dt: float, cfg: RatioConfig = RatioConfig(),
                 source_value: float = 0.0) -> StencilRow:
    i, j = node
    N1, N2 = old.mesh.shape
    if not (2 <= i <= N1 - 1 and 2 <= j <= N2 - 1):
        raise ValueError(f"node {node} is not an interior node")
    h1, h2 = old.mesh.h1, old.mesh.h2
    center, nb = _interior_pattern(params, rho[0], rho[1], h1, h2, dt)
    f = old[i, j] / dt + explicit_convection(old, ghosts, node, drift, cfg) + source_value
    return StencilRow(float(center), {o: float(c) for o, c in nb.items() if c != 0.0}, float(f))


def _neumann_row(old, ghosts, node, edges, data, params, rho, drift, dt, tau_new, cfg, source_value):
    mesh = old.mesh
    i, j = node
    h1, h2 = mesh.h1, mesh.h2
    center, nb0 = _interior_pattern(params, rho[0], rho[1], h1, h2, dt)
    nb = {o: float(c) for o, c in nb0.items()}
    f = old[i, j] / dt + source_value
    lam = lambda_factors(old, ghosts, node, cfg)
    terms = {
        "plus1": drift.A1p * lam.lambda1_plus * diff(old, node, "forward1", 1, ghosts),
        "minus1": drift.A1m * lam.lambda1_minus * diff(old, node, "backward1", 1, ghosts),
        "plus2": drift.A2p * lam.lambda2_plus * diff(old, node, "forward1", 2, ghosts),
        "minus2": drift.A2m * lam.lambda2_minus * diff(old, node, "backward1", 2, ghosts),
    }
    x1 = lambda a: float(mesh.x1_at(a))
    x2 = lambda b: float(mesh.x2_at(b))
    g = lambda e, a, b: float(data(e, x1(a), x2(b), tau_new))
    if len(edges) == 2:
        ea, eb = edges
        sa, sb = NORMAL[ea][1], NORMAL[eb][1]
        avg = (h1 * (g(ea, i, j + sb) + g(ea, i, j - sb)) + h2 * (g(eb, i + sa, j) + g(eb, i - sa, j)))
        c = nb[(sa, sb)]
        nb[(-sa, -sb)] += c
        f += c * avg
        nb[(sa, sb)] = 0.0
    for edge in edges:
        axis, sign = NORMAL[edge]
        for d in (-1, 0, 1):
            o = (sign, d) if axis == 1 else (d, sign)
            mirror = (-sign, d) if axis == 1 else (d, -sign)
            c = nb[o]
            nb[mirror] += c
            if axis == 1:
                f += c * 2.0 * h1 * g(edge, i, j + d)
            else:
                f += c * 2.0 * h2 * g(edge, i + d, j)
            nb[o] = 0.0
    gc = {e: g(e, i, j) for e in edges}
    conv = terms["plus1"] - terms["minus1"] + terms["plus2"] - terms["minus2"]
    for edge in edges:
        if edge is Edge.E:
            conv += -terms["plus1"] + drift.A1p * gc[edge]
        elif edge is Edge.W:
            conv += terms["minus1"] + drift.A1m * gc[edge]
        elif edge is Edge.N:
            conv += -terms["plus2"] + drift.A2p * gc[edge]
        else:
            conv += terms["minus2"] + drift.A2m * gc[edge]
    f += conv
    return StencilRow(float(center), {o: c for o, c in nb.items() if c != 0.0}, float(f))


def edges_at(mesh: Mesh, node) -> list:
    i, j = node
    out = []
    if i == 1:
        out.append(Edge.W)
    if i == mesh.N1:
        out.append(Edge.E)
    if j == 1:
        out.append(Edge.S)
    if j == mesh.N2:
        out.append(Edge.N)
    return out


def edge_row(old: Field, ghosts: GhostFrame, node, edge: Edge, data: BoundaryData,
             params: MarketParams, rho, drift: DriftPair, dt: float, tau_new: float,
             cfg: RatioConfig = RatioConfig(), source_value: float = 0.0) -> StencilRow:
    edge = Edge(edge)
    if data.layout.is_dirichlet(edge):
        raise ValueError(f"edge {edge.value} is Dirichlet; use dirichlet_row")
    if edges_at(old.mesh, node) != [edge]:
        raise ValueError(f"node {node} is not a non-corner node of edge {edge.value}")
    return _neumann_row(old, ghosts, node, [edge], data, params, rho, drift, dt, tau_new, cfg, source_value)


def corner_row(old: Field, ghosts: GhostFrame, corner: str, data: BoundaryData,
               params: MarketParams, rho, drift: DriftPair, dt: float, tau_new: float,
               cfg: RatioConfig = RatioConfig(), source_value: float = 0.0) -> StencilRow:
    ea, eb = CORNERS[corner]
    if data.layout.is_dirichlet(ea) or data.layout.is_dirichlet(eb):
        raise ValueError(f"corner {corner} touches a Dirichlet edge; use dirichlet_row")
    mesh = old.mesh
    node = (1 if ea is Edge.W else mesh.N1, 1 if eb is Edge.S else mesh.N2)
    return _neumann_row(old, ghosts, node, [ea, eb], data, params, rho, drift, dt, tau_new, cfg, source_value)


def dirichlet_row(node, value: float) -> StencilRow:
    return StencilRow(1.0, {}, float(value))


# ---------------------------------------------------------------------------
# conditions

@dataclass(frozen=True)
class RatioCheck:
    passed: bool
    lower: float
    upper: float
    ratio: float
    margin: float


def mesh_ratio_check(params: MarketParams, band: CorrelationBand, layout: BoundaryLayout,
                     h1: float, h2: float, max_abs_rho: float | None = None) -> RatioCheck:
    """Aspect-ratio condition tying h1/h2 to sigma1/sigma2 and max |rho|.

    ``margin`` is the multiplicative slack ``min(ratio/lower, upper/ratio)``;
    it is at least 1 on success and infinite when max |rho| is 0.
    """
    rmax = band.max_abs if max_abs_rho is None else max_abs_rho
    q = params.sigma1 / params.sigma2
    ratio = h1 / h2
    lower = q * rmax
    upper = np.inf if rmax == 0 else q / rmax
    margin = min(ratio / lower if lower > 0 else np.inf, upper / ratio)
    return RatioCheck(bool(lower <= ratio <= upper), lower, upper, ratio, margin)


@dataclass
class PositivityReport:
    p1: bool
    p2: bool
    p3: bool
    p4: bool
    worst: dict

    @property
    def all(self) -> bool:
        return self.p1 and self.p2 and self.p3 and self.p4


def verify_positivity_conditions(M: SystemMatrix, F: np.ndarray, rtol: float = 1e-13) -> PositivityReport:
    """Check the M-matrix properties P1-P3 and non-negativity of F (P4).

    Off-diagonal signs use a relative tolerance ``rtol`` of the row diagonal
    to absorb round-off in coefficients that cancel exactly on paper.
    """
    c = M.center_index
    diag = M.diags[c]
    off = np.delete(M.diags, c, axis=0)
    scale = np.abs(diag)
    dominance = np.abs(diag) - np.abs(off).sum(axis=0)
    p1_bad = dominance < -rtol * scale
    p2_bad = (off > rtol * scale).any(axis=0)
    p3_bad = diag <= 0
    p4_bad = F < 0
    worst = {}
    for name, bad, mag in (("p1", p1_bad, -dominance), ("p2", p2_bad, off.max(axis=0)),
                           ("p3", p3_bad, -diag), ("p4", p4_bad, -F)):
        if bad.any():
            k = int(np.argmax(np.where(bad, mag, -np.inf)))
            worst[name] = (k, float(mag[k]))
    return PositivityReport(not p1_bad.any(), not p2_bad.any(), not p3_bad.any(), not p4_bad.any(), worst)


def interior_slack(M: SystemMatrix) -> np.ndarray:
    """``C_c - sum C_n`` at the interior rows (2..N1-1 x 2..N2-1)."""
    mesh = M.mesh
    c = M.center_index
    slack = M.diags[c] + np.delete(M.diags, c, axis=0).sum(axis=0)
    return slack.reshape(mesh.shape, order="F")[1:-1, 1:-1]
