"""Payoffs, Black-Scholes boundary data and the built-in test problems."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.special import erfc

from .assembly import BoundaryData, BoundaryLayout, EdgeKind
from .model import (CorrelationBand, Edge, MarketParams, default_params,
                    transform_dirichlet_data, transform_neumann_data)
from .stepper import LogProblem


class OptionKind(str, Enum):
    PUT = "put"
    CALL = "call"


def norm_cdf(x):
    return 0.5 * erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))


def bs_price(kind, S, K, tau, r, D, sigma):
    """Dividend-adjusted Black-Scholes price of a European put or call.

    ``tau`` is the time to maturity; ``tau = 0`` returns the payoff.
    Broadcasts over array arguments.
    """
    kind = OptionKind(kind)
    S, K, tau = (np.asarray(a, dtype=float) for a in (S, K, tau))
    if np.any(S <= 0) or np.any(K <= 0):
        raise ValueError("S and K must be positive")
    if np.any(tau < 0) or sigma <= 0:
        raise ValueError("need tau >= 0 and sigma > 0")
    S, K, tau = np.broadcast_arrays(S, K, tau)
    out = np.where(kind is OptionKind.CALL, np.maximum(S - K, 0.0), np.maximum(K - S, 0.0))
    live = tau > 0
    if np.any(live):
        s, k, t = S[live], K[live], tau[live]
        vol = sigma * np.sqrt(t)
        d1 = (np.log(s / k) + (r - D + 0.5 * sigma**2) * t) / vol
        d2 = d1 - vol
        fs, fk = s * np.exp(-D * t), k * np.exp(-r * t)
        if kind is OptionKind.CALL:
            val = fs * norm_cdf(d1) - fk * norm_cdf(d2)
        else:
            val = fk * norm_cdf(-d2) - fs * norm_cdf(-d1)
        out = out.astype(float).copy()
        out[live] = val
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EdgeCondition:
    """Boundary condition on one edge in price space.

    Dirichlet carries the value ``g2(S1, S2, tau)``; Neumann carries the
    outward derivative ``g1(S1, S2, tau)`` with respect to the price.
    """
    edge: Edge
    kind: EdgeKind
    fn: Callable

    def __post_init__(self):
        object.__setattr__(self, "edge", Edge(self.edge))
        object.__setattr__(self, "kind", EdgeKind(self.kind))


def _const(c):
    return lambda S1, S2, tau: np.full(np.broadcast(np.asarray(S1), np.asarray(S2)).shape, float(c))


@dataclass
class ProblemSpec:
    id: str
    payoff: Callable
    edges: dict
    params: MarketParams = field(default_factory=default_params)
    band: CorrelationBand = field(default_factory=lambda: CorrelationBand(-0.2, 0.6))
    L_W: float = 1 / 200
    L_E: float = 200.0
    L_S: float = 1 / 200
    L_N: float = 200.0
    T: float = 2.0
    E: float = 100.0
    w1: float = 1.0
    w2: float = 1.0
    cap: float = 10.0

    def __post_init__(self):
        if not (0 < self.L_W < self.L_E and 0 < self.L_S < self.L_N):
            raise ValueError("domain bounds must satisfy 0 < L_W < L_E and 0 < L_S < L_N")
        if set(self.edges) != set(Edge):
            raise ValueError("every edge needs a condition")
        if all(c.kind is EdgeKind.NEUMANN for c in self.edges.values()):
            raise ValueError("at least one edge must carry a Dirichlet condition")

    @property
    def layout(self) -> BoundaryLayout:
        return BoundaryLayout(**{e.value: self.edges[e].kind for e in Edge})

    def log_data(self, edge: Edge):
        c = self.edges[Edge(edge)]
        if c.kind is EdgeKind.DIRICHLET:
            return transform_dirichlet_data(c.fn)
        return transform_neumann_data(c.fn, c.edge)

    def to_log_problem(self) -> LogProblem:
        data = BoundaryData(self.layout, {e: self.log_data(e) for e in Edge})
        payoff = self.payoff
        return LogProblem(math.log(self.L_W), math.log(self.L_E), math.log(self.L_S), math.log(self.L_N),
                          initial=lambda x1, x2: payoff(np.exp(x1), np.exp(x2)),
                          data=data, params=self.params, band=self.band, T=self.T, name=self.id)


def boundary_value(spec: ProblemSpec, edge: Edge, point, tau: float) -> float:
    """Log-space data of ``edge`` at the price point ``(S1, S2)``."""
    S1, S2 = point
    return float(spec.log_data(edge)(math.log(S1), math.log(S2), tau))


TP_IDS = ("tp1", "tp2", "tp3", "tp4", "tp5")


def make_tp(id: str, E: float = 100.0, w1: float = 1.0, w2: float = 1.0, cap: float = 10.0,
            domain=(1 / 200, 200.0, 1 / 200, 200.0), params: MarketParams | None = None,
            band: CorrelationBand | None = None, T: float = 2.0,
            literal_paper_strikes: bool = False) -> ProblemSpec:
    """Built-in problems tp1..tp5.

    The capped problems use vanilla spreads on the W and S edges. By default
    the strikes replicate the capped payoff, ``E/w`` and ``(E -+ cap)/w``;
    ``literal_paper_strikes`` switches to strikes ``E/w`` and ``cap``.
    """
    key = str(id).lower()
    if key not in TP_IDS:
        raise ValueError(f"unknown problem {id!r}; expected one of {', '.join(TP_IDS)}")
    params = params or default_params()
    band = band or CorrelationBand(-0.2, 0.6)
    p = params
    D, N_, W, S = EdgeKind.DIRICHLET, EdgeKind.NEUMANN, Edge.W, Edge.S

    def spread(kind, w, k_lo, k_hi, sigma, div, asset):
        # S edge varies S1, W edge varies S2
        if literal_paper_strikes:
            scale = 1.0
        else:
            scale = w

        def g(S1, S2, tau):
            x = S1 if asset == 1 else S2
            return scale * (bs_price(kind, x, k_lo, tau, p.r, div, sigma)
                            - bs_price(kind, x, k_hi, tau, p.r, div, sigma))
        return g

    if key in ("tp1", "tp2"):
        if key == "tp1":
            payoff = lambda S1, S2: np.maximum(0.0, S2 - S1)
        else:
            payoff = lambda S1, S2: np.maximum(0.0, np.minimum(S1, S2) - E)
        g2 = lambda S1, S2, tau, f=payoff: f(S1, S2) + 0.0 * tau
        edges = {e: EdgeCondition(e, D, g2) for e in Edge}
    elif key == "tp3":
        payoff = lambda S1, S2: np.minimum(cap, np.maximum(0.0, E - w1 * S1 - w2 * S2))
        if literal_paper_strikes:
            s_fn = spread("put", w1, E / w1, cap, p.sigma1, p.D1, 1)
            w_fn = spread("put", w2, E / w2, cap, p.sigma2, p.D2, 2)
        else:
            s_fn = spread("put", w1, E / w1, (E - cap) / w1, p.sigma1, p.D1, 1)
            w_fn = spread("put", w2, E / w2, (E - cap) / w2, p.sigma2, p.D2, 2)
        edges = {S: EdgeCondition(S, D, s_fn), W: EdgeCondition(W, D, w_fn),
                 Edge.N: EdgeCondition(Edge.N, D, _const(0)), Edge.E: EdgeCondition(Edge.E, D, _const(0))}
    elif key == "tp4":
        payoff = lambda S1, S2: np.maximum(0.0, w1 * S1 - E)
        edges = {W: EdgeCondition(W, D, _const(0)), S: EdgeCondition(S, N_, _const(0)),
                 Edge.N: EdgeCondition(Edge.N, N_, _const(0)), Edge.E: EdgeCondition(Edge.E, N_, _const(1))}
    else:
        payoff = lambda S1, S2: np.minimum(cap, np.maximum(0.0, w1 * S1 + w2 * S2 - E))
        if literal_paper_strikes:
            s_fn = spread("call", w1, cap, E / w1, p.sigma1, p.D1, 1)
            w_fn = spread("call", w2, cap, E / w2, p.sigma2, p.D2, 2)
        else:
            s_fn = spread("call", w1, E / w1, (E + cap) / w1, p.sigma1, p.D1, 1)
            w_fn = spread("call", w2, E / w2, (E + cap) / w2, p.sigma2, p.D2, 2)
        edges = {S: EdgeCondition(S, D, s_fn), W: EdgeCondition(W, D, w_fn),
                 Edge.N: EdgeCondition(Edge.N, N_, _const(0)), Edge.E: EdgeCondition(Edge.E, N_, _const(0))}
    L_W, L_E, L_S, L_N = domain
    return ProblemSpec(key, payoff, edges, params, band, L_W, L_E, L_S, L_N, T, E, w1, w2, cap)
