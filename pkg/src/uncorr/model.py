"""Market parameters, correlation selection and log-space transforms.

The pricing equation is solved in log prices ``x_i = ln S_i`` and time to
maturity ``tau = T - t``. Correlation enters only through the sign of the
cross gamma, which picks one end of the band ``[rho1, rho2]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np


class Scenario(str, Enum):
    WORST = "worst"
    BEST = "best"


class Edge(str, Enum):
    W = "W"
    E = "E"
    S = "S"
    N = "N"


@dataclass(frozen=True)
class MarketParams:
    sigma1: float
    sigma2: float
    r: float
    D1: float = 0.0
    D2: float = 0.0

    def __post_init__(self):
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ValueError(f"volatilities must be positive, got {self.sigma1}, {self.sigma2}")
        if self.r < 0 or self.D1 < 0 or self.D2 < 0:
            raise ValueError("r, D1, D2 must be non-negative")

    @property
    def rate_flagged(self) -> bool:
        """True when r == 0; the positivity/stability estimates assume r > 0."""
        return self.r == 0.0


@dataclass(frozen=True)
class CorrelationBand:
    rho1: float
    rho2: float
    scenario: Scenario = Scenario.WORST

    def __post_init__(self):
        if not (-1.0 <= self.rho1 <= self.rho2 <= 1.0):
            raise ValueError(f"need -1 <= rho1 <= rho2 <= 1, got ({self.rho1}, {self.rho2})")
        object.__setattr__(self, "scenario", Scenario(self.scenario))

    @property
    def max_abs(self) -> float:
        return max(abs(self.rho1), abs(self.rho2))


def split(v):
    """Return ``(max(0, v), max(0, -v))`` so that ``v = v+ - v-``."""
    return np.maximum(0.0, v), np.maximum(0.0, -v)


@dataclass(frozen=True)
class DriftPair:
    A1p: float
    A1m: float
    A2p: float
    A2m: float

    @property
    def A1(self) -> float:
        return self.A1p - self.A1m

    @property
    def A2(self) -> float:
        return self.A2p - self.A2m

    @classmethod
    def from_values(cls, A1: float, A2: float) -> "DriftPair":
        return cls(max(0.0, A1), max(0.0, -A1), max(0.0, A2), max(0.0, -A2))


def drift_coefficients(params: MarketParams) -> DriftPair:
    """Log-space drifts ``A_s = r - D_s - sigma_s**2 / 2``."""
    A1 = params.r - params.D1 - 0.5 * params.sigma1**2
    A2 = params.r - params.D2 - 0.5 * params.sigma2**2
    return DriftPair.from_values(A1, A2)


def select_rho(gamma_sign, band: CorrelationBand):
    """Correlation picked by the sign of the cross gamma, as ``(rho+, rho-)``.

    Worst case takes rho1 where the cross gamma is positive and rho2 where it
    is negative; best case mirrors that. A zero sign follows the positive
    branch. Works on scalars and arrays.
    """
    g = np.asarray(gamma_sign, dtype=float)
    positive = g >= 0.0
    if band.scenario is Scenario.WORST:
        rho = np.where(positive, band.rho1, band.rho2)
    else:
        rho = np.where(positive, band.rho2, band.rho1)
    rp, rm = split(rho)
    if rp.ndim == 0:
        return float(rp), float(rm)
    return rp, rm


def log_transform(S1, S2, t, T):
    S1 = np.asarray(S1, dtype=float)
    S2 = np.asarray(S2, dtype=float)
    if np.any(S1 <= 0) or np.any(S2 <= 0):
        raise ValueError("asset prices must be positive")
    return np.log(S1), np.log(S2), T - np.asarray(t, dtype=float)


def exp_transform(x1, x2, tau, T):
    """Inverse of :func:`log_transform`."""
    return np.exp(x1), np.exp(x2), T - np.asarray(tau, dtype=float)


DataFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


def transform_neumann_data(g1: DataFn, edge: Edge) -> DataFn:
    """Map an S-space outward flux ``g1(S1, S2, tau)`` to log space.

    The outward derivative picks up a factor ``e^{x1}`` on the W/E edges and
    ``e^{x2}`` on the S/N edges.
    """
    edge = Edge(edge)
    if edge in (Edge.W, Edge.E):
        def g(x1, x2, tau):
            return np.exp(x1) * g1(np.exp(x1), np.exp(x2), tau)
    else:
        def g(x1, x2, tau):
            return np.exp(x2) * g1(np.exp(x1), np.exp(x2), tau)
    return g


def transform_dirichlet_data(g2: DataFn) -> DataFn:
    def g(x1, x2, tau):
        return g2(np.exp(x1), np.exp(x2), tau)
    return g


def default_params() -> MarketParams:
    return MarketParams(sigma1=0.2, sigma2=0.2, r=0.0953102, D1=0.0487902, D2=0.0)


LN200 = math.log(200.0)
