"""Van Leer limited upwinding of the first-derivative (drift) terms.

For each direction s the drift term ``A_s du/dx_s`` is approximated by
``A_s+ L_s+ u_{x_s} - A_s- L_s- u_{xbar_s}`` with limiter factors
``L_s+-`` in [0, 2] built from regularized slope ratios of the old field.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field, GhostFrame, diff, padded
from .model import DriftPair


@dataclass(frozen=True)
class RatioConfig:
    epsilon: float = 1e-30

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def van_leer_phi(theta):
    a = np.abs(theta)
    return (a + theta) / (1.0 + a)


def gradient_ratio(field: Field, ghosts: GhostFrame, node, direction: int,
                   cfg: RatioConfig = RatioConfig(), inverse: bool = False) -> float:
    """Forward over backward slope at ``node``, both shifted by epsilon.

    With ``inverse=True`` the reciprocal ratio is formed directly as
    backward over forward, rather than as ``1 / theta``.
    """
    fwd = diff(field, node, "forward1", direction, ghosts)
    bwd = diff(field, node, "backward1", direction, ghosts)
    eps = cfg.epsilon
    if inverse:
        return (bwd + eps) / (fwd + eps)
    return (fwd + eps) / (bwd + eps)


@dataclass(frozen=True)
class LimiterFactors:
    lambda1_plus: np.ndarray | float
    lambda1_minus: np.ndarray | float
    lambda2_plus: np.ndarray | float
    lambda2_minus: np.ndarray | float

    def as_tuple(self):
        return (self.lambda1_plus, self.lambda1_minus, self.lambda2_plus, self.lambda2_minus)


def _shift(node, direction, step):
    i, j = node
    return (i + step, j) if direction == 1 else (i, j + step)


def lambda_factors(field: Field, ghosts: GhostFrame, node, cfg: RatioConfig = RatioConfig()) -> LimiterFactors:
    """Limiter factors at a single node.

    ``L+`` at the last node and ``L-`` at the first node of a line would need
    a second ghost layer; the scheme never uses them and they are set to 1.
    """
    N = field.mesh.shape
    out = []
    for s in (1, 2):
        idx = node[s - 1]
        if idx < N[s - 1]:
            lp = (1.0 + 0.5 * van_leer_phi(gradient_ratio(field, ghosts, node, s, cfg, inverse=True))
                  - 0.5 * van_leer_phi(gradient_ratio(field, ghosts, _shift(node, s, 1), s, cfg)))
        else:
            lp = 1.0
        if idx > 1:
            lm = (1.0 + 0.5 * van_leer_phi(gradient_ratio(field, ghosts, node, s, cfg))
                  - 0.5 * van_leer_phi(gradient_ratio(field, ghosts, _shift(node, s, -1), s, cfg, inverse=True)))
        else:
            lm = 1.0
        out += [lp, lm]
    return LimiterFactors(*out)


def explicit_convection(field: Field, ghosts: GhostFrame, node, drift: DriftPair,
                        cfg: RatioConfig = RatioConfig()) -> float:
    lam = lambda_factors(field, ghosts, node, cfg)
    return (drift.A1p * lam.lambda1_plus * diff(field, node, "forward1", 1, ghosts)
            - drift.A1m * lam.lambda1_minus * diff(field, node, "backward1", 1, ghosts)
            + drift.A2p * lam.lambda2_plus * diff(field, node, "forward1", 2, ghosts)
            - drift.A2m * lam.lambda2_minus * diff(field, node, "backward1", 2, ghosts))


@dataclass(frozen=True)
class SlopeField:
    """Backward/forward slopes at every node, ghosts used at the mesh edge."""
    bwd1: np.ndarray
    fwd1: np.ndarray
    bwd2: np.ndarray
    fwd2: np.ndarray


def slopes(field: Field, ghosts: GhostFrame) -> SlopeField:
    P = padded(field, ghosts)
    h1, h2 = field.mesh.h1, field.mesh.h2
    d1 = (P[1:, 1:-1] - P[:-1, 1:-1]) / h1
    d2 = (P[1:-1, 1:] - P[1:-1, :-1]) / h2
    return SlopeField(d1[:-1, :], d1[1:, :], d2[:, :-1], d2[:, 1:])


def _line_factors(bwd, fwd, eps, axis):
    phi_t = van_leer_phi((fwd + eps) / (bwd + eps))
    phi_ti = van_leer_phi((bwd + eps) / (fwd + eps))
    lp = np.ones_like(bwd)
    lm = np.ones_like(bwd)
    if axis == 0:
        lp[:-1] = 1.0 + 0.5 * phi_ti[:-1] - 0.5 * phi_t[1:]
        lm[1:] = 1.0 + 0.5 * phi_t[1:] - 0.5 * phi_ti[:-1]
    else:
        lp[:, :-1] = 1.0 + 0.5 * phi_ti[:, :-1] - 0.5 * phi_t[:, 1:]
        lm[:, 1:] = 1.0 + 0.5 * phi_t[:, 1:] - 0.5 * phi_ti[:, :-1]
    return lp, lm


def limiter_factors(field: Field, ghosts: GhostFrame, cfg: RatioConfig = RatioConfig(),
                    sl: SlopeField | None = None) -> LimiterFactors:
    """Vectorized :func:`lambda_factors` over the whole mesh."""
    sl = sl if sl is not None else slopes(field, ghosts)
    l1p, l1m = _line_factors(sl.bwd1, sl.fwd1, cfg.epsilon, 0)
    l2p, l2m = _line_factors(sl.bwd2, sl.fwd2, cfg.epsilon, 1)
    return LimiterFactors(l1p, l1m, l2p, l2m)


@dataclass(frozen=True)
class ConvectionTerms:
    """The four upwinded pieces; their signed sum is the explicit convection."""
    plus1: np.ndarray
    minus1: np.ndarray
    plus2: np.ndarray
    minus2: np.ndarray

    def total(self) -> np.ndarray:
        return self.plus1 - self.minus1 + self.plus2 - self.minus2


def convection_terms(field: Field, ghosts: GhostFrame, drift: DriftPair,
                     cfg: RatioConfig = RatioConfig()) -> ConvectionTerms:
    sl = slopes(field, ghosts)
    lam = limiter_factors(field, ghosts, cfg, sl)
    return ConvectionTerms(
        drift.A1p * lam.lambda1_plus * sl.fwd1,
        drift.A1m * lam.lambda1_minus * sl.bwd1,
        drift.A2p * lam.lambda2_plus * sl.fwd2,
        drift.A2m * lam.lambda2_minus * sl.bwd2,
    )
