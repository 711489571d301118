"""Solvers for the nine-band system ``M u = F``."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numba
import numpy as np
from scipy.linalg import solve_banded

from .assembly import SystemMatrix


class Method(str, Enum):
    DIRECT = "direct"
    ITERATIVE = "iterative"


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class SolveStats:
    iterations: int
    residual: float
    wall_time: float
    history: list = field(default_factory=list)


@numba.njit(cache=True)
def _gs_sweep(diags, offsets, center, F, x):
    n = x.shape[0]
    nd = offsets.shape[0]
    for k in range(n):
        s = F[k]
        for d in range(nd):
            if d == center:
                continue
            kk = k + offsets[d]
            if 0 <= kk < n:
                a = diags[d, k]
                if a != 0.0:
                    s -= a * x[kk]
        x[k] = s / diags[center, k]


@numba.njit(cache=True)
def _residual_inf(diags, offsets, F, x):
    n = x.shape[0]
    nd = offsets.shape[0]
    r = 0.0
    for k in range(n):
        s = -F[k]
        for d in range(nd):
            kk = k + offsets[d]
            if 0 <= kk < n:
                s += diags[d, k] * x[kk]
        if abs(s) > r:
            r = abs(s)
    return r


def residual_norm(M: SystemMatrix, u: np.ndarray, F: np.ndarray) -> float:
    return float(_residual_inf(M.diags, np.asarray(M.offsets, dtype=np.int64), F, u))


def solve(M: SystemMatrix, F: np.ndarray, method: Method | str = Method.ITERATIVE,
          tol: float = 1e-12, max_iter: int = 10_000, x0: np.ndarray | None = None):
    """Solve ``M u = F``.

    The iterative method is Gauss-Seidel with a fixed ascending sweep; it
    requires strict diagonal dominance and stops once
    ``||M u - F||_inf <= tol * ||F||_inf``. The direct method is a banded LU.
    Returns ``(u, SolveStats)``.
    """
    method = Method(method)
    t0 = time.perf_counter()
    F = np.ascontiguousarray(F, dtype=float)
    fnorm = float(np.max(np.abs(F))) if F.size else 0.0
    offsets = np.asarray(M.offsets, dtype=np.int64)
    if method is Method.DIRECT:
        ab, lu = M.to_banded()
        try:
            u = solve_banded(lu, ab, F)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"banded factorization failed: {exc}") from exc
        if not np.all(np.isfinite(u)):
            raise SolverError("direct solve produced non-finite values")
        res = residual_norm(M, u, F)
        return u, SolveStats(0, res, time.perf_counter() - t0)

    diag = M.diagonal()
    if np.any(diag <= 0):
        raise SolverError("non-positive diagonal entry")
    x = np.zeros_like(F) if x0 is None else np.array(x0, dtype=float)
    target = tol * fnorm
    history = []
    res = residual_norm(M, x, F)
    history.append(res)
    it = 0
    diags = np.ascontiguousarray(M.diags)
    c = M.center_index
    while res > target:
        if it >= max_iter:
            raise ConvergenceError(f"Gauss-Seidel did not reach tol={tol} in {max_iter} sweeps "
                                   f"(residual {res:.3e})", history)
        _gs_sweep(diags, offsets, c, F, x)
        it += 1
        res = residual_norm(M, x, F)
        history.append(res)
        if not np.isfinite(res):
            raise SolverError("Gauss-Seidel diverged")
    return x, SolveStats(it, res, time.perf_counter() - t0, history)
