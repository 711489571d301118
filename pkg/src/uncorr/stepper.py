"""Time integration from tau = 0 to tau = T with per-step monitors."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .assembly import (BoundaryData, assemble, interior_slack, mesh_ratio_check,
                       verify_positivity_conditions)
from .grid import Field, Mesh
from .limiter import RatioConfig
from .linsolve import Method, SolveStats, solve
from .model import CorrelationBand, DriftPair, MarketParams, drift_coefficients

log = logging.getLogger(__name__)


class DtPolicy(str, Enum):
    H_SQUARED = "h2"
    RT_EQUALITY = "rt-equality"
    EXPLICIT = "explicit"


class ConditionViolation(RuntimeError):
    """A positivity hypothesis (mesh ratio, step bound, P1-P4) failed."""


@dataclass
class LogProblem:
    """A pricing problem in log-price coordinates, ready to integrate."""
    x1_min: float
    x1_max: float
    x2_min: float
    x2_max: float
    initial: Callable
    data: BoundaryData
    params: MarketParams
    band: CorrelationBand
    T: float
    source: Callable | None = None
    name: str = "custom"

    def mesh(self, N1: int, N2: int | None = None) -> Mesh:
        return Mesh(self.x1_min, self.x1_max, self.x2_min, self.x2_max, N1, N2 or N1)

    def initial_field(self, mesh: Mesh) -> Field:
        return Field.from_function(mesh, self.initial)


@dataclass
class SolverConfig:
    dt_policy: DtPolicy = DtPolicy.H_SQUARED
    dt: float | None = None
    enforce_positivity_conditions: bool = True
    ratio: RatioConfig = field(default_factory=RatioConfig)
    method: Method = Method.ITERATIVE
    tol: float = 1e-12
    max_iter: int = 10_000
    slack_rtol: float = 1e-10
    # False: take whole steps of dt until tau >= T (the end time may pass T)
    land_on_T: bool = True

    def __post_init__(self):
        self.dt_policy = DtPolicy(self.dt_policy)
        self.method = Method(self.method)
        if self.dt_policy is DtPolicy.EXPLICIT and not (self.dt and self.dt > 0):
            raise ValueError("explicit dt policy needs dt > 0")


def max_timestep(drift: DriftPair, h1: float, h2: float) -> float:
    """Largest step keeping the explicit drift part non-negative."""
    denom = abs(drift.A1) * h2 + abs(drift.A2) * h1
    if denom == 0:
        return math.inf
    return h1 * h2 / (2.0 * denom)


def time_step(config: SolverConfig, drift: DriftPair, mesh: Mesh, T: float) -> float:
    if config.dt_policy is DtPolicy.EXPLICIT:
        return float(config.dt)
    if config.dt_policy is DtPolicy.H_SQUARED:
        return mesh.h1 * mesh.h2
    bound = max_timestep(drift, mesh.h1, mesh.h2)
    return T if math.isinf(bound) else bound


@dataclass
class StepReport:
    n: int
    tau: float
    dt: float
    min_u: float
    max_norm: float
    p1: bool
    p2: bool
    p3: bool
    p4: bool
    slack_ok: bool
    solve: SolveStats

    @property
    def conditions_ok(self) -> bool:
        return self.p1 and self.p2 and self.p3 and self.p4


@dataclass
class RunReport:
    problem: str
    mesh: Mesh
    dt: float
    initial_min: float
    initial_norm: float
    steps: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    rate_flagged: bool = False

    @property
    def tau_final(self) -> float:
        return self.steps[-1].tau if self.steps else 0.0

    @property
    def min_value(self) -> float:
        return min([self.initial_min] + [s.min_u for s in self.steps])

    @property
    def max_norm(self) -> float:
        return max([self.initial_norm] + [s.max_norm for s in self.steps])

    @property
    def all_conditions(self) -> bool:
        return all(s.conditions_ok for s in self.steps)

    @property
    def all_slack(self) -> bool:
        return all(s.slack_ok for s in self.steps)

    def norms(self) -> np.ndarray:
        return np.array([self.initial_norm] + [s.max_norm for s in self.steps])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "tau", "min_u", "max_norm", "p1", "p2", "p3", "p4", "solver_iters"])
            w.writerow([0, f"{0.0:.16g}", f"{self.initial_min:.16g}", f"{self.initial_norm:.16g}",
                        "", "", "", "", 0])
            for s in self.steps:
                w.writerow([s.n, f"{s.tau:.16g}", f"{s.min_u:.16g}", f"{s.max_norm:.16g}",
                            int(s.p1), int(s.p2), int(s.p3), int(s.p4), s.solve.iterations])


def check_configuration(problem: LogProblem, mesh: Mesh, dt: float, config: SolverConfig) -> None:
    drift = drift_coefficients(problem.params)
    rh = mesh_ratio_check(problem.params, problem.band, problem.data.layout, mesh.h1, mesh.h2)
    if not rh.passed:
        raise ConditionViolation(f"mesh ratio h1/h2={rh.ratio:.6g} outside [{rh.lower:.6g}, {rh.upper:.6g}]")
    bound = max_timestep(drift, mesh.h1, mesh.h2)
    if dt > bound * (1 + 1e-12):
        raise ConditionViolation(f"time step {dt:.6g} exceeds the drift bound {bound:.6g}")


def step(state: Field, tau: float, dt: float, problem: LogProblem, config: SolverConfig,
         n: int = 1) -> tuple[Field, StepReport]:
    """Advance one level: correlation field, limiter, assembly, solve."""
    mesh = state.mesh
    drift = drift_coefficients(problem.params)
    tau_new = tau + dt
    M, F = assemble(state, problem.data, problem.params, problem.band, drift, dt, tau_new,
                    config.ratio, problem.source)
    rep = verify_positivity_conditions(M, F)
    slack = interior_slack(M)
    target = 1.0 / dt + problem.params.r
    slack_ok = bool(np.all(np.abs(slack - target) <= config.slack_rtol * target))
    if config.enforce_positivity_conditions and not (rep.all and slack_ok):
        raise ConditionViolation(f"step {n} (tau={tau_new:.6g}): conditions failed {rep.worst}, "
                                 f"slack_ok={slack_ok}")
    u, stats = solve(M, F, config.method, config.tol, config.max_iter, x0=state.flat())
    new = Field.from_flat(mesh, u)
    report = StepReport(n, tau_new, dt, float(u.min()), float(np.abs(u).max()),
                        rep.p1, rep.p2, rep.p3, rep.p4, slack_ok, stats)
    return new, report


def integrate(problem: LogProblem, mesh: Mesh, config: SolverConfig | None = None,
              initial: Field | None = None, T: float | None = None) -> tuple[Field, RunReport]:
    config = config or SolverConfig()
    T = problem.T if T is None else T
    drift = drift_coefficients(problem.params)
    u = initial if initial is not None else problem.initial_field(mesh)
    dt = time_step(config, drift, mesh, T) if T > 0 else 0.0
    if config.enforce_positivity_conditions and T > 0:
        check_configuration(problem, mesh, dt, config)
    report = RunReport(problem.name, mesh, dt, float(u.values.min()), u.max_norm(),
                       rate_flagged=problem.params.rate_flagged)
    if problem.params.rate_flagged:
        log.warning("r = 0: the positivity and stability estimates assume r > 0")
    tau = 0.0
    n = 0
    while tau < T:
        h = dt
        last = config.land_on_T and T - tau <= dt * (1 + 1e-9)
        if last:
            h = T - tau
        elif not config.land_on_T and T - tau <= dt * 1e-9:
            break
        n += 1
        u, sr = step(u, tau, h, problem, config, n)
        tau = T if last else (n * dt if not config.land_on_T else tau + h)
        report.steps.append(sr)
        if not sr.conditions_ok:
            report.violations.append(n)
    return u, report
