"""Manufactured-solution study, two-grid self-convergence and a pointwise
oracle for the assembled system."""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import (BoundaryData, BoundaryLayout, EdgeKind, SystemMatrix, assemble)
from .grid import Field, Mesh, diff, extrapolate_ghost
from .limiter import RatioConfig, lambda_factors
from .model import (LN200, CorrelationBand, DriftPair, Edge, MarketParams, Scenario,
                    default_params, drift_coefficients, select_rho)
from .stepper import LogProblem, RunReport, SolverConfig, integrate

K = math.pi / 3.0
MMS_DOMAINS = {"A": (-1.0, 1.0), "B": (-LN200, LN200)}


def mms_exact(x1, x2, tau):
    return np.exp(-0.5 * tau) * np.cos(K * x1) * np.cos(K * x2)


def mms_residual(x1, x2, tau, params: MarketParams, band: CorrelationBand):
    """Forcing that makes :func:`mms_exact` solve the modified equation.

    The correlation is picked by the sign of the exact cross derivative.
    """
    e = np.exp(-0.5 * tau)
    c1, s1 = np.cos(K * x1), np.sin(K * x1)
    c2, s2 = np.cos(K * x2), np.sin(K * x2)
    u = e * c1 * c2
    uxy = K * K * e * s1 * s2
    rp, rm = select_rho(np.sign(uxy), band)
    rho = rp - rm
    drift = drift_coefficients(params)
    s1sq, s2sq = params.sigma1**2, params.sigma2**2
    return (-0.5 * u + 0.5 * (s1sq + s2sq) * K * K * u
            - rho * params.sigma1 * params.sigma2 * uxy
            + drift.A1 * K * e * s1 * c2 + drift.A2 * K * e * c1 * s2
            + params.r * u)


def _mms_dx1(x1, x2, tau):
    return -K * np.exp(-0.5 * tau) * np.sin(K * x1) * np.cos(K * x2)


def _mms_dx2(x1, x2, tau):
    return -K * np.exp(-0.5 * tau) * np.cos(K * x1) * np.sin(K * x2)


def mms_problem(domain: str = "A", band: CorrelationBand | None = None,
                params: MarketParams | None = None, T: float = 0.5) -> LogProblem:
    """Dirichlet on W, exact outward derivative on E, N and S."""
    lo, hi = MMS_DOMAINS[domain.upper()]
    band = band or CorrelationBand(-0.2, 0.6)
    params = params or default_params()
    layout = BoundaryLayout(W=EdgeKind.DIRICHLET, E=EdgeKind.NEUMANN,
                            S=EdgeKind.NEUMANN, N=EdgeKind.NEUMANN)
    funcs = {
        Edge.W: mms_exact,
        Edge.E: _mms_dx1,
        Edge.N: _mms_dx2,
        Edge.S: lambda x1, x2, tau: -_mms_dx2(x1, x2, tau),
    }
    return LogProblem(lo, hi, lo, hi, initial=lambda x1, x2: mms_exact(x1, x2, 0.0),
                      data=BoundaryData(layout, funcs), params=params, band=band, T=T,
                      source=lambda x1, x2, tau: mms_residual(x1, x2, tau, params, band),
                      name=f"mms-{domain.upper()}")


# ---------------------------------------------------------------------------
# reports

@dataclass
class ConvergenceReport:
    label: str
    kind: str  # "exact" or "two-grid"
    N: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    runtimes: list = field(default_factory=list)
    runs: list = field(default_factory=list)

    @property
    def rates(self) -> list:
        out = [math.nan]
        for a, b in zip(self.errors[:-1], self.errors[1:]):
            out.append(math.log2(a / b) if a > 0 and b > 0 else math.nan)
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "error", "rate", "runtime_s"])
            for n, e, r, t in zip(self.N, self.errors, self.rates, self.runtimes):
                w.writerow([n, f"{e:.16g}", "" if math.isnan(r) else f"{r:.16g}", f"{t:.6f}"])

    def table(self) -> str:
        lines = [f"{self.label} ({self.kind} error)", f"{'N':>6}  {'E_inf':>14}  {'rate':>8}  {'time[s]':>8}"]
        for n, e, r, t in zip(self.N, self.errors, self.rates, self.runtimes):
            rs = "" if math.isnan(r) else f"{r:.4f}"
            lines.append(f"{n:>6}  {e:>14.6e}  {rs:>8}  {t:>8.2f}")
        return "\n".join(lines)


def _run_one(args):
    problem, N, config = args
    t0 = time.perf_counter()
    u, rep = integrate(problem, problem.mesh(N), config)
    return u, rep, time.perf_counter() - t0


def _map(jobs, workers):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def run_mms(domain: str = "A", band: CorrelationBand | None = None,
            meshes=(21, 41, 81, 161), T: float = 0.5, config: SolverConfig | None = None,
            params: MarketParams | None = None, workers: int = 1) -> ConvergenceReport:
    problem = mms_problem(domain, band, params, T)
    config = config or SolverConfig(enforce_positivity_conditions=False)
    rep = ConvergenceReport(f"MMS domain {domain.upper()}, rho=({problem.band.rho1}, {problem.band.rho2})", "exact")
    for N, (u, run, dt) in zip(meshes, _map([(problem, N, config) for N in meshes], workers)):
        X1, X2 = u.mesh.coords()
        # with whole steps the run may end past T; compare at the time reached
        err = float(np.max(np.abs(u.values - mms_exact(X1, X2, run.tau_final if run.steps else T))))
        rep.N.append(N)
        rep.errors.append(err)
        rep.runtimes.append(dt)
        rep.runs.append(run)
    return rep


def coarse_restriction(fine: Field, coarse: Mesh) -> np.ndarray:
    """Fine-mesh values at the coarse nodes of a nested pair N -> 2N - 1."""
    m = fine.mesh
    if (m.N1 - 1) != 2 * (coarse.N1 - 1) or (m.N2 - 1) != 2 * (coarse.N2 - 1):
        raise ValueError(f"meshes {coarse.shape} and {m.shape} are not nested (N -> 2N-1)")
    return fine.values[::2, ::2]


def check_nested(meshes) -> None:
    for a, b in zip(meshes[:-1], meshes[1:]):
        if b != 2 * a - 1:
            raise ValueError(f"mesh sequence must satisfy N_next = 2N - 1, got {a} -> {b}")


def self_convergence(problem: LogProblem, meshes=(21, 41, 81, 161, 321),
                     config: SolverConfig | None = None, workers: int = 1) -> ConvergenceReport:
    """Two-grid errors ``max |u^N - u^{2N-1}|`` over the coarse nodes.

    The report holds one error per consecutive pair, labelled by the coarse
    N, so each rate belongs to a mesh triple.
    """
    meshes = list(meshes)
    check_nested(meshes)
    config = config or SolverConfig()
    results = _map([(problem, N, config) for N in meshes], workers)
    rep = ConvergenceReport(problem.name, "two-grid")
    for k in range(len(meshes) - 1):
        uc, run, dt = results[k]
        uf = results[k + 1][0]
        err = float(np.max(np.abs(uc.values - coarse_restriction(uf, uc.mesh))))
        rep.N.append(meshes[k])
        rep.errors.append(err)
        rep.runtimes.append(dt + results[k + 1][2])
        rep.runs.append(run)
    rep.runs.append(results[-1][1])
    return rep


# ---------------------------------------------------------------------------
# oracle: every fully discrete equation coded pointwise

def _oracle_residuals(old: Field, data: BoundaryData, params: MarketParams,
                      band: CorrelationBand, drift: DriftPair, dt: float, tau: float,
                      cand: Field, cfg: RatioConfig, source=None) -> np.ndarray:
    """``LHS(candidate) - RHS`` of each node's equation, straight from the formulas."""
    mesh = old.mesh
    N1, N2 = mesh.shape
    h1, h2 = mesh.h1, mesh.h2
    sg1, sg2 = params.sigma1, params.sigma2
    ss = sg1 * sg2
    r = params.r
    lay = data.layout
    gh = extrapolate_ghost(old)
    out = np.zeros(mesh.shape)

    def g(edge, i, j):
        return float(data(edge, float(mesh.x1_at(i)), float(mesh.x2_at(j)), tau))

    # one-sided and central differences of edge data along the edge
    def gx1f(e, i, j): return (g(e, i + 1, j) - g(e, i, j)) / h1
    def gx1b(e, i, j): return (g(e, i, j) - g(e, i - 1, j)) / h1
    def gx1c(e, i, j): return (g(e, i + 1, j) - g(e, i - 1, j)) / (2 * h1)
    def gx2f(e, i, j): return (g(e, i, j + 1) - g(e, i, j)) / h2
    def gx2b(e, i, j): return (g(e, i, j) - g(e, i, j - 1)) / h2
    def gx2c(e, i, j): return (g(e, i, j + 1) - g(e, i, j - 1)) / (2 * h2)

    def U(i, j):
        return float(cand.values[i - 1, j - 1])

    def d11(i, j): return (U(i + 1, j) - 2 * U(i, j) + U(i - 1, j)) / h1**2
    def d22(i, j): return (U(i, j + 1) - 2 * U(i, j) + U(i, j - 1)) / h2**2
    def f1(i, j): return (U(i + 1, j) - U(i, j)) / h1
    def b1(i, j): return (U(i, j) - U(i - 1, j)) / h1
    def f2(i, j): return (U(i, j + 1) - U(i, j)) / h2
    def b2(i, j): return (U(i, j) - U(i, j - 1)) / h2
    def ff(i, j): return (U(i + 1, j + 1) - U(i + 1, j) - U(i, j + 1) + U(i, j)) / (h1 * h2)
    def bb(i, j): return (U(i, j) - U(i - 1, j) - U(i, j - 1) + U(i - 1, j - 1)) / (h1 * h2)
    def bf(i, j): return (U(i, j + 1) - U(i, j) - U(i - 1, j + 1) + U(i - 1, j)) / (h1 * h2)
    def fb(i, j): return (U(i + 1, j) - U(i, j) - U(i + 1, j - 1) + U(i, j - 1)) / (h1 * h2)

    for j in range(1, N2 + 1):
        for i in range(1, N1 + 1):
            node = (i, j)
            on_w, on_e, on_s, on_n = i == 1, i == N1, j == 1, j == N2
            touched = [e for e, on in ((Edge.W, on_w), (Edge.E, on_e), (Edge.S, on_s), (Edge.N, on_n)) if on]
            if any(lay.is_dirichlet(e) for e in touched):
                # W/E data take precedence at a Dirichlet corner
                pick = next((e for e in (Edge.W, Edge.E) if e in touched and lay.is_dirichlet(e)), None)
                if pick is None:
                    pick = next(e for e in touched if lay.is_dirichlet(e))
                out[i - 1, j - 1] = U(i, j) - g(pick, i, j)
                continue

            lam = lambda_factors(old, gh, node, cfg)
            cp1 = drift.A1p * lam.lambda1_plus * diff(old, node, "forward1", 1, gh)
            cm1 = drift.A1m * lam.lambda1_minus * diff(old, node, "backward1", 1, gh)
            cp2 = drift.A2p * lam.lambda2_plus * diff(old, node, "forward1", 2, gh)
            cm2 = drift.A2m * lam.lambda2_minus * diff(old, node, "backward1", 2, gh)
            src = 0.0 if source is None else float(source(mesh.x1_at(i), mesh.x2_at(j), tau))
            ut = (U(i, j) - old[i, j]) / dt

            if not touched:
                gam = diff(old, node, "mixed_central")
                rp, rm = select_rho(np.sign(gam), band)
                mplus = 0.5 * (ff(i, j) + bb(i, j))
                mminus = 0.5 * (bf(i, j) + fb(i, j))
                lhs = (ut - 0.5 * sg1**2 * d11(i, j) - 0.5 * sg2**2 * d22(i, j)
                       - ss * (rp * mplus - rm * mminus) + r * U(i, j))
                rhs = cp1 - cm1 + cp2 - cm2 + src
            elif touched == [Edge.W]:
                rp, rm = select_rho(np.sign(-gx2c(Edge.W, i, j)), band)
                W = Edge.W
                lhs = (ut - sg1**2 / h1 * f1(i, j) - 0.5 * sg2**2 * d22(i, j)
                       - 0.5 * ss * (rp + rm) * (ff(i, j) - fb(i, j)) + r * U(i, j))
                rhs = (cp1 + cp2 - cm2 + drift.A1m * g(W, i, j) + sg1**2 / h1 * g(W, i, j)
                       - ss * (rp * gx2b(W, i, j) - rm * gx2f(W, i, j)) + src)
            elif touched == [Edge.N]:
                N_ = Edge.N
                rp, rm = select_rho(np.sign(gx1c(N_, i, j)), band)
                lhs = (ut - 0.5 * sg1**2 * d11(i, j) + sg2**2 / h2 * b2(i, j)
                       - 0.5 * ss * (rp + rm) * (bb(i, j) - fb(i, j)) + r * U(i, j))
                rhs = (cp1 - cm1 - cm2 + drift.A2p * g(N_, i, j) + sg2**2 / h2 * g(N_, i, j)
                       + ss * (rp * gx1f(N_, i, j) - rm * gx1b(N_, i, j)) + src)
            elif touched == [Edge.E]:
                E_ = Edge.E
                rp, rm = select_rho(np.sign(gx2c(E_, i, j)), band)
                lhs = (ut + sg1**2 / h1 * b1(i, j) - 0.5 * sg2**2 * d22(i, j)
                       - 0.5 * ss * (rp + rm) * (bb(i, j) - bf(i, j)) + r * U(i, j))
                rhs = (-cm1 + cp2 - cm2 + drift.A1p * g(E_, i, j) + sg1**2 / h1 * g(E_, i, j)
                       + ss * (rp * gx2f(E_, i, j) - rm * gx2b(E_, i, j)) + src)
            elif touched == [Edge.S]:
                S_ = Edge.S
                rp, rm = select_rho(np.sign(-gx1c(S_, i, j)), band)
                lhs = (ut - 0.5 * sg1**2 * d11(i, j) - sg2**2 / h2 * f2(i, j)
                       - 0.5 * ss * (rp + rm) * (ff(i, j) - bf(i, j)) + r * U(i, j))
                rhs = (cp1 - cm1 + cp2 + drift.A2m * g(S_, i, j) + sg2**2 / h2 * g(S_, i, j)
                       - ss * (rp * gx1b(S_, i, j) - rm * gx1f(S_, i, j)) + src)
            else:
                # corners: x1-differences use the N/S data, x2-differences the W/E data
                eh = Edge.W if on_w else Edge.E
                ev = Edge.S if on_s else Edge.N
                gh_, gv = g(eh, i, j), g(ev, i, j)
                diffusion_data = sg1**2 / h1 * gh_ + sg2**2 / h2 * gv
                if on_w and on_n:
                    rp, rm = select_rho(np.sign(gx1c(ev, i, j) - gx2c(eh, i, j)), band)
                    G = gx1f(ev, i, j) - gx2b(eh, i, j) + gx2c(eh, i, j) - gx1c(ev, i, j)
                    lhs = (ut - sg1**2 / h1 * f1(i, j) + sg2**2 / h2 * b2(i, j)
                           + ss * (rp + rm) * fb(i, j) + r * U(i, j))
                    rhs = (cp1 - cm2 + drift.A1m * gh_ + drift.A2p * gv + diffusion_data
                           + ss * rp * (gx1f(ev, i, j) - gx2b(eh, i, j)) + ss * rm * G + src)
                elif on_e and on_n:
                    rp, rm = select_rho(np.sign(gx1c(ev, i, j) + gx2c(eh, i, j)), band)
                    G = gx1b(ev, i, j) + gx2b(eh, i, j) - gx2c(eh, i, j) - gx1c(ev, i, j)
                    lhs = (ut + sg1**2 / h1 * b1(i, j) + sg2**2 / h2 * b2(i, j)
                           - ss * (rp + rm) * bb(i, j) + r * U(i, j))
                    rhs = (-cm1 - cm2 + drift.A1p * gh_ + drift.A2p * gv + diffusion_data
                           - ss * rp * G - ss * rm * (gx1b(ev, i, j) + gx2b(eh, i, j)) + src)
                elif on_e and on_s:
                    rp, rm = select_rho(np.sign(gx2c(eh, i, j) - gx1c(ev, i, j)), band)
                    G = gx1b(ev, i, j) - gx2f(eh, i, j) - gx1c(ev, i, j) + gx2c(eh, i, j)
                    lhs = (ut + sg1**2 / h1 * b1(i, j) - sg2**2 / h2 * f2(i, j)
                           + ss * (rp + rm) * bf(i, j) + r * U(i, j))
                    rhs = (-cm1 + cp2 + drift.A1p * gh_ + drift.A2m * gv + diffusion_data
                           - ss * rp * (gx1b(ev, i, j) - gx2f(eh, i, j)) - ss * rm * G + src)
                else:
                    # SW: the doubly-ghost node carries the rho+ coupling, so the
                    # averaged term G goes with rho+
                    rp, rm = select_rho(np.sign(-gx2c(eh, i, j) - gx1c(ev, i, j)), band)
                    G = gx1f(ev, i, j) + gx2f(eh, i, j) - gx1c(ev, i, j) - gx2c(eh, i, j)
                    lhs = (ut - sg1**2 / h1 * f1(i, j) - sg2**2 / h2 * f2(i, j)
                           - ss * (rp + rm) * ff(i, j) + r * U(i, j))
                    rhs = (cp1 + cp2 + drift.A1m * gh_ + drift.A2m * gv + diffusion_data
                           + ss * rp * G + ss * rm * (gx1f(ev, i, j) + gx2f(eh, i, j)) + src)
            out[i - 1, j - 1] = lhs - rhs
    return out


def oracle_discrepancy(old: Field, data: BoundaryData, params: MarketParams, band: CorrelationBand,
                       dt: float, tau: float, cand: Field, cfg: RatioConfig = RatioConfig(),
                       source=None, M: SystemMatrix | None = None, F=None) -> float:
    drift = drift_coefficients(params)
    if M is None:
        M, F = assemble(old, data, params, band, drift, dt, tau, cfg, source)
    row = M.matvec(cand.flat()) - F
    point = _oracle_residuals(old, data, params, band, drift, dt, tau, cand, cfg, source).ravel(order="F")
    return float(np.max(np.abs(row - point)))


LAYOUTS = {
    "dirichlet": BoundaryLayout.uniform(EdgeKind.DIRICHLET),
    "neumann": BoundaryLayout.uniform(EdgeKind.NEUMANN),
    "tp4": BoundaryLayout(W=EdgeKind.DIRICHLET, E=EdgeKind.NEUMANN, S=EdgeKind.NEUMANN, N=EdgeKind.NEUMANN),
}


def oracle_row_check(N1: int = 6, N2: int | None = None, seed: int = 0, layout: str = "neumann",
                     band: CorrelationBand | None = None, params: MarketParams | None = None) -> float:
    """Max discrepancy between the assembled rows and the pointwise formulas.

    Uses a random non-negative old field, random smooth boundary data, a
    random step and an unrelated random candidate vector.
    """
    rng = np.random.default_rng(seed)
    N2 = N2 or N1
    mesh = Mesh(-1.0, 1.0, -0.5, 0.5 + rng.uniform(0, 1), N1, N2)
    params = params or default_params()
    band = band or CorrelationBand(-0.2, 0.6, Scenario(rng.choice(["worst", "best"])))
    old = Field(mesh, rng.uniform(0, 1, mesh.shape))
    cand = Field(mesh, rng.normal(size=mesh.shape))
    coef = rng.normal(size=(4, 4))

    def make(c):
        return lambda x1, x2, tau: c[0] + c[1] * np.sin(1.3 * x1 + c[2]) * np.cos(0.7 * x2 + c[3]) + 0.1 * tau

    data = BoundaryData(LAYOUTS[layout], {e: make(coef[k]) for k, e in enumerate(Edge)})
    dt = float(rng.uniform(1e-3, 1e-1))
    tau = float(rng.uniform(0, 1))
    return oracle_discrepancy(old, data, params, band, dt, tau, cand)
