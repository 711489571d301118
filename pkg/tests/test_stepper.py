import math

import numpy as np
import pytest

from oracles import A1_DEFAULT, A2_DEFAULT
from uncorr.model import DriftPair, default_params, drift_coefficients
from uncorr.pricing import make_tp
from uncorr.stepper import (ConditionViolation, DtPolicy, SolverConfig, integrate, max_timestep,
                            time_step)


def test_max_timestep_formula():
    d = DriftPair.from_values(A1_DEFAULT, A2_DEFAULT)
    h = 0.1
    expected = h * h / (2 * (abs(A1_DEFAULT) * h + abs(A2_DEFAULT) * h))
    assert max_timestep(d, h, h) == pytest.approx(expected)
    assert max_timestep(d, h, h) / h == pytest.approx(4.9101, abs=5e-4)
    assert max_timestep(DriftPair.from_values(0, 0), h, h) == math.inf


def test_time_step_policies():
    problem = make_tp("tp4").to_log_problem()
    mesh = problem.mesh(21)
    drift = drift_coefficients(problem.params)
    assert time_step(SolverConfig(), drift, mesh, 2.0) == pytest.approx(mesh.h1 * mesh.h2)
    assert time_step(SolverConfig(DtPolicy.RT_EQUALITY), drift, mesh, 2.0) == pytest.approx(
        max_timestep(drift, mesh.h1, mesh.h2))
    assert time_step(SolverConfig("explicit", dt=0.3), drift, mesh, 2.0) == 0.3
    with pytest.raises(ValueError):
        SolverConfig("explicit")


def test_lands_on_T():
    problem = make_tp("tp4", T=0.25).to_log_problem()
    u, rep = integrate(problem, problem.mesh(11), SolverConfig("explicit", dt=0.1))
    assert [round(s.dt, 12) for s in rep.steps] == [0.1, 0.1, 0.05]
    assert rep.tau_final == 0.25
    assert rep.all_conditions and rep.all_slack and rep.min_value >= 0


def test_whole_steps_mode():
    problem = make_tp("tp4", T=0.25).to_log_problem()
    _, rep = integrate(problem, problem.mesh(11), SolverConfig("explicit", dt=0.1, land_on_T=False))
    assert len(rep.steps) == 3 and rep.tau_final == pytest.approx(0.3)


def test_T_zero_returns_initial():
    problem = make_tp("tp1", T=0.0).to_log_problem()
    mesh = problem.mesh(11)
    u, rep = integrate(problem, mesh)
    np.testing.assert_array_equal(u.values, problem.initial_field(mesh).values)
    assert rep.steps == []


def test_step_bound_enforced():
    problem = make_tp("tp4").to_log_problem()
    with pytest.raises(ConditionViolation):
        integrate(problem, problem.mesh(11), SolverConfig("explicit", dt=20.0))


def test_mesh_ratio_enforced():
    problem = make_tp("tp4").to_log_problem()
    with pytest.raises(ConditionViolation):
        integrate(problem, problem.mesh(41, 5), SolverConfig())


def test_report_csv(tmp_path):
    problem = make_tp("tp4", T=0.1).to_log_problem()
    _, rep = integrate(problem, problem.mesh(11), SolverConfig("explicit", dt=0.05))
    p = tmp_path / "steps.csv"
    rep.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "n,tau,min_u,max_norm,p1,p2,p3,p4,solver_iters"
    assert len(lines) == 2 + len(rep.steps)
    assert rep.norms().shape == (1 + len(rep.steps),)


def test_rate_flag_warns(caplog):
    from uncorr.model import MarketParams
    problem = make_tp("tp4", T=0.05, params=MarketParams(0.2, 0.2, 0.0)).to_log_problem()
    _, rep = integrate(problem, problem.mesh(11), SolverConfig("explicit", dt=0.05))
    assert rep.rate_flagged
    assert any("r = 0" in r.message for r in caplog.records)
