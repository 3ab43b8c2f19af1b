"""Cubic-regularized outer loop on smooth objectives."""

import json

import numpy as np
import pytest

from asem.arc import (
    ArcConfig,
    ArcError,
    SmoothObjective,
    arc_minimize,
    iterations_csv,
    min_hessian_eig,
)
from asem.problems import test_problem as native_problem


def quadratic_objective(diag, c):
    diag = np.asarray(diag, dtype=float)
    c = np.asarray(c, dtype=float)
    return SmoothObjective(
        dim=diag.size,
        value=lambda x: float(c @ x) + 0.5 * float(x @ (diag * x)),
        gradient=lambda x: c + diag * x,
        hessian_vec=lambda x, v: diag * v,
        trace_hint=lambda x: float(np.sum(diag)),
        name="quadratic",
        default_start=np.zeros(diag.size),
    )


def test_config_validation():
    with pytest.raises(ValueError):
        ArcConfig(gamma1=1.0)  # must exceed 1
    with pytest.raises(ValueError):
        ArcConfig(eta1=0.5, eta2=0.3)  # ordering
    with pytest.raises(ValueError):
        ArcConfig(rho0=0.0)
    with pytest.raises(ValueError):
        ArcConfig(subsolver="simplex")


def test_convex_quadratic_converges_fast():
    obj = native_problem("ConvexQuadratic", 10)
    cfg = ArcConfig(grad_tol=1e-10, rho0=1.0, subsolver_params={"m": 9})
    rep = arc_minimize(obj, np.ones(10), cfg)
    assert rep.converged
    assert rep.iterations <= 20
    assert rep.grad_norm <= 1e-10


def test_kappa_is_one_when_model_is_exact():
    # at x = 0 the cubic model with rho = 1 IS the objective, so the first
    # ratio is exactly 1 and the step is very successful
    obj = native_problem("NonconvexQuadraticCubic", 10)
    cfg = ArcConfig(rho0=1.0, max_iters=1, subsolver_params={"m": 9})
    rep = arc_minimize(obj, np.zeros(10), cfg)
    row = rep.log[0]
    assert row.kappa == pytest.approx(1.0, abs=1e-9)
    assert row.accepted


def test_rho_update_branches():
    obj = native_problem("ChainedRosenbrock", 30)
    cfg = ArcConfig(max_iters=60, subsolver_params={"m": 5})
    rep = arc_minimize(obj, obj.default_start, cfg)
    assert len(rep.log) >= 2
    for prev, cur in zip(rep.log, rep.log[1:]):
        # NaN kappa (no usable model decrease) counts as unsuccessful
        assert prev.accepted == (prev.kappa >= cfg.eta1)
        if prev.accepted and prev.kappa > cfg.eta2:
            want = max(cfg.rho_min, prev.rho / cfg.gamma1)
        elif prev.accepted:
            want = prev.rho
        else:
            want = cfg.gamma2 * prev.rho
        assert cur.rho == pytest.approx(want, rel=1e-12)


def test_objective_decreases_on_accepted_steps():
    obj = native_problem("TridiagQuartic", 25)
    cfg = ArcConfig(max_iters=40, subsolver_params={"m": 5})
    rep = arc_minimize(obj, obj.default_start, cfg)
    fs = [row.f for row in rep.log if row.accepted]
    assert all(a >= b for a, b in zip(fs, fs[1:]))
    assert rep.f <= rep.log[0].f


def test_model_value_never_positive():
    # the used step always comes from a model whose value is <= 0
    # (the Cauchy safeguard guarantees a nonpositive model minimum)
    obj = native_problem("ChainedRosenbrock", 20)
    cfg = ArcConfig(max_iters=30, subsolver_params={"m": 3})
    rep = arc_minimize(obj, obj.default_start, cfg)
    assert all(row.model_value <= 1e-15 for row in rep.log)


def test_hard_case_falls_back_to_cauchy():
    # gradient exactly orthogonal to the negative eigenspace: with a full
    # subspace (m = n) the subproblem detects the vanishing component and
    # the outer loop substitutes the Cauchy step
    diag = np.array([-1.0, 1.0])
    obj = quadratic_objective(diag, np.zeros(2))
    cfg = ArcConfig(max_iters=5, subsolver_params={"m": 2},
                    estimate_min_eig=False)
    rep = arc_minimize(obj, np.array([0.0, 1.0]), cfg)
    sources = {row.step_source for row in rep.log}
    assert "cauchy_fallback" in sources
    assert rep.flags.get("hard_case_iterations", 0) >= 1
    assert rep.f <= 0.5  # still made progress along the gradient


def test_cauchy_subsolver_runs():
    obj = native_problem("ConvexQuadratic", 15)
    cfg = ArcConfig(subsolver="cauchy", max_iters=500, grad_tol=1e-6)
    rep = arc_minimize(obj, np.ones(15), cfg)
    assert rep.converged
    assert all(row.step_source == "cauchy" for row in rep.log)


def test_max_iters_exhaustion_flag():
    obj = native_problem("ChainedRosenbrock", 40)
    cfg = ArcConfig(max_iters=3, subsolver_params={"m": 2})
    rep = arc_minimize(obj, obj.default_start, cfg)
    assert not rep.converged
    assert rep.iterations == 3


def test_non_finite_start_raises():
    obj = quadratic_objective([1.0, 1.0], [0.0, 0.0])
    with np.errstate(invalid="ignore"), pytest.raises(ArcError):
        arc_minimize(obj, np.array([np.inf, 0.0]), ArcConfig())


def test_run_is_deterministic():
    obj = native_problem("TridiagQuartic", 20)
    cfg = ArcConfig(max_iters=15, subsolver_params={"m": 4}, seed=9)
    r1 = arc_minimize(obj, obj.default_start, cfg)
    r2 = arc_minimize(obj, obj.default_start, cfg)
    assert r1.f == r2.f
    assert [row.kappa for row in r1.log] == [row.kappa for row in r2.log]


def test_min_hessian_eig_matches_dense_oracle():
    obj = native_problem("ChainedRosenbrock", 50)
    x = np.ones(50)  # the global minimizer: Hessian PD tridiagonal
    cols = [obj.hessian_vec(x, np.eye(50)[i]) for i in range(50)]
    h = np.column_stack(cols)
    want = float(np.linalg.eigvalsh((h + h.T) / 2)[0])
    est = min_hessian_eig(obj, x, tol=1e-10)
    assert est.value == pytest.approx(want, abs=1e-6)


def test_report_min_eig_at_solution():
    obj = native_problem("ConvexQuadratic", 12)
    cfg = ArcConfig(grad_tol=1e-9, subsolver_params={"m": 11},
                    estimate_min_eig=True)
    rep = arc_minimize(obj, np.ones(12), cfg)
    assert rep.min_eig_estimate is not None
    assert rep.min_eig_estimate > 0.0  # convex everywhere


def test_iterations_csv_format():
    obj = native_problem("ConvexQuadratic", 8)
    cfg = ArcConfig(max_iters=10, subsolver_params={"m": 4})
    rep = arc_minimize(obj, np.ones(8), cfg)
    text = iterations_csv(rep)
    lines = text.strip().split("\n")
    assert lines[0] == "iter,rho,kappa,accepted,f,grad_norm,matvecs"
    assert len(lines) == len(rep.log) + 1
    cells = lines[1].split(",")
    assert cells[0] == "0"
    assert float(cells[1]) == rep.log[0].rho


def test_report_json_round_trip():
    obj = native_problem("ConvexQuadratic", 6)
    rep = arc_minimize(obj, np.ones(6),
                       ArcConfig(max_iters=5, subsolver_params={"m": 3}))
    d = json.loads(rep.to_json())
    assert d["iterations"] == rep.iterations
    assert d["converged"] == rep.converged
    assert len(d["log"]) == len(rep.log)
