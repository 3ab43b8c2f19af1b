"""Adaptive cubic-regularization outer loop.

Minimizes a smooth (generally nonconvex) objective by repeatedly solving
the cubic model  m_t(s) = g_t^T s + 1/2 s^T H_t s + (rho_t/3) ||s||^3
with one of this package's CRS solvers, accepting steps by the ratio
kappa_t of actual to model decrease and adapting rho_t by the classic
three-branch rule.  Each trial step is safeguarded by the Cauchy point:
whichever of the two has the lower *model* value is submitted to the
acceptance test, so the model decrease used in kappa_t is never worse
than the Cauchy decrease.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .crs import CrsProblem, cauchy_radius, solve_asem, solve_gd, solve_krylov
from .operators import SymmetricOperator, smallest_eigenpairs
from .secular import HardCaseError


class ArcError(RuntimeError):
    """Unrecoverable outer-loop failure (non-finite objective)."""


@dataclass
class SmoothObjective:
    """A smooth function exposed through closures.

    ``value``/``gradient`` map x to f(x) and grad f(x); ``hessian_vec``
    maps (x, v) to the Hessian-vector product at x; ``trace_hint``
    optionally maps x to tr(Hessian(x)) so the subsolver's mu_1 needs no
    probing.  ``default_start`` is a conventional initial point.
    """

    dim: int
    value: object
    gradient: object
    hessian_vec: object
    trace_hint: object = None
    name: str = ""
    default_start: np.ndarray = None

    def hessian_operator(self, x):
        """The Hessian at x as a counting operator."""
        x = np.asarray(x, dtype=float).copy()
        hint = None
        if self.trace_hint is not None:
            hint = float(self.trace_hint(x))
        return SymmetricOperator(self.dim,
                                 lambda v: self.hessian_vec(x, v),
                                 trace_hint=hint)


SUBSOLVERS = ("asem", "krylov", "gd", "cauchy")


@dataclass
class ArcConfig:
    """Outer-loop hyperparameters; orderings enforced at construction.

    ``subsolver`` is one of "asem", "krylov", "gd", "cauchy", or a callable
    problem -> SolveReport.  ``subsolver_params`` passes solver-specific
    knobs (m, order, k, max_iters, ...).
    """

    gamma1: float = 2.0
    gamma2: float = 2.0
    eta1: float = 0.1
    eta2: float = 0.9
    rho0: float = 1e3
    rho_min: float = 1e-8
    max_iters: int = 200
    grad_tol: float = 1e-6
    subsolver: object = "asem"
    subsolver_params: dict = field(default_factory=dict)
    seed: int = 0
    estimate_min_eig: bool = True

    def __post_init__(self):
        if not (self.gamma2 >= self.gamma1 > 1.0):
            raise ValueError(
                f"need gamma2 >= gamma1 > 1, got {self.gamma1}, {self.gamma2}"
            )
        if not (1.0 > self.eta2 >= self.eta1 > 0.0):
            raise ValueError(
                f"need 1 > eta2 >= eta1 > 0, got {self.eta1}, {self.eta2}"
            )
        if not (self.rho0 > 0 and math.isfinite(self.rho0)):
            raise ValueError(f"rho0 must be positive, got {self.rho0}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.grad_tol < 0:
            raise ValueError("grad_tol must be nonnegative")
        if not (callable(self.subsolver) or self.subsolver in SUBSOLVERS):
            raise ValueError(f"unknown subsolver {self.subsolver!r}")


@dataclass
class ArcIteration:
    t: int
    rho: float
    kappa: float
    accepted: bool
    f: float
    grad_norm: float
    matvecs: int
    step_source: str
    model_value: float

    def to_dict(self):
        return {
            "t": self.t, "rho": self.rho, "kappa": self.kappa,
            "accepted": self.accepted, "f": self.f,
            "grad_norm": self.grad_norm, "matvecs": self.matvecs,
            "step_source": self.step_source, "model_value": self.model_value,
        }


@dataclass
class ArcReport:
    x: np.ndarray
    f: float
    grad_norm: float
    iterations: int
    converged: bool
    total_matvecs: int
    log: list
    min_eig_estimate: float | None = None
    min_eig_converged: bool | None = None
    flags: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "x": np.asarray(self.x).tolist(), "f": self.f,
            "grad_norm": self.grad_norm, "iterations": self.iterations,
            "converged": self.converged, "total_matvecs": self.total_matvecs,
            "log": [row.to_dict() for row in self.log],
            "min_eig_estimate": self.min_eig_estimate,
            "min_eig_converged": self.min_eig_converged,
            "flags": dict(self.flags),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def iterations_csv(report):
    """Per-iteration log as CSV text."""
    lines = ["iter,rho,kappa,accepted,f,grad_norm,matvecs"]
    for row in report.log:
        lines.append(
            f"{row.t},{row.rho!r},{row.kappa!r},{int(row.accepted)},"
            f"{row.f!r},{row.grad_norm!r},{row.matvecs}"
        )
    return "\n".join(lines) + "\n"


def _cauchy_model_value(zeta, b_norm, q, rho):
    # model along -b/||b||: g(z) = -z ||b|| + z^2 q / 2 + rho z^3 / 3
    return -zeta * b_norm + 0.5 * q * zeta ** 2 + rho * zeta ** 3 / 3.0


def _run_subsolver(cfg, prob, t):
    params = dict(cfg.subsolver_params)
    if callable(cfg.subsolver):
        return cfg.subsolver(prob)
    if cfg.subsolver == "asem":
        return solve_asem(prob, m=int(params.pop("m", 1)),
                          order=params.pop("order", 1),
                          seed=cfg.seed + t, **params)
    if cfg.subsolver == "krylov":
        return solve_krylov(prob, k=int(params.pop("k", 10)), **params)
    if cfg.subsolver == "gd":
        return solve_gd(prob, max_iters=int(params.pop("max_iters", 500)),
                        seed=cfg.seed + t, **params)
    return None  # "cauchy": the safeguard step is the step


def arc_minimize(obj, x0, cfg=None):
    """Run the outer loop from x0; returns an ArcReport.

    Raises :class:`ArcError` when the objective is non-finite at the
    current iterate (a non-finite *trial* value is handled by rejecting
    the step and raising rho instead).
    """
    if cfg is None:
        cfg = ArcConfig()
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (obj.dim,):
        raise ValueError(f"x0 must have shape ({obj.dim},), got {x.shape}")

    f = float(obj.value(x))
    if not math.isfinite(f):
        raise ArcError(f"objective is non-finite at the start point: {f}")

    rho = cfg.rho0
    log = []
    flags = {}
    total_matvecs = 0
    converged = False
    g = obj.gradient(x)
    gnorm = float(np.linalg.norm(g))

    for t in range(cfg.max_iters):
        if gnorm <= cfg.grad_tol:
            converged = True
            break

        op = obj.hessian_operator(x)
        prob = CrsProblem(op, g, rho)

        # Cauchy point and its model value from one curvature product
        q = float(g @ op.matvec(g)) / gnorm ** 2
        zeta = cauchy_radius(gnorm, q, rho)
        s_c = -(zeta / gnorm) * g
        m_c = _cauchy_model_value(zeta, gnorm, q, rho)

        step_source = "subsolver"
        try:
            sub = _run_subsolver(cfg, prob, t)
        except HardCaseError:
            sub = None
            step_source = "cauchy_fallback"
            flags["hard_case_iterations"] = flags.get(
                "hard_case_iterations", 0) + 1
        if sub is None:
            s, m_s = s_c, m_c
            if step_source == "subsolver":
                step_source = "cauchy"
        else:
            s, m_s = sub.x, sub.objective
            if m_c <= m_s:
                s, m_s = s_c, m_c
                step_source = "cauchy"

        f_trial = float(obj.value(x + s))
        decrease = -m_s
        guard = 1e-14 * max(1.0, abs(f))
        if not math.isfinite(f_trial):
            kappa = math.nan
            accepted = False
            flags["non_finite_trial"] = True
        elif decrease < guard:
            kappa = math.nan
            accepted = False
        else:
            kappa = (f - f_trial) / decrease
            accepted = kappa >= cfg.eta1

        log.append(ArcIteration(
            t=t, rho=rho, kappa=kappa, accepted=accepted, f=f,
            grad_norm=gnorm, matvecs=op.matvec_count,
            step_source=step_source, model_value=m_s,
        ))
        total_matvecs += op.matvec_count

        if accepted:
            x = x + s
            f = f_trial
            if not math.isfinite(f):
                raise ArcError(f"objective became non-finite at iteration {t}")
            g = obj.gradient(x)
            gnorm = float(np.linalg.norm(g))

        if accepted and kappa > cfg.eta2:
            rho = max(cfg.rho_min, rho / cfg.gamma1)
        elif accepted:
            pass  # successful: keep rho
        else:
            rho = cfg.gamma2 * rho
    else:
        converged = gnorm <= cfg.grad_tol

    report = ArcReport(
        x=x, f=f, grad_norm=gnorm, iterations=len(log), converged=converged,
        total_matvecs=total_matvecs, log=log, flags=flags,
    )
    if cfg.estimate_min_eig and obj.dim >= 2:
        est = min_hessian_eig(obj, x, seed=cfg.seed)
        report.min_eig_estimate = est.value
        report.min_eig_converged = est.converged
    return report


@dataclass
class MinEigEstimate:
    value: float
    converged: bool
    matvecs: int


def min_hessian_eig(obj, x, tol=1e-8, seed=0):
    """Smallest Hessian eigenvalue at x, via the shifted Lanczos solver
    with m = 1.  Returns a flagged estimate rather than erroring on
    non-convergence."""
    op = obj.hessian_operator(x)
    if obj.dim == 1:
        v = np.ones(1)
        return MinEigEstimate(float(op.matvec(v)[0]), True, op.matvec_count)
    spectrum = smallest_eigenpairs(op, 1, k=min(30, obj.dim), restarts=3,
                                   seed=seed, eig_tol=tol)
    return MinEigEstimate(float(spectrum.eigenvalues[0]),
                          bool(spectrum.converged), op.matvec_count)
