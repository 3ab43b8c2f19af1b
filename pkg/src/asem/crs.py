"""Solvers for the cubic regularization subproblem (CRS)

    min_x  f(x) = b^T x + 1/2 x^T A x + rho/3 ||x||^3 .

The global minimizer satisfies (A + sigma I) x = -b with sigma = rho ||x||
and A + sigma I positive semidefinite, which turns the problem into a
one-dimensional secular root find plus a positive definite linear solve.

Four solvers share one report type: ``solve_exact`` (dense/diagonal oracle),
``solve_asem`` (matrix-free: shifted Lanczos eigen estimates, truncated
secular root, CG), ``solve_krylov`` (subspace baseline) and ``solve_gd``
(gradient descent baseline).  All of them price work in operator matvecs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .operators import (
    CgResult,
    DenseOperator,
    DiagonalOperator,
    IndefiniteSystemError,
    OperatorError,
    PartialSpectrum,
    SymmetricOperator,
    _ritz_smallest,
    dense_eigendecomposition,
    hutchinson_trace,
    lanczos_tridiagonalize,
    smallest_eigenpairs,
    solve_shifted_system,
    spectral_upper_bound,
)
from .secular import (
    EXACT,
    FIRST_ORDER,
    HARD_CASE_THRESHOLD,
    SECOND_ORDER,
    DegenerateRootError,
    HardCaseError,
    Mu2UndefinedError,
    SecularError,
    build_model,
    find_root,
    model_from_coefficients,
    sigma_upper_bound,
)

# certificate tolerances shared by every solver's "converged" flag
RESIDUAL_RTOL = 1e-6
SIGMA_GAP_RTOL = 1e-6
MIN_EIG_SLACK = 1e-8


class CrsProblem:
    """A CRS instance: operator A, vector b, weight rho > 0."""

    def __init__(self, op, b, rho):
        if not isinstance(op, SymmetricOperator):
            raise OperatorError("op must be a SymmetricOperator")
        b = np.asarray(b, dtype=float)
        if b.shape != (op.dim,):
            raise OperatorError(
                f"b must have shape ({op.dim},), got {b.shape}"
            )
        if not np.all(np.isfinite(b)):
            raise OperatorError("b must be finite")
        if not (np.isfinite(rho) and rho > 0):
            raise OperatorError(f"rho must be positive and finite, got {rho}")
        self.op = op
        self.b = b
        self.rho = float(rho)

    @property
    def n(self):
        return self.op.dim

    @classmethod
    def from_diagonal(cls, eigenvalues, b, rho):
        return cls(DiagonalOperator(eigenvalues), b, rho)

    @classmethod
    def from_dense(cls, matrix, b, rho):
        return cls(DenseOperator(matrix), b, rho)


def objective(problem, x):
    """f(x); costs one matvec."""
    x = np.asarray(x, dtype=float)
    ax = problem.op.matvec(x)
    return _objective_from_ax(problem, x, ax)


def _objective_from_ax(problem, x, ax):
    nx = float(np.linalg.norm(x))
    return float(problem.b @ x) + 0.5 * float(x @ ax) \
        + problem.rho / 3.0 * nx ** 3


def gradient(problem, x):
    """grad f(x) = b + A x + rho ||x|| x; costs one matvec."""
    x = np.asarray(x, dtype=float)
    ax = problem.op.matvec(x)
    return problem.b + ax + problem.rho * float(np.linalg.norm(x)) * x


@dataclass
class SolveReport:
    """Common output of every CRS solver.

    ``trajectory`` rows are (budget_matvecs, grad_norm, objective) with the
    budget measured from this solve's first matvec, so curves from different
    solvers are directly comparable.  ``phases`` breaks the total matvec
    count into named buckets and always sums to ``matvecs`` exactly.
    ``flags['converged']`` is a strict optimality certificate:
    ||(A + sigma I)x + b|| <= 1e-6 ||b||, |sigma - rho ||x||| <= 1e-6
    max(1, sigma), and (when an estimate exists) lambda_1 + sigma >= -1e-8.
    """

    solver: str
    x: np.ndarray
    sigma: float
    grad_norm: float
    objective: float
    matvecs: int
    inner_iterations: int
    trajectory: list
    flags: dict = field(default_factory=dict)
    sigma_gap: float = 0.0
    residual_norm: float = 0.0
    min_eig_estimate: float | None = None
    phases: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "solver": self.solver,
            "x": np.asarray(self.x).tolist(),
            "sigma": self.sigma,
            "grad_norm": self.grad_norm,
            "objective": self.objective,
            "matvecs": self.matvecs,
            "inner_iterations": self.inner_iterations,
            "trajectory": [list(row) for row in self.trajectory],
            "flags": dict(self.flags),
            "sigma_gap": self.sigma_gap,
            "residual_norm": self.residual_norm,
            "min_eig_estimate": self.min_eig_estimate,
            "phases": dict(self.phases),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def trajectory_csv(report):
    """Render a report's trajectory as CSV text."""
    lines = ["budget_matvecs,grad_norm,objective"]
    for budget, grad, obj in report.trajectory:
        lines.append(f"{int(budget)},{grad!r},{obj!r}")
    return "\n".join(lines) + "\n"


def _certificate(problem, x, sigma, ax, min_eig):
    """Evaluate the optimality certificate given A x (no extra matvecs)."""
    b = problem.b
    bnorm = float(np.linalg.norm(b))
    residual = float(np.linalg.norm(ax + sigma * x + b))
    sigma_gap = abs(sigma - problem.rho * float(np.linalg.norm(x)))
    ok = residual <= RESIDUAL_RTOL * max(bnorm, 1e-300)
    ok = ok and sigma_gap <= SIGMA_GAP_RTOL * max(1.0, sigma)
    if min_eig is not None:
        ok = ok and (min_eig + sigma >= -MIN_EIG_SLACK)
    return ok, residual, sigma_gap


def _finalize(problem, solver, x, sigma, count0, inner, trajectory, flags,
              phases, min_eig):
    """Shared exit path: one matvec recomputes gradient, objective and the
    certificate, and the final trajectory point is appended."""
    ax = problem.op.matvec(x)
    phases["check"] = phases.get("check", 0) + 1
    nx = float(np.linalg.norm(x))
    grad = problem.b + ax + problem.rho * nx * x
    grad_norm = float(np.linalg.norm(grad))
    obj = _objective_from_ax(problem, x, ax)
    ok, residual, sigma_gap = _certificate(problem, x, sigma, ax, min_eig)
    flags["converged"] = bool(ok and flags.get("converged", True))
    total = problem.op.matvec_count - count0
    trajectory.append((total, grad_norm, obj))
    return SolveReport(
        solver=solver, x=x, sigma=float(sigma), grad_norm=grad_norm,
        objective=obj, matvecs=total, inner_iterations=int(inner),
        trajectory=trajectory, flags=flags, sigma_gap=float(sigma_gap),
        residual_norm=float(residual), min_eig_estimate=min_eig,
        phases=phases,
    )


def cauchy_point(problem):
    """Minimize f along -b/||b||; closed form, one matvec.

    Returns (x_c, zeta) with x_c = -zeta b / ||b||.  f(x_c) <= 0 always,
    with equality only at b = 0.
    """
    b = problem.b
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(problem.n), 0.0
    q = float(b @ problem.op.matvec(b)) / bnorm ** 2
    zeta = cauchy_radius(bnorm, q, problem.rho)
    x_c = -(zeta / bnorm) * b
    return x_c, zeta


def cauchy_radius(b_norm, q, rho):
    """Minimizing step length along -b/||b|| given the curvature scalar
    q = b^T A b / ||b||^2: the positive root of -||b|| + q z + rho z^2.
    Rationalized when q > 0 so the subtraction cannot cancel."""
    disc = math.sqrt(q * q + 4.0 * rho * b_norm)
    if q > 0:
        return 2.0 * b_norm / (disc + q)
    return float((disc - q) / (2.0 * rho))


def solve_cauchy(problem):
    """The Cauchy point packaged as a SolveReport (one matvec + check)."""
    count0 = problem.op.matvec_count
    x_c, _ = cauchy_point(problem)
    spent = problem.op.matvec_count - count0
    sigma = problem.rho * float(np.linalg.norm(x_c))
    return _finalize(problem, "cauchy", x_c, sigma, count0, 0, [],
                     {"sigma_from_norm": True}, {"cauchy": spent}, None)


def solve_exact(problem, root_tol=1e-14):
    """Oracle solver via a full eigendecomposition.

    Works for diagonal operators of any size and dense operators up to the
    dense-oracle cap; anything else has no oracle access and raises.
    Raises :class:`HardCaseError` (with perturbation advice) when b carries
    no mass on the bottom eigenspace.
    """
    op = problem.op
    count0 = op.matvec_count
    b = problem.b
    rho = problem.rho

    if isinstance(op, DiagonalOperator):
        order = np.argsort(op.diagonal, kind="stable")
        lam = op.diagonal[order]
        c = -b[order]
    elif isinstance(op, DenseOperator):
        lam, vecs = dense_eigendecomposition(op.matrix)
        c = -(vecs.T @ b)
    else:
        raise OperatorError(
            "solve_exact needs oracle access (diagonal or dense operator)"
        )

    bnorm = float(np.linalg.norm(b))
    flags = {}
    phases = {"check": 0}
    if bnorm == 0.0:
        if lam[0] >= 0.0:
            x = np.zeros(problem.n)
            return _finalize(problem, "exact", x, 0.0, count0, 0, [], flags,
                             phases, float(lam[0]))
        raise HardCaseError(
            "b = 0 with lambda_1 < 0: solutions are +/- t v_1 with "
            "rho t = -lambda_1; perturb b to select one"
        )

    # hard case looks at the whole bottom eigenspace, not just one column
    lam_range = max(float(lam[-1] - lam[0]), 1.0)
    cluster = lam <= lam[0] + 1e-12 * lam_range
    cluster_mass = float(np.sum(c[cluster] ** 2))
    if cluster_mass <= HARD_CASE_THRESHOLD * bnorm ** 2:
        raise HardCaseError(
            "b has (numerically) no component on the bottom eigenspace "
            f"(mass {cluster_mass:.3e} vs ||b||^2 {bnorm ** 2:.3e}): hard "
            "case. Perturb b by ~1e-8 ||b|| along the bottom eigenvector "
            "and re-solve."
        )

    model = model_from_coefficients(lam, c ** 2, rho, b_norm=bnorm, order=EXACT)
    root = find_root(model, tol=root_tol)
    sigma = root.sigma
    y = c / (lam + sigma)
    if isinstance(op, DiagonalOperator):
        x = np.empty(problem.n)
        x[order] = y
    else:
        x = vecs @ y
    flags.update(root.flags)
    return _finalize(problem, "exact", x, sigma, count0, root.iterations,
                     [], flags, phases, float(lam[0]))


def _normalize_order(order):
    if order in (1, "1", FIRST_ORDER):
        return FIRST_ORDER
    if order in (2, "2", SECOND_ORDER):
        return SECOND_ORDER
    if order == EXACT:
        return EXACT
    raise SecularError(f"unknown model order {order!r}")


def solve_asem(problem, m, order=FIRST_ORDER, k=None, restarts=0, seed=0,
               root_tol=1e-12, cg_tol=1e-10, eig_tol=1e-8,
               root_method="bisection", mu_override=None, spectrum=None,
               trace=None, budget=None, max_cg_iter=None):
    """Matrix-free CRS solver: eigen estimates, truncated secular root, CG.

    Pipeline: (1) bound ||A|| by power iteration and run shifted Lanczos for
    the m smallest eigenpairs, (2) solve the truncated secular equation for
    sigma, (3) solve (A + sigma I) x = -b by CG.  Pass ``spectrum`` to skip
    step 1 (oracle eigen data; its matvecs are then not this solve's).

    ``mu_override`` replaces the computed surrogate eigenvalue (still
    clamped to >= lambda_m).  ``budget`` caps total matvecs: eigen work runs
    to completion, CG stops when the budget runs out and the report comes
    back flagged.  ``m >= n`` degenerates to the exact secular equation
    through a full-length Lanczos run.

    If CG meets nonpositive curvature (the estimated lambda_1 overshot the
    true one), sigma is repaired by bisection on rho ||x(sigma)|| - sigma
    over the positive definite side, flagged ``sigma_recovered``.
    """
    op = problem.op
    n = problem.n
    b = problem.b
    rho = problem.rho
    bnorm = float(np.linalg.norm(b))
    order = _normalize_order(order)
    count0 = op.matvec_count
    phases = {"shift": 0, "eigen": 0, "model": 0, "cg": 0, "recovery": 0,
              "check": 0}
    flags = {}
    trajectory = []

    # --- step 1: eigen information -------------------------------------
    if spectrum is None:
        snap = op.matvec_count
        beta = spectral_upper_bound(op, iters=20, seed=seed)
        phases["shift"] = op.matvec_count - snap
        snap = op.matvec_count
        if m >= n:
            rng = np.random.default_rng(seed)
            bop = SymmetricOperator(n, lambda v: beta * v - op.matvec(v))
            factor = lanczos_tridiagonalize(bop, rng.standard_normal(n), n)
            lam, V, res = _ritz_smallest(op, beta, factor.alpha, factor.beta,
                                         factor.basis, factor.k)
            spectrum = PartialSpectrum(
                eigenvalues=lam, eigenvectors=V, residuals=res,
                beta_shift=beta,
                converged=bool(np.all(res <= eig_tol * max(1.0, beta))),
            )
        else:
            keff = k
            if budget is not None:
                # fit the Lanczos block to what is left: k steps plus m
                # residual checks plus the final certificate matvec
                room = budget - (op.matvec_count - count0) - m - 1
                kdef = max(2 * m, 20) if keff is None else keff
                if kdef > max(m + 1, room):
                    keff = max(m + 1, room)
                    flags["budget_exhausted"] = True
                else:
                    keff = kdef
            spectrum = smallest_eigenpairs(op, m, k=keff, restarts=restarts,
                                           seed=seed, eig_tol=eig_tol,
                                           beta=beta)
        phases["eigen"] = op.matvec_count - snap
    flags["eig_converged"] = bool(spectrum.converged)
    if spectrum.m < min(m, n):
        flags["eigen_breakdown"] = True
    lam1_est = float(spectrum.eigenvalues[0])
    if mu_override == "lambda_m":
        mu_override = float(spectrum.eigenvalues[-1])

    # --- step 2: secular model and root ---------------------------------
    snap = op.matvec_count
    b_quad = None
    if order == SECOND_ORDER and spectrum.m < n:
        b_quad = float(b @ op.matvec(b))
    trace_arg = trace
    needs_trace = order == FIRST_ORDER and mu_override is None \
        and spectrum.m < n
    if needs_trace and trace_arg is None:
        if op.trace_hint is not None:
            trace_arg = float(op.trace_hint)
        else:
            trace_arg = lambda: hutchinson_trace(op, probes=30, seed=seed)

    try:
        model = build_model(spectrum, b, rho, order=order, trace=trace_arg,
                            b_quad=b_quad, mu_override=mu_override)
    except Mu2UndefinedError:
        flags["mu2_fallback"] = True
        order = FIRST_ORDER
        if trace_arg is None:
            if op.trace_hint is not None:
                trace_arg = float(op.trace_hint)
            else:
                trace_arg = lambda: hutchinson_trace(op, probes=30, seed=seed)
        model = build_model(spectrum, b, rho, order=FIRST_ORDER,
                            trace=trace_arg, b_quad=None,
                            mu_override=mu_override)
    phases["model"] = op.matvec_count - snap
    for key in ("mu_clamped", "trace_estimated", "residual_clamped"):
        if model.flags.get(key):
            flags[key] = True
    flags["order"] = model.order
    flags["mu"] = None if model.mu is None else float(model.mu)
    # c1 against the best Ritz vector: a vanishing component means b is
    # (numerically) orthogonal to the bottom eigenvector and the unique-root
    # setup is in doubt, even when it clears the hard error threshold
    if bnorm > 0.0 and model.coeffs_sq[0] <= 1e-10 * bnorm * bnorm:
        flags["hard_case_suspected"] = True

    root = find_root(model, tol=root_tol, method=root_method)
    sigma = root.sigma
    inner = root.iterations
    flags.update(root.flags)

    if sigma == 0.0 and bnorm == 0.0:
        x = np.zeros(n)
        return _finalize(problem, "asem", x, sigma, count0, inner,
                         trajectory, flags, phases, lam1_est)

    # --- step 3: shifted linear solve ------------------------------------
    def remaining():
        if budget is None:
            return None
        return max(budget - (op.matvec_count - count0) - 1, 0)

    def make_record(shift):
        # residual rk belongs to (A + shift I) x = -b, so the model gradient
        # and objective must be reconstructed with the same shift
        def record(it, xk, rk):
            nx = float(np.linalg.norm(xk))
            grad_est = float(np.linalg.norm(-rk + (rho * nx - shift) * xk))
            axk = -b - rk - shift * xk
            obj = float(b @ xk) + 0.5 * float(xk @ axk) + rho / 3.0 * nx ** 3
            trajectory.append((op.matvec_count - count0, grad_est, obj))
        return record

    cg_cap = max_cg_iter
    if budget is not None:
        rem = remaining()
        cg_cap = rem if cg_cap is None else min(cg_cap, rem)

    snap = op.matvec_count
    try:
        cg = solve_shifted_system(op, sigma, b, tol=cg_tol, max_iter=cg_cap,
                                  callback=make_record(sigma))
        phases["cg"] = op.matvec_count - snap
    except IndefiniteSystemError:
        phases["cg"] = op.matvec_count - snap
        sigma, cg = _recover_sigma(problem, sigma, cg_tol, make_record,
                                   count0, budget, phases)
        flags["sigma_recovered"] = True

    flags["cg_converged"] = bool(cg.converged)
    if not cg.converged:
        flags["converged"] = False
    if budget is not None and op.matvec_count - count0 + 1 >= budget:
        flags["budget_exhausted"] = True
    x = cg.x
    inner += cg.iterations
    return _finalize(problem, "asem", x, sigma, count0, inner, trajectory,
                     flags, phases, lam1_est)


def _pole_fit_root(samples, floor):
    """Root of the model h(s) ~ c/(s - p) - s fitted to the last two
    converged probes.  The fit captures the pole that makes linear
    interpolation crawl when the root sits just right of it.  Returns
    None when degenerate or when the fitted pole contradicts the known
    infeasible floor.
    """
    if len(samples) < 2:
        return None
    (s1, h1), (s2, h2) = samples[-2], samples[-1]
    g1 = h1 + s1  # rho ||x(s1)||, positive away from b = 0
    g2 = h2 + s2
    den = g2 - g1
    if s1 == s2 or abs(den) <= 1e-14 * max(abs(g1), abs(g2)):
        return None
    p = (g2 * s2 - g1 * s1) / den
    c = g1 * (s1 - p)
    if not math.isfinite(p) or not c > 0.0 or p > min(s1, s2):
        return None
    disc = p * p + 4.0 * c
    if disc < 0.0:
        return None
    root = 0.5 * (p + math.sqrt(disc))
    return root if root > floor else None


def _recover_sigma(problem, sigma_bad, cg_tol, make_record, count0, budget,
                   phases, max_evals=80):
    """Self-consistent repair when the model root lands left of the true
    pole: find sigma with (A + sigma I) positive definite and
    rho ||x(sigma)|| = sigma.  Each probe costs one CG solve.

    h(sigma) = rho ||x(sigma)|| - sigma is convex and decreasing on the
    feasible side and blows up at the pole -lambda_1.  Probes that hit
    negative curvature mark their shift infeasible and raise the floor;
    converged probes feed a two-point rational fit with the pole built in,
    falling back to regula falsi and then bisection.  The stop test is on
    |h| itself, not the bracket width: near the pole the slope of h is
    enormous and a tight bracket does not imply a small gap.
    """
    op = problem.op
    b = problem.b
    rho = problem.rho
    best = None  # (|h|, sigma, CgResult) over converged probes

    def probe(s):
        nonlocal best
        snap = op.matvec_count
        cap = None
        if budget is not None:
            cap = max(budget - (op.matvec_count - count0) - 1, 1)
        try:
            res = solve_shifted_system(op, s, b, tol=cg_tol, max_iter=cap,
                                       callback=make_record(s))
        except IndefiniteSystemError:
            phases["recovery"] += op.matvec_count - snap
            return math.inf, None
        phases["recovery"] += op.matvec_count - snap
        h = rho * float(np.linalg.norm(res.x)) - s
        if res.converged and (best is None or abs(h) < best[0]):
            best = (abs(h), s, res)
        return h, res

    def done():
        if best is not None and best[0] <= 0.5 * SIGMA_GAP_RTOL * max(1.0, best[1]):
            return True
        return budget is not None \
            and op.matvec_count - count0 + 1 >= budget

    samples = []  # converged probes (sigma, h), most recent last

    def note(s, h, res):
        if res is not None and res.converged:
            samples.append((s, h))
            del samples[:-4]

    # doubling until some feasible shift at or beyond the root is found;
    # the failed model root itself is a certified infeasible floor
    lo = sigma_bad
    h_lo = None  # only kept when lo is feasible with a converged solve
    hi = None
    h_hi = None
    cg_hi = None
    evals = 0
    s = sigma_bad
    delta = max(1e-3 * max(1.0, sigma_bad), 1e-12)
    while evals < max_evals and not done():
        s = s + delta
        delta *= 2.0
        h, res = probe(s)
        evals += 1
        note(s, h, res)
        if res is None:
            lo = s
        elif h > 0.0:
            lo = s
            h_lo = h if res.converged else None
        else:
            hi, h_hi, cg_hi = s, h, res
            break

    if hi is None:
        if best is not None:
            return best[1], best[2]
        return s, CgResult(x=np.zeros(problem.n), iterations=0,
                           residual_norm=float(np.linalg.norm(b)),
                           converged=False)

    stall = 0
    while evals < max_evals and not done():
        width = hi - lo
        if width <= 1e-15 * max(1.0, hi):
            break
        s = _pole_fit_root(samples, lo)
        if s is None and h_lo is not None and h_hi < h_lo:
            s = hi - h_hi * (hi - lo) / (h_hi - h_lo)
        if s is None or not lo + 1e-3 * width <= s <= hi - 1e-3 * width:
            s = 0.5 * (lo + hi)
        h, res = probe(s)
        evals += 1
        note(s, h, res)
        if res is None or h > 0.0:
            lo = s
            h_lo = h if res is not None and res.converged else None
            stall = 0
        else:
            hi, h_hi, cg_hi = s, h, res
            stall += 1
            if stall >= 2 and h_lo is not None:
                h_lo *= 0.5  # Illinois step: stop hugging the right side

    if best is not None:
        return best[1], best[2]
    return hi, cg_hi


def solve_krylov(problem, k, root_tol=1e-14, sample_all=None):
    """Krylov subspace baseline: Lanczos from b, exact CRS in the subspace.

    Builds K_k(A, b) and solves the projected problem (T_k, ||b|| e_1, rho)
    exactly through the same secular machinery.  The projected gradient
    identity makes trajectory points free: after j steps the lifted iterate
    has ||grad f|| = beta_j |y_j|.  A lucky breakdown means the subspace is
    invariant and the solution is exact.
    """
    op = problem.op
    b = problem.b
    rho = problem.rho
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        raise OperatorError("solve_krylov needs b != 0 to seed the subspace")
    if not 1 <= k <= problem.n:
        raise OperatorError(f"k must satisfy 1 <= k <= n, got {k}")

    count0 = op.matvec_count
    phases = {"lanczos": 0, "check": 0}
    flags = {}

    snap = op.matvec_count
    factor = lanczos_tridiagonalize(op, b, k)
    phases["lanczos"] = op.matvec_count - snap
    kk = factor.k
    if factor.breakdown:
        flags["breakdown"] = True

    if sample_all is None:
        sample_all = kk <= 64
    if sample_all:
        samples = list(range(1, kk + 1))
    else:
        samples = sorted(set(
            [1] + [int(round(kk ** (i / 24.0))) for i in range(1, 25)] + [kk]
        ))

    trajectory = []
    y = None
    sigma = 0.0
    for j in samples:
        sub = _solve_projected(factor.alpha[:j], factor.beta[: j - 1],
                               bnorm, rho, root_tol)
        if sub is None:
            continue
        y_j, sigma_j, obj_j = sub
        coupling = factor.beta[j - 1] if j < kk else factor.coupling
        grad_j = abs(coupling * y_j[-1])
        trajectory.append((j, float(grad_j), float(obj_j)))
        if j == kk:
            y, sigma = y_j, sigma_j
    if y is None:
        sub = _solve_projected(factor.alpha[:kk], factor.beta[: kk - 1],
                               bnorm, rho, root_tol)
        if sub is None:
            raise HardCaseError(
                "projected subproblem is degenerate; perturb b and re-solve"
            )
        y, sigma, _ = sub

    x = factor.basis @ y
    return _finalize(problem, "krylov", x, sigma, count0, kk, trajectory,
                     flags, phases, None)


def _solve_projected(alpha, off, bnorm, rho, root_tol):
    """Exact CRS solve of the projected tridiagonal problem; returns
    (y, sigma, objective) or None when the secular solve degenerates."""
    if alpha.size == 1:
        tau = alpha.astype(float)
        W = np.ones((1, 1))
    else:
        tau, W = eigh_tridiagonal(alpha, off)
    c = -bnorm * W[0, :]
    model = model_from_coefficients(tau, c ** 2, rho, b_norm=bnorm,
                                    order=EXACT)
    try:
        root = find_root(model, tol=root_tol)
    except (HardCaseError, DegenerateRootError):
        # cannot happen for an unreduced tridiagonal in exact arithmetic;
        # numerically a vanishing first eigenvector entry can still trip it
        return None
    sigma = root.sigma
    y = W @ (c / (tau + sigma))
    ny = float(np.linalg.norm(y))
    obj = bnorm * float(y[0]) + 0.5 * float(y @ _tridiag_apply(alpha, off, y)) \
        + rho / 3.0 * ny ** 3
    return y, sigma, obj


def _tridiag_apply(alpha, off, y):
    out = alpha * y
    if off.size:
        out[:-1] += off * y[1:]
        out[1:] += off * y[:-1]
    return out


def solve_gd(problem, max_iters, step="auto", seed=0, grad_tol=0.0):
    """Gradient descent baseline from x_0 = 0.

    ``step="auto"`` derives a safe rate 1 / (4 (beta + rho B_1bar)) from the
    power-iteration norm bound, with B_1bar the sigma upper bound at the
    pessimistic lambda_1 = -beta.  Ten consecutive objective increases flag
    divergence and return the best iterate seen.
    """
    op = problem.op
    b = problem.b
    rho = problem.rho
    count0 = op.matvec_count
    phases = {"shift": 0, "iterate": 0, "check": 0}
    flags = {}
    if max_iters < 0:
        raise OperatorError("max_iters must be nonnegative")

    if step == "auto":
        snap = op.matvec_count
        beta = spectral_upper_bound(op, iters=20, seed=seed)
        phases["shift"] = op.matvec_count - snap
        B1bar = sigma_upper_bound(-beta, rho, float(np.linalg.norm(b)))
        eta = 1.0 / (4.0 * (beta + rho * B1bar))
    else:
        eta = float(step)
        if not (eta > 0 and np.isfinite(eta)):
            raise OperatorError(f"step must be positive, got {step!r}")
    flags["step"] = eta

    x = np.zeros(problem.n)
    best_x = x.copy()
    best_f = 0.0
    f_prev = math.inf
    streak = 0
    trajectory = []
    it = 0
    for it in range(1, max_iters + 1):
        if not np.all(np.isfinite(x)):
            flags["diverged"] = True
            break
        snap = op.matvec_count
        ax = op.matvec(x)
        phases["iterate"] += op.matvec_count - snap
        with np.errstate(over="ignore", invalid="ignore"):
            nx = float(np.linalg.norm(x))
            f = float(b @ x) + 0.5 * float(x @ ax) + rho / 3.0 * nx ** 3
            g = b + ax + rho * nx * x
            gnorm = float(np.linalg.norm(g))
        trajectory.append((op.matvec_count - count0, gnorm, f))
        if f < best_f:
            best_f = f
            best_x = x.copy()
        if not math.isfinite(f):
            flags["diverged"] = True
            break
        if f > f_prev:
            streak += 1
            if streak >= 10:
                flags["diverged"] = True
                break
        else:
            streak = 0
        f_prev = f
        if grad_tol > 0 and gnorm <= grad_tol:
            break
        x = x - eta * g

    if flags.get("diverged"):
        x = best_x
        flags["converged"] = False
    sigma = rho * float(np.linalg.norm(x))
    flags["sigma_from_norm"] = True
    return _finalize(problem, "gd", x, sigma, count0, it, trajectory, flags,
                     phases, None)
