"""Command-line front end.

Subcommands: ``gen`` (instance files), ``solve`` (one solver, one
instance), ``compare`` (budget-matched solver sweeps with CSV output),
``arc`` (outer loop on a native test problem), ``bound-check`` (root-gap
bounds on diagonal instances, semicircle gap bound on GOE samples).

Exit codes: 0 ok, 2 usage error, 3 flagged non-convergence, 4 hard case,
5 divergence.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import time

import numpy as np

from . import arc as arc_mod
from . import crs, problems, secular
from .operators import PartialSpectrum

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FLAGGED = 3
EXIT_HARD_CASE = 4
EXIT_DIVERGED = 5

SUMMARY_HEADER = "solver,params,final_grad_norm,final_objective,matvecs,wall_time_ms"
BOUNDS_HEADER = ("instance,solver,m,order,sigma_model,sigma_exact,"
                 "observed_gap,gap_cap,within")
GOE_HEADER = "seed,n,m,mu1,max_dev,bound,within"


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.func(args)
    except secular.HardCaseError as exc:
        print(f"hard case: {exc}", file=sys.stderr)
        return EXIT_HARD_CASE
    except arc_mod.ArcError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (problems.SpecError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="asem",
        description="Matrix-free cubic-regularization subproblem benchmarks",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen", help="generate an instance file from a spec")
    p.add_argument("--config", required=True, help="InstanceSpec JSON file")
    p.add_argument("--out", required=True, help="output instance JSON path")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="run one solver on one instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--solver", default="asem",
                   choices=["asem", "exact", "krylov", "gd", "cauchy"])
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--order", type=int, default=1, choices=[1, 2])
    p.add_argument("--mu", default=None,
                   help="mu1 | mu2 | lambda_m | const:<float>")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=None,
                   help="gd iteration cap")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", help="budget-matched solver comparison")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("arc", help="outer loop on a native test problem")
    p.add_argument("--problem", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--subsolver", default="asem",
                   choices=["asem", "krylov", "gd", "cauchy"])
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--order", type=int, default=1, choices=[1, 2])
    p.add_argument("--config", default=None, help="ArcConfig overrides JSON")
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--grad-tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_arc)

    p = sub.add_parser("bound-check",
                       help="root-gap bounds / GOE semicircle bound")
    p.add_argument("--instance", default=None,
                   help="diagonal instance JSON to check root-gap bounds on")
    p.add_argument("--m", default="10,100,1000",
                   help="comma-separated m values")
    p.add_argument("--order", type=int, default=None, choices=[1, 2],
                   help="check only this order (default: both)")
    p.add_argument("--goe-n", type=int, default=None,
                   help="GOE mode: sample size n")
    p.add_argument("--seeds", type=int, default=20, help="GOE mode: seeds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_bound_check)
    return parser


def _ensure_dir(path):
    import os
    os.makedirs(path, exist_ok=True)
    return path


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


# ---------------------------------------------------------------------- gen

def cmd_gen(args):
    with open(args.config) as fh:
        doc = json.load(fh)
    if args.seed is not None:
        doc["seed"] = args.seed
    spec = problems.InstanceSpec.from_dict(doc)
    problem = problems.gen_instance(spec)
    problems.save_instance(problem, args.out)
    lam = problem.op.diagonal
    print(f"wrote {args.out}: n={problem.n} "
          f"lambda=[{float(lam.min())!r}, {float(lam.max())!r}] "
          f"norm_b={float(np.linalg.norm(problem.b))!r} rho={problem.rho!r}")
    return EXIT_OK


# -------------------------------------------------------------------- solve

def _parse_mu(mu, order):
    """Map a --mu mode to (order, mu_override)."""
    if mu is None:
        return order, None
    mu = str(mu).lower()
    if mu == "mu1":
        return 1, None
    if mu == "mu2":
        return 2, None
    if mu == "lambda_m":
        return order, "lambda_m"
    if mu.startswith("const:"):
        return order, float(mu.split(":", 1)[1])
    raise problems.SpecError(
        f"unknown mu mode {mu!r}; expected mu1 | mu2 | lambda_m | const:<x>"
    )


def _run_solver(problem, spec, seed=0, budget=None):
    """Run the solver described by a params dict; returns a SolveReport."""
    name = spec.get("solver", "asem")
    if name == "exact":
        return crs.solve_exact(problem)
    if name == "asem":
        order, mu_override = _parse_mu(spec.get("mu"), spec.get("order", 1))
        m = int(spec.get("m", 100))
        return crs.solve_asem(
            problem, m=m, order=order, k=spec.get("k"),
            seed=int(spec.get("seed", seed)), mu_override=mu_override,
            spectrum=spec.get("spectrum"), budget=budget,
        )
    if name == "krylov":
        k = spec.get("k")
        if k is None:
            k = budget - 1 if budget else 100
        k = int(min(k, problem.n, budget - 1 if budget else k))
        return crs.solve_krylov(problem, k=max(k, 1))
    if name == "gd":
        iters = spec.get("max_iters")
        if iters is None:
            iters = budget - 21 if budget else 1000
        if budget is not None:
            iters = min(int(iters), budget - 21)
        step = spec.get("step", "auto")
        return crs.solve_gd(problem, max_iters=max(int(iters), 1), step=step,
                            seed=int(spec.get("seed", seed)))
    if name == "cauchy":
        return crs.solve_cauchy(problem)
    raise problems.SpecError(f"unknown solver {name!r}")


def cmd_solve(args):
    problem = problems.load_instance(args.instance)
    spec = {"solver": args.solver, "m": args.m, "k": args.k,
            "order": args.order, "mu": args.mu, "seed": args.seed}
    if args.max_iters is not None:
        spec["max_iters"] = args.max_iters
    report = _run_solver(problem, spec, seed=args.seed, budget=args.budget)

    outdir = _ensure_dir(args.out)
    _write(f"{outdir}/report.json", report.to_json(indent=2))
    _write(f"{outdir}/trajectory.csv", crs.trajectory_csv(report))
    print(f"{args.solver}: grad_norm={report.grad_norm!r} "
          f"objective={report.objective!r} sigma={report.sigma!r} "
          f"matvecs={report.matvecs} converged={report.flags['converged']}")
    return EXIT_OK if report.flags["converged"] else EXIT_FLAGGED


# ------------------------------------------------------------------ compare

def _oracle_spectrum(problem, m):
    """Exact m smallest eigenpairs of a diagonal instance."""
    lam = problem.op.diagonal
    order = np.argsort(lam, kind="stable")[:m]
    vecs = np.zeros((problem.n, m))
    vecs[order, np.arange(m)] = 1.0
    lam_m = lam[order]
    return PartialSpectrum(
        eigenvalues=lam_m.astype(float), eigenvectors=vecs,
        residuals=np.zeros(m), beta_shift=float(np.max(np.abs(lam))),
        converged=True, matvecs=0,
    )


def _exact_sigma(problem):
    """Root of the exact secular equation at 1e-14, for diagnostics."""
    lam = np.sort(problem.op.diagonal)
    order = np.argsort(problem.op.diagonal, kind="stable")
    c = -problem.b[order]
    model = secular.model_from_coefficients(lam, c ** 2, problem.rho,
                                            b_norm=float(np.linalg.norm(problem.b)))
    return secular.find_root(model, tol=1e-14).sigma


def _slug(text):
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", str(text)).strip("_")


def _params_string(spec):
    parts = []
    for key in ("m", "k", "order", "mu", "max_iters", "step", "seed"):
        if spec.get(key) is not None:
            parts.append(f"{key}={spec[key]}")
    if spec.get("spectrum") is not None:
        parts.append("eigen=oracle")
    return ";".join(parts)


def _experiment_cells(doc, seed, budget):
    """Expand an experiment config into (instances, solver specs, budget)."""
    exp = doc.get("experiment", "custom")
    n = int(doc.get("n", 5000))
    m_grid = doc.get("m_grid")
    budget = int(budget or doc.get("budget", 3000))
    seed = int(seed if seed is not None else doc.get("seed", 0))

    instances = []
    solvers = []
    if exp == "exp1":
        cases = doc.get("cases", ["case1", "case2", "case3", "case4"])
        for case in cases:
            spec = problems.InstanceSpec(case=case, n=n, b_norm=0.1, rho=0.1)
            instances.append((_slug(case), problems.gen_instance(spec)))
        for m in (m_grid or [10, 100, 1000]):
            solvers.append({"solver": "asem", "m": int(m), "order": 1})
    elif exp == "exp2":
        spec = problems.InstanceSpec(
            case="case1", n=n, b_direction=problems.EIGENVALUE_PROPORTIONAL,
            b_norm=0.1, rho=0.1)
        instances.append(("case1_eigprop", problems.gen_instance(spec)))
        for m in (m_grid or [10, 100, 1000]):
            for mu in doc.get("mu_modes", ["mu1", "mu2", "lambda_m",
                                           "const:1e6"]):
                solvers.append({"solver": "asem", "m": int(m), "mu": mu})
    elif exp == "exp3":
        spec = problems.InstanceSpec(case="case1", n=n, b_norm=0.1, rho=0.1)
        problem = problems.gen_instance(spec)
        instances.append(("case1", problem))
        for m in (m_grid or [10, 100]):
            m = int(m)
            solvers.append({"solver": "asem", "m": m, "order": 1,
                            "spectrum": _oracle_spectrum(problem, m),
                            "label": f"oracle_m{m}"})
            solvers.append({"solver": "asem", "m": m, "k": m, "order": 1,
                            "label": f"lanczos_m{m}"})
    elif exp == "exp4":
        for kappa in doc.get("kappas", [1e3, 1e6]):
            spec = problems.InstanceSpec(case="case1", n=n, b_norm=0.1,
                                         rho=None, kappa=float(kappa))
            instances.append((f"kappa{kappa:g}", problems.gen_instance(spec)))
        for m in (m_grid or [10, 100, 1000]):
            solvers.append({"solver": "asem", "m": int(m), "order": 1})
        solvers.append({"solver": "krylov"})
        solvers.append({"solver": "gd"})
    elif exp == "exp6":
        for b_norm in doc.get("b_norms", [1, 0.5, 0.2, 0.1, 0.05, 0.01]):
            spec = problems.InstanceSpec(case="case1", n=n,
                                         b_norm=float(b_norm), rho=0.1)
            instances.append((f"bnorm{b_norm:g}",
                              problems.gen_instance(spec)))
        for m in (m_grid or [100]):
            solvers.append({"solver": "asem", "m": int(m), "order": 1})
        solvers.append({"solver": "gd"})
    elif exp == "custom":
        for i, inst in enumerate(doc.get("instances", [])):
            if "file" in inst:
                problem = problems.load_instance(inst["file"])
                label = inst.get("label", _slug(inst["file"]))
            else:
                spec = problems.InstanceSpec.from_dict(
                    {k: v for k, v in inst.items() if k != "label"})
                problem = problems.gen_instance(spec)
                label = inst.get("label", f"instance{i}")
            instances.append((_slug(label), problem))
        solvers = [dict(s) for s in doc.get("solvers", [])]
        if not instances or not solvers:
            raise problems.SpecError(
                "custom experiment needs instances and solvers")
    else:
        raise problems.SpecError(f"unknown experiment {exp!r}")
    if budget <= 0:
        raise problems.SpecError("budget must be positive")
    return instances, solvers, budget, seed


def _solver_label(spec):
    if spec.get("label"):
        return _slug(spec["label"])
    name = spec.get("solver", "asem")
    params = _params_string(spec).replace(";", "_").replace("=", "")
    return _slug(f"{name}_{params}" if params else name)


def cmd_compare(args):
    with open(args.config) as fh:
        doc = json.load(fh)
    instances, solvers, budget, seed = _experiment_cells(
        doc, args.seed, args.budget)

    outdir = _ensure_dir(args.out)
    summary = [SUMMARY_HEADER]
    bounds = [BOUNDS_HEADER]
    errors = []
    for inst_label, problem in instances:
        diagonal = hasattr(problem.op, "diagonal")
        sigma_exact = None
        if diagonal:
            try:
                sigma_exact = _exact_sigma(problem)
            except secular.HardCaseError:
                errors.append(f"{inst_label}: hard case, no exact root")
        for spec in solvers:
            label = _solver_label(spec)
            params = _params_string(spec)
            t0 = time.perf_counter()
            try:
                report = _run_solver(problem, spec, seed=seed, budget=budget)
            except Exception as exc:  # noqa: BLE001 - cell isolation
                wall = (time.perf_counter() - t0) * 1e3
                summary.append(f"{spec.get('solver')},{params},nan,nan,0,{wall!r}")
                errors.append(f"{inst_label}/{label}: "
                              f"{type(exc).__name__}: {exc}")
                continue
            wall = (time.perf_counter() - t0) * 1e3
            summary.append(
                f"{spec.get('solver')},{params},{report.grad_norm!r},"
                f"{report.objective!r},{report.matvecs},{wall!r}"
            )
            _write(f"{outdir}/{inst_label}__{label}.csv",
                   crs.trajectory_csv(report))
            if sigma_exact is not None and spec.get("solver") == "asem":
                row = _bound_row(problem, spec, report, sigma_exact,
                                 inst_label)
                if row is not None:
                    bounds.append(row)
    _write(f"{outdir}/summary.csv", "\n".join(summary) + "\n")
    if len(bounds) > 1:
        _write(f"{outdir}/bounds.csv", "\n".join(bounds) + "\n")
    if errors:
        _write(f"{outdir}/errors.log", "\n".join(errors) + "\n")
    print(f"wrote {outdir}/summary.csv "
          f"({len(summary) - 1} cells, {len(errors)} errored)")
    return EXIT_OK


def _bound_row(problem, spec, report, sigma_exact, inst_label):
    """Root-gap diagnostic: the a-priori cap for an oracle model at this m
    versus the observed |sigma_run - sigma_exact|."""
    m = int(spec.get("m", 0))
    if not 1 <= m < problem.n:
        return None
    order, mu_override = _parse_mu(spec.get("mu"), spec.get("order", 1))
    if mu_override is not None:
        return None  # the caps cover the canonical mu choices only
    lam_full = np.sort(problem.op.diagonal)
    spectrum = _oracle_spectrum(problem, m)
    b_quad = float(problem.b @ (problem.op.diagonal * problem.b))
    try:
        model = secular.build_model(
            spectrum, problem.b, problem.rho,
            order=secular.SECOND_ORDER if order == 2 else secular.FIRST_ORDER,
            trace=float(problem.op.diagonal.sum()), b_quad=b_quad)
        cap = secular.root_gap_bound(model, lam_full).gap_cap
    except secular.SecularError:
        return None
    observed = abs(report.sigma - sigma_exact)
    within = int(observed <= cap)
    return (f"{inst_label},asem,{m},{order},{report.sigma!r},"
            f"{sigma_exact!r},{observed!r},{cap!r},{within}")


# ---------------------------------------------------------------------- arc

def cmd_arc(args):
    obj = problems.test_problem(args.problem, args.n)
    overrides = {}
    if args.config:
        with open(args.config) as fh:
            overrides = json.load(fh)
    params = {"m": args.m, "order": args.order} if args.subsolver == "asem" \
        else {"k": args.k} if args.subsolver == "krylov" else {}
    cfg_kwargs = {
        "max_iters": args.max_iters, "grad_tol": args.grad_tol,
        "subsolver": args.subsolver, "subsolver_params": params,
        "seed": args.seed,
    }
    cfg_kwargs.update(overrides)
    cfg = arc_mod.ArcConfig(**cfg_kwargs)

    report = arc_mod.arc_minimize(obj, obj.default_start, cfg)

    outdir = _ensure_dir(args.out)
    _write(f"{outdir}/arc_report.json", report.to_json(indent=2))
    _write(f"{outdir}/arc_iterations.csv", arc_mod.iterations_csv(report))
    print(f"{obj.name} n={args.n} {args.subsolver}: f={report.f!r} "
          f"grad_norm={report.grad_norm!r} "
          f"min_eig={report.min_eig_estimate!r} "
          f"iters={report.iterations} matvecs={report.total_matvecs}")
    return EXIT_OK if report.converged else EXIT_FLAGGED


# --------------------------------------------------------------- bound-check

def cmd_bound_check(args):
    if (args.instance is None) == (args.goe_n is None):
        raise problems.SpecError(
            "bound-check needs exactly one of --instance and --goe-n")
    outdir = _ensure_dir(args.out)
    if args.goe_n is not None:
        return _goe_bound_check(args, outdir)
    return _instance_bound_check(args, outdir)


def _goe_bound_check(args, outdir):
    n = int(args.goe_n)
    rows = [GOE_HEADER]
    violations = 0
    m_values = [int(v) for v in str(args.m).split(",") if v]
    for m in m_values:
        bound = problems.semicircle_gap_bound(n, m)
        for s in range(args.seeds):
            lam = np.linalg.eigvalsh(problems.sample_goe(n, seed=args.seed + s))
            mu1 = float(np.mean(lam[m:]))
            max_dev = float(np.max(np.abs(lam[m:] - mu1)))
            within = int(max_dev <= bound)
            violations += 1 - within
            rows.append(f"{args.seed + s},{n},{m},{mu1!r},{max_dev!r},"
                        f"{bound!r},{within}")
    _write(f"{outdir}/goe_bound.csv", "\n".join(rows) + "\n")
    total = len(rows) - 1
    print(f"semicircle gap bound: {total - violations}/{total} within")
    return EXIT_OK if violations == 0 else EXIT_FLAGGED


def _instance_bound_check(args, outdir):
    problem = problems.load_instance(args.instance)
    if not hasattr(problem.op, "diagonal"):
        raise problems.SpecError("bound-check needs a diagonal instance")
    sigma_exact = _exact_sigma(problem)
    lam_full = np.sort(problem.op.diagonal)
    trace = float(problem.op.diagonal.sum())
    b_quad = float(problem.b @ (problem.op.diagonal * problem.b))
    orders = [args.order] if args.order else [1, 2]
    rows = [BOUNDS_HEADER]
    violations = 0
    for m in [int(v) for v in str(args.m).split(",") if v]:
        if not 1 <= m < problem.n:
            raise problems.SpecError(f"m={m} out of range for n={problem.n}")
        spectrum = _oracle_spectrum(problem, m)
        for order in orders:
            kind = secular.SECOND_ORDER if order == 2 else secular.FIRST_ORDER
            try:
                model = secular.build_model(spectrum, problem.b, problem.rho,
                                            order=kind, trace=trace,
                                            b_quad=b_quad)
                sigma_model = secular.find_root(model, tol=1e-14).sigma
                cap = secular.root_gap_bound(model, lam_full).gap_cap
            except secular.SecularError:
                rows.append(f"instance,model,{m},{order},nan,nan,nan,nan,0")
                violations += 1
                continue
            observed = abs(sigma_model - sigma_exact)
            within = int(observed <= cap)
            violations += 1 - within
            rows.append(f"instance,model,{m},{order},{sigma_model!r},"
                        f"{sigma_exact!r},{observed!r},{cap!r},{within}")
    _write(f"{outdir}/root_gap_bounds.csv", "\n".join(rows) + "\n")
    total = len(rows) - 1
    print(f"root-gap bounds: {total - violations}/{total} within")
    return EXIT_OK if violations == 0 else EXIT_FLAGGED


if __name__ == "__main__":
    sys.exit(main())
