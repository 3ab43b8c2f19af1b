"""Benchmark instance generation.

Synthetic CRS instances are diagonal without loss of generality (an
orthogonal change of variables maps any symmetric A to its eigenvalue
diagonal; ``rotate_instance`` realizes the map for round-trip testing).
This module provides the four benchmark eigenvalue layouts, b-vector and
rho rules, GOE sampling with the semicircle gap bound, instance file I/O,
and four native smooth test problems for the outer ARC loop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .arc import SmoothObjective
from .crs import CrsProblem
from .operators import DenseOperator, DiagonalOperator, OperatorError

EVENLY_SPACED = "evenly_spaced"
SEPARATED = "separated"
RIGHT_CENTERED = "right_centered"
LEFT_CENTERED = "left_centered"
EXPLICIT = "explicit"

_CASE_ALIASES = {
    "case1": EVENLY_SPACED, "1": EVENLY_SPACED, EVENLY_SPACED: EVENLY_SPACED,
    "case2": SEPARATED, "2": SEPARATED, SEPARATED: SEPARATED,
    "case3": RIGHT_CENTERED, "3": RIGHT_CENTERED,
    RIGHT_CENTERED: RIGHT_CENTERED,
    "case4": LEFT_CENTERED, "4": LEFT_CENTERED, LEFT_CENTERED: LEFT_CENTERED,
    EXPLICIT: EXPLICIT,
}

ALL_ONES = "all_ones"
EIGENVALUE_PROPORTIONAL = "eigenvalue_proportional"

_DIRECTION_ALIASES = {
    ALL_ONES: ALL_ONES, "ones": ALL_ONES,
    EIGENVALUE_PROPORTIONAL: EIGENVALUE_PROPORTIONAL,
    "eigprop": EIGENVALUE_PROPORTIONAL,
    EXPLICIT: EXPLICIT,
}


class SpecError(ValueError):
    """Malformed generation request (bad case name, divisibility, ...)."""


def gen_spectrum(case, n, values=None):
    """Eigenvalues (ascending) for one of the benchmark layouts.

    evenly_spaced: all n evenly on [-1, 1].
    separated:     n/2 on [-1, -4/5], n/2 on [4/5, 1].
    right_centered: n/50 on [-1, 4/5], the other 98% on [4/5, 1].
    left_centered:  98% on [-1, 4/5], n/50 on [4/5, 1].
    explicit:      ``values`` passed through unchanged (must be ascending).

    The 4/5 boundary belongs to both groups in the centered cases; the
    duplicate eigenvalue is intentional and harmless.
    """
    try:
        case = _CASE_ALIASES[str(case).lower()]
    except KeyError:
        raise SpecError(f"unknown spectrum case {case!r}") from None

    if case == EXPLICIT:
        if values is None:
            raise SpecError("explicit case needs an eigenvalue list")
        lam = np.asarray(values, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise SpecError("explicit eigenvalues must be a nonempty vector")
        if np.any(np.diff(lam) < 0):
            raise SpecError("explicit eigenvalues must be ascending")
        return lam

    n = int(n)
    if n < 1:
        raise SpecError(f"n must be positive, got {n}")
    if case == EVENLY_SPACED:
        return np.linspace(-1.0, 1.0, n)
    if case == SEPARATED:
        if n % 2:
            raise SpecError(f"separated case needs n divisible by 2, got {n}")
        half = n // 2
        return np.concatenate([np.linspace(-1.0, -0.8, half),
                               np.linspace(0.8, 1.0, half)])
    if n % 50:
        raise SpecError(f"{case} case needs n divisible by 50, got {n}")
    small = n // 50
    if case == RIGHT_CENTERED:
        return np.concatenate([np.linspace(-1.0, 0.8, small),
                               np.linspace(0.8, 1.0, n - small)])
    return np.concatenate([np.linspace(-1.0, 0.8, n - small),
                           np.linspace(0.8, 1.0, small)])


@dataclass
class InstanceSpec:
    """Recipe for one diagonal CRS instance.

    Exactly one of ``rho`` (fixed) and ``kappa`` (condition-number rule,
    kappa > 1) must be set.  ``b_direction`` is one of all_ones,
    eigenvalue_proportional, explicit (with ``b_values``); the direction is
    normalized and scaled to ``b_norm``.
    """

    case: str = EVENLY_SPACED
    n: int = 5000
    b_direction: str = ALL_ONES
    b_norm: float = 0.1
    rho: float | None = 0.1
    kappa: float | None = None
    eigenvalues: list | None = None
    b_values: list | None = None
    seed: int = 0

    def to_dict(self):
        return {
            "case": self.case, "n": self.n, "b_direction": self.b_direction,
            "b_norm": self.b_norm, "rho": self.rho, "kappa": self.kappa,
            "eigenvalues": self.eigenvalues, "b_values": self.b_values,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise SpecError(f"unknown spec fields: {sorted(extra)}")
        return cls(**d)


def gen_instance(spec):
    """Build the diagonal CrsProblem described by an InstanceSpec."""
    lam = gen_spectrum(spec.case, spec.n, values=spec.eigenvalues)
    n = lam.size

    try:
        direction = _DIRECTION_ALIASES[str(spec.b_direction).lower()]
    except KeyError:
        raise SpecError(f"unknown b direction {spec.b_direction!r}") from None
    if direction == ALL_ONES:
        d = np.ones(n)
    elif direction == EIGENVALUE_PROPORTIONAL:
        d = lam.copy()
    else:
        if spec.b_values is None:
            raise SpecError("explicit b direction needs b_values")
        d = np.asarray(spec.b_values, dtype=float)
        if d.shape != (n,):
            raise SpecError(f"b_values must have shape ({n},)")
    if spec.b_norm < 0:
        raise SpecError("b_norm must be nonnegative")
    dnorm = float(np.linalg.norm(d))
    if spec.b_norm > 0 and dnorm == 0.0:
        raise SpecError("b direction has zero norm but b_norm > 0")
    b = d * (spec.b_norm / dnorm) if spec.b_norm > 0 else np.zeros(n)

    if (spec.rho is None) == (spec.kappa is None):
        raise SpecError("set exactly one of rho (fixed) and kappa")
    if spec.rho is not None:
        rho = float(spec.rho)
    else:
        rho = condition_number_rho(lam, b, spec.kappa)
    return CrsProblem.from_diagonal(lam, b, rho)


def condition_number_rho(eigenvalues, b, kappa):
    """rho making the instance's condition number (lam_n + sigma*) /
    (lam_1 + sigma*) equal kappa, via sigma* = (lam_n - kappa lam_1) /
    (kappa - 1) and rho = sigma* / ||(A + sigma* I)^{-1} b||."""
    lam = np.asarray(eigenvalues, dtype=float)
    b = np.asarray(b, dtype=float)
    kappa = float(kappa)
    if kappa <= 1.0:
        raise SpecError(f"kappa must exceed 1, got {kappa}")
    lam1, lamn = float(lam[0]), float(lam[-1])
    if lam1 >= 0.0:
        raise SpecError("condition-number rule needs lambda_1 < 0")
    sigma = (lamn - kappa * lam1) / (kappa - 1.0)
    if sigma + lam1 <= 0.0:
        raise SpecError(
            f"kappa={kappa} gives sigma*={sigma} <= -lambda_1: infeasible"
        )
    xnorm = float(np.linalg.norm(b / (lam + sigma)))
    if xnorm == 0.0:
        raise SpecError("condition-number rule needs b != 0")
    return sigma / xnorm


def sample_goe(n, seed=0):
    """Scaled Gaussian-orthogonal-ensemble sample: (W + W^T) / (2 sqrt(2n))
    with W standard normal.  Eigenvalues follow the semicircle law on
    [-1, 1] as n grows."""
    if n < 2:
        raise SpecError(f"GOE sample needs n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n, n))
    return (W + W.T) / (2.0 * math.sqrt(2.0 * n))


def semicircle_gap_bound(n, m):
    """High-probability bound on max_{i>m} |lambda_i - mu_1| for the scaled
    GOE: (3 pi / (4 sqrt 2))^(2/3) (1 - (m+1)/n)^(2/3)."""
    if m + 1 > n:
        raise SpecError(f"need m + 1 <= n, got m={m}, n={n}")
    frac = 1.0 - (m + 1.0) / n
    return (3.0 * math.pi / (4.0 * math.sqrt(2.0))) ** (2.0 / 3.0) \
        * frac ** (2.0 / 3.0)


def random_orthogonal(n, seed=0, reflectors=None):
    """Orthogonal matrix as a product of seeded Householder reflectors."""
    rng = np.random.default_rng(seed)
    if reflectors is None:
        reflectors = n
    Q = np.eye(n)
    for _ in range(reflectors):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        Q -= 2.0 * np.outer(v, v @ Q)
    return Q


def rotate_instance(problem, V):
    """Dense instance (V Lambda V^T, V b, rho) equivalent to a diagonal one.

    Solutions map back by x_dense = V @ y_diag.
    """
    if not isinstance(problem.op, DiagonalOperator):
        raise SpecError("rotate_instance expects a diagonal problem")
    V = np.asarray(V, dtype=float)
    n = problem.n
    if V.shape != (n, n):
        raise SpecError(f"V must be {n}x{n}, got {V.shape}")
    if np.max(np.abs(V.T @ V - np.eye(n))) > 1e-10:
        raise SpecError("V is not orthogonal to 1e-10")
    M = (V * problem.op.diagonal) @ V.T
    M = 0.5 * (M + M.T)
    return CrsProblem.from_dense(M, V @ problem.b, problem.rho)


def save_instance(problem, path):
    """Write a problem to JSON ({kind: diagonal|dense, ..., b, rho})."""
    if isinstance(problem.op, DiagonalOperator):
        doc = {"kind": "diagonal",
               "eigenvalues": problem.op.diagonal.tolist()}
    elif isinstance(problem.op, DenseOperator):
        doc = {"kind": "dense", "matrix": problem.op.matrix.tolist()}
    else:
        raise OperatorError("only diagonal/dense instances serialize")
    doc["b"] = problem.b.tolist()
    doc["rho"] = problem.rho
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return path


def load_instance(path):
    with open(path) as fh:
        doc = json.load(fh)
    return instance_from_dict(doc)


def instance_from_dict(doc):
    try:
        kind = doc["kind"]
        b = np.asarray(doc["b"], dtype=float)
        rho = float(doc["rho"])
        if kind == "diagonal":
            return CrsProblem.from_diagonal(
                np.asarray(doc["eigenvalues"], dtype=float), b, rho)
        if kind == "dense":
            return CrsProblem.from_dense(
                np.asarray(doc["matrix"], dtype=float), b, rho)
    except KeyError as exc:
        raise SpecError(f"instance file missing field {exc}") from None
    raise SpecError(f"unknown instance kind {kind!r}")


# ---------------------------------------------------------------------------
# Native smooth test problems for the outer loop.  Each carries analytic
# value/gradient/Hessian-vector/trace closures and a default start point.

def test_problem(name, n):
    """One of the four native test objectives, by name.

    Names are case- and separator-insensitive: ChainedRosenbrock,
    chained_rosenbrock and chained-rosenbrock all resolve."""
    key = str(name).lower().replace("-", "").replace("_", "")
    try:
        builder = {k.replace("_", ""): v for k, v in _PROBLEMS.items()}[key]
    except KeyError:
        raise SpecError(
            f"unknown test problem {name!r}; known: {sorted(_PROBLEMS)}"
        ) from None
    if n < 2:
        raise SpecError(f"test problems need n >= 2, got {n}")
    return builder(int(n))


def convex_quadratic(n):
    """f = 1/2 x^T D x with D = diag(linspace(1, 10, n)); minimum 0 at 0."""
    d = np.linspace(1.0, 10.0, n)

    return SmoothObjective(
        dim=n,
        value=lambda x: 0.5 * float(x @ (d * x)),
        gradient=lambda x: d * x,
        hessian_vec=lambda x, v: d * v,
        trace_hint=lambda x: float(d.sum()),
        name="convex_quadratic",
        default_start=np.ones(n),
    )


def chained_rosenbrock(n):
    """sum_i 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2; minimum 0 at all-ones."""

    def value(x):
        return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2
                            + (1.0 - x[:-1]) ** 2))

    def grad(x):
        g = np.zeros_like(x)
        t = x[1:] - x[:-1] ** 2
        g[:-1] = -400.0 * x[:-1] * t - 2.0 * (1.0 - x[:-1])
        g[1:] += 200.0 * t
        return g

    def hessvec(x, v):
        # tridiagonal Hessian: diag 1200 x_i^2 - 400 x_{i+1} + 2 (head),
        # + 200 (tail), off-diagonal -400 x_i
        hv = np.zeros_like(v)
        head = 1200.0 * x[:-1] ** 2 - 400.0 * x[1:] + 2.0
        hv[:-1] += head * v[:-1] - 400.0 * x[:-1] * v[1:]
        hv[1:] += 200.0 * v[1:] - 400.0 * x[:-1] * v[:-1]
        return hv

    def trace(x):
        return float(np.sum(1200.0 * x[:-1] ** 2 - 400.0 * x[1:] + 2.0)
                     + 200.0 * (n - 1))

    return SmoothObjective(dim=n, value=value, gradient=grad,
                           hessian_vec=hessvec, trace_hint=trace,
                           name="chained_rosenbrock",
                           default_start=-np.ones(n))


def tridiag_quartic(n):
    """sum_i 1/4 (x_i - x_{i+1})^4 + 1/(4n) sum_i (x_i^2 - 1)^2.

    Nonconvex (indefinite Hessian near 0); global minimum 0 at +/- all-ones.
    """

    def value(x):
        dif = x[:-1] - x[1:]
        return float(0.25 * np.sum(dif ** 4)
                     + 0.25 / n * np.sum((x ** 2 - 1.0) ** 2))

    def grad(x):
        g = (x ** 2 - 1.0) * x / n
        dif3 = (x[:-1] - x[1:]) ** 3
        g[:-1] += dif3
        g[1:] -= dif3
        return g

    def hessvec(x, v):
        hv = (3.0 * x ** 2 - 1.0) / n * v
        dif2 = 3.0 * (x[:-1] - x[1:]) ** 2
        hv[:-1] += dif2 * (v[:-1] - v[1:])
        hv[1:] -= dif2 * (v[:-1] - v[1:])
        return hv

    def trace(x):
        return float(np.sum((3.0 * x ** 2 - 1.0) / n)
                     + 2.0 * np.sum(3.0 * (x[:-1] - x[1:]) ** 2))

    return SmoothObjective(dim=n, value=value, gradient=grad,
                           hessian_vec=hessvec, trace_hint=trace,
                           name="tridiag_quartic",
                           default_start=2.0 * np.ones(n))


def nonconvex_quadratic_cubic(n):
    """b^T x + 1/2 x^T D x + 1/3 ||x||^3 with D = diag(linspace(-1, 1, n)),
    b = ones / sqrt(n).  A CRS objective in its own right, so the global
    minimum is available from the exact subproblem solver."""
    d = np.linspace(-1.0, 1.0, n)
    b = np.ones(n) / math.sqrt(n)

    def value(x):
        return float(b @ x) + 0.5 * float(x @ (d * x)) \
            + float(np.linalg.norm(x)) ** 3 / 3.0

    def grad(x):
        return b + d * x + float(np.linalg.norm(x)) * x

    def hessvec(x, v):
        nx = float(np.linalg.norm(x))
        if nx == 0.0:
            return d * v
        return d * v + nx * v + (float(x @ v) / nx) * x

    def trace(x):
        return float(d.sum()) + (n + 1.0) * float(np.linalg.norm(x))

    return SmoothObjective(dim=n, value=value, gradient=grad,
                           hessian_vec=hessvec, trace_hint=trace,
                           name="nonconvex_quadratic_cubic",
                           default_start=np.zeros(n))


_PROBLEMS = {
    "convex_quadratic": convex_quadratic,
    "chained_rosenbrock": chained_rosenbrock,
    "tridiag_quartic": tridiag_quartic,
    "nonconvex_quadratic_cubic": nonconvex_quadratic_cubic,
}
