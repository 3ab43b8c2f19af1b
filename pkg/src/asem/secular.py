"""Secular equations for the cubic regularization subproblem.

With an eigendecomposition A = V diag(lambda) V^T and c_i = -b^T v_i, the
global CRS minimizer is x(sigma) = -(A + sigma I)^{-1} b at the unique
sigma > max(-lambda_1, 0) solving

    w(sigma) = sum_i c_i^2 / (lambda_i + sigma)^2 - sigma^2 / rho^2 = 0.

A model here keeps only the m smallest eigenpairs and lumps the remaining
coefficient mass R = ||b||^2 - sum_{i<=m} c_i^2 at a single surrogate
eigenvalue mu >= lambda_m.  The first-order model adds R / (mu + sigma)^2;
the second-order model subtracts a cubic correction term which vanishes
identically at the coefficient-weighted choice mu_2, so that choice is the
default for order two.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

EXACT = "exact"
FIRST_ORDER = "first_order"
SECOND_ORDER = "second_order"
_ORDERS = (EXACT, FIRST_ORDER, SECOND_ORDER)

HARD_CASE_THRESHOLD = 1e-16  # on c_1^2 / ||b||^2


class SecularError(ValueError):
    """Usage error while building or evaluating a secular model."""


class HardCaseError(RuntimeError):
    """b is (numerically) orthogonal to the bottom eigenvector.

    The secular equation loses its pole and the minimizer is not unique
    along v_1.  This library detects and reports; it does not solve the
    hard case.  Recovery advice: perturb b by roughly 1e-8 * ||b|| * v_1
    (or any vector with a v_1 component) and re-solve; the perturbation
    moves the solution by a comparable amount.
    """


class DegenerateRootError(RuntimeError):
    """No sign change could be bracketed; the instance is degenerate."""


class Mu2UndefinedError(SecularError):
    """Residual mass is ~0 so mu_2 = (b^T A b - sum c_i^2 lambda_i) / R is
    undefined; fall back to the first-order model (or Exact when m = n)."""


@dataclass
class SecularModel:
    """Truncated (or exact) secular equation data.

    ``eigenvalues`` ascending known part, ``coeffs_sq`` the matched c_i^2,
    ``residual_mass`` R >= 0, ``mu`` the surrogate eigenvalue (None for
    Exact), ``second_order_term`` T = sum_{i>m} c_i^2 (lambda_i - mu)
    (0.0 unless a clamped second-order model keeps it), ``flags`` record
    clamping and estimation events.
    """

    order: str
    eigenvalues: np.ndarray
    coeffs_sq: np.ndarray
    residual_mass: float
    mu: float | None
    second_order_term: float
    rho: float
    b_norm: float
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.order not in _ORDERS:
            raise SecularError(f"unknown order {self.order!r}")
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        self.coeffs_sq = np.asarray(self.coeffs_sq, dtype=float)
        if self.eigenvalues.ndim != 1 or self.eigenvalues.size == 0:
            raise SecularError("eigenvalues must be a nonempty 1-d array")
        if self.eigenvalues.shape != self.coeffs_sq.shape:
            raise SecularError("eigenvalues and coeffs_sq must match in shape")
        if np.any(np.diff(self.eigenvalues) < -1e-12 * _spread(self.eigenvalues)):
            raise SecularError("eigenvalues must be ascending")
        if np.any(self.coeffs_sq < 0):
            raise SecularError("coeffs_sq must be nonnegative")
        if self.rho <= 0:
            raise SecularError(f"rho must be positive, got {self.rho}")
        if self.residual_mass < 0:
            raise SecularError("residual_mass must be nonnegative")
        if self.order != EXACT and self.residual_mass > 0 and self.mu is None:
            raise SecularError("truncated model with residual mass needs mu")
        if self.mu is not None and self.mu < self.lambda_m - 1e-9 * max(
            1.0, abs(self.lambda_m)
        ):
            raise SecularError(
                f"mu={self.mu} must not lie below lambda_m={self.lambda_m}"
            )

    @property
    def lambda_1(self):
        return float(self.eigenvalues[0])

    @property
    def lambda_m(self):
        return float(self.eigenvalues[-1])

    @property
    def m(self):
        return int(self.eigenvalues.size)

    def to_dict(self):
        return {
            "order": self.order,
            "eigenvalues": self.eigenvalues.tolist(),
            "coeffs_sq": self.coeffs_sq.tolist(),
            "residual_mass": self.residual_mass,
            "mu": self.mu,
            "second_order_term": self.second_order_term,
            "rho": self.rho,
            "b_norm": self.b_norm,
            "flags": dict(self.flags),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _spread(values):
    return max(float(values[-1] - values[0]), 1.0)


def build_model(spectrum, b, rho, order=FIRST_ORDER, trace=None, b_quad=None,
                mu_override=None):
    """Build a secular model from a (partial) spectrum and b.

    Parameters
    ----------
    spectrum : PartialSpectrum or (eigenvalues, eigenvectors) pair
        The m known smallest eigenpairs, eigenvalues ascending.
    b, rho : problem data.
    order : one of "exact", "first_order", "second_order".
    trace : float or callable or None
        tr(A), needed for mu_1.  A callable is treated as an estimator and
        invoked lazily (flagging ``trace_estimated``); None with a
        first-order model that needs mu raises.
    b_quad : float, optional
        b^T A b, needed for mu_2 (second order).
    mu_override : float or None
        Use this mu instead of the computed one (still clamped to
        >= lambda_m, flagged when clamping fires).

    Returns
    -------
    SecularModel
    """
    if order not in _ORDERS:
        raise SecularError(f"unknown order {order!r}")
    lam, vecs = _unpack_spectrum(spectrum)
    b = np.asarray(b, dtype=float)
    if vecs.shape[0] != b.shape[0]:
        raise SecularError("eigenvector/b dimension mismatch")
    n = b.shape[0]
    m = lam.size
    b_norm = float(np.linalg.norm(b))

    coeffs = -(vecs.T @ b)
    coeffs_sq = coeffs ** 2
    residual = b_norm ** 2 - float(coeffs_sq.sum())
    flags = {}
    if residual < 0:
        # rounding can push the captured mass a hair above ||b||^2
        flags["residual_clamped"] = True
        residual = 0.0

    if order == EXACT or m >= n:
        # all eigenvalues known: the model degenerates to Exact
        if m < n:
            raise SecularError("Exact model requires the full spectrum")
        return SecularModel(
            order=EXACT, eigenvalues=lam, coeffs_sq=coeffs_sq,
            residual_mass=0.0, mu=None, second_order_term=0.0,
            rho=float(rho), b_norm=b_norm, flags=flags,
        )

    lam_m = float(lam[-1])
    hidden_first_moment = None  # sum_{i>m} c_i^2 lambda_i, when available

    if mu_override is not None:
        mu = float(mu_override)
        if b_quad is not None:
            hidden_first_moment = float(b_quad) - float(coeffs_sq @ lam)
    elif order == FIRST_ORDER:
        if trace is None:
            raise SecularError("first-order model needs tr(A) for mu_1")
        if callable(trace):
            trace = float(trace())
            flags["trace_estimated"] = True
        mu = (float(trace) - float(lam.sum())) / (n - m)
    else:  # SECOND_ORDER with the canonical mu_2
        if b_quad is None:
            raise SecularError("second-order model needs b_quad = b^T A b")
        denom_floor = 1e-14 * max(b_norm ** 2, 1.0)
        if residual <= denom_floor:
            raise Mu2UndefinedError(
                "residual mass ~ 0: mu_2 undefined, fall back to first order"
            )
        hidden_first_moment = float(b_quad) - float(coeffs_sq @ lam)
        mu = hidden_first_moment / residual

    if mu < lam_m:
        mu = lam_m
        flags["mu_clamped"] = True

    second_term = 0.0
    if order == SECOND_ORDER:
        if hidden_first_moment is None:
            raise SecularError("second-order model needs b_quad = b^T A b")
        second_term = hidden_first_moment - mu * residual
        if not flags.get("mu_clamped") and mu_override is None:
            second_term = 0.0  # exactly zero at mu = mu_2 by construction

    return SecularModel(
        order=order, eigenvalues=lam, coeffs_sq=coeffs_sq,
        residual_mass=residual, mu=mu, second_order_term=second_term,
        rho=float(rho), b_norm=b_norm, flags=flags,
    )


def _unpack_spectrum(spectrum):
    if hasattr(spectrum, "eigenvalues") and hasattr(spectrum, "eigenvectors"):
        return (np.asarray(spectrum.eigenvalues, dtype=float),
                np.asarray(spectrum.eigenvectors, dtype=float))
    lam, vecs = spectrum
    return np.asarray(lam, dtype=float), np.asarray(vecs, dtype=float)


def model_from_coefficients(eigenvalues, coeffs_sq, rho, b_norm=None,
                            order=EXACT, residual_mass=0.0, mu=None,
                            second_order_term=0.0):
    """Assemble a model directly from spectral coefficients (diagonal
    problems, projected subproblems, tests)."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    coeffs_sq = np.asarray(coeffs_sq, dtype=float)
    if b_norm is None:
        mass = float(coeffs_sq.sum()) + float(residual_mass)
        if mass < 0.0:
            raise SecularError("coefficient masses must be nonnegative")
        b_norm = math.sqrt(mass)
    return SecularModel(
        order=order, eigenvalues=eigenvalues, coeffs_sq=coeffs_sq,
        residual_mass=float(residual_mass), mu=mu,
        second_order_term=float(second_order_term), rho=float(rho),
        b_norm=float(b_norm),
    )


def _check_domain(model, sigma):
    if sigma < 0.0:
        raise SecularError(f"sigma must be nonnegative, got {sigma}")
    if sigma <= -model.lambda_1:
        raise SecularError(
            f"sigma={sigma} is not strictly right of the pole at "
            f"{-model.lambda_1}"
        )
    if model.mu is not None and sigma <= -model.mu:
        raise SecularError(f"sigma={sigma} does not clear the surrogate pole")


def eval_secular(model, sigma):
    """Evaluate w(sigma) for the model (exact, first or second order).

    Requires sigma >= 0 and strictly right of the pole -lambda_1.  The
    first-order path with zero residual mass runs the exact code path
    bit-for-bit, and a second-order model with vanishing correction term
    runs the first-order path bit-for-bit.
    """
    _check_domain(model, sigma)
    denom = model.eigenvalues + sigma
    total = float(np.sum(model.coeffs_sq / denom ** 2))
    if model.residual_mass != 0.0:
        total += model.residual_mass / (model.mu + sigma) ** 2
    if model.second_order_term != 0.0:
        total -= 2.0 * model.second_order_term / (model.mu + sigma) ** 3
    return total - (sigma / model.rho) ** 2


def eval_secular_sqrt_form(model, sigma):
    """Evaluate the convexified form sqrt(sum) - sigma/rho.

    Only defined for exact and first-order models (the second-order
    correction can push the sum negative).  Shares every root and sign with
    :func:`eval_secular` on sigma >= 0.
    """
    if model.second_order_term != 0.0:
        raise SecularError("sqrt form needs a model without cubic correction")
    _check_domain(model, sigma)
    denom = model.eigenvalues + sigma
    total = float(np.sum(model.coeffs_sq / denom ** 2))
    if model.residual_mass != 0.0:
        total += model.residual_mass / (model.mu + sigma) ** 2
    return math.sqrt(total) - sigma / model.rho


def _sqrt_form_with_derivative(model, sigma):
    denom = model.eigenvalues + sigma
    total = float(np.sum(model.coeffs_sq / denom ** 2))
    dtotal = -2.0 * float(np.sum(model.coeffs_sq / denom ** 3))
    if model.residual_mass != 0.0:
        md = model.mu + sigma
        total += model.residual_mass / md ** 2
        dtotal += -2.0 * model.residual_mass / md ** 3
    root = math.sqrt(total)
    val = root - sigma / model.rho
    deriv = dtotal / (2.0 * root) - 1.0 / model.rho if root > 0 else -1.0 / model.rho
    return val, deriv


def sigma_upper_bound(lambda_1, rho, b_norm):
    """B_1 = (-lambda_1 + sqrt(lambda_1^2 + 4 rho ||b||)) / 2.

    Every root of the exact or truncated secular equation lies in
    (max(-lambda_1, 0), B_1].  Computed in the rationalized form when
    lambda_1 > 0 to dodge cancellation.
    """
    if rho <= 0:
        raise SecularError("rho must be positive")
    if b_norm < 0:
        raise SecularError("b_norm must be nonnegative")
    disc = math.sqrt(lambda_1 ** 2 + 4.0 * rho * b_norm)
    if lambda_1 > 0:
        if disc + lambda_1 == 0.0:
            return 0.0
        return 2.0 * rho * b_norm / (lambda_1 + disc)
    return 0.5 * (-lambda_1 + disc)


@dataclass
class RootBracket:
    lo: float
    hi: float
    B1: float


@dataclass
class RootResult:
    sigma: float
    iterations: int
    bracket: RootBracket
    residual: float
    method: str
    flags: dict = field(default_factory=dict)


def find_root(model, tol=1e-12, method="bisection", max_iter=200):
    """Find the secular root sigma* in (max(-lambda_1, 0), B_1].

    Bisection is the default and the reference; "newton" runs a safeguarded
    Newton iteration on the convex sqrt form with the same bracket, falling
    back to bisection steps whenever Newton leaves it.  Terminates when the
    bracket width drops below tol * max(1, B_1).

    Raises :class:`HardCaseError` when c_1^2 <= 1e-16 ||b||^2 (or b = 0
    with lambda_1 < 0) and :class:`DegenerateRootError` when no sign change
    can be bracketed.
    """
    if method not in ("bisection", "newton"):
        raise SecularError(f"unknown root method {method!r}")
    if model.second_order_term != 0.0 and method == "newton":
        method = "bisection"  # sqrt form unavailable; bisection still valid

    lam1 = model.lambda_1
    pole = max(-lam1, 0.0)
    B1 = sigma_upper_bound(lam1, model.rho, model.b_norm)
    flags = {}

    if model.b_norm == 0.0:
        if lam1 >= 0.0:
            # w(sigma) = -(sigma/rho)^2: root exactly at sigma = 0
            bracket = RootBracket(lo=0.0, hi=0.0, B1=B1)
            return RootResult(sigma=0.0, iterations=0, bracket=bracket,
                              residual=0.0, method=method, flags=flags)
        raise HardCaseError(
            "b = 0 with lambda_1 < 0: every x = t v_1 with "
            "rho ||x|| = -lambda_1 is optimal; perturb b to select one"
        )

    if float(model.coeffs_sq[0]) <= HARD_CASE_THRESHOLD * model.b_norm ** 2:
        raise HardCaseError(
            "c_1^2 <= 1e-16 ||b||^2: b has (numerically) no component on the "
            "bottom eigenvector, the secular pole vanishes (hard case). "
            "Perturb b by ~1e-8 ||b|| along v_1 and re-solve."
        )

    offset = max(1e-14, 1e-12 * abs(lam1))
    lo = pole + offset
    w_lo = eval_secular(model, lo)
    halvings = 0
    while w_lo <= 0.0 and halvings < 60:
        offset *= 0.5
        lo = pole + offset
        w_lo = eval_secular(model, lo)
        halvings += 1
    if w_lo <= 0.0:
        raise DegenerateRootError(
            "w stays nonpositive arbitrarily close to the pole; "
            "no root right of max(-lambda_1, 0)"
        )

    hi = max(B1, lo * (1.0 + 1e-15))
    w_hi = eval_secular(model, hi)
    expansions = 0
    while w_hi > 0.0 and expansions < 10:
        hi *= 1.5
        w_hi = eval_secular(model, hi)
        expansions += 1
    if w_hi > 0.0:
        raise DegenerateRootError("failed to bracket a sign change above B_1")
    if expansions:
        flags["upper_bound_expanded"] = True

    width_tol = tol * max(1.0, B1)

    if method == "bisection":
        a = lo
        b_ = hi
        iterations = 0
        while b_ - a > width_tol and iterations < max_iter:
            mid = 0.5 * (a + b_)
            if mid <= a or mid >= b_:
                break  # bracket at floating point resolution
            val = eval_secular(model, mid)
            iterations += 1
            if val > 0.0:
                a = mid
            else:
                b_ = mid
        sigma = 0.5 * (a + b_)
        bracket = RootBracket(lo=a, hi=b_, B1=B1)
        return RootResult(sigma=sigma, iterations=iterations, bracket=bracket,
                          residual=eval_secular(model, sigma), method=method,
                          flags=flags)

    # safeguarded Newton on the sqrt form
    a, b_ = lo, hi
    x = 0.5 * (a + b_)
    iterations = 0
    while b_ - a > width_tol and iterations < max_iter:
        val, deriv = _sqrt_form_with_derivative(model, x)
        if val > 0.0:
            a = x
        else:
            b_ = x
        if deriv != 0.0 and math.isfinite(deriv):
            x_new = x - val / deriv
        else:
            x_new = 0.5 * (a + b_)
        if not (a < x_new < b_):
            x_new = 0.5 * (a + b_)
        if x_new == x:
            break
        x = x_new
        iterations += 1
    sigma = min(max(x, a), b_)
    bracket = RootBracket(lo=a, hi=b_, B1=B1)
    return RootResult(sigma=sigma, iterations=iterations, bracket=bracket,
                      residual=eval_secular(model, sigma), method="newton",
                      flags=flags)


@dataclass
class BoundReport:
    """Evaluated a-priori root-error bound for a truncated model."""

    order: str
    cm_cap: float
    lambda_spread: float
    gap_cap: float
    B1: float


def root_gap_bound(model, full_eigenvalues):
    """A-priori cap on |sigma_model - sigma_exact| from the known spectrum.

    Diagnostic only: needs the full (oracle) spectrum to measure the hidden
    spread max_{i>m} |lambda_i - mu|.  For a first-order model the cap is

        C_m * max|lambda_i - mu|,
        C_m <= min((lambda_n + B_1)^3, rho^2 ||b||^2 / B_1)
               / (lambda_m - lambda_1)^3,

    and the second-order cap swaps in (lambda_m - lambda_1)^4, a 3/2
    prefactor and the squared spread.  ||b|| = 0 zeroes the cap (documented
    clamp of the rho^2/(2 B_1) branch).
    """
    if model.order == EXACT:
        raise SecularError("bound applies to truncated models only")
    if model.mu is None:
        raise SecularError("model carries no mu")
    full = np.asarray(full_eigenvalues, dtype=float)
    m = model.m
    if full.size <= m:
        raise SecularError("full spectrum must extend past the model's m")
    lam1 = model.lambda_1
    lam_m = model.lambda_m
    if lam_m <= lam1:
        raise SecularError("lambda_m must exceed lambda_1 for the bound")
    lam_n = float(full[-1])
    B1 = sigma_upper_bound(lam1, model.rho, model.b_norm)

    if model.b_norm == 0.0 or B1 == 0.0:
        minterm = 0.0
    else:
        minterm = min((lam_n + B1) ** 3,
                      model.rho ** 2 * model.b_norm ** 2 / B1)

    hidden = full[m:]
    spread = float(np.max(np.abs(hidden - model.mu)))
    if model.order == FIRST_ORDER:
        cm = minterm / (lam_m - lam1) ** 3
        gap = cm * spread
    else:
        cm = 1.5 * minterm / (lam_m - lam1) ** 4
        gap = cm * spread ** 2
    return BoundReport(order=model.order, cm_cap=cm, lambda_spread=spread,
                       gap_cap=gap, B1=B1)
