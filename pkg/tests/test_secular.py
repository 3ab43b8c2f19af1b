"""Secular models: construction, evaluation, root finding, error caps."""

import math

import numpy as np
import pytest

from asem.operators import PartialSpectrum
from asem.secular import (
    EXACT,
    FIRST_ORDER,
    SECOND_ORDER,
    DegenerateRootError,
    HardCaseError,
    Mu2UndefinedError,
    SecularError,
    build_model,
    eval_secular,
    eval_secular_sqrt_form,
    find_root,
    model_from_coefficients,
    sigma_upper_bound,
    root_gap_bound,
)


def spectrum_from_columns(eigenvalues, n):
    """Partial spectrum whose eigenvectors are the first m identity columns."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    m = eigenvalues.size
    vecs = np.zeros((n, m))
    vecs[np.arange(m), np.arange(m)] = 1.0
    return PartialSpectrum(
        eigenvalues=eigenvalues,
        eigenvectors=vecs,
        residuals=np.zeros(m),
        beta_shift=0.0,
        converged=True,
    )


def full_model(eigenvalues, b, rho, order=EXACT):
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    b = np.asarray(b, dtype=float)
    return model_from_coefficients(
        eigenvalues, b ** 2, rho, b_norm=float(np.linalg.norm(b)), order=order
    )


# -------------------------------------------------------------- build_model

def test_build_model_first_order_mu():
    # observed lambda = (1, 2), trace 11, n=4: mu = (11 - 3) / 2 = 4
    spec = spectrum_from_columns([1.0, 2.0], n=4)
    b = np.array([1.0, 1.0, 1.0, 1.0])
    model = build_model(spec, b, rho=0.5, order=FIRST_ORDER, trace=11.0)
    assert model.mu == pytest.approx(4.0, abs=1e-14)
    assert model.residual_mass == pytest.approx(2.0, abs=1e-14)
    assert np.allclose(model.coeffs_sq, [1.0, 1.0])
    assert model.second_order_term == 0.0


def test_build_model_second_order_mu():
    # hidden coefficient mass 1 at lambda=3 and 4 at lambda=5:
    # mu_2 = (1*3 + 4*5) / 5 = 4.6, which zeroes the cubic correction
    spec = spectrum_from_columns([1.0, 2.0], n=4)
    b = np.array([1.0, 1.0, 1.0, 2.0])
    b_quad = float(b @ (np.array([1.0, 2.0, 3.0, 5.0]) * b))
    model = build_model(spec, b, rho=0.5, order=SECOND_ORDER,
                        trace=1.0 + 2.0 + 3.0 + 5.0, b_quad=b_quad)
    assert model.mu == pytest.approx(4.6, abs=1e-12)
    assert model.second_order_term == 0.0
    assert model.residual_mass == pytest.approx(5.0, abs=1e-14)


def test_build_model_full_subspace_is_exact():
    spec = spectrum_from_columns([-1.0, 0.0, 2.0], n=3)
    b = np.array([0.3, -0.4, 0.5])
    for order in (FIRST_ORDER, SECOND_ORDER):
        model = build_model(spec, b, rho=1.0, order=order, trace=1.0)
        assert model.order == EXACT
        assert model.residual_mass == 0.0
        assert np.allclose(model.coeffs_sq, b ** 2, atol=1e-14)


def test_build_model_trace_estimator_flag():
    spec = spectrum_from_columns([1.0, 2.0], n=4)
    b = np.ones(4)
    model = build_model(spec, b, rho=1.0, order=FIRST_ORDER,
                        trace=lambda: 11.0)
    assert model.flags.get("trace_estimated")
    assert model.mu == pytest.approx(4.0)


def test_build_model_mu_clamped_to_lambda_m():
    # trace 5 gives mu = (5 - 3) / 2 = 1 < lambda_m = 2: clamp and flag
    spec = spectrum_from_columns([1.0, 2.0], n=4)
    b = np.ones(4)
    model = build_model(spec, b, rho=1.0, order=FIRST_ORDER, trace=5.0)
    assert model.mu == pytest.approx(2.0)
    assert model.flags.get("mu_clamped")


def test_build_model_mu2_undefined_without_residual():
    # b entirely inside the observed span: R = 0, mu_2 = T/R undefined
    spec = spectrum_from_columns([1.0, 2.0], n=4)
    b = np.array([1.0, -1.0, 0.0, 0.0])
    with pytest.raises(Mu2UndefinedError):
        build_model(spec, b, rho=1.0, order=SECOND_ORDER, trace=11.0,
                    b_quad=float(b @ b))


def test_build_model_mu_override():
    spec = spectrum_from_columns([1.0, 2.0], n=4)
    b = np.ones(4)
    model = build_model(spec, b, rho=1.0, order=FIRST_ORDER, trace=11.0,
                        mu_override=7.5)
    assert model.mu == pytest.approx(7.5)


def test_model_validation():
    with pytest.raises(SecularError):
        model_from_coefficients([2.0, 1.0], [1.0, 1.0], 1.0)  # not ascending
    with pytest.raises(SecularError):
        model_from_coefficients([1.0], [-1.0], 1.0)  # negative mass
    with pytest.raises(SecularError):
        model_from_coefficients([1.0], [1.0], 0.0)  # rho not positive
    with pytest.raises(SecularError):
        # truncated with residual mass but no mu
        model_from_coefficients([1.0], [1.0], 1.0, order=FIRST_ORDER,
                                residual_mass=1.0)


# ------------------------------------------------------------- eval_secular

def test_eval_secular_scalar_zero():
    # n=1, lambda=0, c^2=1, rho=1: w(1) = 1/1 - 1 = 0
    model = full_model([0.0], [1.0], 1.0)
    assert eval_secular(model, 1.0) == 0.0


def test_eval_secular_first_order_zero_residual_bitwise():
    rng = np.random.default_rng(51)
    lam = np.sort(rng.uniform(-1.0, 1.0, 30))
    b = rng.standard_normal(30)
    exact = full_model(lam, b, 0.7)
    first = full_model(lam, b, 0.7, order=FIRST_ORDER)
    for sigma in np.linspace(1.01, 5.0, 23):
        assert eval_secular(first, sigma) == eval_secular(exact, sigma)


def test_eval_secular_second_order_at_mu2_matches_first_order():
    lam = np.array([-1.0, -0.5])
    c2 = np.array([0.04, 0.02])
    mu2 = 4.6
    first = model_from_coefficients(lam, c2, 0.5, b_norm=0.3,
                                    order=FIRST_ORDER, residual_mass=0.03,
                                    mu=mu2)
    second = model_from_coefficients(lam, c2, 0.5, b_norm=0.3,
                                     order=SECOND_ORDER, residual_mass=0.03,
                                     mu=mu2, second_order_term=0.0)
    for sigma in np.linspace(1.1, 8.0, 17):
        assert eval_secular(second, sigma) == eval_secular(first, sigma)


def test_eval_secular_rejects_pole_side():
    model = full_model([-1.0, 1.0], [0.5, 0.5], 1.0)
    with pytest.raises(SecularError):
        eval_secular(model, 1.0)  # at the pole -lambda_1
    with pytest.raises(SecularError):
        eval_secular(model, 0.5)  # left of it
    with pytest.raises(SecularError):
        eval_secular(model, -0.5)  # negative sigma is outside the domain


def test_eval_secular_decreasing_right_of_pole():
    rng = np.random.default_rng(53)
    lam = np.sort(rng.uniform(-1.0, 1.0, 10))
    b = rng.standard_normal(10)
    model = full_model(lam, b, 0.3)
    grid = -lam[0] + np.geomspace(1e-3, 10.0, 40)
    vals = [eval_secular(model, s) for s in grid]
    assert np.all(np.diff(vals) < 0.0)


# ---------------------------------------------------------------- sqrt form

def test_sqrt_form_shares_sign_and_root():
    rng = np.random.default_rng(57)
    lam = np.sort(rng.uniform(-1.0, 1.0, 12))
    b = rng.standard_normal(12)
    model = full_model(lam, b, 0.4, order=FIRST_ORDER)
    for sigma in -lam[0] + np.geomspace(1e-2, 20.0, 30):
        w = eval_secular(model, sigma)
        wt = eval_secular_sqrt_form(model, sigma)
        assert w == 0.0 if wt == 0.0 else w * wt > 0.0


def test_sqrt_form_nonpositive_at_upper_bound():
    rng = np.random.default_rng(59)
    lam = np.sort(rng.uniform(-1.0, 1.0, 12))
    b = 0.1 * rng.standard_normal(12)
    model = full_model(lam, b, 0.2, order=FIRST_ORDER)
    B1 = sigma_upper_bound(lam[0], 0.2, float(np.linalg.norm(b)))
    assert eval_secular_sqrt_form(model, B1) <= 1e-12


def test_sqrt_form_rejects_cubic_correction():
    model = model_from_coefficients([1.0], [1.0], 1.0, b_norm=2.0,
                                    order=SECOND_ORDER, residual_mass=3.0,
                                    mu=2.0, second_order_term=0.5)
    with pytest.raises(SecularError):
        eval_secular_sqrt_form(model, 1.0)


def test_sigma_upper_bound_value():
    # B1 solves sigma^2 + lambda_1 sigma - rho ||b|| = 0
    got = sigma_upper_bound(-1.0, 0.1, 0.1)
    assert got == pytest.approx((1.0 + math.sqrt(1.04)) / 2.0, abs=1e-15)
    # the root lies at or below B1 for any model with these aggregates
    lam = np.array([-1.0, 0.0, 1.0])
    b = np.array([0.1, 0.0, 0.0])
    model = full_model(lam, b, 0.1)
    root = find_root(model).sigma
    assert root <= got + 1e-12


# ---------------------------------------------------------------- find_root

def test_find_root_scalar_identity():
    model = full_model([0.0], [1.0], 1.0)
    res = find_root(model, tol=1e-14)
    assert res.sigma == pytest.approx(1.0, abs=1e-12)
    assert res.bracket.lo <= res.sigma <= res.bracket.hi


def test_find_root_golden_ratio():
    # lambda = 1: 1/(1+sigma)^2 = sigma^2 gives sigma (1+sigma) = 1
    model = full_model([1.0], [1.0], 1.0)
    res = find_root(model, tol=1e-14)
    assert res.sigma == pytest.approx((math.sqrt(5.0) - 1.0) / 2.0, abs=1e-12)


@pytest.mark.parametrize("method", ["bisection", "newton"])
def test_find_root_methods_agree(method):
    rng = np.random.default_rng(61)
    for _ in range(20):
        lam = np.sort(rng.uniform(-1.0, 1.0, 15))
        b = 0.5 * rng.standard_normal(15)
        model = full_model(lam, b, 0.3)
        res = find_root(model, tol=1e-13, method=method)
        # residual of the exact secular equation at the returned root
        assert abs(eval_secular(model, res.sigma)) <= 1e-8
        assert res.sigma > max(-lam[0], 0.0)


def test_find_root_newton_on_truncated_model():
    # truncated model with residual mass: both methods find the same root,
    # Newton in fewer iterations
    lam = np.linspace(-1.0, 0.4, 40)
    model = model_from_coefficients(
        lam, np.full(40, 2e-6), 0.1, order=FIRST_ORDER,
        residual_mass=0.1 ** 2 - 40 * 2e-6, mu=0.6)
    bis = find_root(model, tol=1e-13, method="bisection")
    newt = find_root(model, tol=1e-13, method="newton")
    assert newt.sigma == pytest.approx(bis.sigma, abs=1e-10)
    assert newt.iterations <= bis.iterations


def test_find_root_bracket_width():
    model = full_model([0.0], [1.0], 1.0)
    res = find_root(model, tol=1e-6)
    width = res.bracket.hi - res.bracket.lo
    assert width <= 1e-6 * max(1.0, res.bracket.B1)


def test_find_root_hard_case():
    lam = np.array([-1.0, 0.0, 1.0])
    b = np.array([0.0, 0.5, 0.5])  # no component on v_1
    model = full_model(lam, b, 1.0)
    with pytest.raises(HardCaseError) as exc:
        find_root(model)
    assert "perturb" in str(exc.value).lower()


def test_find_root_zero_b():
    # positive semidefinite with b = 0: minimizer x = 0, sigma = 0
    model = model_from_coefficients([0.5, 1.0], [0.0, 0.0], 1.0, b_norm=0.0)
    res = find_root(model)
    assert res.sigma == 0.0
    # indefinite with b = 0 is the pure hard case
    model = model_from_coefficients([-0.5, 1.0], [0.0, 0.0], 1.0, b_norm=0.0)
    with pytest.raises(HardCaseError):
        find_root(model)


def test_find_root_positive_definite_small_b():
    # PD spectrum: root continuous in ||b||, stays in (0, B1]
    lam = np.array([0.2, 0.7, 1.3])
    for scale in (1.0, 1e-4, 1e-10):
        b = scale * np.array([0.3, -0.2, 0.1])
        model = full_model(lam, b, 1.0)
        res = find_root(model, tol=1e-14)
        assert 0.0 < res.sigma <= res.bracket.B1 + 1e-15
        assert abs(eval_secular(model, res.sigma)) <= 1e-10


# ------------------------------------------------------------ root_gap_bound

def manual_caps(model, lam_full, rho, bnorm):
    # recompute the two error caps from their closed forms
    lam1, lamm = lam_full[0], model.lambda_m
    B1 = (-lam1 + math.sqrt(lam1 ** 2 + 4.0 * rho * bnorm)) / 2.0
    lamn = lam_full[-1]
    minterm = min((lamn + B1) ** 3, rho ** 2 * bnorm ** 2 / B1)
    tail = lam_full[model.m:]
    first = minterm / (lamm - lam1) ** 3 * float(np.max(np.abs(tail - model.mu)))
    second = 1.5 * minterm / (lamm - lam1) ** 4 * float(
        np.max((tail - model.mu) ** 2))
    return B1, first, second


def test_root_gap_bound_first_order():
    rng = np.random.default_rng(67)
    lam = np.sort(rng.uniform(-1.0, 1.0, 200))
    b = 0.1 * rng.standard_normal(200)
    b /= np.linalg.norm(b) * 10.0  # ||b|| = 0.1
    m = 20
    spec = spectrum_from_columns(lam[:m], n=200)
    # build against a diagonal problem: coefficients are b components
    model = build_model(spec, b, rho=0.1, order=FIRST_ORDER,
                        trace=float(np.sum(lam)))
    rep = root_gap_bound(model, lam)
    B1, first, _ = manual_caps(model, lam, 0.1, float(np.linalg.norm(b)))
    assert rep.B1 == pytest.approx(B1, rel=1e-12)
    assert rep.gap_cap == pytest.approx(first, rel=1e-10)
    assert rep.gap_cap >= 0.0 and math.isfinite(rep.gap_cap)


def test_root_gap_bound_second_order():
    rng = np.random.default_rng(71)
    lam = np.sort(rng.uniform(-1.0, 1.0, 150))
    b = rng.standard_normal(150)
    b *= 0.1 / np.linalg.norm(b)
    m = 15
    spec = spectrum_from_columns(lam[:m], n=150)
    b_quad = float(b @ (lam * b))
    model = build_model(spec, b, rho=0.1, order=SECOND_ORDER,
                        trace=float(np.sum(lam)), b_quad=b_quad)
    rep = root_gap_bound(model, lam)
    _, _, second = manual_caps(model, lam, 0.1, float(np.linalg.norm(b)))
    assert rep.gap_cap == pytest.approx(second, rel=1e-10)


def test_root_gap_bound_caps_actual_gap():
    # the cap must dominate the observed root displacement
    n, m = 400, 40
    lam = np.linspace(-1.0, 1.0, n)
    b = np.full(n, 0.1 / math.sqrt(n))
    exact = full_model(lam, b, 0.1)
    sigma_star = find_root(exact, tol=1e-14).sigma
    spec = spectrum_from_columns(lam[:m], n=n)
    model = build_model(spec, b, rho=0.1, order=FIRST_ORDER,
                        trace=float(np.sum(lam)))
    sigma_m = find_root(model, tol=1e-14).sigma
    rep = root_gap_bound(model, lam)
    assert abs(sigma_m - sigma_star) <= rep.gap_cap
