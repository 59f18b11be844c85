import math
import warnings

import pytest

from musens import closed_form as cf
from musens.errors import DomainError, RangeError

BETAS = [1.0, 1.5, 2.0, 4.0, 8.0]
RHOS = [1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0, 1e3]


def test_db_roundtrip():
    assert cf.db_to_linear(10.0) == pytest.approx(10.0)
    assert cf.linear_to_db(cf.db_to_linear(-3.3)) == pytest.approx(-3.3)


def test_mp_params_one_minus_a_exact():
    p = cf.mp_params(1.0, 1e6)
    # at beta = 1, 1 - a = 1 / (1 + 4 rho)
    assert p.one_minus_a == pytest.approx(1.0 / (1.0 + 4e6), rel=1e-14)
    assert p.gamma_mp == 0.0


def test_domain_errors():
    with pytest.raises(DomainError):
        cf.capF(0.5, 1.0)
    with pytest.raises(DomainError):
        cf.capF(2.0, 0.0)
    with pytest.raises(DomainError):
        cf.sensitivity_beta1(-1.0)


@pytest.mark.parametrize("beta", BETAS)
@pytest.mark.parametrize("rho", [1e-6, 1e-4] + RHOS + [1e5])
def test_capF_matches_quadrature(beta, rho):
    assert cf.capF(beta, rho) == pytest.approx(cf.capF_quadrature(beta, rho), abs=1e-9, rel=1e-9)


def test_capF_low_snr_slope():
    # F ~ log2(e) rho beta: the mean MP eigenvalue is beta
    for beta in BETAS:
        assert cf.capF(beta, 1e-7) / (math.log2(math.e) * 1e-7 * beta) == pytest.approx(1.0, rel=1e-6)


def test_capF_monotone_in_both_arguments():
    for beta in BETAS:
        vals = [cf.capF(beta, r) for r in RHOS]
        assert all(b > a for a, b in zip(vals, vals[1:]))
    for rho in RHOS:
        vals = [cf.capF(b, rho) for b in BETAS]
        assert all(b > a for a, b in zip(vals, vals[1:]))


def _fd_rho(beta, rho, h=1e-5):
    return (cf.capF(beta, rho * (1 + h)) - cf.capF(beta, rho * (1 - h))) / (2 * h)


def _fd_beta(beta, rho, h=1e-5):
    if beta == 1.0:
        # one-sided second-order form: beta < 1 is outside the domain
        f0, f1, f2 = (cf.capF(beta * (1 + k * h), rho) for k in range(3))
        return (-3 * f0 + 4 * f1 - f2) / (2 * h)
    return (cf.capF(beta * (1 + h), rho) - cf.capF(beta * (1 - h), rho)) / (2 * h)


@pytest.mark.parametrize("beta", BETAS)
@pytest.mark.parametrize("rho", RHOS)
def test_coefficients_are_log_derivatives(beta, rho):
    assert cf.coeff_c1(beta, rho) == pytest.approx(_fd_rho(beta, rho), rel=1e-6)
    assert cf.coeff_c2(beta, rho) == pytest.approx(_fd_beta(beta, rho), rel=1e-6, abs=1e-12)


def test_coeff_d_matches_derivative_identity():
    # c1 = a log2(e) ((sqrt(b)+1)^2 / (4 sqrt(b)) + d)
    for beta in BETAS:
        p = cf.mp_params(beta, 2.0)
        c1 = cf.coeff_c1(beta, 2.0)
        sb = math.sqrt(beta)
        assert c1 == pytest.approx(p.a * math.log2(math.e) * ((sb + 1) ** 2 / (4 * sb) + p.d), rel=1e-12)
        assert cf.coeff_d(beta, 2.0) == pytest.approx(p.d)


@pytest.mark.parametrize("rho", [1e-6, 1e-4, 1e-3, 0.5, 1.0, 10.0, 1e4, 1e7])
def test_beta1_form_agrees(rho):
    assert cf.sensitivity_beta1(rho) == pytest.approx(cf.sensitivity(1.0, rho).value, rel=1e-9)


def test_sensitivity_point():
    p = cf.sensitivity(2.0, 10.0)
    assert p.rho_db == pytest.approx(10.0)
    assert p.value > 0


def test_sensitivity_increases_with_beta_and_rho():
    for rho in RHOS:
        vals = [cf.sensitivity(b, rho).value for b in BETAS]
        assert all(b > a for a, b in zip(vals, vals[1:]))
    for beta in BETAS:
        vals = [cf.sensitivity(beta, r).value for r in RHOS]
        assert all(b > a for a, b in zip(vals, vals[1:]))


def test_asymptotes():
    assert cf.sensitivity_asymptote(4.0, 1e-3, "low") == pytest.approx(2e-3)
    assert cf.sensitivity_asymptote(1.0, math.e**4, "high") == pytest.approx(1.0)
    assert cf.sensitivity_asymptote(3.0, math.e**2, "high") == pytest.approx(1.0 + math.log(2.0))
    with pytest.warns(cf.AsymptoteWarning):
        cf.sensitivity_asymptote(2.0, 0.1, "high")
    with pytest.raises(ValueError):
        cf.sensitivity_asymptote(2.0, 1.0, "mid")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cf.sensitivity_asymptote(2.0, 1e3, "high")


def test_db_penalty_and_complexity():
    assert cf.db_penalty(0.0) == 0.0
    assert cf.db_penalty(0.3) == pytest.approx(1.1394335)
    assert cf.complexity_reduction(1, 8) == 7.0
    with pytest.raises(DomainError):
        cf.db_penalty(-1.0)
    with pytest.raises(DomainError):
        cf.complexity_reduction(2, 1)


def test_operating_point_roundtrip():
    for beta, target in [(1.0, 0.3), (2.0, 1.0), (4.0, 0.05)]:
        rho = cf.solve_operating_point(beta, target)
        assert cf.sensitivity(beta, rho).value == pytest.approx(target, rel=1e-9)


def test_operating_point_out_of_range():
    with pytest.raises(RangeError):
        cf.solve_operating_point(1.0, 100.0)
    with pytest.raises(DomainError):
        cf.solve_operating_point(1.0, 0.0)


@pytest.mark.parametrize("beta,rho", [(1.0, 0.1), (2.0, 1.0), (8.0, 100.0)])
def test_finite_diff_sensitivity_oracle(beta, rho):
    assert cf.finite_diff_sensitivity(beta, rho) == pytest.approx(cf.sensitivity(beta, rho).value, rel=1e-3)
