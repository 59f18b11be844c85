import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from musens import capacity, closed_form, matgen
from musens.errors import DimensionError

from .conftest import random_channel


def test_estimate_from_samples_order_free():
    x = np.arange(10.0)
    a = capacity.Estimate.from_samples(x)
    b = capacity.Estimate.from_samples(x[::-1])
    assert a == b
    assert a.mean == 4.5
    assert a.std_error == pytest.approx(np.std(x, ddof=1) / math.sqrt(10))
    assert capacity.Estimate.from_samples([2.0]).std_error == 0.0
    with pytest.raises(ValueError):
        capacity.Estimate.from_samples([])


def test_single_antenna_single_user_closed_form():
    # E log2(1 + rho |h|^2) with |h|^2 ~ Exp(1) is log2(e) e^{1/rho} E1(1/rho)
    from scipy.special import exp1

    rho = 2.0
    est = capacity.estimate_I_eq(1, 1, rho, trials=40000, seed=1)
    exact = math.log2(math.e) * math.exp(1 / rho) * exp1(1 / rho)
    assert abs(est.mean - exact) < 4 * est.std_error


def test_I_eq_approaches_closed_form():
    rho = 10.0
    est = capacity.estimate_I_eq(8, 4, rho, trials=4000, seed=2)
    assert est.mean == pytest.approx(4 * closed_form.capF(2.0, rho), abs=0.1)


def test_curve_matches_pointwise():
    rhos = [0.5, 5.0]
    curve = capacity.estimate_I_eq_curve(4, 2, rhos, trials=300, seed=3)
    for rho, est in zip(rhos, curve):
        assert est == capacity.estimate_I_eq(4, 2, rho, trials=300, seed=3)


def test_K_larger_than_M_is_accepted():
    assert capacity.estimate_I_eq(2, 4, 1.0, trials=50).mean > 0


def test_bad_inputs():
    with pytest.raises(DimensionError):
        capacity.estimate_I_eq(0, 1, 1.0)
    with pytest.raises(ValueError):
        capacity.estimate_I_eq(2, 2, 1.0, trials=0)
    with pytest.raises(DimensionError):
        capacity.optimize_power_allocation(np.zeros((2, 2, 2)), 1.0)


def test_rate_gradient_matches_finite_differences(rng_np):
    H = random_channel(rng_np, 4, 3)
    w = np.array([0.1, 0.2, 0.3, 0.4])
    g = capacity.rate_gradient(H, w, 3.0)
    h = 1e-6
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        fd = (capacity.weighted_rate(H, w + e, 3.0) - capacity.weighted_rate(H, w - e, 3.0)) / (2 * h)
        assert g[k] == pytest.approx(fd, rel=1e-6)


def test_weighted_rate_uniform_is_equal_power(rng_np):
    H = random_channel(rng_np, 3, 5)
    assert capacity.weighted_rate(H, np.full(3, 1 / 3), 2.0) == pytest.approx(
        capacity.equal_power_rates(H[None], 2.0)[0], rel=1e-12
    )


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=8))
def test_project_simplex_properties(v):
    v = np.array(v)
    p = capacity.project_simplex(v)
    assert np.all(p >= 0) and p.sum() == pytest.approx(1.0)
    # optimality of a Euclidean projection: (v - p) . (q - p) <= 0 at the vertices q
    for k in range(v.size):
        q = np.zeros(v.size)
        q[k] = 1.0
        assert (v - p) @ (q - p) <= 1e-9


@pytest.mark.parametrize("K,M,rho", [(2, 2, 1.0), (4, 4, 0.1), (4, 8, 10.0), (8, 8, 100.0), (8, 4, 1.0), (3, 1, 5.0)])
def test_optimizer_converges_and_beats_alternatives(K, M, rho):
    H = matgen.sample_channels(K, M, 17, 5)
    for h in H:
        res = capacity.optimize_power_allocation(h, rho)
        assert res.converged and res.kkt_residual < capacity.PGA_TOL
        assert res.weights.sum() == pytest.approx(1.0) and np.all(res.weights >= 0)
        uniform = capacity.weighted_rate(h, np.full(K, 1 / K), rho)
        assert res.objective >= uniform - 1e-10
        assert res.objective >= capacity.best_single_user_rate(h, rho) - 1e-10


def test_optimizer_kkt_conditions():
    h = matgen.sample_channels(4, 4, 5, 1)[0]
    res = capacity.optimize_power_allocation(h, 0.5)
    g = capacity.rate_gradient(h, res.weights, 0.5)
    active = res.weights > 1e-9
    # equal gradient on the support, no larger gradient off it
    assert np.ptp(g[active]) < 1e-6
    assert np.all(g[~active] <= g[active].max() + 1e-6)


def test_optimizer_single_user():
    h = np.array([[1.0 + 0j, 1.0]])
    res = capacity.optimize_power_allocation(h, 1.0)
    assert res.converged and res.objective == pytest.approx(math.log2(3.0))


def test_optimizer_reports_nonconvergence():
    h = matgen.sample_channels(6, 6, 1, 1)[0]
    res = capacity.optimize_power_allocation(h, 10.0, max_iter=1)
    assert res.iterations == 1
    assert not res.converged


def test_estimate_I_opt_above_I_eq():
    eq = capacity.estimate_I_eq(4, 4, 0.3, trials=200, seed=4)
    opt = capacity.estimate_I_opt(4, 4, 0.3, trials=200, seed=4)
    assert opt.mean >= eq.mean


def test_low_snr_linear_bound():
    assert capacity.low_snr_linear_bound(8, 1e-3) == pytest.approx(8e-3 * math.log2(math.e))
    with pytest.raises(ValueError):
        capacity.low_snr_linear_bound(0, 1.0)


def test_rate_gap_db():
    grid = np.arange(0.0, 10.5, 0.5)
    ref = grid.copy()
    alt = grid - 2.0
    assert capacity.rate_gap_db(grid, ref, alt, 3.0) == pytest.approx(2.0)
    assert math.isnan(capacity.rate_gap_db(grid, ref, alt, 9.0))
