"""Tests for closed-loop spectra, slope fits and power bounds."""

import math

import numpy as np
import pytest

from osc_consensus.gains import select_coefficients
from osc_consensus.model import build_system
from osc_consensus.spectral import (
    closed_loop_matrix,
    digits_for,
    eigen_distinct,
    fit_slope,
    graded_gains,
    entry_bound_constants,
    power_bound_check,
    predicted_slope,
    radius_expansion_check,
    report_rows,
    spectral_radius,
)

EPSILONS = [1e-3, 3e-4, 1e-4, 3e-5]


def test_zero_gain_gives_A():
    """k = 0 leaves A unchanged."""
    model = build_system(2, 1.0)
    np.testing.assert_array_equal(closed_loop_matrix(model, np.zeros(4), 2.0), model.A)


def test_closed_loop_last_row():
    """m = 1, lambda = 1, k = [0, eps c2]: last row [-sin, cos - eps c2]."""
    theta, eps, c2 = 0.6, 0.01, 0.8
    matrix = closed_loop_matrix(build_system(1, theta), [0.0, eps * c2], 1.0)
    np.testing.assert_allclose(matrix[1], [-math.sin(theta), math.cos(theta) - eps * c2])
    np.testing.assert_allclose(matrix[0], [math.cos(theta), math.sin(theta)])


def test_complex_eigenvalue_gives_complex_matrix():
    model = build_system(1, 0.6)
    assert np.iscomplexobj(closed_loop_matrix(model, [0.1, 0.1], 1 + 1j))
    assert not np.iscomplexobj(closed_loop_matrix(model, [0.1, 0.1], 2.0))
    with pytest.raises(ValueError):
        closed_loop_matrix(model, [0.1, 0.1, 0.1], 1.0)


def test_quarter_turn_slope():
    """m = 1, theta = pi/2, c = [-1, 0], lambda = 1: slope -1/2."""
    model = build_system(1, math.pi / 2)
    report = radius_expansion_check(model, [-1.0, 0.0], 1.0, EPSILONS)
    assert report.predicted_slope == pytest.approx(-0.5)
    assert report.slope_fit == pytest.approx(-0.5, rel=0.1)
    assert all(rho < 1.0 for rho in report.radii)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_slopes_match_first_order_prediction(m):
    """Fitted slopes stay within 10% of the prediction over angles and eigenvalues."""
    for theta in np.linspace(0.3, math.pi - 0.3, 10):
        theta = float(theta)
        model = build_system(m, theta)
        for lam in (0.5, 1.0, 2.0):
            h = lam / 2.0 if m == 1 else lam
            c = select_coefficients(m, theta, h).c
            report = radius_expansion_check(model, c, lam, EPSILONS)
            expected = predicted_slope(m, theta, c, lam)
            assert expected == pytest.approx(-1.0)
            assert report.relative_error <= 0.1, (m, theta, lam, report.slope_fit)
            for epsilon, rho in zip(report.epsilons, report.radii):
                assert rho < 1.0 - epsilon / 2.0


def test_high_order_spectrum_is_distinct():
    """Graded gains split the repeated eigenvalues of A."""
    model = build_system(2, math.pi / 3)
    c = select_coefficients(2, math.pi / 3, 1.0).c
    report = radius_expansion_check(model, c, 1.0, EPSILONS)
    assert report.eigen_distinct
    assert eigen_distinct(np.diag([1.0, 2.0]))
    assert not eigen_distinct(np.diag([1.0, 1.0]))


def test_epsilon_sample_validation():
    """Epsilon samples must decrease and stay above the floor."""
    model = build_system(1, 1.0)
    with pytest.raises(ValueError):
        radius_expansion_check(model, [-1.0, 0.0], 1.0, [1e-4, 1e-3])
    with pytest.raises(ValueError):
        radius_expansion_check(model, [-1.0, 0.0], 1.0, [1e-3, 1e-7])
    with pytest.raises(ValueError):
        radius_expansion_check(model, [-1.0, 0.0], 1.0, [])


def test_fit_slope_recovers_linear_term():
    """a is recovered exactly from 1 + a eps + b eps^1.5."""
    eps = np.array(EPSILONS)
    radii = 1.0 - 0.7 * eps + 3.0 * eps**1.5
    assert fit_slope(eps, radii) == pytest.approx(-0.7, rel=1e-6)
    assert fit_slope(eps[:2], 1.0 - 0.7 * eps[:2]) == pytest.approx(-0.7)


def test_extended_precision_radius():
    """The mpmath eigensolve agrees with LAPACK on a benign matrix."""
    matrix = np.array([[0.5, 0.2], [-0.3, 0.9]])
    assert spectral_radius(matrix, digits=30) == pytest.approx(spectral_radius(matrix), rel=1e-12)
    assert digits_for(1e-3) is None
    assert digits_for(2e-7) == 34


def test_power_bound_constants():
    """Table values for m = 1 and m = 2."""
    constants, exponents = entry_bound_constants(1, 1.0, [])
    np.testing.assert_array_equal(constants, [2.5])
    constants, exponents = entry_bound_constants(2, 2.0, [])
    np.testing.assert_allclose(constants, [1.5, 2.5])
    np.testing.assert_allclose(exponents, [-0.5, 0.0])
    _, exponents = entry_bound_constants(4, 1.0, [-1.0, -2.0])
    np.testing.assert_allclose(exponents, [-2.0, -1.0, -0.5, 0.0])


def test_power_bounds_hold_for_fourth_order_agents():
    """m = 2, eps = 1e-4: entries of A_i^s xi stay within 1.2x the bound up to s = 2000."""
    model = build_system(2, math.pi / 3)
    for lam in (0.5, 1.0, 2.0):
        c = select_coefficients(2, math.pi / 3, lam).c
        ratios = power_bound_check(model, graded_gains(c, 1e-4), lam, 1e-4, s_max=2000, trials=100, seed=5)
        assert set(ratios) == {1, 2}
        assert max(ratios.values()) <= 1.2, (lam, ratios)


def test_power_bound_with_explicit_vectors():
    """Explicit xi vectors are used as given; zero vectors give zero ratios."""
    model = build_system(1, 1.0)
    ratios = power_bound_check(model, [-0.01, 0.005], 1.0, 0.01, s_max=10, trials=0, xi=np.zeros((2, 3)))
    assert ratios == {1: 0.0}


def test_power_bound_follows_complex_eigenvalue():
    """A complex lambda iterates A - lambda K, not A - Re(lambda) K."""
    model = build_system(1, math.pi / 4)
    lam = 1.0 + 1.0j
    k = [-0.02, 0.01]
    xi = np.eye(2)
    ratios = power_bound_check(model, k, lam, 0.01, s_max=50, trials=0, xi=xi)

    matrix = closed_loop_matrix(model, k, lam)
    assert np.iscomplexobj(matrix)
    rho = spectral_radius(matrix)
    vectors = xi.astype(complex)
    expected = 0.0
    for s in range(51):
        expected = max(expected, float(np.max(np.abs(vectors))) / (2.5 * rho**s))
        vectors = matrix @ vectors
    assert ratios[1] == pytest.approx(expected)


def test_expansion_report_carries_power_margins():
    """power_epsilon attaches per-pair power-bound ratios to the report."""
    model = build_system(2, math.pi / 3)
    c = select_coefficients(2, math.pi / 3, 1.0).c
    assert radius_expansion_check(model, c, 1.0, EPSILONS).lemma2_margins is None
    report = radius_expansion_check(model, c, 1.0, EPSILONS, power_epsilon=1e-4, s_max=500, trials=20, seed=5)
    assert set(report.lemma2_margins) == {1, 2}
    assert max(report.lemma2_margins.values()) <= 1.2


def test_report_rows():
    """One CSV row per epsilon sample."""
    model = build_system(1, math.pi / 2)
    report = radius_expansion_check(model, [-1.0, 0.0], 1.0, EPSILONS[:2])
    rows = report_rows(model, report)
    assert len(rows) == 2
    assert rows[0]["epsilon"] == 1e-3
    assert rows[1]["predicted_rho"] == pytest.approx(1.0 - 0.5 * 3e-4)
