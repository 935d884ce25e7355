"""Exactness and symmetry checks for the 1D quadrature rules."""

import numpy as np
import pytest

from imexdg.errors import InvalidArgumentError
from imexdg.quadrature import gauss_legendre, gauss_lobatto, tensor_points, tensor_weights


def monomial_error(rule, k):
    exact = 0.0 if k % 2 else 2.0 / (k + 1)
    approx = rule.integrate(rule.points**k)
    if exact == 0.0:
        return abs(approx)
    return abs(approx - exact) / abs(exact)


class TestGaussLegendre:
    def test_one_point_is_midpoint(self):
        rule = gauss_legendre(1)
        assert rule.points == pytest.approx([0.0])
        assert rule.weights == pytest.approx([2.0])

    def test_two_point_rule(self):
        rule = gauss_legendre(2)
        assert rule.points == pytest.approx([-1 / np.sqrt(3), 1 / np.sqrt(3)], abs=1e-15)
        assert rule.weights == pytest.approx([1.0, 1.0], abs=1e-15)
        # cross-check exactness on x^0..x^3
        for k in range(4):
            assert monomial_error(rule, k) < 1e-14

    def test_three_point_integrates_quartic(self):
        rule = gauss_legendre(3)
        assert abs(rule.integrate(rule.points**4) - 2.0 / 5.0) < 1e-13

    @pytest.mark.parametrize("n", range(1, 9))
    def test_exact_up_to_2n_minus_1(self, n):
        rule = gauss_legendre(n)
        for k in range(2 * n):
            assert monomial_error(rule, k) < 1e-12

    def test_invalid_argument(self):
        with pytest.raises(InvalidArgumentError):
            gauss_legendre(0)


class TestGaussLobatto:
    def test_two_point_is_trapezoid(self):
        rule = gauss_lobatto(2)
        assert rule.points == pytest.approx([-1.0, 1.0])
        assert rule.weights == pytest.approx([1.0, 1.0])

    def test_three_point_simpson(self):
        rule = gauss_lobatto(3)
        assert rule.points == pytest.approx([-1.0, 0.0, 1.0], abs=1e-15)
        assert rule.weights == pytest.approx([1 / 3, 4 / 3, 1 / 3], abs=1e-14)
        for k in range(4):
            assert monomial_error(rule, k) < 1e-13

    def test_four_point_integrates_quartic(self):
        rule = gauss_lobatto(4)
        assert abs(rule.integrate(rule.points**4) - 2.0 / 5.0) < 1e-13

    @pytest.mark.parametrize("n", range(2, 9))
    def test_exact_up_to_2n_minus_3(self, n):
        rule = gauss_lobatto(n)
        for k in range(max(0, 2 * n - 2)):
            assert monomial_error(rule, k) < 1e-12

    def test_endpoints_included(self):
        for n in range(2, 9):
            rule = gauss_lobatto(n)
            assert rule.points[0] == -1.0
            assert rule.points[-1] == 1.0

    def test_invalid_argument(self):
        with pytest.raises(InvalidArgumentError):
            gauss_lobatto(1)


@pytest.mark.parametrize("builder,n", [(gauss_legendre, 5), (gauss_lobatto, 5)])
def test_rule_invariants(builder, n):
    rule = builder(n)
    assert abs(rule.weights.sum() - 2.0) < 1e-13
    assert np.all(np.diff(rule.points) > 0)
    assert np.max(np.abs(rule.points + rule.points[::-1])) < 1e-13


def test_tensor_points_ordering():
    rule = gauss_legendre(2)
    pts = tensor_points(rule, 2)
    # first direction fastest: x cycles within each y block
    assert pts[0] == pytest.approx([rule.points[0], rule.points[0]])
    assert pts[1] == pytest.approx([rule.points[1], rule.points[0]])
    assert pts[2] == pytest.approx([rule.points[0], rule.points[1]])
    w = tensor_weights(rule, 2)
    assert abs(w.sum() - 4.0) < 1e-13
    assert w[1] == pytest.approx(rule.weights[1] * rule.weights[0])


def test_tensor_points_3d_total_measure():
    rule = gauss_legendre(3)
    w = tensor_weights(rule, 3)
    assert abs(w.sum() - 8.0) < 1e-12
    pts = tensor_points(rule, 3)
    # integrate x^2 y^4 z^0 over the cube
    vals = pts[:, 0] ** 2 * pts[:, 1] ** 4
    assert abs(np.dot(w, vals) - (2 / 3) * (2 / 5) * 2) < 1e-12
