import numpy as np
import pytest

from cloakbench.quadrature import collapsed_gauss, gauss_legendre, subdivided_rule, triangle_rule


def _monomial_exact(a, b):
    # int over the unit triangle of x^a y^b
    from math import factorial
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", [1, 2, 4, 5, 8, 10, 12])
def test_triangle_rule_exact(degree):
    lam, w = triangle_rule(degree)
    assert np.isclose(w.sum(), 1.0)
    assert np.allclose(lam.sum(axis=1), 1.0)
    x, y = lam[:, 1], lam[:, 2]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = 0.5 * np.sum(w * x ** a * y ** b)
            assert abs(approx - _monomial_exact(a, b)) < 1e-13


def test_collapsed_gauss_weights_positive():
    lam, w = collapsed_gauss(5)
    assert np.all(w > 0) and np.all(lam >= 0)


def test_subdivided_rule_integrates_quadratics():
    lam, w = subdivided_rule(2, 2)
    x, y = lam[:, 1], lam[:, 2]
    assert abs(0.5 * np.sum(w * x * y) - _monomial_exact(1, 1)) < 1e-14


def test_gauss_legendre_interval():
    x, w = gauss_legendre(4, 0.0, 2.0)
    assert abs(np.sum(w * x ** 7) - 2 ** 8 / 8) < 1e-10
