import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cornerheat import sector_kernel as sk

ALPHAS = [math.pi / 6, math.pi / 3, math.pi / 2, 2.0, math.pi, 1.5 * math.pi, 1.9 * math.pi]


def _bl_mpmath(R):
    R = mpmath.mpf(R)
    return R * R / (2 * mpmath.pi) * mpmath.quad(lambda y: mpmath.exp(-R * R * y * y) * mpmath.sqrt(1 - y * y),
                                                  [0, min(3 / R, 1), 1])


@pytest.mark.parametrize("R", [0.5, 3.0, 7.0, 25.0, 29.9])
def test_boundary_layer_quadrature_matches_mpmath(R):
    assert sk.boundary_layer_integral(R) == pytest.approx(float(_bl_mpmath(R)), rel=1e-12)


def test_series_and_quadrature_agree_at_crossover():
    for R in (30.0, 40.0):
        assert sk.boundary_layer_series(R) == pytest.approx(sk.boundary_layer_quad(R), rel=1e-13)


@pytest.mark.parametrize("R", [5.0, 10.0, 20.0, 50.0])
def test_two_term_expansion_error_bound(R):
    two = R / (4 * math.sqrt(math.pi)) - 1 / (16 * math.sqrt(math.pi) * R)
    assert abs(sk.boundary_layer_integral(R) - two) <= 0.5 / R ** 3


@given(st.floats(0.05, 2 * math.pi - 0.05), st.floats(0.0, 60.0))
@settings(max_examples=60, deadline=None)
def test_reflection_identity(alpha, R):
    s = sk.D_dirichlet(R, alpha).value + sk.D_neumann(R, alpha).value
    assert abs(s - sk.cone_trace(R, 2 * alpha)) <= 1e-12 * max(1.0, abs(s))


@pytest.mark.parametrize("alpha", ALPHAS)
def test_corner_constant_arithmetic(alpha):
    c = mpmath.mpf(alpha)
    ref = (mpmath.pi ** 2 - c ** 2) / (24 * mpmath.pi * c)
    assert sk.corner_constant(alpha) == pytest.approx(float(ref), rel=1e-14)
    # twice the corner constant is the cone constant at angle 2 alpha
    cone = sk.cone_trace(0.0, 2 * alpha)
    assert cone == pytest.approx(2 * sk.corner_constant(alpha), rel=1e-13)


def test_half_plane_corner_vanishes():
    assert sk.corner_constant(math.pi) == 0.0
    assert sk.corner_constant(math.pi / 2) == pytest.approx(1 / 16)


@pytest.mark.parametrize("bc", ["dirichlet", "neumann"])
def test_asymptotic_orders_converge(bc):
    R, a = 12.0, 1.1
    exact = sk.sector_trace(R, a, bc).value
    errs = []
    for order in range(1, 5):
        val, est = sk.D_asymptotic(R, a, bc, order)
        errs.append(abs(val - exact))
        assert errs[-1] <= est
    assert errs[-1] < 1e-6


def test_asymptotic_refuses_small_R():
    with pytest.raises(ValueError):
        sk.D_asymptotic(2.0, 1.0)


def test_divergent_part_signs():
    d = sk.divergent_part(10.0, 1.0, "d")
    n = sk.divergent_part(10.0, 1.0, "n")
    assert n - d == pytest.approx(2 * 10.0 / (4 * math.sqrt(math.pi)))


def test_sector_table_rows():
    rows = sk.sector_table([1.0, 2.0], [5.0, 10.0])
    assert len(rows) == 4
    for R, a, dd, dn, cone in rows:
        assert dd + dn == pytest.approx(cone, abs=1e-12)


def test_bad_angle():
    with pytest.raises(ValueError):
        sk.D_dirichlet(1.0, 7.0)


def test_boundary_layer_at_ten():
    ref = float(_bl_mpmath(10.0))
    assert sk.boundary_layer_integral(10.0) == pytest.approx(ref, abs=1e-10)
    assert ref == pytest.approx(1.40693438, abs=1e-8)
    two = 10 / (4 * math.sqrt(math.pi)) - 1 / (160 * math.sqrt(math.pi))
    assert two == pytest.approx(1.406947, abs=1e-6)
    gap = sk.D_neumann(10.0, 1.0).value - sk.D_dirichlet(10.0, 1.0).value
    assert gap == pytest.approx(2 * ref, rel=1e-13)


def test_asymptotic_order_three_at_five():
    val, est = sk.D_asymptotic(5.0, 1.0, "d", 3)
    assert abs(val - sk.D_dirichlet(5.0, 1.0).value) < 5e-4
