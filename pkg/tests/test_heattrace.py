import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from cornerheat import geometry as geo
from cornerheat import heattrace as ht
from cornerheat import oracle


def test_tail_bound_dominates_true_tail():
    full = oracle.rectangle_spectrum(1, 1, "d", 60000.0)
    cut = oracle.rectangle_spectrum(1, 1, "d", 3000.0)
    t = np.array([0.001, 0.002, 0.005])
    true_tail = np.array([np.exp(-full.eigenvalues[len(cut):] * ti).sum() for ti in t])
    bound = ht.tail_bound(3000.0, len(cut), 1.0, 4.0, t)
    assert np.all(bound >= true_tail)
    assert np.all(bound < 20 * true_tail)


def test_trace_matches_exact_rectangle(square):
    spec = oracle.rectangle_spectrum(1, 1, "d", 8000.0)
    t = np.geomspace(0.005, 0.1, 6)
    curve = ht.trace_from_spectrum(spec, t, square)
    assert not curve.flagged.any()
    assert_allclose(curve.values, oracle.rectangle_trace(1, 1, t), rtol=1e-12)
    assert all(curve.check_shape().values())


def test_trace_needs_geometry():
    spec = oracle.rectangle_spectrum(1, 1, "d", 100.0)
    with pytest.raises(ValueError):
        ht.trace_from_spectrum(spec, [0.1])


def test_flagged_points_warn(square):
    spec = oracle.rectangle_spectrum(1, 1, "d", 500.0)
    with pytest.warns(UserWarning):
        curve = ht.trace_from_spectrum(spec, [0.001, 0.1], square)
    assert curve.flagged[0] and not curve.flagged[1]


@pytest.mark.parametrize("d,a2", [
    (geo.unit_square(), 0.25),
    (geo.SectorDomain(math.pi / 2, 1.0), 11 / 48),
    (geo.FilletedPolygon(geo.unit_square(), 0.2), 1 / 6),
    (geo.equilateral_triangle(), 3 * (math.pi ** 2 - (math.pi / 3) ** 2) / (24 * math.pi * math.pi / 3)),
])
def test_predicted_a2(d, a2):
    assert ht.predicted_coefficients(d).a2 == pytest.approx(a2, rel=1e-12)


def test_neumann_flips_a1(square):
    d = ht.predicted_coefficients(square, "d")
    n = ht.predicted_coefficients(square, "n")
    assert n.a1 == -d.a1 == pytest.approx(1 / (2 * math.sqrt(math.pi)))
    assert n.a2 == d.a2


@pytest.mark.parametrize("bc", ["dirichlet", "neumann"])
def test_fit_recovers_exact_coefficients(bc):
    # synthetic a0/t + a1/sqrt t + a2 + b sqrt t + c t
    t = np.geomspace(1e-3, 1e-2, 12)
    v = 0.3 / t - 0.2 / np.sqrt(t) + 0.125 + 0.7 * np.sqrt(t) - 2.0 * t
    curve = ht.TraceCurve(t, v, np.zeros_like(t), bc)
    fit = ht.fit_a2(curve, a0=0.3, a1=-0.2)
    assert fit.a2 == pytest.approx(0.125, abs=1e-12)
    free = ht.fit_a2(curve, pinned=False)
    assert_allclose([free.a0, free.a1, free.a2], [0.3, -0.2, 0.125], rtol=1e-7)


def test_fit_window_and_errors():
    t = np.geomspace(1e-3, 1e-1, 20)
    curve = ht.TraceCurve(t, 1 / t, np.zeros_like(t), "d")
    fit = ht.fit_a2(curve, a0=1.0, a1=0.0, window=(1e-3, 1e-2))
    assert fit.n_points == 10 and fit.window[1] <= 1e-2 * (1 + 1e-12)
    with pytest.raises(ValueError):
        ht.fit_a2(curve)
    with pytest.raises(ValueError):
        ht.fit_a2(curve, a0=1.0, a1=0.0, window=(1e-3, 1.1e-3))


def test_curve_round_trip(tmp_path, square):
    spec = oracle.rectangle_spectrum(1, 1, "n", 3000.0)
    curve = ht.trace_from_spectrum(spec, [0.01, 0.02, 0.05], square)
    curve.save(tmp_path / "c.csv")
    back = ht.TraceCurve.load(tmp_path / "c.csv")
    np.testing.assert_array_equal(back.values, curve.values)
    np.testing.assert_array_equal(back.t, curve.t)
    assert back.bc == "neumann"


@given(st.floats(1e-6, 10.0), st.floats(1e-4, 1.0))
@settings(max_examples=50, deadline=None)
def test_blowup_coordinates_invert(t, eps):
    b = ht.to_blowup(t, eps)
    assert b.face == "interior"
    assert b.tau * b.eta ** 2 == pytest.approx(1.0, rel=1e-12)
    back = ht.from_eta(t, b.eta)
    assert back.eps == pytest.approx(eps, rel=1e-12)


def test_blowup_faces():
    assert ht.to_blowup(0.1, 0.0).face == "R"
    assert ht.to_blowup(0.0, 0.1).face == "L"
    assert ht.front_face_point(2.0).face == "F"
    assert ht.front_face_point(0.0).face == "L∩F"
    assert ht.front_face_point(math.inf).face == "F∩R"
    with pytest.raises(ValueError):
        ht.to_blowup(0.0, 0.0)
    for f in (ht.to_blowup(1, 1), ht.front_face_point(1)):
        assert f.face in ht.FACES


def test_residual_slopes():
    t = np.array([0.02, 0.01, 0.005])
    total = np.full(3, 10.0)
    power = ht.trace_split_residual(total, total - 1e-3 * t ** 2, np.zeros(3), t)
    assert_allclose(power.slopes, 2.0, rtol=1e-6)
    gauss = ht.trace_split_residual(total, total - np.exp(-0.05 / t), np.zeros(3), t)
    assert gauss.superpolynomial
    assert gauss.fitted_slope > 3


def test_residual_shape_mismatch():
    with pytest.raises(ValueError):
        ht.trace_split_residual([1.0], [1.0, 2.0], [0.0], [0.1])
