import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from cornerheat import geometry as geo
from cornerheat import oracle


@pytest.mark.parametrize("nu", [0.0, 0.5, 2.0, 4.0 / 3.0, 7.25])
@pytest.mark.parametrize("n", [1, 2, 7])
def test_bessel_j_zero_matches_mpmath(nu, n):
    assert oracle.bessel_zero(nu, n, "J") == pytest.approx(float(mpmath.besseljzero(nu, n)), rel=1e-13)


@pytest.mark.parametrize("nu", [0.0, 1.0, 2.0 / 3.0, 5.5])
@pytest.mark.parametrize("n", [1, 3])
def test_bessel_jp_zero_matches_mpmath(nu, n):
    # mpmath counts x = 0 as the first zero of J'_0
    m = n + 1 if nu == 0 else n
    ref = float(mpmath.besseljzero(nu, m, derivative=1))
    assert oracle.bessel_zero(nu, n, "Jp") == pytest.approx(ref, rel=1e-13)


@given(st.floats(0.0, 20.0))
@settings(max_examples=25, deadline=None)
def test_zero_tables_interlace_and_change_sign(nu):
    a = oracle.BesselZeroTable.build(nu, "J", 80.0)
    b = oracle.BesselZeroTable.build(nu + 1, "J", 80.0)
    assert a.check_sign_changes()
    assert oracle.interlaces(a.zeros, b.zeros)


def test_mcmahon_is_close_for_large_n():
    assert oracle.mcmahon(1.5, 40) == pytest.approx(oracle.bessel_zero(1.5, 40), abs=1e-8)


def test_rectangle_spectrum_brute_force():
    spec = oracle.rectangle_spectrum(1.0, 2.0, "d", 300.0)
    brute = sorted(math.pi ** 2 * (m * m + n * n / 4.0) for m in range(1, 20) for n in range(1, 40)
                   if math.pi ** 2 * (m * m + n * n / 4.0) <= 300.0)
    assert_allclose(spec.eigenvalues, brute, rtol=1e-15)
    neu = oracle.rectangle_spectrum(1.0, 2.0, "n", 300.0)
    assert neu.eigenvalues[0] == 0.0


def test_sector_spectrum_counts_follow_weyl():
    lam = 4000.0
    for bc in ("dirichlet", "neumann"):
        spec = oracle.sector_spectrum(math.pi / 2, 1.0, bc, lam)
        _, two_term = oracle.weyl_count(geo.SectorDomain(math.pi / 2, 1.0), lam, bc)
        assert abs(len(spec) - two_term) < 0.03 * two_term


def test_half_disk_is_sector_pi():
    spec = oracle.sector_spectrum(math.pi, 1.0, "d", 200.0)
    ref = sorted(float(mpmath.besseljzero(k, n)) ** 2 for k in range(1, 15) for n in range(1, 6)
                 if float(mpmath.besseljzero(k, n)) ** 2 <= 200.0)
    assert_allclose(spec.eigenvalues, ref, rtol=1e-12)


@given(st.floats(1e-4, 5.0), st.sampled_from(["dirichlet", "neumann"]))
@settings(max_examples=40, deadline=None)
def test_interval_trace_matches_direct_sum(t, bc):
    start = 1 if bc == "dirichlet" else 0
    direct = mpmath.nsum(lambda m: mpmath.exp(-mpmath.pi ** 2 * m * m * t), [start, mpmath.inf])
    assert oracle.interval_trace(1.0, t, bc) == pytest.approx(float(direct), rel=1e-13)


def test_rectangle_trace_matches_spectrum_sum():
    spec = oracle.rectangle_spectrum(1.0, 1.0, "d", 20000.0)
    t = 0.01
    assert oracle.rectangle_trace(1.0, 1.0, t) == pytest.approx(math.fsum(np.exp(-spec.eigenvalues * t)), rel=1e-12)


def test_square_count_below_1000():
    spec = oracle.rectangle_spectrum(1, 1, "d", 1000.0)
    brute = sum(1 for m in range(1, 12) for n in range(1, 12) if math.pi ** 2 * (m * m + n * n) <= 1000)
    assert len(spec) == brute == 71
    assert oracle.weyl_count(geo.unit_square(), 1000.0)[0] == pytest.approx(79.577, abs=1e-3)
