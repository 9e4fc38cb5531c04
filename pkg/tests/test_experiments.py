import math

import numpy as np
import pytest

from cornerheat import experiments as ex
from cornerheat import geometry as geo
from cornerheat.renorm import RenormConfig


def test_straight_corner_delta_is_zero():
    d = ex.corner_delta(math.pi, 0.02)
    assert d.value == 0.0


def test_corner_delta_is_small_and_positive_for_convex_corner():
    # rounding a convex Dirichlet corner removes area, which lowers the trace by about
    # removed_area / (4 pi tau) at leading order
    cfg = RenormConfig(h=0.5, error_estimate=False)
    d = ex.corner_delta(math.pi / 2, 1.0, cfg)
    z = geo.ModelRegion(math.pi / 2)
    assert d.value < 0
    assert abs(d.value) < 2 * z.removed_area / (4 * math.pi) + 0.05


def test_polygon_anomaly_limit(square):
    res = ex.anomaly(square, eps_list=(0.0,))
    assert res[0].fit.a2 == pytest.approx(0.25, abs=1e-8)
    assert res[0].predicted == 0.25


def test_anomaly_needs_exact_trace():
    with pytest.raises(ValueError):
        ex.anomaly(geo.equilateral_triangle(), eps_list=(0.0,))


def test_anomaly_reuses_cache(square):
    cfg = RenormConfig(h=0.5, error_estimate=False)
    cache = {}
    taus = np.geomspace(0.5, 1.0, 4)
    ex.anomaly(square, eps_list=(0.2,), taus=taus, config=cfg, degree=1, cache=cache)
    assert len(cache) == 4
    r = ex.anomaly(square, eps_list=(0.1,), taus=taus, config=cfg, degree=1, cache=cache)
    assert len(cache) == 4
    assert r[0].predicted == pytest.approx(1 / 6)
