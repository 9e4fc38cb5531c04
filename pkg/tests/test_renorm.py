import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cornerheat import fem, mesh, oracle
from cornerheat import geometry as geo
from cornerheat import renorm as rn


def test_config_validation():
    with pytest.raises(ValueError):
        rn.RenormConfig(margin=5.0)
    with pytest.raises(ValueError):
        rn.RenormConfig(lam_tau=20.0)
    with pytest.raises(ValueError):
        rn.RenormConfig(renormalization="zeta")
    with pytest.raises(ValueError):
        rn.RenormConfig(core_radius=0.2)
    cfg = rn.RenormConfig(bc="N")
    assert cfg.bc == "neumann"
    assert cfg.to_dict()["window"] == [4.0, 5.0, 6.0]


def test_radii_layout():
    cfg = rn.RenormConfig()
    r = cfg.radii(0.25)
    assert r["core"] == pytest.approx(0.6)
    assert r["window"] == [8.0, 9.0, 10.0]
    assert r["truncation"] == pytest.approx(16.0)
    assert r["all"] == sorted(r["all"])
    assert min(r["window"]) >= 2.0


def test_front_face_coefficients(square):
    c0, c1 = rn.c0_c1(square, 2.0)
    assert c0 == pytest.approx(1 / (8 * math.pi))
    assert c1 == pytest.approx(-4 / (8 * math.sqrt(2 * math.pi)))
    assert rn.c0_c1(square, 2.0, "n")[1] == -c1


def test_c2_limits():
    assert_allclose(rn.c2_limits(geo.unit_square()), (1 / 6, 0.25), rtol=1e-14)
    lo, hi = rn.c2_limits(geo.equilateral_triangle())
    a = math.pi / 3
    assert lo == pytest.approx(1 / 6)
    assert hi == pytest.approx(1 / 6 + 3 * ((math.pi ** 2 - a * a) / (24 * math.pi * a) - (math.pi - a) / (12 * math.pi)))
    assert hi == pytest.approx(1 / 3)


def test_geometric_correction_scaling():
    # the correction is (removed area)/(4 pi tau) + (length change)/(8 sqrt(pi tau)) in model units
    c1 = rn.geometric_correction(math.pi / 2, 1.0, "d")
    c4 = rn.geometric_correction(math.pi / 2, 4.0, "d")
    z = geo.ModelRegion(math.pi / 2)
    assert c1 == pytest.approx(z.removed_area / (4 * math.pi) + z.length_change / (8 * math.sqrt(math.pi)))
    assert c4 == pytest.approx(z.removed_area / (16 * math.pi) + z.length_change / (16 * math.sqrt(math.pi)))


def test_polygon_trace_exact():
    t = np.array([0.01, 0.1])
    assert_allclose(rn.polygon_trace_exact(geo.rectangle(1, 2), t, "d"), oracle.rectangle_trace(1, 2, t))
    assert rn.polygon_trace_exact(geo.equilateral_triangle(), t, "d") is None


def test_model_trace_integral_insulation():
    m = mesh.mesh_loops([mesh.sector_loop(math.pi / 2, 8.0)], mesh.feature_size_field(0.5, 1.0, None), 0.5)
    spec, sysm = fem.solve_mesh(m, "d", 30.0, return_vectors=True)
    ok = rn.model_trace_integral(spec, sysm, 2.0, truncation=8.0)
    assert ok.value > 0 and ok.tail >= 0
    with pytest.raises(rn.InsulationError):
        rn.model_trace_integral(spec, sysm, 3.0, truncation=8.0)
    spec.vectors = None
    with pytest.raises(ValueError):
        rn.model_trace_integral(spec, sysm, 2.0)


def test_straight_angle_has_no_finite_part():
    r = rn.finite_part(math.pi, 1.0)
    assert r.value == 0.0 and r.status == "ok"


def test_finite_part_coarse():
    cfg = rn.RenormConfig(h=0.5, error_estimate=False)
    r = rn.finite_part(math.pi / 2, 5.0, cfg)
    assert r.status == "ok"
    assert r.fit_residual < 1e-10
    assert r.c_area / (math.pi / 2 / (8 * math.pi * 5)) == pytest.approx(1.0, abs=0.02)
    assert r.c_bdry * 4 * math.sqrt(5 * math.pi) == pytest.approx(1.0, abs=0.05)
    # between the two limits of (pi - alpha)/(12 pi) and the corner constant
    assert 1 / 24 - 0.005 < r.value < 1 / 16 + 0.005
    assert r.geometric_value - r.raw_value == pytest.approx(rn.geometric_correction(math.pi / 2, 5.0, "d"))


def test_finite_part_angle_range():
    with pytest.raises(ValueError):
        rn.finite_part(0.01, 1.0)
    with pytest.raises(ValueError):
        rn.finite_part(1.0, -1.0)


def test_budget_error():
    cfg = rn.RenormConfig(max_vertices=100, error_estimate=False)
    with pytest.raises(rn.BudgetError):
        rn.finite_part(math.pi / 2, 1.0, cfg)


def test_c2_curve_save_round_trip(tmp_path, square):
    cfg = rn.RenormConfig(taus=(10.0,), h=0.5, error_estimate=False)
    curve = rn.c2_curve(square, config=cfg)
    assert curve.values.shape == (1,)
    assert abs(curve.values[0] - 0.25) < 0.05
    path, side = curve.save(tmp_path / "c2.csv")
    assert path.read_text().splitlines()[0] == "tau,C2,err_budget,limit0,limit_inf"
    assert side.exists()
