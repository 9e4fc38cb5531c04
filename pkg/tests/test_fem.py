import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cornerheat import fem, mesh, oracle
from cornerheat import geometry as geo


@pytest.fixture(scope="module")
def square_mesh():
    return mesh.triangulate(geo.unit_square(), 0.05)


def test_bc_names():
    assert fem.normalize_bc("D") == fem.DIRICHLET
    assert fem.normalize_bc("neumann") == fem.NEUMANN
    with pytest.raises(ValueError):
        fem.normalize_bc("robin")


def test_dirichlet_square_upper_bounds(square_mesh):
    spec, _ = fem.solve_mesh(square_mesh, "d", 400.0)
    exact = oracle.rectangle_spectrum(1, 1, "d", 400.0).eigenvalues
    # conforming Galerkin eigenvalues sit above the exact ones, close for low modes
    assert len(spec) <= len(exact)
    n = len(spec)
    assert np.all(spec.eigenvalues >= exact[:n] * (1 - 1e-12))
    assert_allclose(spec.eigenvalues[:5], exact[:5], rtol=0.02)


def test_neumann_has_zero_mode(square_mesh):
    spec, _ = fem.solve_mesh(square_mesh, "n", 100.0)
    assert abs(spec.eigenvalues[0]) < 1e-8
    assert spec.eigenvalues[1] == pytest.approx(math.pi ** 2, rel=0.01)


def test_h_convergence_is_second_order():
    exact = 2 * math.pi ** 2
    errs = []
    for h in (0.1, 0.05):
        spec, _ = fem.solve_mesh(mesh.triangulate(geo.unit_square(), h), "d", 30.0)
        errs.append(spec.eigenvalues[0] - exact)
    assert 3.0 < errs[0] / errs[1] < 5.5


def test_windowed_solver_matches_dense():
    m = mesh.triangulate(geo.l_shape(), 0.06)
    sysm = fem.assemble(m, "d")
    ref = fem.solve_partial_spectrum(sysm.stiffness, sysm.mass, 600.0, dense_limit=10 ** 6)
    rep = fem.SolveReport()
    got = fem.solve_partial_spectrum(sysm.stiffness, sysm.mass, 600.0, dense_limit=0, block=20,
                                     report=rep, return_vectors=True)
    assert rep.windows > 1 and rep.certified
    assert_allclose(got.eigenvalues, ref.eigenvalues, rtol=1e-9)
    gram = got.vectors.T @ (sysm.mass @ got.vectors)
    assert np.max(np.abs(gram - np.eye(len(got)))) < 1e-9


def test_inertia_count(square_mesh):
    sysm = fem.assemble(square_mesh, "d")
    spec = fem.solve_partial_spectrum(sysm.stiffness, sysm.mass, 300.0)
    assert fem.count_below(sysm.stiffness, sysm.mass, 300.0) == len(spec)


def test_mass_weights_partition_unity(square_mesh):
    spec, sysm = fem.solve_mesh(square_mesh, "d", 200.0, return_vectors=True)
    left = square_mesh.centroids()[:, 0] < 0.5
    w1 = fem.mass_weights(sysm, spec.vectors, fem.restricted_mass_mask(square_mesh, left))
    w2 = fem.mass_weights(sysm, spec.vectors, fem.restricted_mass_mask(square_mesh, ~left))
    assert_allclose(w1 + w2, 1.0, atol=1e-10)


def test_spectrum_round_trip(tmp_path):
    spec = oracle.rectangle_spectrum(1, 2, "n", 100.0)
    spec.save(tmp_path / "s.csv")
    back = fem.Spectrum.load(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.eigenvalues, spec.eigenvalues)
    assert back.bc == spec.bc and back.lambda_max == spec.lambda_max


def test_spectrum_must_be_sorted():
    with pytest.raises(ValueError):
        fem.Spectrum("d", [2.0, 1.0], "fem", 3.0)


def test_scaled_spectrum():
    spec = oracle.rectangle_spectrum(1, 1, "d", 100.0).scaled(2.0)
    assert_allclose(spec.eigenvalues, oracle.rectangle_spectrum(2, 2, "d", 25.0).eigenvalues)
