"""End-to-end numerical experiments built on the localized corner computations.

The anomaly experiment uses that rounding a corner changes the heat trace
only near that corner: for a polygon with an exactly known trace,

    Tr H^{Omega_eps}(t) = Tr H^{Omega_0}(t) + sum_j Delta(alpha_j, t / eps^2)

up to exponentially small terms, where Delta(alpha, tau) is the trace
difference between the model region and the sector at time tau.  Delta is
computed by FEM on matching truncated meshes in scaled coordinates, which
reaches times t ~ 1e-4 that a direct FEM trace could not.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import composite
from . import fem
from . import geometry as geo
from .fem import DIRICHLET, normalize_bc
from .heattrace import (CoefficientFit, ResidualCurve, TraceCurve, fit_a2, predicted_coefficients,
                        trace_split_residual)
from .renorm import RenormConfig, polygon_trace_exact


# ---------------------------------------------------------------------------
# corner trace difference

@dataclass(frozen=True)
class CornerDelta:
    alpha: float
    tau: float
    bc: str
    value: float
    coarse_value: Optional[float]
    vertices: int
    eigenvalues: int


def _trace(m, bc, lam_max, t, tol, block):
    spec, _ = fem.solve_mesh(m, bc, lam_max, tol=tol, block=block)
    lam = np.sort(spec.eigenvalues)[::-1]
    return math.fsum(np.exp(-lam * t)), len(spec)


def _delta_once(alpha, tau, cfg, h):
    s = math.sqrt(tau)
    rho = cfg.core_radius / s
    radii = [rho, rho + cfg.margin + 2.0]
    pair = composite.model_pair(alpha, cfg.tangency / s, radii, h, h / cfg.near_factor)
    tz, nz = _trace(pair.model, cfg.bc, cfg.lam_tau, 1.0, cfg.eig_tol, cfg.block)
    ts, _ = _trace(pair.sector, cfg.bc, cfg.lam_tau, 1.0, cfg.eig_tol, cfg.block)
    return tz - ts, pair.model.n_vertices, nz


def corner_delta(alpha: float, tau: float, config: Optional[RenormConfig] = None) -> CornerDelta:
    """Delta(alpha, tau) = Tr(Z_R) - Tr(S_R) at time tau in model units.

    Both traces come from meshes sharing every piece outside the core, with
    the artificial boundary at core radius + margin + 2 (scaled units).
    With ``error_estimate`` the value is extrapolated in h from the
    configured mesh and one ``coarse_factor`` times coarser.
    """
    cfg = config or RenormConfig()
    if abs(alpha - math.pi) < 1e-12:
        return CornerDelta(alpha, tau, cfg.bc, 0.0, 0.0, 0, 0)
    val, nv, ne = _delta_once(alpha, tau, cfg, cfg.h)
    coarse = None
    if cfg.error_estimate:
        # the core meshes differ, so their O(h^2) errors do not cancel;
        # extrapolate in h using the coarse mesh
        coarse = _delta_once(alpha, tau, cfg, cfg.h * cfg.coarse_factor)[0]
        val = val + (val - coarse) / (cfg.coarse_factor ** 2 - 1)
    return CornerDelta(alpha, tau, cfg.bc, val, coarse, nv, ne)


# ---------------------------------------------------------------------------
# anomaly

@dataclass
class AnomalyResult:
    eps: float
    fit: CoefficientFit
    predicted: float        # a2 of the domain at this eps (chi/6 for eps > 0)
    polygon_value: float    # corner-sum a2 of the polygon
    curve: TraceCurve
    deltas: list = field(default_factory=list)

    def row(self) -> tuple:
        return (self.eps, self.fit.a2, self.predicted, self.polygon_value)


DEFAULT_ANOMALY_TAUS = tuple(np.geomspace(0.01, 0.05, 9))


def anomaly(poly: geo.PolygonDomain, eps_list: Sequence[float] = (0.2, 0.1),
            taus: Sequence[float] = DEFAULT_ANOMALY_TAUS, config: Optional[RenormConfig] = None,
            degree: int = 2, cache: Optional[dict] = None) -> list:
    """Fitted a2 of the rounded polygon for each eps (eps = 0 gives the polygon).

    The trace is evaluated at t = tau eps^2 over the tau window, where the
    fillets are large compared with sqrt(t); a0 and a1 are pinned from the
    geometry of Omega_eps.
    """
    cfg = config or RenormConfig()
    bc = cfg.bc
    taus = np.asarray(taus, float)
    if polygon_trace_exact(poly, 1.0, bc) is None:
        raise ValueError("the anomaly experiment needs a polygon with an exact trace (rectangle)")
    cache = {} if cache is None else cache
    angles = geo.corner_angles(poly)
    poly_a2 = predicted_coefficients(poly, bc).a2
    out = []
    for e in eps_list:
        if e == 0:
            # the polygon itself, on the same relative window as the smallest positive eps
            ref = min([x for x in eps_list if x > 0] or [0.1])
            t = taus * ref ** 2
            vals = polygon_trace_exact(poly, t, bc)
            curve = TraceCurve(t, vals, np.zeros_like(t), bc, {"source": "exact"})
            fit = fit_a2(curve, poly, bc, degree=degree)
            out.append(AnomalyResult(0.0, fit, poly_a2, poly_a2, curve))
            continue
        t = taus * e ** 2
        deltas = []
        total = np.zeros_like(t)
        for i, tau in enumerate(taus):
            for a in angles:
                key = (round(float(a), 12), float(tau), bc)
                if key not in cache:
                    cache[key] = corner_delta(float(a), float(tau), cfg)
                d = cache[key]
                total[i] += d.value
                deltas.append(d)
        vals = polygon_trace_exact(poly, t, bc) + total
        fp = geo.FilletedPolygon(poly, e, cfg.tangency)
        curve = TraceCurve(t, vals, np.zeros_like(t), bc, {"source": "localized corner differences"})
        fit = fit_a2(curve, fp, bc, degree=degree)
        out.append(AnomalyResult(float(e), fit, predicted_coefficients(fp, bc).a2, poly_a2, curve, deltas))
    return out


# ---------------------------------------------------------------------------
# trace split

@dataclass
class TraceSplitResult:
    eps: float
    rho: float
    t: np.ndarray
    total: np.ndarray
    model: np.ndarray
    far: np.ndarray
    residual: ResidualCurve
    meta: dict = field(default_factory=dict)


def trace_split(poly: geo.PolygonDomain, eps: float, t_grid: Sequence[float] = (0.02, 0.01, 0.005),
                rho: Optional[float] = None, h: float = 0.03, bc: str = DIRICHLET,
                lam_t: float = 30.0, fillet_scale: float = 0.25, tol: float = 1e-9,
                block: int = 120) -> TraceSplitResult:
    """Split Tr H^{Omega_eps} into corner terms I and the far term II.

    I_j is the trace of eps Z_j integrated over the corner ball of radius
    ``rho`` (eps Z_j truncated where the polygon's other edges are made
    artificial); II is the Omega_0 trace integrated over Omega', the polygon
    minus the corner balls.  All meshes share the Omega' piece and the
    corner cores.
    """
    bc = normalize_bc(bc)
    t = np.sort(np.asarray(t_grid, float))
    edges = np.hypot(*(np.roll(poly.vertices, -1, axis=0) - poly.vertices).T)
    rho = 0.45 * edges.min() if rho is None else rho
    cd = composite.corner_decomposition(poly, eps, rho, h, fillet_scale=fillet_scale)
    lam_max = lam_t / t.min()

    def weighted(m, region):
        spec, sysm = fem.solve_mesh(m, bc, lam_max, tol=tol, return_vectors=True, block=block)
        w = fem.mass_weights(sysm, spec.vectors, fem.restricted_mass_mask(m, m.regions == region))
        lam = spec.eigenvalues
        o = np.argsort(lam)[::-1]
        return np.array([math.fsum(np.exp(-lam[o] * ti) * w[o]) for ti in t]), len(spec)

    spec, _ = fem.solve_mesh(cd.rounded(), bc, lam_max, tol=tol, block=block)
    lam = np.sort(spec.eigenvalues)[::-1]
    total = np.array([math.fsum(np.exp(-lam * ti)) for ti in t])
    far, _ = weighted(cd.sharp(), 0)
    model = np.zeros_like(t)
    for j in range(len(poly.vertices)):
        mj, _ = weighted(cd.corner_model(j), j + 1)
        model += mj
    res = trace_split_residual(total, model, far, t)
    return TraceSplitResult(eps, rho, t, total, model, far, res,
                            {"h": h, "lambda_max": lam_max, "vertices": cd.rounded().n_vertices,
                             "eigenvalues": len(spec), "h_near": cd.h_near})
