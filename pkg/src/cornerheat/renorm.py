"""Finite-part trace of the model region and the front-face coefficient C2(tau).

Computations run in scaled coordinates x = w / sqrt(tau), where the model
region has its fillet at scale 1/sqrt(tau) and the time is 1; every radius
below is converted accordingly.  The model region and the sector are meshed
from the same annular pieces, so the sector's closed-form trace serves as a
control variate: I_Z = (I_Z^h - I_S^h) + D_exact, and discretization errors
away from the fillet cancel.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import composite
from . import fem
from . import geometry as geo
from . import oracle
from .fem import DIRICHLET, NEUMANN, normalize_bc
from .heattrace import tail_bound, to_blowup, from_eta
from .io import write_csv, write_json
from .sector_kernel import boundary_layer_integral, corner_constant, divergent_part, sector_trace

DEFAULT_TAUS = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0)
SQRT_PI = math.sqrt(math.pi)


class InsulationError(ValueError):
    """Integration radius too close to the artificial boundary."""


class BudgetError(RuntimeError):
    """A mesh would exceed the allowed number of vertices."""


@dataclass(frozen=True)
class RenormConfig:
    """Parameters of the finite-part computation.

    Lengths ``window``, ``offset``, ``margin``, ``core_radius`` follow the
    model-region conventions: the integration radii are
    R'_k = k sqrt(tau) + offset, the truncation radius is
    max R' + margin sqrt(tau), and lam_tau = lambda_max * tau.  ``h`` is the
    bulk mesh size in scaled coordinates (units of sqrt(tau)).
    """

    taus: tuple = DEFAULT_TAUS
    bc: str = DIRICHLET
    h: float = 0.25
    near_factor: float = 4.0
    lam_tau: float = 30.0
    window: tuple = (4.0, 5.0, 6.0)
    offset: float = 2.0
    margin: float = 6.0
    core_radius: float = 0.3
    n_inner: int = 4
    tangency: float = 0.25
    renormalization: str = "geometric"
    fit_tol: float = 1e-6
    error_estimate: bool = True
    coarse_factor: float = 1.5
    eig_tol: float = 1e-9
    block: int = 120
    max_vertices: int = 200_000

    def __post_init__(self):
        object.__setattr__(self, "bc", normalize_bc(self.bc))
        object.__setattr__(self, "taus", tuple(float(x) for x in self.taus))
        object.__setattr__(self, "window", tuple(float(x) for x in self.window))
        self.validate()

    def validate(self) -> None:
        if not self.taus or min(self.taus) <= 0:
            raise ValueError("tau grid must be positive")
        if len(self.window) < 2 or any(b <= a for a, b in zip(self.window, self.window[1:])):
            raise ValueError("integration window must have at least two increasing entries")
        if self.offset + self.window[0] * math.sqrt(min(self.taus)) < 2.0:
            raise ValueError("smallest integration radius must be at least 2")
        if self.margin < 6.0:
            raise ValueError("insulation margin must be at least 6 sqrt(tau)")
        if self.lam_tau < 30.0:
            raise ValueError("lambda_max * tau must be at least 30")
        if self.offset <= self.core_radius:
            raise ValueError("integration window must lie outside the core")
        if not (0 < 1.1 * self.tangency <= self.core_radius):
            raise ValueError("core radius must exceed the tangency distance by 10%")
        if self.h <= 0 or self.near_factor < 1:
            raise ValueError("need h > 0 and near_factor >= 1")
        if self.renormalization not in ("geometric", "sector"):
            raise ValueError("renormalization must be 'geometric' or 'sector'")

    def radii(self, tau: float) -> dict:
        """Piece radii in scaled coordinates for one tau."""
        s = math.sqrt(tau)
        rho = self.core_radius / s
        win = [k + self.offset / s for k in self.window]
        inner = np.linspace(rho, win[0], self.n_inner + 2)[1:-1]
        inner = [float(r) for r in inner if r >= 2.0 and win[0] - r > 0.25]
        R = win[-1] + self.margin
        return {"core": rho, "inner": inner, "window": win, "truncation": R,
                "all": [rho] + inner + win + [R]}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["taus"] = list(self.taus)
        d["window"] = list(self.window)
        return d


# ---------------------------------------------------------------------------
# model trace integral

@dataclass(frozen=True)
class ModelIntegral:
    radius: float
    tau: float
    value: float
    tail: float


def model_trace_integral(spec: fem.Spectrum, sysm: fem.FEMSystem, radius: float, tau: float = 1.0,
                         mask: Optional[np.ndarray] = None, truncation: Optional[float] = None,
                         margin: float = 6.0) -> ModelIntegral:
    """sum_i exp(-lam_i tau) phi_i^T M_R' phi_i on a truncated model mesh.

    ``mask`` selects the triangles in |w| <= radius (default: centroid
    test).  Refuses radii closer than ``margin * sqrt(tau)`` to the
    truncation radius (default: the mesh extent).
    """
    if spec.vectors is None:
        raise ValueError("model trace integral needs eigenvectors")
    m = sysm.mesh
    R = float(np.max(np.hypot(*m.points.T))) if truncation is None else truncation
    if R - radius < margin * math.sqrt(tau) * (1 - 1e-12):
        raise InsulationError(f"radius {radius:g} violates the insulation margin "
                              f"{margin:g} sqrt(tau) below the truncation radius {R:g}")
    mr = fem.restricted_mass(m, radius) if mask is None else fem.restricted_mass_mask(m, mask)
    w = fem.mass_weights(sysm, spec.vectors, mr)
    lam = spec.eigenvalues
    order = np.argsort(lam)[::-1]
    val = math.fsum(np.exp(-lam[order] * tau) * w[order])
    # mass weights are at most 1, so the tail of the full trace bounds it
    area = float(m.area)
    perim = float(np.sum(np.hypot(*(m.points[m.boundary_edges[:, 0]] - m.points[m.boundary_edges[:, 1]]).T)))
    tail = float(tail_bound(spec.lambda_max, len(spec), area, perim, tau))
    return ModelIntegral(float(radius), float(tau), val, tail)


# ---------------------------------------------------------------------------
# finite part

@dataclass
class FinitePartResult:
    alpha: float
    tau: float
    bc: str
    value: float          # finite part under the configured renormalization
    raw_value: float      # sector-subtracted finite part
    geometric_value: float
    c_area: float
    c_bdry: float
    fit_residual: float
    direct_value: float   # raw finite part from the largest radius, no fit
    error: float
    status: str
    notes: list = field(default_factory=list)
    radii: list = field(default_factory=list)
    integrals: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def geometric_correction(alpha: float, tau: float, bc: str, tangency: float = 0.25) -> float:
    """Area and length terms of the fillet at time tau.

    Added to the sector-subtracted finite part, it moves the divergent
    subtraction from the sector's area and boundary length to the model
    region's own.
    """
    z = geo.ModelRegion(alpha, tangency)
    s = 1.0 if normalize_bc(bc) == DIRICHLET else -1.0
    return z.removed_area / (4 * math.pi * tau) + s * z.length_change / (8 * math.sqrt(math.pi * tau))


def _solve(m, bc, cfg, lam):
    if m.n_vertices > cfg.max_vertices:
        raise BudgetError(f"mesh has {m.n_vertices} vertices, budget {cfg.max_vertices}")
    return fem.solve_mesh(m, bc, lam, tol=cfg.eig_tol, return_vectors=True, block=cfg.block)


def _pair_integrals(alpha, tau, cfg, h):
    rad = cfg.radii(tau)
    pair = composite.model_pair(alpha, cfg.tangency / math.sqrt(tau), rad["all"], h, h / cfg.near_factor)
    radii = rad["inner"] + rad["window"]
    out = {}
    for name, m in (("model", pair.model), ("sector", pair.sector)):
        spec, sysm = _solve(m, cfg.bc, cfg, cfg.lam_tau)
        vals = []
        for r in radii:
            mi = model_trace_integral(spec, sysm, r, 1.0, mask=pair.region_mask(m, r),
                                      truncation=rad["truncation"], margin=cfg.margin)
            vals.append((mi.value, mi.tail))
        out[name] = np.array(vals)
        out[name + "_n"] = (m.n_vertices, len(spec))
    return rad, np.array(radii), out


def _finite_part_once(alpha, tau, cfg, h):
    rad, radii, out = _pair_integrals(alpha, tau, cfg, h)
    iz, isec = out["model"][:, 0], out["sector"][:, 0]
    exact = np.array([sector_trace(r, alpha, cfg.bc).value for r in radii])
    corrected = iz - isec + exact
    nwin = len(rad["window"])
    rw = radii[-nwin:]
    sgn = -1.0 if cfg.bc == DIRICHLET else 1.0
    # the sector terms beyond c1/R' are known in closed form; removing them
    # keeps the two-term fit unbiased on windows at R' ~ 6
    high = np.array([sgn * (boundary_layer_integral(r) - r / (4 * SQRT_PI) + 1 / (16 * SQRT_PI * r))
                     for r in rw])
    rem = corrected[-nwin:] - np.array([divergent_part(r, alpha, cfg.bc) for r in rw]) - high
    a = np.stack([np.ones_like(rw), 1.0 / rw], axis=1)
    coef, *_ = np.linalg.lstsq(a, rem, rcond=None)
    fit_res = float(np.sqrt(np.mean((rem - a @ coef) ** 2)))
    c0 = float(coef[0])
    direct = float(iz[-1] - isec[-1] + corner_constant(alpha))
    # divergent coefficients recovered from the raw model integrals
    s = -1.0 if cfg.bc == DIRICHLET else 1.0
    a4 = np.stack([radii ** 2, s * radii, np.ones_like(radii), 1.0 / radii], axis=1)
    cc, *_ = np.linalg.lstsq(a4, iz, rcond=None)
    tail = float(max(out["model"][:, 1].max(), out["sector"][:, 1].max()))
    return {"c0": c0, "fit_res": fit_res, "direct": direct, "c_area": float(cc[0]) / tau,
            "c_bdry": float(cc[1]) / math.sqrt(tau), "tail": tail, "radii": radii.tolist(),
            "integrals": iz.tolist(), "n": (out["model_n"], out["sector_n"]),
            "radii_w": (radii * math.sqrt(tau)).tolist()}


def finite_part(alpha: float, tau: float, config: Optional[RenormConfig] = None) -> FinitePartResult:
    """Finite part of the model-region trace over |w| < R' as R' -> infinity.

    Fits [I(R') - g(R')] = c0 + c1 / R' on the integration window, with
    g = alpha R'^2/(8 pi tau) -+ R'/(4 sqrt(pi tau)) the divergent sector
    growth and the sector's O(R'^-3) terms also removed; c0 is the
    sector-subtracted (raw) finite part.  The
    'geometric' renormalization adds the fillet's area and length terms,
    which gives the (pi - alpha)/(12 pi) limit as tau -> 0.
    """
    cfg = config or RenormConfig()
    if not (0.05 <= alpha <= 2 * math.pi - 0.05):
        raise ValueError("model angle must lie in [0.05, 2pi - 0.05]")
    if tau <= 0:
        raise ValueError("tau must be positive")
    corr = geometric_correction(alpha, tau, cfg.bc, cfg.tangency)
    notes = []
    if abs(alpha - math.pi) < 1e-12:
        # the model region is the half-plane itself
        z = 0.0
        return FinitePartResult(alpha, tau, cfg.bc, z, z, z, alpha / (8 * math.pi * tau),
                                1 / (4 * math.sqrt(math.pi * tau)), 0.0, z, 0.0, "ok",
                                ["straight vertex: no fillet"], config=cfg.to_dict())
    r = _finite_part_once(alpha, tau, cfg, cfg.h)
    err = r["fit_res"] + r["tail"] + abs(r["c0"] - r["direct"])
    meta = {"vertices": r["n"]}
    if cfg.error_estimate:
        rc = _finite_part_once(alpha, tau, cfg, cfg.h * cfg.coarse_factor)
        err += abs(rc["c0"] - r["c0"])
        meta["coarse_value"] = rc["c0"]
    status = "ok"
    if r["fit_res"] > cfg.fit_tol:
        status = "warning"
        notes.append(f"window fit residual {r['fit_res']:.3g} above {cfg.fit_tol:g}")
    ea = r["c_area"] / (alpha / (8 * math.pi * tau)) - 1
    eb = r["c_bdry"] / (1 / (4 * math.sqrt(math.pi * tau))) - 1
    if abs(ea) > 0.02 or abs(eb) > 0.05:
        status = "warning"
        notes.append(f"divergent coefficients off by {ea:.3g} (area), {eb:.3g} (boundary)")
    geo_val = r["c0"] + corr
    value = geo_val if cfg.renormalization == "geometric" else r["c0"]
    return FinitePartResult(alpha, tau, cfg.bc, value, r["c0"], geo_val, r["c_area"], r["c_bdry"],
                            r["fit_res"], r["direct"], err, status, notes, r["radii_w"], r["integrals"],
                            cfg.to_dict(), meta)


# ---------------------------------------------------------------------------
# C0, C1, C2

def c0_c1(poly: geo.PolygonDomain, tau: float, bc: str = DIRICHLET) -> tuple:
    """C0(tau) = |Omega_0|/(4 pi tau), C1(tau) = -+|dOmega_0|/(8 sqrt(pi tau))."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    s = -1.0 if normalize_bc(bc) == DIRICHLET else 1.0
    return (geo.area(poly) / (4 * math.pi * tau),
            s * geo.perimeter(poly) / (8 * math.sqrt(math.pi * tau)))


def c2_limits(poly: geo.PolygonDomain) -> tuple:
    """Limits of C2 as tau -> 0 and tau -> infinity."""
    chi = geo.euler_characteristic(poly)
    angles = geo.corner_angles(poly)
    turn = sum((math.pi - a) / (12 * math.pi) for a in angles)
    return chi / 6, chi / 6 + sum(corner_constant(a) for a in angles) - turn


@dataclass
class C2Curve:
    taus: np.ndarray
    values: np.ndarray
    raw_values: np.ndarray
    errors: np.ndarray
    limit0: float
    limit_inf: float
    bc: str
    parts: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def gap_inf(self) -> np.ndarray:
        return np.abs(self.values - self.limit_inf)

    def save(self, path) -> tuple:
        path = Path(path)
        write_csv(path, ["tau", "C2", "err_budget", "limit0", "limit_inf"],
                  [(float(t), float(v), float(e), self.limit0, self.limit_inf)
                   for t, v, e in zip(self.taus, self.values, self.errors)])
        side = path.with_suffix(path.suffix + ".json")
        write_json(side, {"bc": self.bc, "config": self.config, "C2_sector_subtracted": self.raw_values,
                          "finite_parts": [p.to_dict() for p in self.parts]})
        return path, side


def _fp_job(args):
    alpha, tau, cfg = args
    return finite_part(alpha, tau, cfg)


def c2_curve(poly: geo.PolygonDomain, taus: Optional[Sequence[float]] = None,
             config: Optional[RenormConfig] = None, workers: int = 1) -> C2Curve:
    """C2(tau) = sum_j f_j(tau) + chi/6 - sum_j (pi - alpha_j)/(12 pi).

    Corners with equal angles share one finite-part computation.
    """
    cfg = config or RenormConfig()
    taus = tuple(cfg.taus if taus is None else (float(t) for t in taus))
    angles = geo.corner_angles(poly)
    keys = sorted({round(float(a), 12) for a in angles})
    jobs = [(a, t, cfg) for t in taus for a in keys]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_fp_job, jobs))
    else:
        results = [_fp_job(j) for j in jobs]
    table = {(a, t): r for (a, t, _), r in zip(jobs, results)}
    chi = geo.euler_characteristic(poly)
    base = chi / 6 - sum((math.pi - a) / (12 * math.pi) for a in angles)
    vals, raws, errs, parts = [], [], [], []
    for t in taus:
        fps = [table[(round(float(a), 12), t)] for a in angles]
        vals.append(base + sum(f.value for f in fps))
        raws.append(base + sum(f.raw_value for f in fps))
        errs.append(sum(f.error for f in fps))
        parts.extend(table[(a, t)] for a in keys)
    l0, linf = c2_limits(poly)
    return C2Curve(np.array(taus), np.array(vals), np.array(raws), np.array(errs), l0, linf, cfg.bc,
                   parts, cfg.to_dict())


# ---------------------------------------------------------------------------
# front-face consistency

def polygon_trace_exact(poly: geo.PolygonDomain, t, bc: str):
    """Exact trace of an axis-aligned rectangle; None for other polygons."""
    v = poly.vertices
    if len(v) != 4 or poly.holes:
        return None
    xs, ys = np.unique(np.round(v[:, 0], 14)), np.unique(np.round(v[:, 1], 14))
    if len(xs) != 2 or len(ys) != 2:
        return None
    return oracle.rectangle_trace(xs[1] - xs[0], ys[1] - ys[0], t, bc)


def _eig_trace(m, bc, lam_max, t, tol, block):
    spec, sysm = fem.solve_mesh(m, bc, lam_max, tol=tol, block=block)
    lam = np.sort(spec.eigenvalues)[::-1]
    return math.fsum(np.exp(-lam * t)), len(spec)


@dataclass
class FrontFaceReport:
    tau: float
    eps: list
    t: list
    G: list
    expansion: list
    residual: list          # G - [C0/eps^2 + C1/eps + C2]
    scaled_residual: list   # eps^2 times the residual
    ratios: list            # |residual(eps_k)| / |residual(eps_{k+1})|
    leading_mismatch: list  # eps^2 G / C0 - 1
    C2: float
    coordinates_ok: bool
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def front_face_consistency(poly: geo.PolygonDomain, eps_list: Sequence[float], tau: float = 1.0,
                           config: Optional[RenormConfig] = None, C2: Optional[float] = None,
                           rho: Optional[float] = None, h_scale: float = 0.25,
                           max_vertices: int = 200_000) -> FrontFaceReport:
    """Compare FEM traces G(tau eps^2, eps) with C0/eps^2 + C1/eps + C2(tau).

    For rectangles G is the exact trace of Omega_0 plus the FEM difference
    between Omega_eps and Omega_0 meshed on identical pieces away from the
    corners; otherwise G is the direct FEM trace.  The mesh size is
    ``h_scale * sqrt(t)``.  A supplied ``C2`` must be the sector-subtracted
    value (``C2Curve.raw_values``).
    """
    cfg = config or RenormConfig(taus=(tau,))
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 2:
        raise ValueError("need at least two eps values")
    if C2 is None:
        # C0 and C1 carry the area and perimeter of Omega_0, so the matching
        # C2 subtracts the sector (not the fillet) divergent terms
        C2 = float(c2_curve(poly, [tau], cfg).raw_values[0])
    c0, c1 = c0_c1(poly, tau, cfg.bc)
    edges = np.hypot(*(np.roll(poly.vertices, -1, axis=0) - poly.vertices).T)
    rho = 0.45 * edges.min() if rho is None else rho
    out = {k: [] for k in ("t", "G", "exp", "res", "sres", "lead")}
    coords_ok = True
    meta = {"vertices": [], "eigenvalues": []}
    for e in eps_list:
        t = tau * e * e
        bp = to_blowup(t, e)
        alt = from_eta(t, bp.eta)
        coords_ok &= bool(abs(bp.tau * bp.eta ** 2 - 1) < 1e-12 and alt.face == bp.face
                          and abs(alt.tau - bp.tau) <= 1e-12 * bp.tau)
        h = h_scale * math.sqrt(t)
        cd = composite.corner_decomposition(poly, e, rho, h, fillet_scale=cfg.tangency)
        mr = cd.rounded()
        if mr.n_vertices > max_vertices:
            raise BudgetError(f"mesh has {mr.n_vertices} vertices, budget {max_vertices}")
        lam_max = cfg.lam_tau / t
        g_r, n_r = _eig_trace(mr, cfg.bc, lam_max, t, cfg.eig_tol, cfg.block)
        exact = polygon_trace_exact(poly, t, cfg.bc)
        if exact is not None:
            g_s, _ = _eig_trace(cd.sharp(), cfg.bc, lam_max, t, cfg.eig_tol, cfg.block)
            G = float(exact) + g_r - g_s
        else:
            G = g_r
        expn = c0 / e ** 2 + c1 / e + C2
        out["t"].append(t)
        out["G"].append(G)
        out["exp"].append(expn)
        out["res"].append(G - expn)
        out["sres"].append(e * e * (G - expn))
        out["lead"].append(e * e * G / c0 - 1)
        meta["vertices"].append(mr.n_vertices)
        meta["eigenvalues"].append(n_r)
    res = out["res"]
    ratios = [abs(a) / abs(b) if b != 0 else math.inf for a, b in zip(res[:-1], res[1:])]
    return FrontFaceReport(tau, eps_list, out["t"], out["G"], out["exp"], res, out["sres"], ratios,
                           out["lead"], C2, coords_ok, meta)
