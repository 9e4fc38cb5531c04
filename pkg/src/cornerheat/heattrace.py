"""Heat traces from spectra, small-time coefficients and blowup coordinates."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import special

from . import geometry as geo
from .fem import DIRICHLET, NEUMANN, Spectrum, normalize_bc
from .io import read_csv, read_json, write_csv, write_json
from .sector_kernel import corner_constant

TAIL_THRESHOLD = 1e-10
SQRT_PI = math.sqrt(math.pi)


# ---------------------------------------------------------------------------
# traces

def tail_bound(lambda_max: float, count: int, area: float, perimeter: float, t) -> np.ndarray:
    """Upper bound for sum_{lam > lambda_max} exp(-lam t).

    Integrates exp(-lam t) against the counting function, bounded above by
    the two-term envelope N(lam) <= area lam / 4pi + perimeter sqrt(lam) / 4pi:

        tail <= t int_L^inf exp(-lam t) (N_up(lam) - N(L)) dlam.
    """
    t = np.asarray(t, dtype=float)
    L = float(lambda_max)
    a = area / (4 * math.pi)
    b = perimeter / (4 * math.pi)
    e = np.exp(-L * t)
    lin = a * e * (L + 1.0 / t)
    half = b * special.gammaincc(1.5, L * t) * special.gamma(1.5) / np.sqrt(t)
    return np.maximum(lin + half - count * e, 0.0)


@dataclass(eq=False)
class TraceCurve:
    """Heat trace values on a t grid with per-point tail bounds."""

    t: np.ndarray
    values: np.ndarray
    tail: np.ndarray
    bc: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.tail = np.asarray(self.tail, dtype=float)

    @property
    def flagged(self) -> np.ndarray:
        """Points whose tail bound exceeds 1e-10 of the value."""
        return self.tail > TAIL_THRESHOLD * np.abs(self.values)

    def check_shape(self) -> dict:
        """Positivity, monotone decrease and log-convexity on the grid."""
        order = np.argsort(self.t)
        t, v = self.t[order], self.values[order]
        out = {"positive": bool(np.all(v > 0))}
        out["decreasing"] = bool(np.all(np.diff(v) < 0)) if len(v) > 1 else True
        if len(v) > 2 and out["positive"]:
            lv = np.log(v)
            # convexity of log(value) on a nonuniform grid via divided differences
            s = np.diff(lv) / np.diff(t)
            out["log_convex"] = bool(np.all(np.diff(s) >= -1e-12 * np.abs(s[1:]).max()))
        else:
            out["log_convex"] = True
        return out

    def save(self, path) -> tuple:
        path = Path(path)
        write_csv(path, ["t", "trace", "tail_bound", "flagged"],
                  [(float(a), float(b), float(c), int(d))
                   for a, b, c, d in zip(self.t, self.values, self.tail, self.flagged)])
        side = path.with_suffix(path.suffix + ".json")
        write_json(side, dict(self.meta, bc=self.bc))
        return path, side

    @classmethod
    def load(cls, path) -> "TraceCurve":
        path = Path(path)
        header, rows = read_csv(path)
        if header[:3] != ["t", "trace", "tail_bound"]:
            raise ValueError(f"{path}: not a trace curve file")
        arr = np.array([[float(x) for x in r[:3]] for r in rows]).reshape(-1, 3)
        meta = read_json(path.with_suffix(path.suffix + ".json"))
        bc = meta.pop("bc")
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], bc, meta)


def trace_from_spectrum(spec: Spectrum, t_grid, domain=None, area: Optional[float] = None,
                        perimeter: Optional[float] = None) -> TraceCurve:
    """Partial sum of exp(-lam t) over the spectrum plus a certified tail bound.

    The geometry for the tail bound comes from ``domain`` or from explicit
    ``area``/``perimeter``.  Summation runs in descending lambda order.
    """
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    if domain is not None:
        area, perimeter = geo.area(domain), geo.perimeter(domain)
    if area is None or perimeter is None:
        raise ValueError("tail bound needs the domain or its area and perimeter")
    lam = np.sort(spec.eigenvalues)[::-1]
    vals = np.array([math.fsum(np.exp(-lam * ti)) for ti in t])
    tail = tail_bound(spec.lambda_max, len(spec), area, perimeter, t)
    meta = {"source": spec.metadata(), "area": area, "perimeter": perimeter}
    curve = TraceCurve(t, vals, tail, spec.bc, meta)
    if np.any(curve.flagged):
        warnings.warn(f"{int(curve.flagged.sum())} trace points have tail bounds above "
                      f"{TAIL_THRESHOLD:g} of the value", stacklevel=2)
    return curve


# ---------------------------------------------------------------------------
# coefficients

@dataclass(frozen=True)
class Coefficients:
    a0: float
    a1: float
    a2: float


def predicted_coefficients(d, bc: str = DIRICHLET) -> Coefficients:
    """Small-time coefficients of the heat trace a0/t + a1/sqrt(t) + a2.

    a0 = |Omega|/4pi, a1 = -+|dOmega|/(8 sqrt pi) (Dirichlet/Neumann) and
    a2 = (smooth boundary turning)/(12 pi) + sum over corners of
    (pi^2 - alpha^2)/(24 pi alpha).
    """
    bc = normalize_bc(bc)
    a0 = geo.area(d) / (4 * math.pi)
    s = -1.0 if bc == DIRICHLET else 1.0
    a1 = s * geo.perimeter(d) / (8 * SQRT_PI)
    smooth = geo.boundary_turning(d, smooth_only=True)
    a2 = smooth / (12 * math.pi) + sum(corner_constant(a) for a in geo.corner_angles(d))
    return Coefficients(a0, a1, a2)


@dataclass
class CoefficientFit:
    a0: float
    a1: float
    a2: float
    window: tuple
    residual: float
    pinned: bool
    degree: int
    estimates: list
    status: str = "ok"
    n_points: int = 0
    excluded: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    def save(self, path) -> tuple:
        path = Path(path)
        write_csv(path, ["coefficient", "value"],
                  [("a0", self.a0), ("a1", self.a1), ("a2", self.a2)])
        side = path.with_suffix(path.suffix + ".json")
        write_json(side, self.to_dict())
        return path, side


def _poly_extrapolate(s, r, degree):
    # least squares r = c0 + c1 s + ... + c_deg s^deg; returns c0 and rms residual
    v = np.vander(s, degree + 1, increasing=True)
    scale = np.max(np.abs(v), axis=0)
    coef, *_ = np.linalg.lstsq(v / scale, r, rcond=None)
    coef = coef / scale
    res = r - v @ coef
    return float(coef[0]), float(np.sqrt(np.mean(res ** 2)))


def fit_a2(curve: TraceCurve, d=None, bc: Optional[str] = None, window: Optional[Sequence[float]] = None,
           degree: int = 2, pinned: bool = True, a0: Optional[float] = None,
           a1: Optional[float] = None) -> CoefficientFit:
    """Extract a2 from a trace curve.

    With ``pinned`` (default) a0 and a1 are fixed from the geometry of ``d``
    (or given explicitly) and r(t) = trace - a0/t - a1/sqrt(t) is
    extrapolated to t = 0 by polynomial least squares in s = sqrt(t).  The
    returned a2 uses ``degree``; estimates for degrees 0..3 are kept, and
    successive differences that fail to shrink set status 'warning'.
    Unpinned fits solve for a0, a1, a2 and ``degree`` extra powers jointly.
    """
    bc = normalize_bc(bc or curve.bc)
    t, v = curve.t, curve.values
    sel = np.ones(len(t), bool)
    if window is not None:
        lo, hi = window
        sel &= (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    n_window = int(sel.sum())
    flagged = curve.flagged & sel
    sel &= ~curve.flagged
    notes = []
    status = "ok"
    if flagged.any():
        status = "warning"
        notes.append(f"{int(flagged.sum())} window points dropped for unreliable tail bounds")
    if sel.sum() < degree + 2:
        raise ValueError("too few reliable points in the fit window")
    t, v = t[sel], v[sel]
    win = (float(t.min()), float(t.max()))
    if pinned:
        if a0 is None or a1 is None:
            if d is None:
                raise ValueError("pinned fit needs the domain or explicit a0, a1")
            pc = predicted_coefficients(d, bc)
            a0 = pc.a0 if a0 is None else a0
            a1 = pc.a1 if a1 is None else a1
        s = np.sqrt(t)
        r = v - a0 / t - a1 / s
        est, res = [], []
        for p in range(0, min(3, len(t) - 2) + 1):
            e, rr = _poly_extrapolate(s, r, p)
            est.append(e)
            res.append(rr)
        if degree >= len(est):
            raise ValueError("degree too high for the number of window points")
        diffs = np.abs(np.diff(est))
        floor = 1e-9 * max(1.0, abs(est[degree]))
        if degree >= 2 and diffs[degree - 1] > diffs[degree - 2] and diffs[degree - 1] > floor:
            status = "warning"
            notes.append("extrapolation corrections do not decrease with degree")
        return CoefficientFit(float(a0), float(a1), est[degree], win, res[degree], True, degree,
                              est, status, len(t), n_window - len(t), notes)
    s = np.sqrt(t)
    cols = [1 / t, 1 / s] + [s ** k for k in range(degree + 1)]
    a = np.stack(cols, axis=1)
    scale = np.max(np.abs(a), axis=0)
    coef, *_ = np.linalg.lstsq(a / scale, v, rcond=None)
    coef = coef / scale
    rr = float(np.sqrt(np.mean((v - a @ coef) ** 2)))
    return CoefficientFit(float(coef[0]), float(coef[1]), float(coef[2]), win, rr, False, degree,
                          [float(coef[2])], status, len(t), n_window - len(t), notes)


# ---------------------------------------------------------------------------
# blowup coordinates

FACES = ("interior", "L", "R", "F", "L∩F", "F∩R")


@dataclass(frozen=True)
class BlowupPoint:
    """A point of the parabolic blowup of {t >= 0, eps >= 0} at the origin.

    tau = t / eps^2 and eta = eps / sqrt(t); either may be 0 or inf on faces.
    """

    t: float
    eps: float
    tau: float
    eta: float
    face: str


def to_blowup(t: float, eps: float) -> BlowupPoint:
    """Projective coordinates and face of (t, eps); the origin itself is rejected."""
    if t < 0 or eps < 0:
        raise ValueError("t and eps must be nonnegative")
    if t == 0 and eps == 0:
        raise ValueError("(t, eps) = (0, 0) is blown up to the whole front face; use front_face_point(tau)")
    if eps == 0:
        return BlowupPoint(t, eps, math.inf, 0.0, "R")
    if t == 0:
        return BlowupPoint(t, eps, 0.0, math.inf, "L")
    return BlowupPoint(t, eps, t / eps ** 2, eps / math.sqrt(t), "interior")


def front_face_point(tau: float) -> BlowupPoint:
    """The front-face point reached along t = tau eps^2 as eps -> 0."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau == 0:
        return BlowupPoint(0.0, 0.0, 0.0, math.inf, "L∩F")
    if math.isinf(tau):
        return BlowupPoint(0.0, 0.0, math.inf, 0.0, "F∩R")
    return BlowupPoint(0.0, 0.0, tau, 1.0 / math.sqrt(tau), "F")


def from_eta(t: float, eta: float) -> BlowupPoint:
    """Blowup point from (t, eta) with eps = eta sqrt(t)."""
    return to_blowup(t, eta * math.sqrt(t))


# ---------------------------------------------------------------------------
# trace-split residual

@dataclass
class ResidualCurve:
    t: np.ndarray
    residual: np.ndarray
    slopes: np.ndarray  # d log|res| / d log t between consecutive points (t ascending)
    fitted_slope: float
    superpolynomial: bool
    at_floor: np.ndarray  # residuals indistinguishable from rounding of the total trace


def trace_split_residual(total, model, far, t_grid, floor_factor: float = 64.0) -> ResidualCurve:
    """residual(t) = Tr(Omega_eps) - I(t) - II(t) and its decay diagnostics.

    Slopes are of log|residual| against log t; a slope p means
    residual ~ t^p as t decreases, so rapid decay shows as large positive
    slopes that grow toward small t.  Residuals below
    ``floor_factor * machine eps * total`` are at the rounding floor; slopes
    into such points are only lower bounds and do not count against the
    growth test.
    """
    t = np.asarray(t_grid, dtype=float)
    total, model, far = (np.asarray(x, dtype=float) for x in (total, model, far))
    if not (total.shape == model.shape == far.shape == t.shape):
        raise ValueError("trace components must share the t grid")
    res = total - model - far
    order = np.argsort(t)
    t, res, total = t[order], res[order], total[order]
    floor = floor_factor * np.finfo(float).eps * np.abs(total)
    at_floor = np.abs(res) <= floor
    lt = np.log(t)
    lr = np.log(np.maximum(np.abs(res), floor))
    slopes = np.diff(lr) / np.diff(lt)
    fitted = float(np.polyfit(lt, lr, 1)[0]) if len(t) > 1 else float("nan")
    # slopes[0] is the pair nearest t = 0; growth toward small t means
    # slopes[i] >= slopes[i + 1] wherever both pairs are above the floor
    exact = ~(at_floor[:-1] | at_floor[1:])
    ok = all(slopes[i] >= slopes[i + 1] or not (exact[i] and exact[i + 1])
             for i in range(len(slopes) - 1))
    superpoly = bool(ok and np.all(slopes > 0))
    return ResidualCurve(t, res, slopes, fitted, superpoly, at_floor)
