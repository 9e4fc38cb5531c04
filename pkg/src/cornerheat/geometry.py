"""Planar domains with exact geometric functionals.

All domains are flat and bounded by straight segments and circular arcs, so
area, perimeter and total turning are available in closed form.  Angles are
radians throughout.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

TWO_PI = 2.0 * math.pi
_ANGLE_EPS = 1e-12


class GeometryError(ValueError):
    """Raised for invalid or unsupported domain descriptions."""


# ---------------------------------------------------------------------------
# boundary primitives

@dataclass(frozen=True)
class Segment:
    start: tuple
    end: tuple
    tag: str = "physical"

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)

    def point(self, s):
        a = np.asarray(self.start, float)
        b = np.asarray(self.end, float)
        s = np.asarray(s, float)[..., None]
        return a + s * (b - a)


@dataclass(frozen=True)
class Arc:
    """Circular arc ``center + radius * (cos phi, sin phi)``, phi from
    ``start`` to ``start + sweep`` (negative sweep runs clockwise)."""

    center: tuple
    radius: float
    start: float
    sweep: float
    tag: str = "physical"

    @property
    def length(self) -> float:
        return abs(self.sweep) * self.radius

    @property
    def turning(self) -> float:
        # signed turning of the tangent when traversed in the stored direction
        return self.sweep

    def point(self, s):
        s = np.asarray(s, float)
        phi = self.start + s * self.sweep
        c = np.asarray(self.center, float)
        return c + self.radius * np.stack([np.cos(phi), np.sin(phi)], axis=-1)


Piece = Union[Segment, Arc]


# ---------------------------------------------------------------------------
# polygons

def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 * d2 < 0 and d3 * d4 < 0:
        return True
    return False


def _check_simple(v: np.ndarray, what: str) -> None:
    n = len(v)
    if n < 3:
        raise GeometryError(f"{what}: need at least 3 vertices")
    edges = np.roll(v, -1, axis=0) - v
    if np.any(np.hypot(edges[:, 0], edges[:, 1]) <= 1e-14):
        raise GeometryError(f"{what}: zero-length edge")
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                raise GeometryError(f"{what}: self-intersecting boundary (edges {i} and {j})")


def _turning_angles(v: np.ndarray) -> np.ndarray:
    e_in = v - np.roll(v, 1, axis=0)
    e_out = np.roll(v, -1, axis=0) - v
    cross = e_in[:, 0] * e_out[:, 1] - e_in[:, 1] * e_out[:, 0]
    dot = np.einsum("ij,ij->i", e_in, e_out)
    return np.arctan2(cross, dot)


@dataclass(frozen=True, eq=False)
class PolygonDomain:
    """Simple polygon with counterclockwise outer boundary.

    ``holes`` are optional polygonal holes, each given counterclockwise as a
    polygon in its own right; they must lie strictly inside the outer boundary.
    """

    vertices: np.ndarray
    holes: tuple = ()

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise GeometryError("polygon vertices must be an (n, 2) array")
        _check_simple(v, "polygon")
        if _signed_area(v) <= 0:
            raise GeometryError("polygon vertices must be ordered counterclockwise")
        holes = []
        for k, h in enumerate(self.holes):
            hv = np.array(h, dtype=float)
            _check_simple(hv, f"hole {k}")
            if _signed_area(hv) <= 0:
                raise GeometryError(f"hole {k} must be given counterclockwise")
            holes.append(hv)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "holes", tuple(holes))

    @property
    def angles(self) -> np.ndarray:
        return interior_angles(self)

    def corners(self) -> list:
        """Outer-boundary corners as (vertex, u_prev, u_next, alpha) tuples."""
        v = self.vertices
        out = []
        alphas = interior_angles(self)
        n = len(v)
        for i in range(n):
            p = v[i]
            up = v[i - 1] - p
            un = v[(i + 1) % n] - p
            out.append((p, up / np.hypot(*up), un / np.hypot(*un), float(alphas[i])))
        return out


def interior_angles(poly: PolygonDomain, warn: bool = True) -> np.ndarray:
    """Interior angle at every outer vertex, in vertex order, each in (0, 2pi).

    A straight vertex (angle pi) is legal but triggers a warning.
    """
    alphas = math.pi - _turning_angles(poly.vertices)
    if warn and np.any(np.abs(alphas - math.pi) < 1e-12):
        warnings.warn("polygon has a straight (angle pi) vertex", stacklevel=2)
    return alphas


def unit_square() -> PolygonDomain:
    return PolygonDomain(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


def rectangle(a: float, b: float) -> PolygonDomain:
    return PolygonDomain(np.array([[0.0, 0.0], [a, 0.0], [a, b], [0.0, b]]))


def equilateral_triangle(side: float = 1.0) -> PolygonDomain:
    return PolygonDomain(np.array([[0.0, 0.0], [side, 0.0], [0.5 * side, 0.5 * math.sqrt(3) * side]]))


def l_shape() -> PolygonDomain:
    """L-shaped hexomino outline: the 2x2 square minus its upper-right quarter."""
    return PolygonDomain(np.array(
        [[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]], dtype=float))


# ---------------------------------------------------------------------------
# sectors, fillets and model regions

@dataclass(frozen=True)
class SectorDomain:
    """Circular sector {0 < theta < alpha, r < radius} with vertex at the origin."""

    alpha: float
    radius: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.alpha < TWO_PI):
            raise GeometryError("sector angle must lie in (0, 2pi)")
        if not self.radius > 0:
            raise GeometryError("sector radius must be positive")


@dataclass(frozen=True)
class FilletArc:
    """Circular fillet replacing the corner at ``vertex``."""

    vertex: tuple
    alpha: float
    tangency: float  # distance from the vertex to each tangency point
    center: tuple
    radius: float
    t_prev: tuple  # tangency point on the incoming edge
    t_next: tuple  # tangency point on the outgoing edge
    start: float
    sweep: float  # equals pi - alpha

    def arc(self, tag: str = "physical") -> Arc:
        return Arc(self.center, self.radius, self.start, self.sweep, tag)

    @property
    def length(self) -> float:
        return self.radius * abs(self.sweep)

    @property
    def removed_area(self) -> float:
        """Area cut from the domain (negative when a reflex corner is filled)."""
        kite = self.tangency * self.radius
        wedge = 0.5 * self.radius ** 2 * abs(self.sweep)
        sign = 1.0 if self.alpha < math.pi else -1.0
        return sign * (kite - wedge)

    @property
    def length_change(self) -> float:
        return self.length - 2.0 * self.tangency


def make_fillet(vertex, u_prev, u_next, alpha: float, tangency: float) -> FilletArc | None:
    """Arc tangent to both corner edges at distance ``tangency`` from the vertex.

    Returns None for a straight vertex, where there is nothing to round.
    """
    if abs(alpha - math.pi) < _ANGLE_EPS:
        return None
    p = np.asarray(vertex, float)
    u1 = np.asarray(u_prev, float)
    u2 = np.asarray(u_next, float)
    half = 0.5 * alpha
    radius = tangency * abs(math.tan(half))
    bis = u1 + u2
    bis = bis / np.hypot(*bis)
    c = p + tangency / abs(math.cos(half)) * bis
    tp = p + tangency * u1
    tn = p + tangency * u2
    start = math.atan2(tp[1] - c[1], tp[0] - c[0])
    return FilletArc(tuple(p), alpha, tangency, tuple(c), radius, tuple(tp), tuple(tn),
                     start, math.pi - alpha)


@dataclass(frozen=True, eq=False)
class FilletedPolygon:
    """Polygon with every non-straight corner replaced by a tangent circular arc.

    At smoothing scale ``epsilon`` each tangency point sits at distance
    ``fillet_scale * epsilon`` from its vertex, so the fillet radius is
    ``fillet_scale * epsilon * |tan(alpha / 2)|``.
    """

    base: PolygonDomain
    epsilon: float
    fillet_scale: float = 0.25

    def __post_init__(self):
        if self.base.holes:
            raise GeometryError("filleted polygons with holes are not supported")
        if not self.epsilon > 0:
            raise GeometryError("epsilon must be positive")
        if not (0.0 < self.fillet_scale <= 0.5):
            raise GeometryError("fillet_scale must lie in (0, 1/2]")
        v = self.base.vertices
        edges = np.hypot(*(np.roll(v, -1, axis=0) - v).T)
        d = self.fillet_scale * self.epsilon
        # consecutive fillets must not overlap along an edge
        if np.any(2.0 * d >= edges):
            raise GeometryError("epsilon too large: fillets would overlap along an edge")

    @property
    def tangency(self) -> float:
        return self.fillet_scale * self.epsilon

    @property
    def fillets(self) -> list:
        return [make_fillet(p, u1, u2, a, self.tangency) for p, u1, u2, a in self.base.corners()]

    @property
    def radii(self) -> np.ndarray:
        return np.array([f.radius if f is not None else np.inf for f in self.fillets])


@dataclass(frozen=True)
class ModelRegion:
    """Infinite sector S_alpha with its vertex rounded at unit scale.

    The sector edges run along theta = 0 and theta = alpha.  The fillet is
    tangent to both at distance ``tangency`` from the origin, so the region
    agrees with the sector outside the ball of radius 1/2.
    """

    alpha: float
    tangency: float = 0.25

    def __post_init__(self):
        if not (0.0 < self.alpha < TWO_PI):
            raise GeometryError("model angle must lie in (0, 2pi)")

    @property
    def fillet(self) -> FilletArc | None:
        u_prev = (math.cos(self.alpha), math.sin(self.alpha))
        return make_fillet((0.0, 0.0), u_prev, (1.0, 0.0), self.alpha, self.tangency)

    @property
    def removed_area(self) -> float:
        f = self.fillet
        return 0.0 if f is None else f.removed_area

    @property
    def length_change(self) -> float:
        f = self.fillet
        return 0.0 if f is None else f.length_change

    def contains(self, pts) -> np.ndarray:
        """Membership test for an (n, 2) array of points (boundary excluded)."""
        pts = np.atleast_2d(np.asarray(pts, float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        theta = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), TWO_PI)
        in_sector = (theta > 0) & (theta < self.alpha) & (r > 0)
        f = self.fillet
        if f is None:
            return in_sector
        c = np.asarray(f.center)
        dc = np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1])
        # the part of the corner kite outside the fillet circle changes membership:
        # removed for a convex corner, added for a reflex one
        quad = np.array([f.vertex, f.t_next, f.center, f.t_prev])
        flip = _in_convex_quad(pts, quad) & (dc > f.radius)
        if self.alpha < math.pi:
            return in_sector & ~flip
        return in_sector | flip


def _in_convex_quad(pts, quad) -> np.ndarray:
    if _signed_area(quad) < 0:
        quad = quad[::-1]
    ok = np.ones(len(pts), bool)
    for i in range(4):
        a, b = quad[i], quad[(i + 1) % 4]
        cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        ok &= cross > 0
    return ok


@dataclass(frozen=True)
class TruncatedModelRegion:
    """ModelRegion intersected with the disk |z| < radius.

    The arc |z| = radius is an artificial boundary; the rest is physical.
    """

    model: ModelRegion
    radius: float

    def __post_init__(self):
        if not self.radius > 1.0:
            raise GeometryError("truncation radius must exceed 1")


DomainSpec = Union[PolygonDomain, SectorDomain, FilletedPolygon, ModelRegion, TruncatedModelRegion]


def model_region(alpha: float, tangency: float = 0.25) -> ModelRegion:
    """Canonical rounded-corner model region for opening angle ``alpha``.

    The fillet is tangent to both edges at distance ``tangency`` from the
    vertex, giving radius ``tangency * |tan(alpha / 2)|``.  At ``alpha = pi``
    there is no corner and the region is the half-plane itself.
    """
    if not (0.0 < tangency <= 0.5):
        raise GeometryError("tangency distance must lie in (0, 1/2] so the fillet stays inside B_1/2")
    if alpha < 0.05 or alpha > TWO_PI - 0.05:
        raise GeometryError(
            f"alpha = {alpha:.4g} is too close to a cusp; the rounded corner would be "
            "a sliver that cannot be represented or meshed reliably (need 0.05 <= alpha <= 2pi - 0.05)")
    return ModelRegion(float(alpha), float(tangency))


# ---------------------------------------------------------------------------
# functionals

def _fillet_sum(d: FilletedPolygon, attr: str) -> float:
    return float(sum(getattr(f, attr) for f in d.fillets if f is not None))


def _polygon_perimeter(v: np.ndarray) -> float:
    return float(np.hypot(*(np.roll(v, -1, axis=0) - v).T).sum())


def area(d: DomainSpec) -> float:
    """Exact area."""
    if isinstance(d, PolygonDomain):
        return _signed_area(d.vertices) - sum(_signed_area(h) for h in d.holes)
    if isinstance(d, SectorDomain):
        return 0.5 * d.alpha * d.radius ** 2
    if isinstance(d, FilletedPolygon):
        return area(d.base) - _fillet_sum(d, "removed_area")
    if isinstance(d, TruncatedModelRegion):
        return 0.5 * d.model.alpha * d.radius ** 2 - d.model.removed_area
    if isinstance(d, ModelRegion):
        raise GeometryError("a model region is unbounded; truncate it first")
    raise TypeError(f"unsupported domain {type(d).__name__}")


def perimeter(d: DomainSpec) -> float:
    """Total boundary length (physical and artificial parts together)."""
    if isinstance(d, PolygonDomain):
        return _polygon_perimeter(d.vertices) + sum(_polygon_perimeter(h) for h in d.holes)
    if isinstance(d, SectorDomain):
        return 2.0 * d.radius + d.alpha * d.radius
    if isinstance(d, FilletedPolygon):
        return perimeter(d.base) + _fillet_sum(d, "length_change")
    if isinstance(d, TruncatedModelRegion):
        return physical_perimeter(d) + d.model.alpha * d.radius
    if isinstance(d, ModelRegion):
        raise GeometryError("a model region is unbounded; truncate it first")
    raise TypeError(f"unsupported domain {type(d).__name__}")


def physical_perimeter(d: DomainSpec) -> float:
    if isinstance(d, TruncatedModelRegion):
        return 2.0 * d.radius + d.model.length_change
    return perimeter(d)


def euler_characteristic(d: DomainSpec) -> int:
    if isinstance(d, PolygonDomain):
        return 1 - len(d.holes)
    return 1


def boundary_turning(d: DomainSpec, smooth_only: bool = False) -> float:
    """Total turning of the boundary tangent.

    Sums the integral of geodesic curvature over smooth arcs and, unless
    ``smooth_only``, the exterior angles pi - alpha at corners.  For a closed
    flat boundary the total is 2 pi chi.
    """
    if isinstance(d, PolygonDomain):
        if smooth_only:
            return 0.0
        total = float(np.sum(math.pi - interior_angles(d, warn=False)))
        for h in d.holes:
            # hole corners are traversed clockwise as seen from the domain
            total -= float(np.sum(_turning_angles(h)))
        return total
    if isinstance(d, SectorDomain):
        smooth = d.alpha
        corners = (math.pi - d.alpha) + 2 * (math.pi / 2)
        return smooth if smooth_only else smooth + corners
    if isinstance(d, FilletedPolygon):
        smooth = float(sum(f.sweep for f in d.fillets if f is not None))
        if smooth_only:
            return smooth
        sharp = [a for (_, _, _, a), f in zip(d.base.corners(), d.fillets) if f is None]
        return smooth + float(sum(math.pi - a for a in sharp))
    if isinstance(d, ModelRegion):
        return math.pi - d.alpha
    if isinstance(d, TruncatedModelRegion):
        smooth = (math.pi - d.model.alpha) + d.model.alpha
        return smooth if smooth_only else smooth + math.pi
    raise TypeError(f"unsupported domain {type(d).__name__}")


def corner_angles(d: DomainSpec) -> np.ndarray:
    """Interior angles at the genuine corners of the boundary."""
    if isinstance(d, PolygonDomain):
        out = [interior_angles(d, warn=False)]
        for h in d.holes:
            out.append(math.pi + _turning_angles(h))
        return np.concatenate(out)
    if isinstance(d, SectorDomain):
        return np.array([d.alpha, math.pi / 2, math.pi / 2])
    if isinstance(d, FilletedPolygon):
        return np.array([a for (_, _, _, a), f in zip(d.base.corners(), d.fillets) if f is None])
    if isinstance(d, TruncatedModelRegion):
        return np.array([math.pi / 2, math.pi / 2])
    return np.array([])


# ---------------------------------------------------------------------------
# boundary description used by the mesher

def boundary_loops(d: DomainSpec) -> list:
    """Closed boundary loops as lists of Segment/Arc pieces.

    The first loop is the outer boundary traversed counterclockwise; any
    further loops are holes.
    """
    if isinstance(d, PolygonDomain):
        loops = [_polygon_loop(d.vertices)]
        loops += [_polygon_loop(h) for h in d.holes]
        return loops
    if isinstance(d, SectorDomain):
        R, a = d.radius, d.alpha
        far = (R * math.cos(a), R * math.sin(a))
        return [[Segment((0.0, 0.0), (R, 0.0)), Arc((0.0, 0.0), R, 0.0, a), Segment(far, (0.0, 0.0))]]
    if isinstance(d, FilletedPolygon):
        v = d.base.vertices
        n = len(v)
        fl = d.fillets
        pieces = []
        for i in range(n):
            j = (i + 1) % n
            a = fl[i].t_next if fl[i] is not None else tuple(v[i])
            b = fl[j].t_prev if fl[j] is not None else tuple(v[j])
            pieces.append(Segment(tuple(a), tuple(b)))
            if fl[j] is not None:
                pieces.append(fl[j].arc())
        return [pieces]
    if isinstance(d, TruncatedModelRegion):
        return [truncated_model_loop(d.model, d.radius)]
    if isinstance(d, ModelRegion):
        raise GeometryError("a model region is unbounded; truncate it first")
    raise TypeError(f"unsupported domain {type(d).__name__}")


def _polygon_loop(v) -> list:
    n = len(v)
    return [Segment(tuple(v[i]), tuple(v[(i + 1) % n])) for i in range(n)]


def truncated_model_loop(model: ModelRegion, radius: float, outer_tag: str = "artificial") -> list:
    """Boundary of model ∩ B_radius, counterclockwise, starting at (radius, 0)."""
    a = model.alpha
    far = (radius * math.cos(a), radius * math.sin(a))
    f = model.fillet
    pieces = [Arc((0.0, 0.0), radius, 0.0, a, outer_tag)]
    if f is None:
        pieces += [Segment(far, (0.0, 0.0)), Segment((0.0, 0.0), (radius, 0.0))]
    else:
        pieces += [Segment(far, f.t_prev), f.arc(), Segment(f.t_next, (radius, 0.0))]
    return pieces


# ---------------------------------------------------------------------------
# JSON domain files

_DOMAIN_FIELDS = {"type", "vertices", "alpha", "radius", "epsilon", "fillet_scale", "holes"}
_REQUIRED = {
    "polygon": {"vertices"},
    "sector": {"alpha"},
    "filleted_polygon": {"vertices", "epsilon"},
    "model_region": {"alpha"},
}
_ALLOWED = {
    "polygon": {"vertices", "holes"},
    "sector": {"alpha", "radius"},
    "filleted_polygon": {"vertices", "epsilon", "fillet_scale"},
    "model_region": {"alpha", "fillet_scale", "radius"},
}


def parse_domain(obj) -> DomainSpec:
    """Build a domain from a JSON object, JSON text, or path to a JSON file.

    Unknown fields, and fields not meaningful for the given ``type``, are
    rejected.  A ``model_region`` with a ``radius`` is truncated at that radius.
    """
    if isinstance(obj, (str, Path)):
        p = Path(obj)
        text = p.read_text() if p.suffix == ".json" or p.exists() else str(obj)
        obj = json.loads(text)
    if not isinstance(obj, dict):
        raise GeometryError("domain spec must be a JSON object")
    unknown = set(obj) - _DOMAIN_FIELDS
    if unknown:
        raise GeometryError(f"unknown domain fields: {sorted(unknown)}")
    kind = obj.get("type")
    if kind not in _REQUIRED:
        raise GeometryError(f"domain type must be one of {sorted(_REQUIRED)}, got {kind!r}")
    fields = set(obj) - {"type"}
    missing = _REQUIRED[kind] - fields
    if missing:
        raise GeometryError(f"{kind}: missing fields {sorted(missing)}")
    extra = fields - _ALLOWED[kind]
    if extra:
        raise GeometryError(f"{kind}: fields {sorted(extra)} do not apply")
    if kind == "polygon":
        return PolygonDomain(np.asarray(obj["vertices"], float),
                             tuple(np.asarray(h, float) for h in obj.get("holes", ())))
    if kind == "sector":
        return SectorDomain(float(obj["alpha"]), float(obj.get("radius", 1.0)))
    if kind == "filleted_polygon":
        return FilletedPolygon(PolygonDomain(np.asarray(obj["vertices"], float)),
                               float(obj["epsilon"]), float(obj.get("fillet_scale", 0.25)))
    m = model_region(float(obj["alpha"]), float(obj.get("fillet_scale", 0.25)))
    if "radius" in obj:
        return TruncatedModelRegion(m, float(obj["radius"]))
    return m


def domain_to_dict(d: DomainSpec) -> dict:
    if isinstance(d, PolygonDomain):
        out = {"type": "polygon", "vertices": d.vertices.tolist()}
        if d.holes:
            out["holes"] = [h.tolist() for h in d.holes]
        return out
    if isinstance(d, SectorDomain):
        return {"type": "sector", "alpha": d.alpha, "radius": d.radius}
    if isinstance(d, FilletedPolygon):
        return {"type": "filleted_polygon", "vertices": d.base.vertices.tolist(),
                "epsilon": d.epsilon, "fillet_scale": d.fillet_scale}
    if isinstance(d, ModelRegion):
        return {"type": "model_region", "alpha": d.alpha, "fillet_scale": d.tangency}
    if isinstance(d, TruncatedModelRegion):
        return {"type": "model_region", "alpha": d.model.alpha,
                "fillet_scale": d.model.tangency, "radius": d.radius}
    raise TypeError(f"unsupported domain {type(d).__name__}")


NAMED_DOMAINS = {
    "square": unit_square,
    "triangle": equilateral_triangle,
    "lshape": l_shape,
}


def named_domain(name: str) -> PolygonDomain:
    try:
        return NAMED_DOMAINS[name]()
    except KeyError:
        raise GeometryError(f"unknown named domain {name!r}; choose from {sorted(NAMED_DOMAINS)}") from None
