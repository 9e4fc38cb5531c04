"""Meshes assembled from separately meshed pieces that share interfaces.

Two meshes built from the same pieces except near a corner carry identical
discretizations away from it, so their difference isolates the corner.
This is the basis of the localized (control variate) trace computations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import mesh as msh
from .geometry import Arc, Segment
from .mesh import TAG_ARTIFICIAL, TAG_PHYSICAL, TriangleMesh

FEATURE_SAMPLES = 33


def _size_for(features, h, h_near):
    return msh.feature_size_field(h, max(1.0, h / h_near), features)


# ---------------------------------------------------------------------------
# model region pieces (scaled coordinates)

@dataclass(eq=False)
class ModelPair:
    """Matching meshes of a truncated model region and its sector.

    ``radii`` are the piece radii r_0 < ... < r_n; triangles of region k lie
    in r_{k-1} < |x| < r_k (region 0 is the core |x| < r_0).
    """

    alpha: float
    tangency: float
    radii: np.ndarray
    model: TriangleMesh
    sector: TriangleMesh
    h: float
    h_near: float
    meta: dict = field(default_factory=dict)

    def region_mask(self, m: TriangleMesh, radius: float) -> np.ndarray:
        k = int(np.flatnonzero(np.isclose(self.radii, radius, rtol=1e-12, atol=0))[0])
        return m.regions <= k


def model_pair(alpha: float, tangency: float, radii, h: float, h_near: float) -> ModelPair:
    """Build model-region and sector meshes on the same annular pieces.

    Parameters
    ----------
    alpha : float
        Sector angle.
    tangency : float
        Fillet tangency distance in the mesh coordinates.
    radii : sequence of float
        Increasing piece radii; the first bounds the core and must exceed
        the tangency distance by 10%, the last is the artificial boundary.
    h, h_near : float
        Bulk mesh size and the size at the fillet and vertex.
    """
    radii = np.asarray(radii, float)
    if np.any(np.diff(radii) <= 0):
        raise ValueError("piece radii must increase")
    if radii[0] < 1.1 * tangency:
        raise ValueError("core radius must exceed the tangency distance by 10%")
    model = geo.ModelRegion(alpha, tangency)
    f = model.fillet
    feats = [np.zeros((1, 2))]
    if f is not None:
        feats.append(f.arc().point(np.linspace(0, 1, FEATURE_SAMPLES)))
        h_near = min(h_near, f.length / (msh.MIN_ARC_CHORDS + 2))
    size = _size_for(np.concatenate(feats), h, h_near)
    core_z = msh.mesh_loops([geo.truncated_model_loop(model, radii[0], "interface")], size, h, region=0)
    core_s = msh.mesh_loops([msh.sector_loop(alpha, radii[0], "interface")], size, h, region=0)
    rings = []
    for k in range(1, len(radii)):
        tag = "artificial" if k == len(radii) - 1 else "interface"
        rings.append(msh.mesh_loops([msh.annulus_sector_loop(alpha, radii[k - 1], radii[k], tag)],
                                    size, h, region=k))
    mz = msh.merge([core_z] + rings, h=h)
    ms = msh.merge([core_s] + rings, h=h)
    return ModelPair(alpha, tangency, radii, mz, ms, h, h_near,
                     {"core_vertices_model": core_z.n_vertices, "core_vertices_sector": core_s.n_vertices})


# ---------------------------------------------------------------------------
# polygon pieces (world coordinates)

def fillet_core_loop(p, u1, u2, alpha, rho, fillet) -> list:
    """Boundary of Omega_eps ∩ B(p, rho) near a rounded corner."""
    p = np.asarray(p, float)
    a2 = math.atan2(u2[1], u2[0])
    out = tuple(p + rho * np.asarray(u2))
    back = tuple(p + rho * np.asarray(u1))
    pieces = [Arc(tuple(p), rho, a2, alpha, "interface")]
    if fillet is None:
        return pieces + [Segment(back, tuple(p)), Segment(tuple(p), out)]
    return pieces + [Segment(back, fillet.t_prev), fillet.arc(), Segment(fillet.t_next, out)]


def corner_ring_loop(p, u1, u2, alpha, r_in, r_out) -> list:
    """Boundary of {r_in < |z - p| < r_out} inside the corner at p."""
    p = np.asarray(p, float)
    u1, u2 = np.asarray(u1, float), np.asarray(u2, float)
    a2 = math.atan2(u2[1], u2[0])
    return [Segment(tuple(p + r_in * u2), tuple(p + r_out * u2)),
            Arc(tuple(p), r_out, a2, alpha, "interface"),
            Segment(tuple(p + r_out * u1), tuple(p + r_in * u1)),
            Arc(tuple(p), r_in, a2 + alpha, -alpha, "interface")]


@dataclass(eq=False)
class CornerDecomposition:
    """Pieces of a polygon split at corner balls of radius ``rho``.

    Region 0 is Omega' (the polygon minus the balls); region j + 1 is the
    ball at corner j.  Each ball is an inner core of radius ``rho_in``
    (rounded in ``fillet_cores``, sharp in ``sector_cores``) surrounded by a
    shared ring, so meshes with and without a fillet differ only inside the
    inner core.
    """

    poly: geo.PolygonDomain
    epsilon: float
    rho: float
    rho_in: float
    far: TriangleMesh
    fillet_cores: list
    sector_cores: list
    rings: list
    h: float
    h_near: float

    def _assemble(self, cores) -> TriangleMesh:
        return msh.merge([self.far] + self.rings + list(cores), h=self.h)

    def rounded(self) -> TriangleMesh:
        """Mesh of Omega_eps."""
        return self._assemble(self.fillet_cores)

    def sharp(self) -> TriangleMesh:
        """Mesh of Omega_0 with the same Omega' piece and rings."""
        return self._assemble(self.sector_cores)

    def corner_model(self, j: int) -> TriangleMesh:
        """Omega_0 with only corner j rounded and the edges away from it artificial.

        Near corner j this coincides with eps Z_j; the edges not meeting
        corner j carry the artificial Dirichlet truncation.
        """
        cores = [self.fillet_cores[k] if k == j else self.sector_cores[k]
                 for k in range(len(self.sector_cores))]
        m = self._assemble(cores)
        n = len(self.poly.vertices)
        keep = {(j - 1) % n, j}  # edge i runs from vertex i to vertex i + 1
        return retag_polygon_edges(m, self.poly, keep)


def retag_polygon_edges(m: TriangleMesh, poly: geo.PolygonDomain, physical_edges) -> TriangleMesh:
    """Tag boundary edges on polygon edges outside ``physical_edges`` as artificial."""
    v = poly.vertices
    n = len(v)
    mid = m.points[m.boundary_edges].mean(axis=1)
    tags = m.edge_tags.copy()
    scale = float(np.max(np.ptp(v, axis=0)))
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        d = b - a
        s = np.clip(((mid - a) @ d) / (d @ d), 0.0, 1.0)
        dist = np.hypot(*(mid - (a + s[:, None] * d)).T)
        on = dist < 1e-9 * scale
        tags[on] = TAG_PHYSICAL if i in physical_edges else TAG_ARTIFICIAL
    return TriangleMesh(m.points, m.triangles, m.boundary_edges, tags, m.h, m.regions)


def corner_decomposition(poly: geo.PolygonDomain, epsilon: float, rho: float, h: float,
                         h_near: float | None = None, fillet_scale: float = 0.25,
                         inner_factor: float = 1.2) -> CornerDecomposition:
    """Mesh Omega', the corner rings and the rounded and sharp inner cores.

    All pieces use one size field; the inner cores have radius
    ``inner_factor`` times the fillet tangency distance.
    """
    fp = geo.FilletedPolygon(poly, epsilon, fillet_scale)
    corners = poly.corners()
    v = poly.vertices
    edges = np.hypot(*(np.roll(v, -1, axis=0) - v).T)
    if 2 * rho >= edges.min():
        raise ValueError("corner balls overlap: rho must be below half the shortest edge")
    rho_in = inner_factor * fp.tangency
    if inner_factor <= 1.0 or rho <= 1.5 * rho_in:
        raise ValueError("corner balls must contain the fillets with room for a ring")
    fillets = fp.fillets
    feats = [v]
    arcs = []
    for f in fillets:
        if f is not None:
            feats.append(f.arc().point(np.linspace(0, 1, FEATURE_SAMPLES)))
            arcs.append(f.length)
    if h_near is None:
        h_near = h / 4
    if arcs:
        h_near = min(h_near, min(arcs) / (msh.MIN_ARC_CHORDS + 2))
    size = _size_for(np.concatenate(feats), h, h_near)
    far = msh.mesh_loops([msh.polygon_without_corners_loop(poly, rho)], size, h, region=0)
    fc, sc, rings = [], [], []
    for j, ((p, u1, u2, a), f) in enumerate(zip(corners, fillets)):
        rings.append(msh.mesh_loops([corner_ring_loop(p, u1, u2, a, rho_in, rho)], size, h, region=j + 1))
        fc.append(msh.mesh_loops([fillet_core_loop(p, u1, u2, a, rho_in, f)], size, h, region=j + 1))
        sc.append(msh.mesh_loops([fillet_core_loop(p, u1, u2, a, rho_in, None)], size, h, region=j + 1))
    return CornerDecomposition(poly, epsilon, rho, rho_in, far, fc, sc, rings, h, h_near)
