"""Conforming triangulations for P1 finite elements.

Boundaries are discretized up front (arcs by chords, graded by a size
field) and handed to Triangle with Steiner points on segments prohibited, so
two meshes built from the same boundary piece share identical interface
vertices.  That property is what lets separately meshed pieces be glued into
composite meshes whose outer parts are bit-for-bit identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import triangle
from scipy.spatial import cKDTree

from . import geometry as geo
from .geometry import Arc, Segment

TAG_PHYSICAL = 1
TAG_ARTIFICIAL = 2
TAG_INTERFACE = 3
TAG_NAMES = {TAG_PHYSICAL: "physical", TAG_ARTIFICIAL: "artificial", TAG_INTERFACE: "interface"}
TAG_CODES = {v: k for k, v in TAG_NAMES.items()}

MIN_ARC_CHORDS = 8
FORMAT_HEADER = "# cornerheat-mesh 1"

SizeFunction = Callable[[np.ndarray], np.ndarray]


class MeshError(ValueError):
    pass


@dataclass(eq=False)
class TriangleMesh:
    """P1 triangulation with tagged boundary edges.

    Attributes
    ----------
    points : (n, 2) float array
    triangles : (m, 3) int array, counterclockwise
    boundary_edges : (k, 2) int array
    edge_tags : (k,) int array of TAG_* codes
    h : float
        Nominal far-field target size.
    regions : (m,) int array
        Piece index for composite meshes, 0 otherwise.
    """

    points: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    h: float
    regions: np.ndarray = None

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.boundary_edges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.edge_tags = np.asarray(self.edge_tags, dtype=np.int64).ravel()
        if self.regions is None:
            self.regions = np.zeros(len(self.triangles), dtype=np.int64)
        self.regions = np.asarray(self.regions, dtype=np.int64)

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    @property
    def vertex_markers(self) -> np.ndarray:
        """0 interior, 1 on physical boundary, 2 on artificial boundary.

        A vertex touching both kinds is marked artificial, because the
        artificial boundary is always Dirichlet.
        """
        mk = np.zeros(self.n_vertices, dtype=np.int64)
        for tag in (TAG_PHYSICAL, TAG_ARTIFICIAL):
            idx = self.boundary_edges[self.edge_tags == tag].ravel()
            mk[idx] = tag
        return mk

    def triangle_areas(self) -> np.ndarray:
        p = self.points[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.points[self.triangles].mean(axis=1)

    @property
    def area(self) -> float:
        return float(self.triangle_areas().sum())


# ---------------------------------------------------------------------------
# size fields

def feature_size_field(h: float, grading: float, features: np.ndarray | None,
                       slope: float = 0.3) -> SizeFunction:
    """Radial size field ``clip(h/grading + slope * dist, h/grading, h)``.

    ``features`` is an array of points (corner vertices and samples along
    fillet arcs); distances are to the nearest of them.
    """
    if h <= 0:
        raise MeshError("target size h must be positive")
    if grading < 1:
        raise MeshError("grading must be >= 1")
    h_near = h / grading
    if features is None or len(features) == 0 or grading == 1:
        return lambda z: np.full(len(np.atleast_2d(z)), float(h))
    tree = cKDTree(np.asarray(features, float))

    def size(z):
        dist, _ = tree.query(np.atleast_2d(z))
        return np.clip(h_near + slope * dist, h_near, h)

    return size


def domain_features(d) -> np.ndarray:
    """Points where a domain needs a finer mesh: corners and fillet arcs."""
    pts = []
    if isinstance(d, geo.PolygonDomain):
        pts.append(d.vertices)
        pts.extend(d.holes)
    elif isinstance(d, geo.SectorDomain):
        pts.append(np.zeros((1, 2)))
    elif isinstance(d, geo.FilletedPolygon):
        for (p, _, _, _), f in zip(d.base.corners(), d.fillets):
            if f is None:
                pts.append(np.atleast_2d(p))
            else:
                pts.append(f.arc().point(np.linspace(0, 1, 33)))
    elif isinstance(d, geo.TruncatedModelRegion):
        f = d.model.fillet
        pts.append(np.zeros((1, 2)) if f is None else f.arc().point(np.linspace(0, 1, 33)))
    return np.concatenate(pts) if pts else np.zeros((0, 2))


# ---------------------------------------------------------------------------
# boundary discretization

def _canonical(piece):
    """Return (piece in canonical direction, reversed flag).

    Discretizing in a canonical direction makes the vertices of a shared
    interface identical no matter which side traverses it.
    """
    if isinstance(piece, Arc):
        if piece.sweep >= 0:
            return piece, False
        return Arc(piece.center, piece.radius, piece.start + piece.sweep, -piece.sweep, piece.tag), True
    if tuple(piece.start) <= tuple(piece.end):
        return piece, False
    return Segment(piece.end, piece.start, piece.tag), True


def piece_parameters(piece, size: SizeFunction, min_chords: int = 1):
    """Canonical-direction parameters 0 = s_0 < ... < s_n = 1 following ``size``.

    The count is ``ceil(int ds / h)`` and points are placed by inverting the
    cumulative integral, so the chord lengths track the size field.  Returns
    the parameters, the canonical piece and whether it was reversed.
    """
    can, rev = _canonical(piece)
    s = np.linspace(0.0, 1.0, 401)
    dens = can.length / size(can.point(s))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(s))])
    n = max(min_chords, int(math.ceil(cum[-1] - 1e-9)))
    params = np.interp(np.linspace(0.0, cum[-1], n + 1), cum, s)
    params[0], params[-1] = 0.0, 1.0
    return params, can, rev


def discretize_piece(piece, size: SizeFunction, min_chords: int = 1) -> np.ndarray:
    """Points along a piece from its start to its end (both included)."""
    params, can, rev = piece_parameters(piece, size, min_chords)
    pts = can.point(params)
    return pts[::-1] if rev else pts


def _arc_min_chords(piece) -> int:
    if isinstance(piece, Arc) and piece.tag == "physical":
        return MIN_ARC_CHORDS
    if isinstance(piece, Arc):
        # artificial and interface arcs: keep the chord angle below pi/16
        return max(2, int(math.ceil(abs(piece.sweep) / (math.pi / 16))))
    return 1


def discretize_loops(loops: Sequence, size: SizeFunction):
    """Vertices, segments and segment tags for a list of closed loops."""
    verts, segs, tags = [], [], []
    for loop in loops:
        base = len(verts)
        count = 0
        for piece in loop:
            pts = discretize_piece(piece, size, _arc_min_chords(piece))
            code = TAG_CODES[piece.tag]
            for k in range(len(pts) - 1):
                verts.append(pts[k])
                segs.append((base + count, base + count + 1))
                tags.append(code)
                count += 1
        # close the loop onto its first vertex
        segs[-1] = (segs[-1][0], base)
    return np.array(verts), np.array(segs, dtype=np.int64), np.array(tags, dtype=np.int64)


def _interior_point(poly: np.ndarray) -> np.ndarray:
    """A point strictly inside a simple polygon (used to seed holes)."""
    t = triangle.triangulate({"vertices": poly,
                              "segments": np.c_[np.arange(len(poly)), (np.arange(len(poly)) + 1) % len(poly)]},
                             "p")
    tri = t["triangles"]
    areas = np.abs(_tri_areas(t["vertices"], tri))
    return t["vertices"][tri[np.argmax(areas)]].mean(axis=0)


# ---------------------------------------------------------------------------
# triangulation

def _boundary_from_triangles(tris: np.ndarray):
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    key = np.sort(e, axis=1)
    uniq, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    if cnt.max() > 2:
        raise MeshError("non-manifold mesh: an edge is shared by more than two triangles")
    once = cnt[inv.ravel()] == 1
    return e[once]


def mesh_loops(loops: Sequence, size: SizeFunction, h: float, holes: Sequence = (),
               min_angle: float = 30.0, area_factor: float = 0.25, boundary_factor: float = 0.7,
               max_passes: int = 40,
               region: int = 0) -> TriangleMesh:
    """Quality triangulation of the region bounded by ``loops``.

    Each triangle ends with area at most ``area_factor * size(centroid)^2``;
    with the 30 degree angle bound that keeps every edge below the local size.
    """
    # boundary chords a bit shorter than the local size, so boundary triangles
    # can meet the area target without Steiner points on the segments
    verts, segs, tags = discretize_loops(loops, lambda z: boundary_factor * size(z))
    data = {"vertices": verts, "segments": segs, "segment_markers": tags[:, None]}
    if len(holes):
        data["holes"] = np.asarray(holes, float)
    amax = area_factor * float(np.max(size(verts))) ** 2
    opts = f"pq{min_angle:g}YYa{amax:.17g}"
    t = triangle.triangulate(data, opts)
    for _ in range(max_passes):
        pts, tri = t["vertices"], t["triangles"]
        c = pts[tri].mean(axis=1)
        target = area_factor * size(c) ** 2
        ar = np.abs(_tri_areas(pts, tri))
        if np.all(ar <= target * (1 + 1e-9)):
            break
        t["triangle_max_area"] = target
        t = triangle.triangulate(t, f"rpq{min_angle:g}YYa")
    else:
        raise MeshError("size-field refinement did not converge")
    pts, tri = t["vertices"], np.asarray(t["triangles"], dtype=np.int64)
    if len(pts) < len(verts) or not np.array_equal(pts[: len(verts)], verts):
        raise MeshError("mesher moved boundary vertices")
    tri = _orient(pts, tri)
    # tags of the final boundary edges come from the input segments
    seg_tag = {tuple(sorted(s)): int(g) for s, g in zip(segs, tags)}
    bedges = _boundary_from_triangles(tri)
    btags = np.empty(len(bedges), dtype=np.int64)
    for i, e in enumerate(bedges):
        k = tuple(sorted(e))
        if k not in seg_tag:
            raise MeshError("boundary edge without a tag (Steiner point on boundary?)")
        btags[i] = seg_tag[k]
    # drop unused vertices (Triangle can leave orphans after hole carving)
    used = np.zeros(len(pts), bool)
    used[tri.ravel()] = True
    if not used.all():
        remap = -np.ones(len(pts), dtype=np.int64)
        remap[used] = np.arange(used.sum())
        pts, tri, bedges = pts[used], remap[tri], remap[bedges]
    return TriangleMesh(pts, tri, bedges, btags, h, np.full(len(tri), region, dtype=np.int64))


def _tri_areas(pts, tri):
    p = pts[tri]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _orient(pts, tri):
    cr = _tri_areas(pts, tri)
    tri = tri.copy()
    neg = cr < 0
    tri[neg] = tri[neg][:, [0, 2, 1]]
    return tri


def triangulate(d, h: float, grading: float = 1.0, size: SizeFunction | None = None,
                min_angle: float = 30.0) -> TriangleMesh:
    """Triangulate a domain with a corner-graded size field.

    Parameters
    ----------
    d : DomainSpec
    h : float
        Far-field target edge length.
    grading : float
        Ratio of far-field to near-feature size (>= 1).
    size : callable, optional
        Custom size field overriding the radial default.

    Raises
    ------
    MeshError
        If a fillet arc would receive fewer than 8 chords at the local size.
    """
    if size is None:
        size = feature_size_field(h, grading, domain_features(d))
    loops = geo.boundary_loops(d)
    for loop in loops:
        for piece in loop:
            if isinstance(piece, Arc) and piece.tag == "physical" and not isinstance(d, geo.SectorDomain):
                hl = float(np.max(size(piece.point(np.linspace(0, 1, 17)))))
                if piece.length / hl < MIN_ARC_CHORDS - 1e-9:
                    raise MeshError(
                        f"h too coarse for a fillet of radius {piece.radius:.4g}: local size {hl:.4g} "
                        f"gives {piece.length / hl:.1f} < {MIN_ARC_CHORDS} chords; "
                        "reduce h or raise grading")
    holes = []
    if isinstance(d, geo.PolygonDomain):
        holes = [_interior_point(hv) for hv in d.holes]
    return mesh_loops(loops, size, h, holes=holes, min_angle=min_angle)


# ---------------------------------------------------------------------------
# statistics and audits

def edge_audit(m: TriangleMesh) -> dict:
    """Conformity audit by edge hashing."""
    t = m.triangles
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    uniq, cnt = np.unique(e, axis=0, return_counts=True)
    b = {tuple(x) for x in np.sort(m.boundary_edges, axis=1)}
    once = {tuple(x) for x in uniq[cnt == 1]}
    return {
        "max_edge_multiplicity": int(cnt.max()),
        "boundary_matches": once == b,
        "n_edges": len(uniq),
        "positively_oriented": bool(np.all(m.triangle_areas() > 0)),
    }


def mesh_statistics(m: TriangleMesh) -> dict:
    """Quality report: angles in degrees, edge lengths, counts and area."""
    p = m.points[m.triangles]
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    cos_a = np.clip((b ** 2 + c ** 2 - a ** 2) / (2 * b * c), -1, 1)
    cos_b = np.clip((a ** 2 + c ** 2 - b ** 2) / (2 * a * c), -1, 1)
    ang_a, ang_b = np.arccos(cos_a), np.arccos(cos_b)
    angles = np.degrees(np.stack([ang_a, ang_b, math.pi - ang_a - ang_b], axis=1))
    edges = np.concatenate([a, b, c])
    return {
        "n_vertices": int(m.n_vertices),
        "n_triangles": int(len(m.triangles)),
        "n_boundary_edges": int(len(m.boundary_edges)),
        "n_physical_edges": int(np.sum(m.edge_tags == TAG_PHYSICAL)),
        "n_artificial_edges": int(np.sum(m.edge_tags == TAG_ARTIFICIAL)),
        "min_angle": float(angles.min()),
        "max_angle": float(angles.max()),
        "h_max": float(edges.max()),
        "h_min": float(edges.min()),
        "area": m.area,
    }


# ---------------------------------------------------------------------------
# composite meshes

def transform(m: TriangleMesh, scale: float = 1.0, rotation: float = 0.0,
              shift=(0.0, 0.0)) -> TriangleMesh:
    """Similarity image ``shift + scale * R(rotation) x`` of a mesh."""
    c, s = math.cos(rotation), math.sin(rotation)
    q = np.array([[c, -s], [s, c]])
    pts = scale * m.points @ q.T + np.asarray(shift, float)
    return TriangleMesh(pts, m.triangles.copy(), m.boundary_edges.copy(), m.edge_tags.copy(),
                        m.h * scale, m.regions.copy())


def merge(meshes: Sequence[TriangleMesh], tol: float = 1e-9, h: float | None = None) -> TriangleMesh:
    """Glue meshes along coincident interface vertices.

    Vertices closer than ``tol`` are identified (the first copy wins).
    Boundary edges shared by two pieces become interior; an interface-tagged
    edge left on the boundary is an error.
    """
    pts = np.concatenate([mm.points for mm in meshes])
    offsets = np.cumsum([0] + [mm.n_vertices for mm in meshes])
    tree = cKDTree(pts)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    rep = np.arange(len(pts))
    if len(pairs):
        # union-find to the smallest index in each cluster
        def find(i):
            while rep[i] != i:
                rep[i] = rep[rep[i]]
                i = rep[i]
            return i
        for i, j in pairs:
            ri, rj = find(i), find(j)
            if ri != rj:
                rep[max(ri, rj)] = min(ri, rj)
        rep = np.array([find(i) for i in range(len(pts))])
    keep = rep == np.arange(len(pts))
    newidx = -np.ones(len(pts), dtype=np.int64)
    newidx[keep] = np.arange(keep.sum())
    newidx = newidx[rep]
    tris = np.concatenate([newidx[mm.triangles + o] for mm, o in zip(meshes, offsets)])
    regions = np.concatenate([mm.regions for mm in meshes])
    be = np.concatenate([newidx[mm.boundary_edges + o] for mm, o in zip(meshes, offsets)])
    bt = np.concatenate([mm.edge_tags for mm in meshes])
    key = np.sort(be, axis=1)
    uniq, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if cnt.max() > 2:
        raise MeshError("merged pieces overlap along an edge")
    outer = cnt[inv] == 1
    if np.any(bt[outer] == TAG_INTERFACE):
        raise MeshError("interface edge left unmatched after merge")
    hh = h if h is not None else max(mm.h for mm in meshes)
    return TriangleMesh(pts[keep], tris, be[outer], bt[outer], hh, regions)


def sector_loop(alpha: float, radius: float, outer_tag: str = "artificial") -> list:
    """Boundary of the sector {0 < theta < alpha, r < radius}."""
    far = (radius * math.cos(alpha), radius * math.sin(alpha))
    return [Arc((0.0, 0.0), radius, 0.0, alpha, outer_tag), Segment(far, (0.0, 0.0)),
            Segment((0.0, 0.0), (radius, 0.0))]


def annulus_sector_loop(alpha: float, r_in: float, r_out: float, outer_tag: str = "artificial",
                        inner_tag: str = "interface") -> list:
    """Boundary of {r_in < r < r_out, 0 < theta < alpha}."""
    ca, sa = math.cos(alpha), math.sin(alpha)
    return [Segment((r_in, 0.0), (r_out, 0.0)),
            Arc((0.0, 0.0), r_out, 0.0, alpha, outer_tag),
            Segment((r_out * ca, r_out * sa), (r_in * ca, r_in * sa)),
            Arc((0.0, 0.0), r_in, alpha, -alpha, inner_tag)]


def core_loop(alpha: float, radius: float, model: geo.ModelRegion | None) -> list:
    """Boundary of the core piece (model region or sector) inside |w| < radius."""
    if model is None:
        return sector_loop(alpha, radius, "interface")
    return geo.truncated_model_loop(model, radius, "interface")


def polygon_without_corners_loop(poly: geo.PolygonDomain, rho: float) -> list:
    """Boundary of a polygon with the ball of radius ``rho`` at every corner removed."""
    pieces = []
    corners = poly.corners()
    n = len(corners)
    for i in range(n):
        p, u1, u2, a = corners[i]
        q, v1, _, _ = corners[(i + 1) % n]
        phi1 = math.atan2(u1[1], u1[0])
        pieces.append(Arc(tuple(p), rho, phi1, -a, "interface"))
        pieces.append(Segment(tuple(p + rho * u2), tuple(q + rho * v1)))
    return pieces


def corner_frame(u_next) -> float:
    """Rotation taking the model edge theta = 0 onto the outgoing edge direction."""
    return math.atan2(u_next[1], u_next[0])


# ---------------------------------------------------------------------------
# text export/import

def export_mesh(m: TriangleMesh, path) -> None:
    """Write the plain-text mesh format (see ``import_mesh``)."""
    lines = [FORMAT_HEADER, f"h {m.h!r}", f"$vertices {m.n_vertices}"]
    mk = m.vertex_markers
    lines += [f"{x!r} {y!r} {k}" for (x, y), k in zip(m.points.tolist(), mk.tolist())]
    lines.append(f"$triangles {len(m.triangles)}")
    lines += [f"{a} {b} {c} {r}" for (a, b, c), r in zip(m.triangles.tolist(), m.regions.tolist())]
    lines.append(f"$boundary {len(m.boundary_edges)}")
    lines += [f"{a} {b} {TAG_NAMES[t]}" for (a, b), t in zip(m.boundary_edges.tolist(), m.edge_tags.tolist())]
    lines.append("$end")
    from .io import atomic_write_text
    atomic_write_text(path, "\n".join(lines) + "\n")


def import_mesh(path) -> TriangleMesh:
    """Read a mesh written by ``export_mesh``.

    Layout::

        # cornerheat-mesh 1
        h <float>
        $vertices N      then N lines "x y marker"
        $triangles M     then M lines "i j k region"
        $boundary K      then K lines "i j tag"   (tag: physical|artificial|interface)
        $end
    """
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise MeshError("not a cornerheat mesh file (bad or unsupported header)")
    h = float(lines[1].split()[1])
    i = 2

    def section(name):
        nonlocal i
        head = lines[i].split()
        if head[0] != name:
            raise MeshError(f"expected section {name}, found {head[0]}")
        n = int(head[1])
        body = [ln.split() for ln in lines[i + 1:i + 1 + n]]
        i += n + 1
        return body

    v = section("$vertices")
    t = section("$triangles")
    b = section("$boundary")
    pts = np.array([[float(x), float(y)] for x, y, _ in v]).reshape(-1, 2)
    tri = np.array([[int(a), int(bb), int(c)] for a, bb, c, _ in t], dtype=np.int64).reshape(-1, 3)
    reg = np.array([int(r[3]) for r in t], dtype=np.int64)
    be = np.array([[int(x), int(y)] for x, y, _ in b], dtype=np.int64).reshape(-1, 2)
    bt = np.array([TAG_CODES[g] for _, _, g in b], dtype=np.int64)
    return TriangleMesh(pts, tri, be, bt, h, reg)
