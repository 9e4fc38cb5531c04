"""P1 finite elements and a certified partial generalized eigensolver.

The eigensolver sweeps shift-invert Lanczos windows upward from below the
spectrum.  Every shift is factored once with a symmetric-mode LU; the
factor serves both as the shift-invert operator and, via Sylvester's law of
inertia, as an exact count of the eigenvalues below the shift.  A sweep is
accepted only if those counts agree with what the windows returned.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .io import atomic_write_text, read_csv, write_csv, write_json
from .mesh import TAG_ARTIFICIAL, TriangleMesh

log = logging.getLogger(__name__)

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


class SolverError(RuntimeError):
    """Eigensolver failed to converge or to certify its eigenvalue count."""


def normalize_bc(bc: str) -> str:
    b = str(bc).strip().lower()
    if b in ("d", "dirichlet"):
        return DIRICHLET
    if b in ("n", "neumann"):
        return NEUMANN
    raise ValueError(f"boundary condition must be dirichlet or neumann, got {bc!r}")


# ---------------------------------------------------------------------------
# assembly

@dataclass(eq=False)
class FEMSystem:
    """Stiffness and mass restricted to the free degrees of freedom."""

    stiffness: sp.csc_matrix
    mass: sp.csc_matrix
    free: np.ndarray
    mesh: TriangleMesh
    bc: str

    @property
    def n(self) -> int:
        return len(self.free)

    def reduce(self, a: sp.spmatrix) -> sp.csc_matrix:
        """Restrict a full-size matrix to the free degrees of freedom."""
        a = sp.csr_matrix(a)
        return a[self.free][:, self.free].tocsc()

    def expand(self, vecs: np.ndarray) -> np.ndarray:
        """Full-size nodal vectors, zero on eliminated vertices."""
        vecs = np.asarray(vecs)
        out = np.zeros((self.mesh.n_vertices,) + vecs.shape[1:], dtype=vecs.dtype)
        out[self.free] = vecs
        return out


def _element_data(m: TriangleMesh):
    p = m.points[m.triangles]
    # edge vectors opposite each vertex
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    area = 0.5 * (e2[:, 0] * (-e1[:, 1]) - e2[:, 1] * (-e1[:, 0]))
    if np.any(area <= 0):
        raise ValueError("mesh has non-positively oriented triangles")
    e = np.stack([e0, e1, e2], axis=1)
    # grad(phi_i) . grad(phi_j) = (e_i . e_j) / (4 A^2); times A
    kloc = np.einsum("tik,tjk->tij", e, e) / (4.0 * area)[:, None, None]
    return area, kloc


_MLOC = (np.ones((3, 3)) + np.eye(3)) / 12.0


def _scatter(m: TriangleMesh, loc: np.ndarray, mask=None) -> sp.csr_matrix:
    t = m.triangles
    if mask is not None:
        t, loc = t[mask], loc[mask]
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = m.n_vertices
    a = sp.coo_matrix((loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    return a


def full_matrices(m: TriangleMesh, mask: Optional[np.ndarray] = None):
    """Unconstrained P1 stiffness and consistent mass over all vertices.

    With ``mask`` only the selected triangles contribute.
    """
    area, kloc = _element_data(m)
    mloc = area[:, None, None] * _MLOC[None]
    return _scatter(m, kloc, mask), _scatter(m, mloc, mask)


def assemble(m: TriangleMesh, bc: str = DIRICHLET) -> FEMSystem:
    """Assemble P1 stiffness and mass with boundary conditions applied.

    Dirichlet eliminates every boundary vertex; Neumann eliminates only
    vertices on the artificial truncation boundary, which is always
    Dirichlet.
    """
    bc = normalize_bc(bc)
    if len(m.boundary_edges) != len(m.edge_tags) or np.any(m.edge_tags <= 0):
        raise ValueError("mesh has untagged boundary edges")
    k, mm = full_matrices(m)
    markers = m.vertex_markers
    if bc == DIRICHLET:
        fixed = markers > 0
    else:
        fixed = markers == TAG_ARTIFICIAL
    free = np.flatnonzero(~fixed)
    sysm = FEMSystem(None, None, free, m, bc)
    sysm.stiffness = sysm.reduce(k)
    sysm.mass = sysm.reduce(mm)
    return sysm


def restricted_mass(m: TriangleMesh, radius: float, center=(0.0, 0.0)) -> sp.csr_matrix:
    """Full-size mass matrix over triangles with centroid within ``radius`` of ``center``."""
    c = m.centroids() - np.asarray(center, float)
    return restricted_mass_mask(m, np.hypot(c[:, 0], c[:, 1]) <= radius)


def restricted_mass_mask(m: TriangleMesh, mask: np.ndarray) -> sp.csr_matrix:
    area, _ = _element_data(m)
    mloc = area[:, None, None] * _MLOC[None]
    return _scatter(m, mloc, np.asarray(mask, bool))


# ---------------------------------------------------------------------------
# spectrum container

@dataclass(eq=False)
class Spectrum:
    """Nondecreasing eigenvalues with provenance.

    ``lambda_max`` is the completeness threshold: every eigenvalue at or
    below it is present.  ``vectors`` (if kept) are mass-orthonormal over the
    free degrees of freedom of the originating FEMSystem.
    """

    bc: str
    eigenvalues: np.ndarray
    provenance: str
    lambda_max: float
    h: Optional[float] = None
    tol: Optional[float] = None
    vectors: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bc = normalize_bc(self.bc)
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        if self.eigenvalues.size and np.any(np.diff(self.eigenvalues) < 0):
            raise ValueError("eigenvalues must be nondecreasing")

    def __len__(self):
        return len(self.eigenvalues)

    def scaled(self, factor: float) -> "Spectrum":
        """Spectrum of the domain dilated by ``factor`` (eigenvalues / factor^2)."""
        return Spectrum(self.bc, self.eigenvalues / factor ** 2, self.provenance,
                        self.lambda_max / factor ** 2, None if self.h is None else self.h * factor,
                        self.tol, self.vectors, dict(self.meta))

    def metadata(self) -> dict:
        out = {"bc": self.bc, "provenance": self.provenance, "lambda_max": self.lambda_max,
               "h": self.h, "tol": self.tol, "count": len(self)}
        out.update(self.meta)
        return out

    def save(self, path) -> tuple:
        """Write ``<path>`` as CSV ``index,lambda`` and ``<path>.json`` metadata."""
        path = Path(path)
        write_csv(path, ["index", "lambda"], [(i + 1, float(v)) for i, v in enumerate(self.eigenvalues)])
        side = path.with_suffix(path.suffix + ".json")
        write_json(side, self.metadata())
        return path, side

    @classmethod
    def load(cls, path) -> "Spectrum":
        path = Path(path)
        header, rows = read_csv(path)
        if header != ["index", "lambda"]:
            raise ValueError(f"{path}: expected header index,lambda")
        vals = np.array([float(r[1]) for r in rows])
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        known = {k: meta.pop(k, None) for k in ("bc", "provenance", "lambda_max", "h", "tol", "count")}
        return cls(known["bc"], vals, known["provenance"], float(known["lambda_max"]),
                   known["h"], known["tol"], None, meta)


# ---------------------------------------------------------------------------
# eigensolver

def _factor(a: sp.csc_matrix):
    """Symmetric-mode LU without pivoting and the number of negative pivots.

    The negative count equals the inertia of ``a`` when no row pivoting
    occurred (then A = L D L^T up to the symmetric permutation).  Returns
    count None when pivoting broke the symmetric structure.
    """
    lu = spla.splu(a, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options={"SymmetricMode": True})
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return lu, None
    d = lu.U.diagonal()
    if np.any(d == 0) or not np.all(np.isfinite(d)):
        return lu, None
    return lu, int(np.count_nonzero(d < 0))


def count_below(k: sp.spmatrix, m: sp.spmatrix, shift: float) -> Optional[int]:
    """Number of generalized eigenvalues strictly below ``shift`` (None if uncertifiable)."""
    _, neg = _factor(sp.csc_matrix(k - shift * m))
    return neg


@dataclass
class SolveReport:
    windows: int = 0
    factorizations: int = 0
    retries: int = 0
    certified: bool = False
    max_residual: float = 0.0
    orthonormality: float = 0.0


def _dense_solve(k, m, lambda_max, want_vectors):
    w, v = sla.eigh(k.toarray(), m.toarray())
    sel = w <= lambda_max
    return w[sel], (v[:, sel] if want_vectors else None)


def solve_partial_spectrum(k: sp.spmatrix, m: sp.spmatrix, lambda_max: float, tol: float = 1e-9,
                           block: int = 80, return_vectors: bool = False, dense_limit: int = 1200,
                           bc: str = DIRICHLET, h: Optional[float] = None,
                           report: Optional[SolveReport] = None, seed: int = 12345) -> Spectrum:
    """All generalized eigenvalues of ``K x = lam M x`` up to ``lambda_max``.

    Parameters
    ----------
    k, m : sparse symmetric matrices
        Stiffness (positive semidefinite) and mass (positive definite).
    lambda_max : float
        Completeness threshold.
    tol : float
        Bound on the relative residual
        ``|K x - lam M x| / (|K x| + (|lam| + 1e-3 lambda_max) |M x|)``
        of each returned pair.
    block : int
        Eigenpairs requested per shift-invert window.

    Raises
    ------
    SolverError
        On non-convergence, failed residual checks, or an eigenvalue count
        that disagrees with the inertia at a shift.
    """
    if not lambda_max > 0:
        raise ValueError("lambda_max must be positive")
    rep = report if report is not None else SolveReport()
    k = sp.csc_matrix(k)
    m = sp.csc_matrix(m)
    n = k.shape[0]
    if n <= dense_limit:
        vals, vecs = _dense_solve(k, m, lambda_max, True)
        rep.certified = True
        _finish_checks(k, m, vals, vecs, tol, rep, lambda_max)
        return Spectrum(bc, vals, "fem", lambda_max, h, tol, vecs if return_vectors else None,
                        {"solver": "dense"})

    diag_scale = float(np.max(k.diagonal() / m.diagonal()))
    sigma = -max(1.0, 1e-3 * lambda_max)
    vals_acc: list = []
    vecs_acc: list = []
    rng = np.random.default_rng(seed)
    kk = min(block, n - 2)
    retries = 0
    while True:
        lu, neg = _factor(sp.csc_matrix(k - sigma * m))
        rep.factorizations += 1
        if neg is not None and neg != len(vals_acc):
            # a previous window missed eigenvalues below this shift
            raise SolverError(f"inertia at shift {sigma:.6g} counts {neg} eigenvalues "
                              f"but the sweep found {len(vals_acc)}")
        op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
        v0 = rng.standard_normal(n)
        try:
            w, v = spla.eigsh(k, k=kk, M=m, sigma=sigma, which="LA", OPinv=op, v0=v0,
                              tol=0.0, maxiter=max(1000, 20 * kk))
        except spla.ArpackNoConvergence as exc:
            if retries >= 3:
                raise SolverError(f"Lanczos window at shift {sigma:.6g} did not converge "
                                  f"({len(exc.eigenvalues)} of {kk} pairs)") from exc
            retries += 1
            rep.retries += 1
            kk = min(2 * kk, n - 2)
            continue
        rep.windows += 1
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        if np.any(w < sigma - 1e-9 * max(1.0, abs(sigma))):
            raise SolverError("window returned eigenvalues below its shift")
        top = w[-1]
        done = top > lambda_max or kk >= n - 2
        if done:
            sel = w <= lambda_max
        else:
            # leave out the top cluster, which may be only partly captured
            sel = w < top - 1e-7 * max(abs(top), 1.0)
            if not np.any(sel):
                if kk >= n - 2 or retries >= 6:
                    raise SolverError("eigenvalue cluster larger than the window")
                kk = min(2 * kk, n - 2)
                retries += 1
                rep.retries += 1
                continue
        vals_acc.extend(w[sel].tolist())
        vecs_acc.append(v[:, sel])
        if done:
            break
        last = w[sel][-1]
        nxt = w[~sel][0]
        sigma = 0.5 * (last + nxt)
    vals = np.array(vals_acc)
    vecs = np.concatenate(vecs_acc, axis=1) if vecs_acc else np.zeros((n, 0))
    # final certification at lambda_max (nudged off any eigenvalue)
    shift = lambda_max * (1 + 1e-12)
    _, neg = _factor(sp.csc_matrix(k - shift * m))
    rep.factorizations += 1
    if neg is None:
        log.warning("inertia certification unavailable (pivoting); relying on window overlap")
        rep.certified = False
    elif neg != len(vals):
        raise SolverError(f"inertia below lambda_max counts {neg} eigenvalues, sweep found {len(vals)}")
    else:
        rep.certified = True
    if rep.windows > 1 and vecs.shape[1]:
        # vectors from different windows are only orthogonal to solver
        # accuracy; a Rayleigh-Ritz pass over the collected basis restores
        # M-orthonormality without changing the span
        mv = m @ vecs
        gram = vecs.T @ mv
        stiff = vecs.T @ (k @ vecs)
        vals, y = sla.eigh(0.5 * (stiff + stiff.T), 0.5 * (gram + gram.T))
        vecs = vecs @ y
    order = np.argsort(vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    _finish_checks(k, m, vals, vecs, tol, rep, lambda_max)
    return Spectrum(bc, vals, "fem", lambda_max, h, tol, vecs if return_vectors else None,
                    {"solver": "shift-invert-lanczos", "windows": rep.windows,
                     "certified": rep.certified, "max_residual": rep.max_residual})


def _finish_checks(k, m, vals, vecs, tol, rep, lambda_max):
    if vecs is None or vecs.shape[1] == 0:
        return
    kv = k @ vecs
    mv = m @ vecs
    res = np.linalg.norm(kv - mv * vals, axis=0)
    # the lambda_max floor keeps the measure meaningful for a zero eigenvalue
    scale = np.linalg.norm(kv, axis=0) + (np.abs(vals) + 1e-3 * lambda_max) * np.linalg.norm(mv, axis=0)
    rel = res / np.where(scale > 0, scale, 1.0)
    rep.max_residual = float(rel.max())
    if rep.max_residual > tol:
        raise SolverError(f"eigenpair residual {rep.max_residual:.3g} exceeds tol {tol:.3g}")
    # mass-orthonormality, checked in blocks to bound memory
    worst = 0.0
    nb = vecs.shape[1]
    step = 512
    for i in range(0, nb, step):
        g = vecs[:, i:i + step].T @ mv
        g[:, i:i + step] -= np.eye(min(step, nb - i))
        worst = max(worst, float(np.abs(g).max()))
    rep.orthonormality = worst
    if worst > 1e-8:
        raise SolverError(f"eigenvectors lose mass-orthonormality ({worst:.3g})")


def solve_mesh(m: TriangleMesh, bc: str, lambda_max: float, tol: float = 1e-9,
               return_vectors: bool = False, **kw) -> tuple:
    """Assemble and solve on a mesh; returns (Spectrum, FEMSystem)."""
    sysm = assemble(m, bc)
    spec = solve_partial_spectrum(sysm.stiffness, sysm.mass, lambda_max, tol=tol,
                                  return_vectors=return_vectors, bc=bc, h=m.h, **kw)
    return spec, sysm


def mass_weights(sysm: FEMSystem, vecs: np.ndarray, mass_full: sp.spmatrix) -> np.ndarray:
    """phi_i^T M_sub phi_i for each column of ``vecs`` (free-dof vectors)."""
    mr = sysm.reduce(mass_full)
    return np.einsum("ij,ij->j", vecs, mr @ vecs)
