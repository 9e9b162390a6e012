"""Discrete exterior calculus operators on embedded triangle meshes.

Exterior derivatives are signed incidence matrices; Hodge stars are
diagonal (barycentric lumped areas for 0-forms, circumcentric
dual/primal length ratios for 1-forms, inverse face areas for 2-forms).
Laplacians are assembled in weak form as generalized pencils
A x = lambda M x with the geometer's sign convention (spectra >= 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite

from .mesh import MeshError, surface_measures

__all__ = [
    "HodgeStar",
    "EigenproblemPair",
    "exterior_derivative",
    "hodge_star",
    "hodge_laplacian",
    "dirichlet_laplacian",
    "assert_symmetric",
    "export_matrix_market",
]

SYMMETRY_TOL = 1e-12


class HodgeStar(NamedTuple):
    """Diagonal Hodge star: ``diag`` entries plus the count of clamped edges."""

    diag: np.ndarray
    clamped: int


@dataclass
class EigenproblemPair:
    """Generalized symmetric pencil A x = lambda M x for one form degree.

    ``mass_diag`` holds the diagonal of M (strictly positive).  For
    Dirichlet problems the rows are the interior vertices only and
    ``interior_index_map`` maps retained rows back to mesh simplices.
    """

    stiffness: sp.csr_matrix
    mass_diag: np.ndarray
    degree: int
    dirichlet: bool
    interior_index_map: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.stiffness.shape[0]

    @property
    def mass(self):
        return sp.diags(self.mass_diag, format="csr")


def assert_symmetric(a, tol=SYMMETRY_TOL, what="operator"):
    """Certify max |A - A^T| <= tol * max(1, max |A|); raise otherwise."""
    d = (a - a.T).tocoo()
    gap = np.abs(d.data).max() if d.nnz else 0.0
    scale = max(1.0, np.abs(a.data).max() if a.nnz else 0.0)
    if gap > tol * scale:
        raise ValueError(f"{what} is not symmetric: |A - A^T| = {gap:.3e}")


def _symmetrized(a):
    # (A + A^T)/2 is bitwise symmetric; entries move by at most one ulp.
    return ((a + a.T) * 0.5).tocsr()


def exterior_derivative(mesh, p):
    """Signed incidence matrix d_p: rows are (p+1)-simplices, columns p-simplices.

    d0 rows carry -1 at the edge tail (min vertex) and +1 at the head;
    d1 rows carry the face-versus-edge orientation signs.  d1 @ d0 = 0
    exactly, as every entry is a sum of cancelling +-1 terms.
    """
    if p == 0:
        e = mesh.num_edges
        rows = np.repeat(np.arange(e), 2)
        cols = mesh.edges.ravel()
        vals = np.tile([-1.0, 1.0], e)
        return sp.csr_matrix((vals, (rows, cols)), shape=(e, mesh.num_vertices))
    if p == 1:
        f = mesh.num_faces
        rows = np.repeat(np.arange(f), 3)
        cols = mesh.face_edges.ravel()
        vals = mesh.face_edge_signs.ravel().astype(np.float64)
        return sp.csr_matrix((vals, (rows, cols)), shape=(f, mesh.num_edges))
    raise ValueError(f"exterior derivative defined for p in {{0, 1}}, got {p}")


def _cotangent_weights(mesh):
    """Per-edge (cot a + cot b)/2 over the incident faces.

    This equals the signed circumcentric dual length divided by the
    primal edge length, in any ambient dimension.
    """
    v = mesh.vertices[mesh.faces]
    w = np.zeros(mesh.num_edges)
    fa = None
    for corner in range(3):
        p0 = v[:, corner]
        u1 = v[:, (corner + 1) % 3] - p0
        u2 = v[:, (corner + 2) % 3] - p0
        dot = np.einsum("ij,ij->i", u1, u2)
        if fa is None:
            g11 = np.einsum("ij,ij->i", u1, u1)
            g22 = np.einsum("ij,ij->i", u2, u2)
            fa = 0.5 * np.sqrt(np.maximum(g11 * g22 - dot * dot, 0.0))
        # corner angle is opposite the face side not touching it
        opposite = mesh.face_edges[:, (corner + 1) % 3]
        np.add.at(w, opposite, dot / (4.0 * fa))
    return w


def hodge_star(mesh, p):
    """Diagonal Hodge star for p in {0, 1, 2}.

    p = 0: lumped vertex areas.  p = 2: inverse face areas.  p = 1:
    circumcentric dual/primal length ratio per edge; ratios that fail to
    be positive (a circumcenter falling outside, or degenerately onto
    the boundary of, its triangle) are clamped to
    eps = 1e-8 * mean positive ratio, and the clamp count is reported.
    """
    fa, va, _ = surface_measures(mesh)
    if p == 0:
        return HodgeStar(va, 0)
    if p == 2:
        return HodgeStar(1.0 / fa, 0)
    if p == 1:
        w = _cotangent_weights(mesh)
        eps = 1e-8 * float(np.maximum(w, 0.0).mean())
        bad = w <= 0.0
        w = np.where(bad, eps, w)
        return HodgeStar(w, int(bad.sum()))
    raise ValueError(f"hodge star defined for p in {{0, 1, 2}}, got {p}")


def hodge_laplacian(mesh, p):
    """Weak-form Hodge Laplacian pencil (A, M) on a closed mesh.

    A x = lambda M x with M = star_p and

        p = 0:  A = d0^T star_1 d0
        p = 1:  A = d1^T star_2 d1 + star_1 d0 star_0^{-1} d0^T star_1
        p = 2:  A = star_2 d1 star_1^{-1} d1^T star_2
    """
    if not mesh.is_closed:
        raise MeshError("hodge_laplacian needs a closed mesh; use dirichlet_laplacian")
    if p not in (0, 1, 2):
        raise ValueError(f"form degree must be 0, 1 or 2, got {p}")
    s0 = hodge_star(mesh, 0)
    s1 = hodge_star(mesh, 1)
    s2 = hodge_star(mesh, 2)
    d0 = exterior_derivative(mesh, 0)
    d1 = exterior_derivative(mesh, 1)
    info = {"star1_clamped": s1.clamped}
    if p == 0:
        a = d0.T @ sp.diags(s1.diag) @ d0
        mass = s0.diag
        n = mesh.num_vertices
    elif p == 1:
        up = d1.T @ sp.diags(s2.diag) @ d1
        half = sp.diags(s1.diag) @ d0
        down = half @ sp.diags(1.0 / s0.diag) @ half.T
        a = up + down
        mass = s1.diag
        n = mesh.num_edges
    else:
        half = sp.diags(s2.diag) @ d1
        a = half @ sp.diags(1.0 / s1.diag) @ half.T
        mass = s2.diag
        n = mesh.num_faces
    a = _symmetrized(a)
    assert_symmetric(a, what=f"hodge laplacian p={p}")
    return EigenproblemPair(a, mass, p, False, np.arange(n), info)


def dirichlet_laplacian(mesh, potential=None):
    """Dirichlet 0-form Laplacian with potential on a mesh with boundary.

    Rows and columns are restricted to interior vertices:
    A = (d0^T star_1 d0)_int + M_int diag(q_int), M = star_0 restricted.
    """
    if mesh.is_closed:
        raise MeshError("dirichlet_laplacian needs a mesh with boundary; use hodge_laplacian")
    if potential is None:
        potential = np.zeros(mesh.num_vertices)
    q = np.asarray(potential, dtype=np.float64)
    if q.shape != (mesh.num_vertices,):
        raise ValueError(f"potential must have one value per vertex, got shape {q.shape}")
    if not np.isfinite(q).all():
        raise ValueError("potential contains non-finite values")
    s0 = hodge_star(mesh, 0)
    s1 = hodge_star(mesh, 1)
    d0 = exterior_derivative(mesh, 0)
    interior = np.nonzero(~mesh.boundary_vertex)[0]
    a_full = d0.T @ sp.diags(s1.diag) @ d0
    a = a_full[interior][:, interior]
    mass = s0.diag[interior]
    a = a + sp.diags(mass * q[interior])
    a = _symmetrized(a)
    assert_symmetric(a, what="dirichlet laplacian")
    return EigenproblemPair(a.tocsr(), mass, 0, True, interior,
                            {"star1_clamped": s1.clamped})


def export_matrix_market(a, path):
    """Write a sparse operator in Matrix Market coordinate format."""
    sym = "symmetric" if (abs(a - a.T)).nnz == 0 else "general"
    mmwrite(str(path), sp.coo_matrix(a), symmetry=sym)
