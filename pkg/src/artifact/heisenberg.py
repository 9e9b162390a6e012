"""Kohn sublaplacian on box domains in the Heisenberg group H^n.

Coordinates (x_1..x_n, y_1..y_n, t) on R^(2n+1); the horizontal vector
fields are

    X_i = d/dx_i + (y_i / 2) d/dt,      Y_i = d/dy_i - (x_i / 2) d/dt,

and the sublaplacian is the sum of X_i^T X_i + Y_i^T Y_i, which is
positive definite on a box with zero boundary values even though it is
not elliptic (the t direction is reached only through the commutator
[X_i, Y_i] = -d/dt).

Discretization: uniform tensor grid on [-a, a]^(2n) x [-T, T], centered
first differences with exterior nodes dropped (zero boundary values),
multiplication coefficients frozen at the row node.  The assembled
operator is symmetrized and positive semi-definite by construction.

The eigenvalue audit checked here: the sum of the n eigenvalues
following the j-th is at most (n + 2) times the j-th,

    sum_{l=1}^{n} lambda_{j+l}  <=  (n + 2) lambda_j.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .eigensolve import smallest_eigenpairs

__all__ = ["HeisenbergGrid", "heisenberg_grid", "reflect",
           "build_kohn_laplacian", "kohn_spectrum", "audit_kohn"]

AUDIT_TOL = 1e-6


@dataclass(frozen=True)
class HeisenbergGrid:
    """Interior tensor grid for a Heisenberg box domain.

    ``axes`` holds one strictly increasing coordinate array per axis in
    the order x_1..x_n, y_1..y_n, t; spacing is uniform along each axis.
    ``g`` is the node count per axis including the two boundary nodes,
    so each interior array has g - 2 entries.
    """

    n: int
    a: float
    T: float
    g: int
    axes: tuple = field(repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need n >= 1, got n={self.n}")
        if self.g < 16:
            raise ValueError(f"need at least 16 nodes per axis, got g={self.g}")
        if not (self.a > 0 and self.T > 0):
            raise ValueError(f"box half-widths must be positive, got a={self.a}, T={self.T}")
        if len(self.axes) != 2 * self.n + 1:
            raise ValueError(f"expected {2 * self.n + 1} axes, got {len(self.axes)}")
        for ax in self.axes:
            steps = np.diff(ax)
            if len(ax) != self.g - 2 or (steps <= 0).any():
                raise ValueError("each axis must be a strictly increasing array of g - 2 nodes")
            if np.abs(steps - steps[0]).max() > 1e-12 * abs(steps[0]):
                raise ValueError("axis spacing must be uniform")

    @property
    def num_nodes(self):
        return (self.g - 2) ** (2 * self.n + 1)

    @property
    def spacings(self):
        """Grid step per axis (the boundary gap equals the interior step)."""
        return tuple(float(ax[1] - ax[0]) for ax in self.axes)


def heisenberg_grid(n, a, T, g):
    """Grid for the box [-a, a]^(2n) x [-T, T] with g nodes per axis."""
    spatial = np.linspace(-a, a, g)[1:-1]
    time_ax = np.linspace(-T, T, g)[1:-1]
    axes = tuple([spatial.copy() for _ in range(2 * n)] + [time_ax])
    return HeisenbergGrid(n, float(a), float(T), int(g), axes)


def reflect(grid):
    """The grid of the reflected box (x, y, t) -> (-x, -y, -t).

    The sublaplacian commutes with this reflection, so the spectrum on
    the reflected grid must match; the reflected coordinate arrays are
    rebuilt (negated and reversed) so the assembly arithmetic genuinely
    differs in floating point.
    """
    axes = tuple(np.ascontiguousarray(-ax[::-1]) for ax in grid.axes)
    return HeisenbergGrid(grid.n, grid.a, grid.T, grid.g, axes)


def _axis_operator(sizes, k, mat):
    """Kronecker embedding of ``mat`` acting on axis k of the tensor grid."""
    out = None
    for ax, m in enumerate(sizes):
        factor = mat if ax == k else sp.identity(m, format="csr")
        out = factor if out is None else sp.kron(out, factor, format="csr")
    return out


def _coordinate_field(grid, k):
    """Coordinate of axis k at every node, in lexicographic node order."""
    sizes = [len(ax) for ax in grid.axes]
    shape = [1] * len(sizes)
    shape[k] = sizes[k]
    return np.broadcast_to(grid.axes[k].reshape(shape), sizes).ravel()


def build_kohn_laplacian(grid):
    """Assemble the Kohn sublaplacian as a symmetric sparse matrix."""
    sizes = [len(ax) for ax in grid.axes]
    steps = grid.spacings
    n = grid.n

    def centered(m, h):
        off = np.full(m - 1, 1.0 / (2.0 * h))
        return sp.diags([off, -off], [1, -1], format="csr")

    d_t = _axis_operator(sizes, 2 * n, centered(sizes[2 * n], steps[2 * n]))
    lap = None
    for i in range(n):
        y_half = _coordinate_field(grid, n + i) / 2.0
        x_half = _coordinate_field(grid, i) / 2.0
        x_field = _axis_operator(sizes, i, centered(sizes[i], steps[i])) \
            + sp.diags(y_half) @ d_t
        y_field = _axis_operator(sizes, n + i, centered(sizes[n + i], steps[n + i])) \
            - sp.diags(x_half) @ d_t
        term = x_field.T @ x_field + y_field.T @ y_field
        lap = term if lap is None else lap + term
    return ((lap + lap.T) * 0.5).tocsr()


def kohn_spectrum(grid, k=12, tol=1e-8, seed=42):
    """Certified low spectrum of the sublaplacian on the grid."""
    lap = build_kohn_laplacian(grid)
    return smallest_eigenpairs(lap, None, k=k, tol=tol, seed=seed, definite=True)


def audit_kohn(eigenvalues, n, j_max, tol_audit=AUDIT_TOL):
    """Audit sum_{l=1}^n lambda_{j+l} <= (n + 2) lambda_j for j <= j_max.

    ``eigenvalues`` must contain at least j_max + n entries in ascending
    order.  Returns one record dict per j in the common report layout.
    """
    vals = np.asarray(eigenvalues, dtype=float)
    if len(vals) < j_max + n:
        raise ValueError(
            f"need at least j_max + n = {j_max + n} eigenvalues, got {len(vals)}")
    if (np.diff(vals) < -1e-12 * max(1.0, abs(vals[-1]))).any():
        raise ValueError("eigenvalues must be in ascending order")
    records = []
    for j in range(1, j_max + 1):
        lam_j = float(vals[j - 1])
        lhs = float(vals[j:j + n].sum())
        rhs = (n + 2.0) * lam_j
        records.append({
            "ineq": "heisenberg-sum",
            "p": None,
            "j": j,
            "lhs": lhs,
            "rhs": rhs,
            "slack": rhs - lhs,
            "pass": bool(lhs <= rhs * (1.0 + tol_audit)),
            "terms": {"n": n, "lambda_j": lam_j, "tol_audit": tol_audit},
        })
    return records
