"""Finite differences with Navier boundary conditions and trapezoidal quadrature.

The Laplacian is the standard 3-point (1D) / 5-point (2D) stencil.  Navier
conditions ``u = 0`` and ``Δu = 0`` on the boundary are imposed strongly:
boundary values of the input are treated as zero, and boundary rows of the
output are zero.
"""

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exponent_field import Grid, ScalarField
from .validation import check_field, check_values

__all__ = ["NavierOperator", "laplacian", "integrate", "weak_pairing"]


def integrate(grid, f):
    """Composite trapezoidal approximation of ``∫_Ω f dx``.

    The weighted values are summed with numpy's pairwise summation over a
    contiguous buffer, so the result does not depend on threading.
    """
    vals = f.values if isinstance(f, ScalarField) else check_values(f, grid.shape)
    if isinstance(f, ScalarField):
        check_field(f, grid)
    prod = np.ascontiguousarray(grid.weights * vals).reshape(-1)
    return float(np.sum(prod))


def _second_difference(n, h):
    main = np.full(n, -2.0 / h**2)
    off = np.full(n - 1, 1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


class NavierOperator:
    """Discrete Laplacian on ``grid`` encoding the Navier conditions."""

    def __init__(self, grid):
        if not isinstance(grid, Grid):
            raise TypeError("NavierOperator needs a Grid")
        self.grid = grid

    @cached_property
    def matrix(self):
        g = self.grid
        if g.dim == 1:
            full = _second_difference(g.counts[0], g.spacing[0])
        else:
            (nx, ny), (hx, hy) = g.counts, g.spacing
            full = sp.kron(_second_difference(nx, hx), sp.identity(ny)) + sp.kron(
                sp.identity(nx), _second_difference(ny, hy)
            )
        keep = sp.diags(g.interior_mask.reshape(-1).astype(float))
        mat = (keep @ full @ keep).tocsr()
        mat.eliminate_zeros()
        return mat

    @cached_property
    def interior(self):
        return np.flatnonzero(self.grid.interior_mask.reshape(-1))

    def apply_flat(self, u_flat):
        return self.matrix @ u_flat

    def __call__(self, u):
        return laplacian(self, u)

    def __repr__(self):
        return f"NavierOperator({self.grid})"


def laplacian(op, u):
    """Apply the Navier Laplacian; boundary values of ``u`` are ignored."""
    check_field(u, op.grid, "u")
    return ScalarField(op.grid, op.apply_flat(u.flat).reshape(op.grid.shape))


def weak_pairing(op, model, u, v):
    """Quadrature of ``φ(x, |Δu|) Δu Δv`` over the domain."""
    check_field(u, op.grid, "u")
    check_field(v, op.grid, "v")
    model.check_grid(op.grid)
    lu = op.apply_flat(u.flat)
    lv = op.apply_flat(v.flat)
    integrand = model.flux_flat(lu) * lv
    return integrate(op.grid, integrand.reshape(op.grid.shape))
