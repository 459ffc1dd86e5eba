"""Q1 finite element assembly on the structured fine grid.

Coefficients are piecewise constant per fine cell, so the closed-form
element matrices below coincide with 2x2 Gauss quadrature (which is exact
for these polynomial integrands).  Node/cell conventions follow grid.py;
local corner order is tensor style (00, 10, 01, 11).
"""

import numpy as np
import scipy.sparse as sparse

from .errors import DataError

# element matrices on a square cell, unit coefficient; the stiffness one
# is size independent in 2D, the mass one carries h^2
STIFF_LOC = np.array([[4., -1., -1., -2.],
                      [-1., 4., -2., -1.],
                      [-1., -2., 4., -1.],
                      [-2., -1., -1., 4.]]) / 6.0
MASS_LOC = np.array([[4., 2., 2., 1.],
                     [2., 4., 1., 2.],
                     [2., 1., 4., 2.],
                     [1., 2., 2., 4.]]) / 36.0


def cell_values(mesh, kappa):
    """Coerce a coefficient (field object or array) to an (n,n) cell array."""
    values = getattr(kappa, "cells", kappa)
    values = np.asarray(values, dtype=float)
    if np.isscalar(kappa) or values.ndim == 0:
        return np.full((mesh.nx_fine, mesh.nx_fine), float(kappa))
    if values.shape != (mesh.nx_fine, mesh.nx_fine):
        raise DataError(
            f"coefficient grid has shape {values.shape}, mesh expects "
            f"({mesh.nx_fine},{mesh.nx_fine})")
    return values


def check_positive(values):
    bad = np.argwhere(~(values > 0.0))
    if bad.size:
        cj, ci = bad[0]
        raise DataError(f"nonpositive coefficient {values[cj, ci]} at cell "
                        f"(ci={ci}, cj={cj})")


def _assemble(mesh, cellw, loc, region, nodes):
    if region is None:
        ci, cj = np.meshgrid(np.arange(mesh.nx_fine), np.arange(mesh.nx_fine))
        ci, cj = ci.ravel(), cj.ravel()
    else:
        ci, cj = region.cells()
    if nodes is None:
        nodes = mesh.free_nodes
    nodes = np.asarray(nodes)
    lookup = np.full(mesh.n_nodes, -1, dtype=np.int64)
    lookup[nodes] = np.arange(nodes.size)

    corners = lookup[mesh.cell_corner_ids(ci, cj)]        # (ncell, 4)
    w = cellw[cj, ci]
    rows, cols, vals = [], [], []
    for a in range(4):
        for b in range(4):
            keep = (corners[:, a] >= 0) & (corners[:, b] >= 0)
            rows.append(corners[keep, a])
            cols.append(corners[keep, b])
            vals.append(w[keep] * loc[a, b])
    mat = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nodes.size, nodes.size))
    return mat.tocsr()


def assemble_stiffness(mesh, kappa, region=None, nodes=None):
    """Stiffness of -div(kappa grad .) on the node set (default: interior)."""
    values = cell_values(mesh, kappa)
    check_positive(values)
    return _assemble(mesh, values, STIFF_LOC, region, nodes)


def assemble_mass(mesh, weight=None, region=None, nodes=None):
    """Weighted L2 mass matrix; weight defaults to 1."""
    if weight is None:
        values = np.ones((mesh.nx_fine, mesh.nx_fine))
    else:
        values = cell_values(mesh, weight)
    return _assemble(mesh, values * mesh.h ** 2, MASS_LOC, region, nodes)


def centered_block_cells(mesh, half=1):
    """Boolean cell mask of the centered 2*half x 2*half fine-cell block."""
    c = mesh.nx_fine // 2
    lo, hi = max(c - half, 0), min(c + half, mesh.nx_fine)
    mask = np.zeros((mesh.nx_fine, mesh.nx_fine), dtype=bool)
    mask[lo:hi, lo:hi] = True
    return mask


def source_amplitude(mesh, t, f0):
    """Ricker-style time envelope with the mesh-scaled prefactor."""
    return (2.0 - 2.0 / f0) / (4.0 * mesh.h ** 2) * \
        np.exp(-np.pi ** 2 * f0 ** 2 * (t - 2.0 / f0) ** 2)


def assemble_indicator_load(mesh, profile, nodes=None):
    """Integrals of the indicator of a cell mask against each basis function."""
    profile = np.asarray(profile, dtype=bool)
    if profile.shape != (mesh.nx_fine, mesh.nx_fine):
        raise DataError(f"source profile shape {profile.shape} does not match mesh")
    if nodes is None:
        nodes = mesh.free_nodes
    nodes = np.asarray(nodes)
    lookup = np.full(mesh.n_nodes, -1, dtype=np.int64)
    lookup[nodes] = np.arange(nodes.size)

    cj, ci = np.nonzero(profile)
    corners = lookup[mesh.cell_corner_ids(ci, cj)].ravel()
    vec = np.zeros(nodes.size)
    keep = corners >= 0
    # integral of each Q1 hat over one supporting cell is h^2/4
    np.add.at(vec, corners[keep], mesh.h ** 2 / 4.0)
    return vec


def assemble_source(mesh, profile, t, f0, nodes=None):
    """Load vector of the separable source at time t.

    `profile` is a boolean cell mask; the spatial factor is its indicator.
    Entry j is the source integrated against basis function j.
    """
    return assemble_indicator_load(mesh, profile, nodes) * source_amplitude(mesh, t, f0)


def aux_weight(mesh, kappa, mode="H2"):
    """Cellwise weight for the auxiliary inner product.

    "H2"  : kappa / H^2
    "pou" : kappa * sum_i |grad chi_i|^2 with bilinear coarse hats chi_i,
            evaluated at cell centers.
    """
    values = cell_values(mesh, kappa)
    check_positive(values)
    if mode == "H2":
        return values / mesh.H ** 2
    if mode == "pou":
        m = mesh.ratio
        idx = np.arange(mesh.nx_fine)
        s = ((idx % m) + 0.5) / m
        g1 = 2.0 * ((1.0 - s) ** 2 + s ** 2)
        pou = (g1[None, :] + g1[:, None]) / mesh.H ** 2
        return values * pou
    raise DataError(f"unknown auxiliary weighting mode {mode!r}")


def project_operator(op, basis):
    """Galerkin restriction basis^T op basis as a dense array."""
    prod = op @ basis
    out = basis.T @ prod
    return np.asarray(out.todense()) if sparse.issparse(out) else np.asarray(out)
