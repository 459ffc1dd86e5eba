"""Two-component multiscale spaces on the coarse grid.

The first component is the energy-minimizing coarse space built from
per-element spectral auxiliary functions; the second captures the
remaining (fast, contrast-sensitive) content through eigenproblems posed
in the kernel of the auxiliary projection.  A mass-lumping variant swaps
the spectral auxiliary functions for indicator functions of the low/high
coefficient parts and biorthogonalizes the basis so that the projected
mass matrix becomes diagonal.

Local problems are small, so dense eigensolves and sparse LU saddle
factorizations per patch are used directly.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as dla
import scipy.sparse as sparse

from .assembly import (assemble_mass, assemble_stiffness, aux_weight,
                       cell_values, check_positive)
from .errors import ConfigurationError, DegenerateConstraintsError
from .grid import oversample
from .linsolve import SaddleSolver
from .media import threshold_masks

log = logging.getLogger(__name__)


def _select_with_ties(values, count, tol=1e-10):
    """Indices of the `count` smallest values, widened by near-exact ties."""
    if count > values.size:
        raise ConfigurationError(
            f"requested {count} eigenpairs but the constrained space has "
            f"dimension {values.size}")
    k = count
    ref = abs(values[count - 1])
    while k < values.size and values[k] - values[count - 1] <= tol * max(ref, 1e-300):
        k += 1
    return np.arange(k)


def _embed_columns(mesh, nodes, local_cols):
    """Sparse free-coordinate columns from local nodal values."""
    free_idx = mesh.full_to_free[nodes]
    n_loc, n_col = local_cols.shape
    rows = np.tile(free_idx, n_col)
    cols = np.repeat(np.arange(n_col), n_loc)
    return sparse.csc_matrix((local_cols.T.ravel(), (rows, cols)),
                             shape=(mesh.n_free, n_col))


@dataclass
class AuxSpace:
    """Per-element auxiliary functions with their constraint rows.

    Row k of `C` maps a free-coordinate vector v to the inner product of v
    with auxiliary function k (the weighted product for spectral builds,
    plain L2 for the lumped build); `gram_diag` holds the auxiliary Gram
    diagonal in the same product (identity for orthonormal spectral sets).
    """
    mesh: object
    kind: str                      # "spectral" or "lumped"
    labels: list                   # (element_id, j)
    C: sparse.csr_matrix           # n_aux x n_free
    gram_diag: np.ndarray
    inner_matrix: sparse.csr_matrix
    eigenvalues: dict = field(default_factory=dict)
    element_data: dict = field(default_factory=dict)

    @property
    def n_aux(self):
        return len(self.labels)

    def rows_for_elements(self, element_ids):
        wanted = set(element_ids)
        return np.array([k for k, (e, _) in enumerate(self.labels) if e in wanted],
                        dtype=np.int64)

    def row_index(self, element_id, j):
        return self.labels.index((element_id, j))


@dataclass
class AuxField:
    """A member of the auxiliary space, by coefficients in its basis."""
    aux: AuxSpace
    coeffs: np.ndarray


class Projection:
    """Orthogonal projection onto the auxiliary space in its inner product."""

    def __init__(self, aux):
        self.aux = aux

    def coefficients(self, v):
        if isinstance(v, AuxField):
            return v.coeffs.copy()
        return (self.aux.C @ np.asarray(v)) / self.aux.gram_diag

    def apply(self, v):
        return AuxField(self.aux, self.coefficients(v))

    def norm(self, v):
        if isinstance(v, AuxField):
            return float(np.sqrt(np.sum(self.aux.gram_diag * v.coeffs ** 2)))
        v = np.asarray(v)
        return float(np.sqrt(v @ (self.aux.inner_matrix @ v)))

    def projection_norm(self, v):
        return self.norm(self.apply(v))


def build_aux_space(mesh, kappa, count, weighting="H2"):
    """`count` spectral auxiliary functions per coarse element.

    Per element, the smallest modes of the local stiffness against the
    weighted local mass, orthonormal in the weighted product; free ends on
    the element boundary (domain-boundary nodes stay eliminated).
    """
    if count < 1:
        raise ConfigurationError(f"need at least one auxiliary function, got {count}")
    values = cell_values(mesh, kappa)
    check_positive(values)
    w = aux_weight(mesh, values, weighting)

    labels, eigs, data = [], {}, {}
    rows_i, rows_j, rows_v = [], [], []
    for region in mesh.elements():
        e = mesh.element_id(*region.element)
        nodes = region.closure_nodes()
        if count > nodes.size:
            raise ConfigurationError(
                f"element {e}: {count} auxiliary functions requested but the "
                f"local space has dimension {nodes.size}")
        A_loc = assemble_stiffness(mesh, values, region=region, nodes=nodes).todense()
        S_loc = assemble_mass(mesh, w, region=region, nodes=nodes).todense()
        lam, vec = dla.eigh(np.asarray(A_loc), np.asarray(S_loc))
        psi = vec[:, :count]
        eigs[e] = lam[:count]
        data[e] = (nodes, psi)
        r = np.asarray(S_loc) @ psi                       # constraint rows
        free_idx = mesh.full_to_free[nodes]
        for j in range(count):
            labels.append((e, j))
            rows_i.append(np.full(nodes.size, len(labels) - 1))
            rows_j.append(free_idx)
            rows_v.append(r[:, j])
    C = sparse.csr_matrix((np.concatenate(rows_v),
                           (np.concatenate(rows_i), np.concatenate(rows_j))),
                          shape=(len(labels), mesh.n_free))
    inner = assemble_mass(mesh, w)
    return AuxSpace(mesh, "spectral", labels, C, np.ones(len(labels)), inner,
                    eigenvalues=eigs, element_data=data)


@dataclass
class BasisSet:
    matrix: sparse.csc_matrix      # n_free x n_cols
    labels: list
    kind: str
    eigenvalues: dict = field(default_factory=dict)

    @property
    def n_cols(self):
        return self.matrix.shape[1]


def _patch_system(mesh, A_free, aux_list, patch):
    """Stiffness and stacked constraint rows restricted to a patch."""
    pdofs = patch.interior_nodes()
    pidx = mesh.full_to_free[pdofs]
    A_p = A_free[pidx][:, pidx]
    covered = patch.covered_elements()
    blocks, row_maps = [], []
    for aux in aux_list:
        rows = aux.rows_for_elements(covered)
        blocks.append(aux.C[rows][:, pidx])
        row_maps.append(rows)
    return pidx, A_p, sparse.vstack(blocks, format="csr"), row_maps


def _named_saddle(A_p, C_p, name_rows):
    try:
        return SaddleSolver(A_p, C_p, tol=1e-9)
    except DegenerateConstraintsError as exc:
        label = name_rows(exc.row) if exc.row is not None else "unknown"
        raise DegenerateConstraintsError(
            f"{exc} (auxiliary function {label})", row=exc.row) from None


def build_cem_basis(mesh, kappa, aux, layers=2):
    """Constraint-energy-minimizing basis, one column per auxiliary function.

    Each column minimizes energy on the oversampled patch of its element
    subject to matching its auxiliary function in the weighted product and
    annihilating every other auxiliary function on the patch.
    """
    if layers < 0:
        raise ConfigurationError(f"layers must be >= 0, got {layers}")
    A_free = assemble_stiffness(mesh, kappa)
    cols, labels = [], []
    for region in mesh.elements():
        e = mesh.element_id(*region.element)
        patch = oversample(region, layers)
        pidx, A_p, C_p, (rows,) = _patch_system(mesh, A_free, [aux], patch)
        solver = _named_saddle(A_p, C_p, lambda r: aux.labels[rows[r]])
        own = [k for k, ridx in enumerate(rows) if aux.labels[ridx][0] == e]
        for k in own:
            g = np.zeros(rows.size)
            g[k] = 1.0
            phi, _ = solver.solve(np.zeros(pidx.size), g)
            full = np.zeros(mesh.n_free)
            full[pidx] = phi
            cols.append(full)
            labels.append(aux.labels[rows[k]])
    matrix = sparse.csc_matrix(np.column_stack(cols))
    return BasisSet(matrix, labels, "cem")


def build_v2_choice1(mesh, kappa, aux, count, tie_tol=1e-10):
    """Second-component basis from coarse-neighborhood eigenproblems.

    Per interior coarse node: the smallest modes of energy against scaled
    L2 mass on the neighborhood, constrained to the auxiliary projection's
    kernel (realized by a null-space basis of the constraint rows).
    """
    A_free = assemble_stiffness(mesh, kappa)
    M_free = assemble_mass(mesh)
    cols, labels, eigs = [], [], {}
    for gi, gj in mesh.interior_coarse_nodes():
        region = mesh.neighborhood(gi, gj)
        rdofs = region.interior_nodes()
        ridx = mesh.full_to_free[rdofs]
        rows = aux.rows_for_elements(region.covered_elements())
        C_r = np.asarray(aux.C[rows][:, ridx].todense())
        Z = dla.null_space(C_r)
        if Z.shape[1] == 0:
            raise ConfigurationError(
                f"neighborhood ({gi},{gj}): auxiliary constraints exhaust the space")
        A_z = Z.T @ (A_free[ridx][:, ridx] @ Z)
        M_z = Z.T @ (M_free[ridx][:, ridx] @ Z)
        lam, Y = dla.eigh(A_z, M_z)
        take = _select_with_ties(lam, count, tie_tol)
        eigs[(gi, gj)] = lam[take] * mesh.H ** 2
        local = Z @ Y[:, take]
        for j in range(take.size):
            full = np.zeros(mesh.n_free)
            full[ridx] = local[:, j]
            cols.append(full)
            labels.append(((gi, gj), j))
    matrix = sparse.csc_matrix(np.column_stack(cols))
    return BasisSet(matrix, labels, "v2_choice1", eigenvalues=eigs)


def _element_kernel_modes(mesh, A_free, M_free, aux, region, count, tie_tol):
    """Smallest constrained eigenmodes on one element's interior."""
    e = mesh.element_id(*region.element)
    rdofs = region.interior_nodes()
    if rdofs.size == 0:
        raise ConfigurationError(f"element {e} has no interior fine nodes")
    ridx = mesh.full_to_free[rdofs]
    rows = aux.rows_for_elements([e])
    C_r = np.asarray(aux.C[rows][:, ridx].todense())
    Z = dla.null_space(C_r)
    if Z.shape[1] < count:
        raise ConfigurationError(
            f"element {e}: {count} modes requested but the constrained space "
            f"has dimension {Z.shape[1]}")
    A_z = Z.T @ (A_free[ridx][:, ridx] @ Z)
    M_z = Z.T @ (M_free[ridx][:, ridx] @ Z)
    lam, Y = dla.eigh(A_z, M_z)
    take = _select_with_ties(lam, count, tie_tol)
    return ridx, Z @ Y[:, take], lam[take]


def _l2_rows(M_free, columns):
    """Plain-L2 constraint rows for conforming fine-space columns."""
    return sparse.csr_matrix((M_free @ columns).T)


def build_v2_choice2(mesh, kappa, aux, count, layers=2, tie_tol=1e-10):
    """Second-component basis from per-element kernel eigenproblems,
    localized by energy minimization on oversampled patches.

    Stage one solves, inside each element, energy against plain L2 mass on
    the interior constrained to the auxiliary kernel.  Stage two extends
    each mode to its patch, keeping the auxiliary constraints and matching
    the mode's L2 footprint.
    """
    A_free = assemble_stiffness(mesh, kappa)
    M_free = assemble_mass(mesh)
    modes, eigs = {}, {}
    mode_cols, mode_labels = [], []
    for region in mesh.elements():
        e = mesh.element_id(*region.element)
        ridx, local, lam = _element_kernel_modes(mesh, A_free, M_free, aux,
                                                 region, count, tie_tol)
        emb = np.zeros((mesh.n_free, local.shape[1]))
        emb[ridx] = local
        modes[e] = emb
        eigs[e] = lam
        for j in range(local.shape[1]):
            mode_cols.append(emb[:, j])
            mode_labels.append((e, j))
    mode_mat = np.column_stack(mode_cols)
    C2 = _l2_rows(M_free, mode_mat)
    aux2 = AuxSpace(mesh, "spectral", mode_labels, C2,
                    np.ones(len(mode_labels)), M_free, eigenvalues=eigs)

    cols, labels = [], []
    for region in mesh.elements():
        e = mesh.element_id(*region.element)
        patch = oversample(region, layers)
        pidx, A_p, C_p, (rows1, rows2) = _patch_system(
            mesh, A_free, [aux, aux2], patch)
        all_labels = ([("aux", aux.labels[r]) for r in rows1] +
                      [("mode", aux2.labels[r]) for r in rows2])
        solver = _named_saddle(A_p, C_p, lambda r: all_labels[r])
        own = [k for k, ridx2 in enumerate(rows2) if aux2.labels[ridx2][0] == e]
        for k in own:
            j = aux2.labels[rows2[k]][1]
            g = np.zeros(rows1.size + rows2.size)
            # L2 footprint of the element mode against every patch mode
            g[rows1.size:] = mode_mat[:, rows2].T @ (M_free @ modes[e][:, j])
            zeta, _ = solver.solve(np.zeros(pidx.size), g)
            full = np.zeros(mesh.n_free)
            full[pidx] = zeta
            cols.append(full)
            labels.append((e, j))
    matrix = sparse.csc_matrix(np.column_stack(cols))
    return BasisSet(matrix, labels, "v2_choice2", eigenvalues=eigs)


@dataclass
class SpacePair:
    """A two-component coarse decomposition with provenance."""
    basis1: sparse.csc_matrix
    basis2: sparse.csc_matrix
    provenance: tuple
    labels1: list
    labels2: list
    aux: AuxSpace = None
    eigenvalues: dict = field(default_factory=dict)
    surrogate_mass: np.ndarray = None   # diagonal-by-construction, lumped only

    @property
    def n1(self):
        return self.basis1.shape[1]

    @property
    def n2(self):
        return self.basis2.shape[1]

    def combined(self):
        return sparse.hstack([self.basis1, self.basis2], format="csc")

    def gram_condition(self, M):
        B = self.combined()
        G = np.asarray((B.T @ (M @ B)).todense())
        return float(np.linalg.cond(G))


def make_pair(basis1, basis2, aux=None):
    return SpacePair(basis1.matrix, basis2.matrix,
                     (basis1.kind, basis2.kind),
                     basis1.labels, basis2.labels, aux=aux,
                     eigenvalues={basis1.kind: basis1.eigenvalues,
                                  basis2.kind: basis2.eigenvalues})


def orthogonalize_pair(pair, M):
    """L2-orthogonalize the second component against the first."""
    M11 = np.asarray((pair.basis1.T @ (M @ pair.basis1)).todense())
    M12 = np.asarray((pair.basis1.T @ (M @ pair.basis2)).todense())
    B2 = np.asarray(pair.basis2.todense()) - pair.basis1 @ np.linalg.solve(M11, M12)
    return SpacePair(pair.basis1, sparse.csc_matrix(B2),
                     (pair.provenance[0], pair.provenance[1] + "+orthogonalized"),
                     pair.labels1, pair.labels2, aux=pair.aux,
                     eigenvalues=pair.eigenvalues)


def build_lumped_aux(mesh, kappa, threshold, count, tie_tol=1e-10):
    """Indicator auxiliary functions (low/high coefficient parts) plus
    per-element kernel modes, all in the plain L2 product."""
    values = cell_values(mesh, kappa)
    check_positive(values)
    from .media import CoefficientField
    low, high = threshold_masks(CoefficientField(values), threshold)
    M_free = assemble_mass(mesh)

    labels1, gram1, masks = [], [], {}
    rows_i, rows_j, rows_v = [], [], []
    for region in mesh.elements():
        e = mesh.element_id(*region.element)
        ci, cj = region.cells()
        for part, mask in ((0, low), (1, high)):
            keep = mask[cj, ci]
            if not keep.any():
                log.info("element %d: part %d empty, indicator dropped", e, part)
                continue
            corners = mesh.cell_corner_ids(ci[keep], cj[keep]).ravel()
            vec = np.zeros(mesh.n_nodes)
            np.add.at(vec, corners, mesh.h ** 2 / 4.0)
            free_vec = vec[mesh.free_nodes]
            nz = np.flatnonzero(free_vec)
            labels1.append((e, part))
            masks[(e, part)] = (ci[keep], cj[keep])
            gram1.append(keep.sum() * mesh.h ** 2)     # |support| = (indicator, indicator)
            rows_i.append(np.full(nz.size, len(labels1) - 1))
            rows_j.append(nz)
            rows_v.append(free_vec[nz])
    C1 = sparse.csr_matrix((np.concatenate(rows_v),
                            (np.concatenate(rows_i), np.concatenate(rows_j))),
                           shape=(len(labels1), mesh.n_free))
    aux1 = AuxSpace(mesh, "lumped", labels1, C1, np.array(gram1), M_free,
                    element_data=masks)

    A_free = assemble_stiffness(mesh, values)
    labels2, eigs, mode_cols = [], {}, []
    for region in mesh.elements():
        e = mesh.element_id(*region.element)
        ridx, local, lam = _element_kernel_modes(mesh, A_free, M_free, aux1,
                                                 region, count, tie_tol)
        eigs[e] = lam
        for j in range(local.shape[1]):
            emb = np.zeros(mesh.n_free)
            emb[ridx] = local[:, j]
            mode_cols.append(emb)
            labels2.append((e, j))
    mode_mat = np.column_stack(mode_cols)
    C2 = _l2_rows(M_free, mode_mat)
    aux2 = AuxSpace(mesh, "spectral", labels2, C2, np.ones(len(labels2)),
                    M_free, eigenvalues=eigs)
    return aux1, aux2, A_free, M_free


def build_lumped_pair(mesh, kappa, threshold=1.0, count=5, layers=2, tie_tol=1e-10):
    """Biorthogonal pair for the mass-lumped scheme.

    Both components solve energy minimization with plain-L2 multipliers on
    oversampled patches; the constraints biorthogonalize each basis column
    against the union of auxiliary functions, which makes the projected
    surrogate mass diagonal.
    """
    aux1, aux2, A_free, _ = build_lumped_aux(mesh, kappa, threshold, count, tie_tol)
    cols1, cols2 = {}, {}
    for region in mesh.elements():
        e = mesh.element_id(*region.element)
        patch = oversample(region, layers)
        pidx, A_p, C_p, (rows1, rows2) = _patch_system(
            mesh, A_free, [aux1, aux2], patch)
        all_labels = ([("ind", aux1.labels[r]) for r in rows1] +
                      [("mode", aux2.labels[r]) for r in rows2])
        solver = _named_saddle(A_p, C_p, lambda r: all_labels[r])
        for k, ridx in enumerate(rows1):
            if aux1.labels[ridx][0] != e:
                continue
            g = np.zeros(rows1.size + rows2.size)
            g[k] = 1.0
            phi, _ = solver.solve(np.zeros(pidx.size), g)
            full = np.zeros(mesh.n_free)
            full[pidx] = phi
            cols1[aux1.labels[ridx]] = full
        for k, ridx in enumerate(rows2):
            if aux2.labels[ridx][0] != e:
                continue
            g = np.zeros(rows1.size + rows2.size)
            g[rows1.size + k] = 1.0
            phi, _ = solver.solve(np.zeros(pidx.size), g)
            full = np.zeros(mesh.n_free)
            full[pidx] = phi
            cols2[aux2.labels[ridx]] = full

    B1 = sparse.csc_matrix(np.column_stack([cols1[l] for l in aux1.labels]))
    B2 = sparse.csc_matrix(np.column_stack([cols2[l] for l in aux2.labels]))
    # surrogate mass: project both components onto the auxiliary span and
    # take L2 there; biorthogonality renders it diagonal
    C = sparse.vstack([aux1.C, aux2.C], format="csr")
    gram = np.concatenate([aux1.gram_diag, aux2.gram_diag])
    WB = np.asarray((C @ sparse.hstack([B1, B2])).todense())
    surrogate = WB.T @ (WB / gram[:, None])
    pair = SpacePair(B1, B2, ("lumped_v1", "lumped_v2"),
                     list(aux1.labels), list(aux2.labels), aux=aux1,
                     eigenvalues={"lumped_v2": aux2.eigenvalues},
                     surrogate_mass=surrogate)
    return pair
