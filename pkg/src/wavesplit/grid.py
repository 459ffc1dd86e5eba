"""Two-level structured quadrilateral meshes on the unit square.

A fine bilinear (Q1) grid is overlaid by a coarse grid whose cell size is
an integer multiple of the fine one.  All local constructions (spectral
problems per coarse element, neighborhood problems per coarse node,
oversampled patches) are expressed as axis-aligned boxes of fine cells.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class TwoLevelMesh:
    nx_fine: int
    nx_coarse: int
    # derived, filled by build_mesh
    h: float = field(init=False)
    H: float = field(init=False)
    ratio: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "h", 1.0 / self.nx_fine)
        object.__setattr__(self, "H", 1.0 / self.nx_coarse)
        object.__setattr__(self, "ratio", self.nx_fine // self.nx_coarse)

    # nodes are numbered row-major, y varying slowest
    @property
    def n_nodes(self):
        return (self.nx_fine + 1) ** 2

    @property
    def n_cells(self):
        return self.nx_fine ** 2

    @property
    def n_elements(self):
        return self.nx_coarse ** 2

    def node_id(self, i, j):
        return np.asarray(j) * (self.nx_fine + 1) + np.asarray(i)

    def node_coords(self):
        t = np.linspace(0.0, 1.0, self.nx_fine + 1)
        X, Y = np.meshgrid(t, t)
        return X.ravel(), Y.ravel()

    def cell_id(self, ci, cj):
        return np.asarray(cj) * self.nx_fine + np.asarray(ci)

    def cell_corner_ids(self, ci, cj):
        """Corner node ids of cells, tensor order (00, 10, 01, 11)."""
        n00 = self.node_id(ci, cj)
        return np.stack([n00, n00 + 1,
                         n00 + self.nx_fine + 1, n00 + self.nx_fine + 2], axis=-1)

    def boundary_mask(self):
        n = self.nx_fine + 1
        mask = np.zeros((n, n), dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask.ravel()

    @property
    def free_nodes(self):
        """Ids of nodes interior to the domain (homogeneous Dirichlet)."""
        return np.flatnonzero(~self.boundary_mask())

    @property
    def full_to_free(self):
        """len-n_nodes map into free numbering, -1 on the boundary."""
        m = np.full(self.n_nodes, -1, dtype=np.int64)
        m[self.free_nodes] = np.arange(self.free_nodes.size)
        return m

    @property
    def n_free(self):
        return (self.nx_fine - 1) ** 2

    # ---- coarse entities ----------------------------------------------

    def coarse_element(self, ei, ej):
        if not (0 <= ei < self.nx_coarse and 0 <= ej < self.nx_coarse):
            raise ConfigurationError(f"coarse element ({ei},{ej}) outside grid")
        m = self.ratio
        return LocalRegion(self, "element", ei * m, (ei + 1) * m, ej * m, (ej + 1) * m,
                           element=(ei, ej))

    def element_by_id(self, e):
        return self.coarse_element(e % self.nx_coarse, e // self.nx_coarse)

    def element_id(self, ei, ej):
        return ej * self.nx_coarse + ei

    def elements(self):
        for ej in range(self.nx_coarse):
            for ei in range(self.nx_coarse):
                yield self.coarse_element(ei, ej)

    def neighborhood(self, gi, gj):
        """Union of coarse elements sharing coarse node (gi, gj)."""
        if not (0 <= gi <= self.nx_coarse and 0 <= gj <= self.nx_coarse):
            raise ConfigurationError(f"coarse node ({gi},{gj}) outside grid")
        m = self.ratio
        ei0, ei1 = max(gi - 1, 0), min(gi, self.nx_coarse - 1)
        ej0, ej1 = max(gj - 1, 0), min(gj, self.nx_coarse - 1)
        return LocalRegion(self, "neighborhood", ei0 * m, (ei1 + 1) * m,
                           ej0 * m, (ej1 + 1) * m)

    def interior_coarse_nodes(self):
        for gj in range(1, self.nx_coarse):
            for gi in range(1, self.nx_coarse):
                yield gi, gj


@dataclass(frozen=True)
class LocalRegion:
    """An axis-aligned union of fine cells: [ci0,ci1) x [cj0,cj1)."""

    mesh: TwoLevelMesh
    kind: str
    ci0: int
    ci1: int
    cj0: int
    cj1: int
    element: tuple = None

    def cells(self):
        ci, cj = np.meshgrid(np.arange(self.ci0, self.ci1),
                             np.arange(self.cj0, self.cj1))
        return ci.ravel(), cj.ravel()

    @property
    def n_cells(self):
        return (self.ci1 - self.ci0) * (self.cj1 - self.cj0)

    def closure_nodes(self):
        """All nodes of the closed region, minus the domain boundary."""
        return self._node_box(self.ci0, self.ci1, self.cj0, self.cj1)

    def interior_nodes(self):
        """Nodes strictly inside the region (zero trace on its boundary)."""
        return self._node_box(self.ci0 + 1, self.ci1 - 1, self.cj0 + 1, self.cj1 - 1)

    def _node_box(self, i0, i1, j0, j1):
        mesh = self.mesh
        i0, j0 = max(i0, 1), max(j0, 1)  # drop domain-boundary nodes
        i1, j1 = min(i1, mesh.nx_fine - 1), min(j1, mesh.nx_fine - 1)
        if i1 < i0 or j1 < j0:
            return np.empty(0, dtype=np.int64)
        ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1))
        return mesh.node_id(ii.ravel(), jj.ravel())

    def contains_element(self, ei, ej):
        m = self.mesh.ratio
        return (self.ci0 <= ei * m and (ei + 1) * m <= self.ci1 and
                self.cj0 <= ej * m and (ej + 1) * m <= self.cj1)

    def covered_elements(self):
        """Ids of coarse elements fully inside the region."""
        m = self.mesh.ratio
        out = []
        for ej in range(self.cj0 // m, -(-self.cj1 // m)):
            for ei in range(self.ci0 // m, -(-self.ci1 // m)):
                if self.contains_element(ei, ej):
                    out.append(self.mesh.element_id(ei, ej))
        return out


def build_mesh(nx_fine, nx_coarse):
    """Build a two-level mesh; the fine count must divide by the coarse one."""
    if nx_fine < 2 or nx_coarse < 1:
        raise ConfigurationError(
            f"mesh needs nx_fine >= 2 and nx_coarse >= 1, got ({nx_fine},{nx_coarse})")
    if nx_fine % nx_coarse != 0:
        raise ConfigurationError(
            f"nx_fine={nx_fine} is not divisible by nx_coarse={nx_coarse}")
    return TwoLevelMesh(nx_fine, nx_coarse)


def oversample(region, layers):
    """Extend a coarse element by `layers` rings of coarse cells, clipped."""
    if region.kind != "element":
        raise ConfigurationError("oversample expects a coarse element region")
    if layers < 0:
        raise ConfigurationError(f"layers must be >= 0, got {layers}")
    mesh = region.mesh
    m = mesh.ratio
    ei, ej = region.element
    ei0, ei1 = max(ei - layers, 0), min(ei + layers + 1, mesh.nx_coarse)
    ej0, ej1 = max(ej - layers, 0), min(ej + layers + 1, mesh.nx_coarse)
    return LocalRegion(mesh, "patch", ei0 * m, ei1 * m, ej0 * m, ej1 * m,
                       element=(ei, ej))
