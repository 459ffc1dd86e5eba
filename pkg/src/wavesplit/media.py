"""High-contrast coefficient fields and the forcing description.

Fields are piecewise constant per fine cell, stored as an (n, n) array
with row index = cell row (y), column index = cell column (x).  Synthetic
channel/inclusion layouts are described by scale-free JSON geometry: a
list of axis-aligned boxes in unit-square coordinates, painted in order
(last wins) onto a constant background.
"""

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import DataError


@dataclass
class CoefficientField:
    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=float)
        if self.cells.ndim != 2:
            raise DataError(f"coefficient grid must be 2D, got shape {self.cells.shape}")
        bad = np.argwhere(~(self.cells > 0.0))
        if bad.size:
            cj, ci = bad[0]
            raise DataError(f"nonpositive coefficient {self.cells[cj, ci]} "
                            f"at cell (ci={ci}, cj={cj})")

    @property
    def shape(self):
        return self.cells.shape

    @property
    def contrast(self):
        return float(self.cells.max() / self.cells.min())

    def scaled(self, s):
        return CoefficientField(self.cells * s)


def load_field(path):
    """Read a comma-separated cell grid (one row per line)."""
    try:
        values = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataError(f"could not parse coefficient file {path}: {exc}") from None
    return CoefficientField(values)


def save_field(field, path):
    np.savetxt(path, field.cells, delimiter=",")


def synth_channels(geometry, n, background=1.0, contrast=1e4):
    """Rasterize a list of painted boxes onto an n x n cell grid.

    Each entry: {"x0","x1","y0","y1"} in [0,1] coordinates plus either
    "value" (absolute) or "scale" (times background*contrast, default 1).
    A cell takes the value if its center lies in the box; overlaps are
    resolved last-wins.
    """
    if background <= 0 or contrast <= 0:
        raise DataError("background and contrast must be positive")
    cells = np.full((n, n), float(background))
    centers = (np.arange(n) + 0.5) / n
    for k, box in enumerate(geometry):
        try:
            x0, x1 = float(box["x0"]), float(box["x1"])
            y0, y1 = float(box["y0"]), float(box["y1"])
        except (KeyError, TypeError) as exc:
            raise DataError(f"geometry entry {k} is missing extents: {exc}") from None
        if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
            raise DataError(f"geometry entry {k} extents out of the unit square: "
                            f"[{x0},{x1}]x[{y0},{y1}]")
        value = float(box.get("value", background * contrast * float(box.get("scale", 1.0))))
        if value <= 0:
            raise DataError(f"geometry entry {k} has nonpositive value {value}")
        inx = (centers >= x0) & (centers < x1)
        iny = (centers >= y0) & (centers < y1)
        cells[np.ix_(iny, inx)] = value
    return CoefficientField(cells)


def load_geometry(path):
    with open(path) as fh:
        geom = json.load(fh)
    if not isinstance(geom, list):
        raise DataError(f"geometry file {path} must contain a JSON list")
    return geom


def builtin_geometry(name):
    """Bundled channel layouts: 'case1' (sparse) and 'case2' (dense)."""
    try:
        text = resources.files("wavesplit.data").joinpath(f"{name}_geometry.json").read_text()
    except FileNotFoundError:
        raise DataError(f"no bundled geometry named {name!r}") from None
    return json.loads(text)


def threshold_masks(field, threshold=1.0):
    """Cell masks of the low (kappa <= threshold) and high parts; a partition."""
    low = field.cells <= threshold
    return low, ~low


@dataclass
class SourceConfig:
    """Separable forcing: envelope frequency f0 and a cell-block footprint."""
    f0: float = 0.5
    half_width: int = 1  # footprint is the centered (2*half_width)^2 cell block

    def __post_init__(self):
        if self.f0 <= 0:
            raise DataError(f"source frequency f0 must be positive, got {self.f0}")
        if self.half_width < 1:
            raise DataError("source footprint half_width must be >= 1")

    def profile(self, mesh):
        from .assembly import centered_block_cells
        return centered_block_cells(mesh, self.half_width)
