"""Error series against a reference trajectory, and artifact export.

CSV files are written with 17 significant digits so round-tripping is
exact and reruns are byte identical.  Snapshots can additionally go out
as plain-text PGM rasters for a quick visual diff.
"""

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class ErrorSeries:
    times: np.ndarray
    l2: np.ndarray          # relative, fine mass norm
    energy: np.ndarray      # relative, fine stiffness norm

    def window(self, t0, t1):
        keep = (self.times >= t0 - 1e-12) & (self.times <= t1 + 1e-12)
        return ErrorSeries(self.times[keep], self.l2[keep], self.energy[keep])

    @property
    def max_l2(self):
        return float(np.max(self.l2, initial=0.0))


def _rel(diff, ref, op):
    d = float(np.sqrt(diff @ (op @ diff)))
    r = float(np.sqrt(ref @ (op @ ref)))
    if d == 0.0:
        return 0.0
    return d / r if r > 0.0 else np.inf


def prolong(basis, coarse_state):
    """Coarse coefficients -> fine free-node values."""
    return np.asarray(basis @ coarse_state).ravel()


def compare(coarse_result, basis, ref_result, M, A, stride=1):
    """Relative errors of a prolongated coarse trajectory vs a reference.

    Steps of the coarse result map to reference steps through `stride`
    (the time-step ratio); both runs must have recorded those states.
    """
    steps = sorted(coarse_result.states)
    times, l2, en = [], [], []
    for s in steps:
        ref_step = s * stride
        if ref_step not in ref_result.states:
            continue
        u = prolong(basis, coarse_result.states[s])
        r = ref_result.states[ref_step]
        times.append(s * coarse_result.config.tau)
        l2.append(_rel(u - r, r, M))
        en.append(_rel(u - r, r, A))
    return ErrorSeries(np.array(times), np.array(l2), np.array(en))


def _fmt(x):
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else _fmt(c) for c in row])


def export_error_series(series, path):
    write_csv(path, ["time", "rel_l2", "rel_energy"],
              zip(series.times, series.l2, series.energy))


def export_energy_trace(trace, path):
    rows = [("initial", trace.initial)] if trace.initial is not None else []
    rows += list(zip(trace.steps, trace.values))
    write_csv(path, ["step", "energy"],
              [(str(s), v) for s, v in rows])


def snapshot_grid(mesh, free_values):
    """Embed free-node values into the full (n+1)^2 node grid."""
    full = np.zeros(mesh.n_nodes)
    full[mesh.free_nodes] = free_values
    return full.reshape(mesh.nx_fine + 1, mesh.nx_fine + 1)


def export_snapshot(mesh, free_values, path):
    grid = snapshot_grid(mesh, free_values)
    write_csv(path, [f"c{i}" for i in range(grid.shape[1])], grid)


def export_pgm(mesh, free_values, path, levels=255):
    """ASCII PGM raster of a snapshot, linearly scaled to the gray range."""
    grid = snapshot_grid(mesh, free_values)
    lo, hi = grid.min(), grid.max()
    span = hi - lo
    scaled = np.zeros_like(grid, dtype=int) if span == 0.0 else \
        np.rint((grid - lo) / span * levels).astype(int)
    with open(path, "w") as fh:
        fh.write(f"P2\n{grid.shape[1]} {grid.shape[0]}\n{levels}\n")
        for row in scaled[::-1]:                 # image rows top-down
            fh.write(" ".join(str(v) for v in row) + "\n")
