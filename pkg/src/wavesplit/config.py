"""Experiment configuration and the end-to-end runner behind the CLI.

A JSON config names the mesh, the medium, the coarse pair, the schemes to
march and the reference run; `run_experiment` builds everything, checks
step sizes against the certification, marches, and writes a deterministic
artifact set (CSV series, snapshot grids and PGM rasters, stability JSON)
into the output directory.  Relative output directories are rooted at
$WAVESPLIT_OUTPUT_ROOT when that is set.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics, media
from .assembly import (assemble_indicator_load, assemble_mass,
                       assemble_stiffness, source_amplitude)
from .errors import ConfigurationError, InstabilityError
from .grid import build_mesh
from .integrators import SchemeConfig, SimResult, SplitBlocks, run
from .spaces import (build_aux_space, build_cem_basis, build_lumped_pair,
                     build_v2_choice1, build_v2_choice2, make_pair)
from .stability import certify, certify_pair, compute_alpha

OUTPUT_ROOT_ENV = "WAVESPLIT_OUTPUT_ROOT"
SPACE_TAGS = ("fine", "cem", "pair")


def _field(d, key, path, kind=None, default=KeyError, choices=None):
    if key not in d:
        if default is KeyError:
            raise ConfigurationError(f"config field {path}.{key} is required")
        return default
    v = d[key]
    if kind is not None:
        if kind is float and isinstance(v, (int, float)) and not isinstance(v, bool):
            v = float(v)
        elif not isinstance(v, kind) or isinstance(v, bool):
            raise ConfigurationError(
                f"config field {path}.{key}: expected {kind.__name__}, got {v!r}")
    if choices is not None and v not in choices:
        raise ConfigurationError(
            f"config field {path}.{key}: {v!r} not one of {choices}")
    return v


@dataclass
class SchemeEntry:
    scheme: SchemeConfig
    space: str


@dataclass
class ExperimentConfig:
    nx_fine: int
    nx_coarse: int
    medium: dict
    schemes: list
    source: media.SourceConfig = None
    spaces: dict = None
    reference_tau: float = None
    error_window: tuple = (0.2, 0.6)
    snapshot_times: tuple = ()
    output_dir: str = "out"
    seed: int = 0

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigurationError("config root must be a JSON object")
        mesh = _field(raw, "mesh", "", dict)
        nx_fine = _field(mesh, "nx_fine", "mesh", int)
        nx_coarse = _field(mesh, "nx_coarse", "mesh", int)

        medium = _field(raw, "medium", "", dict)
        if ("file" in medium) == ("geometry" in medium):
            raise ConfigurationError(
                "config field medium: give exactly one of 'file' or 'geometry'")

        source = None
        if raw.get("source") is not None:
            s = _field(raw, "source", "", dict)
            source = media.SourceConfig(
                f0=_field(s, "f0", "source", float, 0.5),
                half_width=_field(s, "half_width", "source", int, 1))

        spaces = raw.get("spaces")
        if spaces is not None:
            spaces = dict(spaces)
            _field(spaces, "aux_per_element", "spaces", int, 3)
            _field(spaces, "layers", "spaces", int, 2)
            _field(spaces, "weighting", "spaces", str, "H2", choices=("H2", "pou"))
            v2 = _field(spaces, "v2", "spaces", dict, None)
            if v2 is not None:
                _field(v2, "kind", "spaces.v2", str,
                       choices=("choice1", "choice2", "lumped"))
                _field(v2, "count", "spaces.v2", int, 3)
                _field(v2, "threshold", "spaces.v2", float, 1.0)

        entries = _field(raw, "schemes", "", list)
        if not entries:
            raise ConfigurationError("config field schemes: must not be empty")
        schemes = []
        for k, e in enumerate(entries):
            path = f"schemes[{k}]"
            if not isinstance(e, dict):
                raise ConfigurationError(f"config field {path}: expected object")
            cfg = SchemeConfig(
                name=_field(e, "name", path, str),
                tau=_field(e, "tau", path, float),
                T=_field(e, "T", path, float),
                sigma=_field(e, "sigma", path, float, 0.25),
                omega=_field(e, "omega", path, float, None))
            space = _field(e, "space", path, str,
                           "pair" if cfg.is_split else "fine", choices=SPACE_TAGS)
            if cfg.is_split and space != "pair":
                raise ConfigurationError(
                    f"config field {path}.space: split schemes run on 'pair'")
            if space != "fine" and spaces is None:
                raise ConfigurationError(
                    f"config field {path}.space: {space!r} needs a 'spaces' section")
            schemes.append(SchemeEntry(cfg, space))

        ref = raw.get("reference")
        reference_tau = None
        if ref is not None:
            reference_tau = _field(ref, "tau", "reference", float, 1e-4)
            for k, e in enumerate(schemes):
                ratio = e.scheme.tau / reference_tau
                if abs(ratio - round(ratio)) > 1e-9 * max(ratio, 1.0):
                    raise ConfigurationError(
                        f"config field schemes[{k}].tau: {e.scheme.tau} is not an "
                        f"integer multiple of reference.tau={reference_tau}")

        window = tuple(_field(raw, "error_window", "", list, [0.2, 0.6]))
        if len(window) != 2 or not window[0] < window[1]:
            raise ConfigurationError(
                "config field error_window: expected [t0, t1] with t0 < t1")

        return cls(nx_fine=nx_fine, nx_coarse=nx_coarse, medium=medium,
                   schemes=schemes, source=source, spaces=spaces,
                   reference_tau=reference_tau, error_window=window,
                   snapshot_times=tuple(raw.get("snapshot_times", ())),
                   output_dir=_field(raw, "output_dir", "", str, "out"),
                   seed=_field(raw, "seed", "", int, 0))

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigurationError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") \
                from None
        return cls.from_dict(raw)

    def resolve_output(self, override=None):
        out = override or self.output_dir
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not os.path.isabs(out):
            out = os.path.join(root, out)
        return out


def build_medium(cfg, base_dir="."):
    m = cfg.medium
    if "file" in m:
        path = m["file"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        fieldv = media.load_field(path)
        if fieldv.shape != (cfg.nx_fine, cfg.nx_fine):
            raise ConfigurationError(
                f"medium.file: grid {fieldv.shape} does not match mesh "
                f"({cfg.nx_fine},{cfg.nx_fine})")
        return fieldv
    geom = m["geometry"]
    if isinstance(geom, str):
        if geom.endswith(".json"):
            path = geom if os.path.isabs(geom) else os.path.join(base_dir, geom)
            geom = media.load_geometry(path)
        else:
            geom = media.builtin_geometry(geom)
    return media.synth_channels(geom, cfg.nx_fine,
                                background=float(m.get("background", 1.0)),
                                contrast=float(m.get("contrast", 1e4)))


@dataclass
class Workspace:
    """Everything an experiment needs, built once from a config."""
    cfg: ExperimentConfig
    mesh: object
    kappa: media.CoefficientField
    M: object
    A: object
    pair: object = None
    blocks: SplitBlocks = None
    blocks_surrogate: SplitBlocks = None
    load_fine: np.ndarray = None

    def operators_for(self, entry):
        if entry.space == "fine":
            return (self.M, self.A)
        if entry.space == "cem":
            b = self.pair.basis1
            return (np.asarray((b.T @ (self.M @ b)).todense()),
                    np.asarray((b.T @ (self.A @ b)).todense()))
        if entry.scheme.name == "split_lumped":
            return self.blocks_surrogate
        if entry.scheme.is_split:
            return self.blocks
        return (self.blocks.full_mass(), self.blocks.full_stiffness())

    def basis_for(self, entry):
        if entry.space == "fine":
            return None
        return self.pair.basis1 if entry.space == "cem" else self.pair.combined()

    def source_for(self, entry):
        if self.load_fine is None or self.cfg.source is None:
            return None
        base = self.load_fine
        basis = self.basis_for(entry)
        if basis is not None:
            base = np.asarray(basis.T @ base).ravel()
        f0 = self.cfg.source.f0
        mesh = self.mesh
        return lambda t: source_amplitude(mesh, t, f0) * base


def build_workspace(cfg, base_dir="."):
    mesh = build_mesh(cfg.nx_fine, cfg.nx_coarse)
    kappa = build_medium(cfg, base_dir)
    M = assemble_mass(mesh)
    A = assemble_stiffness(mesh, kappa)
    ws = Workspace(cfg, mesh, kappa, M, A)
    if cfg.source is not None:
        ws.load_fine = assemble_indicator_load(mesh, cfg.source.profile(mesh))
    if cfg.spaces is not None:
        sp = cfg.spaces
        v2 = sp.get("v2") or {"kind": "choice2", "count": 3}
        layers = sp.get("layers", 2)
        if v2["kind"] == "lumped":
            pair = build_lumped_pair(mesh, kappa, v2.get("threshold", 1.0),
                                     v2.get("count", 5), layers)
            ws.blocks_surrogate = SplitBlocks.from_pair(pair, M, A, surrogate=True)
        else:
            aux = build_aux_space(mesh, kappa, sp.get("aux_per_element", 3),
                                  sp.get("weighting", "H2"))
            basis1 = build_cem_basis(mesh, kappa, aux, layers)
            if v2["kind"] == "choice1":
                basis2 = build_v2_choice1(mesh, kappa, aux, v2.get("count", 3))
            else:
                basis2 = build_v2_choice2(mesh, kappa, aux, v2.get("count", 3), layers)
            pair = make_pair(basis1, basis2, aux)
        ws.pair = pair
        ws.blocks = SplitBlocks.from_pair(pair, M, A)
    return ws


def stability_summary(ws, entries, seed=0):
    """Certification reports for every scheme in the run."""
    reports = []
    alpha_full = None
    for e in entries:
        name, tau = e.scheme.name, e.scheme.tau
        if e.scheme.is_split:
            blocks = ws.blocks_surrogate if name == "split_lumped" else ws.blocks
            mode = "split_orthogonal" if name == "split_omega0" \
                else "split_nonorthogonal"
            rep = certify_pair(blocks, tau, mode, seed=seed)
        elif name == "explicit" and e.space == "fine":
            if alpha_full is None:
                alpha_full = compute_alpha(ws.A, ws.M, seed=seed)
            rep = certify(tau, "explicit_full", alpha_full)
        else:
            continue
        reports.append((name, rep))
    return reports


def _snapshot_steps(cfg_scheme, times):
    steps = set()
    for t in times:
        s = int(round(t / cfg_scheme.tau))
        if 0 <= s <= cfg_scheme.n_steps:
            steps.add(s)
    return steps


def run_experiment(cfg, base_dir=".", output_override=None, progress=print):
    """Build, certify, march and export; returns the output directory.

    Raises ConfigurationError / SolverError / InstabilityError upward; on
    instability the artifacts produced so far stay on disk.
    """
    outdir = cfg.resolve_output(output_override)
    os.makedirs(outdir, exist_ok=True)
    ws = build_workspace(cfg, base_dir)
    media.save_field(ws.kappa, os.path.join(outdir, "kappa.csv"))

    reports = stability_summary(ws, cfg.schemes, seed=cfg.seed)
    with open(os.path.join(outdir, "stability.json"), "w") as fh:
        fh.write(json.dumps({name: json.loads(rep.to_json())
                             for name, rep in reports},
                            indent=2, sort_keys=True) + "\n")
    for name, rep in reports:
        progress(f"certify {name}: tau={rep.tau:g} tau_max={rep.tau_max:g} "
                 f"passed={rep.passed}")

    reference = None
    ref_entry = None
    if cfg.reference_tau is not None:
        horizon = max(e.scheme.T for e in cfg.schemes)
        ref_cfg = SchemeConfig("explicit", cfg.reference_tau, horizon)
        ref_entry = SchemeEntry(ref_cfg, "fine")
        keep = set()
        for e in cfg.schemes:
            stride = int(round(e.scheme.tau / cfg.reference_tau))
            keep.update(range(0, ref_cfg.n_steps + 1, stride))
        progress(f"reference: explicit fine, tau={cfg.reference_tau:g}, "
                 f"{ref_cfg.n_steps} steps")
        reference = run(ref_cfg, (ws.M, ws.A), source=ws.source_for(ref_entry),
                        record_steps=keep, collect_energy=False)

    summary = {}
    for e in cfg.schemes:
        name = e.scheme.name
        tag = name if sum(x.scheme.name == name for x in cfg.schemes) == 1 \
            else f"{name}_{cfg.schemes.index(e)}"
        ops = ws.operators_for(e)
        snap = _snapshot_steps(e.scheme, cfg.snapshot_times)
        record = snap | {0, e.scheme.n_steps} if reference is None \
            else snap | set(range(0, e.scheme.n_steps + 1))
        progress(f"run {tag}: tau={e.scheme.tau:g} steps={e.scheme.n_steps}")
        result = run(e.scheme, ops, source=ws.source_for(e), record_steps=record)
        diagnostics.export_energy_trace(
            result.energy, os.path.join(outdir, f"energy_{tag}.csv"))
        entry = {"energy_drift": result.energy.drift}
        basis = ws.basis_for(e)
        for s in sorted(snap):
            u = result.state_at(s) if s in result.states else None
            if u is None:
                continue
            fine = u if basis is None else diagnostics.prolong(basis, u)
            stem = os.path.join(outdir, f"snapshot_{tag}_step{s}")
            diagnostics.export_snapshot(ws.mesh, fine, stem + ".csv")
            diagnostics.export_pgm(ws.mesh, fine, stem + ".pgm")
        if reference is not None:
            stride = int(round(e.scheme.tau / cfg.reference_tau))
            ident = basis if basis is not None else _identity_basis(ws.mesh.n_free)
            series = diagnostics.compare(result, ident, reference, ws.M, ws.A,
                                         stride=stride)
            diagnostics.export_error_series(
                series, os.path.join(outdir, f"errors_{tag}.csv"))
            win = series.window(*cfg.error_window)
            entry["max_rel_l2"] = win.max_l2
        summary[tag] = entry
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return outdir


def _identity_basis(n):
    import scipy.sparse as sparse
    return sparse.identity(n, format="csc")


SWEEP_AXES = ("contrast", "tau", "layers", "aux_per_element", "v2_count")


def sweep(cfg, axis, values, base_dir=".", output_override=None, progress=print):
    """Rerun the first split scheme of the config along one axis.

    Each run starts from seeded random initial data (so instability has
    content to amplify) on top of any configured source.  Writes sweep.csv
    with one row per value: the sharp constants, the certified step bound,
    observed energy drift, end-state growth, and the run status.
    """
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"unknown sweep axis {axis!r}; "
                                 f"pick one of {SWEEP_AXES}")
    split_entries = [e for e in cfg.schemes if e.scheme.is_split]
    if not split_entries:
        raise ConfigurationError("sweep needs at least one split scheme in config")
    entry = split_entries[0]

    outdir = cfg.resolve_output(output_override)
    os.makedirs(outdir, exist_ok=True)
    rows = []
    for v in values:
        progress(f"sweep {axis}={v:g}")
        c = _with_axis(cfg, axis, v, entry)
        ws = build_workspace(c, base_dir)
        e = [x for x in c.schemes if x.scheme.is_split][0]
        blocks = ws.blocks_surrogate if e.scheme.name == "split_lumped" else ws.blocks
        rep = certify_pair(blocks, e.scheme.tau, seed=c.seed)
        alpha_full = compute_alpha(ws.A, ws.M, seed=c.seed)
        rng = np.random.default_rng(c.seed)
        u0 = rng.standard_normal(blocks.n1 + blocks.n2)
        status, drift, growth = "ok", np.nan, np.nan
        try:
            result = run(e.scheme, blocks, source=ws.source_for(e),
                         initial=(u0, np.zeros_like(u0)), record_steps=set())
            drift = result.energy.drift
            growth = float(np.max(np.abs(result.final_pair[1]))
                           / np.max(np.abs(u0)))
        except InstabilityError as exc:
            status = f"blowup_step_{exc.step}"
            growth = np.inf
        rows.append((v, rep.alpha, alpha_full, rep.gamma, rep.gamma_a,
                     rep.tau_max, 2.0 / alpha_full if alpha_full else np.inf,
                     e.scheme.tau, int(rep.passed), drift, growth, status))
    path = os.path.join(outdir, "sweep.csv")
    diagnostics.write_csv(
        path,
        ["value", "alpha_v2", "alpha_fine", "gamma", "gamma_a", "tau_max_split",
         "tau_max_explicit_fine", "tau", "certified", "energy_drift", "growth",
         "status"],
        rows)
    return path


def _with_axis(cfg, axis, value, entry):
    import copy
    c = copy.deepcopy(cfg)
    if axis == "contrast":
        if "geometry" not in c.medium:
            raise ConfigurationError("contrast sweep needs a synthetic medium")
        c.medium["contrast"] = float(value)
    elif axis == "tau":
        for e in c.schemes:
            if e.scheme.name == entry.scheme.name:
                e.scheme.tau = float(value)
    elif axis == "layers":
        c.spaces["layers"] = int(value)
    elif axis == "aux_per_element":
        c.spaces["aux_per_element"] = int(value)
    elif axis == "v2_count":
        c.spaces.setdefault("v2", {"kind": "choice2"})["count"] = int(value)
    c.reference_tau = None
    return c
