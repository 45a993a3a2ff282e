"""Orchestration: model construction and the simulate → reconstruct → report chain.

File layout under the output directory::

    frames/frames_<fringe>_seed<k>.msq      binary frame ensembles
    recon/recon_<fringe>_seed<k>.json       weights, assignment, diagnostics
    recon/modes_<fringe>_seed<k>.csv        reconstructed mode shapes
    report/squeezing_report.{json,csv}      per-mode table over seeds
    report/phase_scan.csv                   collinear phase-scan trace
    manifest.json                           checksums, timings, config
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .errors import DataFormatError, DimensionError
from .frame_synth import AcquisitionConfig, acquire_ensemble, load_ensemble, save_ensemble
from .gaussian_core import (
    Fringe,
    InterferometerModel,
    PhaseScan,
    SchmidtSpectrum,
    StageParams,
    calibrate_r0,
    ground_truth_squeezing,
    phase_scan,
)
from .hg_modes import OverlapMatrix, hermite_gauss_basis, make_grid, overlap_matrix, width_schedule
from .recon import decompose, estimate_covariance, match_sign_and_pair
from .squeezing import SqueezingReport, TripleDataset, aggregate

WORKERS_ENV = "MULTISQUEEZE_WORKERS"
_FRAME_NAME = re.compile(r"frames_(bright|dark|vacuum)_seed(\d+)\.msq$")


def worker_count() -> int:
    try:
        return max(int(os.environ.get(WORKERS_ENV, "1")), 1)
    except ValueError:
        return 1


def _map(fn, items):
    items = list(items)
    workers = worker_count()
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def build_model(cfg: ExperimentConfig, fringe: Fringe = Fringe.BRIGHT) -> InterferometerModel:
    """Two-stage multimode model at the stripe (effective) squeezer gain."""
    grid = make_grid(cfg.grid.theta_min, cfg.grid.theta_max, cfg.grid.n_points)
    n = cfg.modes.simulate
    s, a = cfg.squeezer, cfg.amplifier
    bs = hermite_gauss_basis(grid, width_schedule(s.gain, s.sigma0, s.c), n, "squeezer")
    ba = hermite_gauss_basis(grid, width_schedule(a.gain, a.sigma0, a.c), n, "amplifier")
    r_amp = calibrate_r0(a.gain, ba, a.q) if a.calibrate else a.gain
    squeezer = StageParams(s.gain, SchmidtSpectrum.geometric(s.gain, s.q, n), bs)
    amplifier = StageParams(a.gain, SchmidtSpectrum.geometric(r_amp, a.q, n), ba)
    if cfg.reconstruction.g_file:
        g = OverlapMatrix(np.loadtxt(cfg.reconstruction.g_file, delimiter=",", ndmin=2),
                          "squeezer", "amplifier")
        if g.shape != (n, n):
            raise DimensionError(f"{cfg.reconstruction.g_file}: g has shape {g.shape}, expected ({n}, {n})")
    else:
        g = overlap_matrix(bs, ba)
    meta = {"amplifier_r0": float(r_amp)}
    return InterferometerModel(squeezer, amplifier, g, cfg.loss.eta_pre, Fringe(fringe), meta=meta)


def collinear_model(cfg: ExperimentConfig) -> InterferometerModel:
    """Single-mode model of the collinear (on-axis) measurement at ``gain_collinear``."""
    grid = make_grid(cfg.grid.theta_min, cfg.grid.theta_max, cfg.grid.n_points)
    basis = hermite_gauss_basis(grid, cfg.squeezer.sigma0, 1, "collinear")
    squeezer = StageParams(cfg.squeezer.gain_collinear, SchmidtSpectrum.uniform(cfg.squeezer.gain_collinear, 1), basis)
    amplifier = StageParams(cfg.amplifier.gain, SchmidtSpectrum.uniform(cfg.amplifier.gain, 1), basis)
    return InterferometerModel(squeezer, amplifier, OverlapMatrix.identity(1), cfg.loss.eta_pre)


def collinear_scan(cfg: ExperimentConfig) -> PhaseScan:
    phases = np.linspace(0.0, 2 * np.pi, cfg.scan.n_phases)
    return phase_scan(collinear_model(cfg), phases=phases)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Provenance record: config hash, tool version, artifacts with checksums, timings."""

    config_hash: str
    config: dict
    tool_version: str = __version__
    artifacts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @classmethod
    def for_config(cls, cfg: ExperimentConfig) -> "RunManifest":
        return cls(cfg.config_hash(), cfg.to_dict())

    def add(self, path, root) -> None:
        path = Path(path)
        self.artifacts.append({
            "path": str(path.relative_to(root)) if path.is_relative_to(root) else str(path),
            "sha256": sha256_file(path),
            "bytes": path.stat().st_size,
        })

    def write(self, root) -> Path:
        out = Path(root) / "manifest.json"
        self.artifacts.sort(key=lambda a: a["path"])
        with open(out, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
        return out

    @staticmethod
    def verify(path) -> list[str]:
        """Paths whose current checksum differs from the manifest (empty when all match)."""
        path = Path(path)
        with open(path) as fh:
            data = json.load(fh)
        bad = []
        for art in data["artifacts"]:
            p = Path(art["path"])
            p = p if p.is_absolute() else path.parent / p
            if not p.exists() or sha256_file(p) != art["sha256"]:
                bad.append(art["path"])
        return bad


def frame_path(out, fringe: Fringe, seed: int) -> Path:
    return Path(out) / "frames" / f"frames_{Fringe(fringe).value}_seed{seed}.msq"


def plan(cfg: ExperimentConfig, command: str) -> list[str]:
    """Human-readable list of what ``command`` would do."""
    out = Path(cfg.output_dir)
    seeds = cfg.acquisition.seeds
    steps = []
    if command in ("simulate", "full"):
        steps += [f"simulate {cfg.acquisition.n_frames} frames -> {frame_path(out, f, s)}"
                  for s in seeds for f in Fringe]
    if command in ("reconstruct", "full"):
        steps += [f"reconstruct {frame_path(out, f, s).name} keeping {cfg.modes.keep} modes"
                  for s in seeds for f in Fringe]
    if command in ("report", "full"):
        steps.append(f"report {cfg.modes.report} modes over seeds {list(seeds)} -> {out / 'report'}")
    if command == "scan-phase":
        steps.append(f"phase scan with {cfg.scan.n_phases} phases -> {out / 'report' / 'phase_scan.csv'}")
    steps.append(f"write {out / 'manifest.json'}")
    return steps


def simulate(cfg: ExperimentConfig, manifest: RunManifest | None = None) -> list[Path]:
    """Write one frame ensemble per (seed, fringe)."""
    out = Path(cfg.output_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    model = build_model(cfg)
    acq = cfg.acquisition

    def job(item):
        seed, fringe = item
        conf = AcquisitionConfig(acq.n_frames, fringe, cfg.loss.eta_detect, acq.pump_rel_std, seed, acq.shot_noise)
        ens = acquire_ensemble(model.with_fringe(fringe), conf, workers=1)
        path = frame_path(out, fringe, seed)
        save_ensemble(ens, path)
        return path

    paths = _map(job, [(s, f) for s in acq.seeds for f in Fringe])
    if manifest is not None:
        for p in paths:
            manifest.add(p, out)
    return paths


def reconstruct_file(path, cfg: ExperimentConfig, model: InterferometerModel | None = None) -> dict:
    """Reconstruct one frame file; writes its JSON and mode CSV, returns the JSON record."""
    path = Path(path)
    ens = load_ensemble(path)
    grid = make_grid(cfg.grid.theta_min, cfg.grid.theta_max, cfg.grid.n_points)
    if ens.grid != grid:
        raise DimensionError(f"{path}: grid {ens.grid.metadata()} does not match the config {grid.metadata()}")
    if ens.n_frames < 2:
        raise DataFormatError(f"{path}: fewer than 2 frames")
    model = build_model(cfg) if model is None else model
    subtract = ens.config.shot_noise and cfg.acquisition.subtract_shot_noise
    cov = estimate_covariance(ens, subtract_shot_noise=subtract)
    n_keep = cfg.modes.keep
    rec = decompose(cov, n_keep, cfg.reconstruction.signs)
    rec = match_sign_and_pair(rec, model.detection_basis.truncate(n_keep))
    record = rec.summary()
    record.update({
        "source": path.name,
        "fringe": ens.config.fringe.value,
        "seed": ens.config.seed,
        "n_frames": ens.n_frames,
        "n_keep": n_keep,
        "total_mean": ens.total_mean,
        "weights_by_mode": rec.weights_by_reference(n_keep).tolist(),
    })
    out = Path(cfg.output_dir) / "recon"
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{ens.config.fringe.value}_seed{ens.config.seed}"
    with open(out / f"recon_{stem}.json", "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
    rec.to_csv(out / f"modes_{stem}.csv")
    return record


def reconstruct(paths, cfg: ExperimentConfig, manifest: RunManifest | None = None) -> list[Path]:
    paths = [Path(p) for p in paths]
    model = build_model(cfg)
    records = _map(lambda p: reconstruct_file(p, cfg, model), paths)
    out = Path(cfg.output_dir) / "recon"
    written = []
    for r in records:
        stem = f"{r['fringe']}_seed{r['seed']}"
        written += [out / f"recon_{stem}.json", out / f"modes_{stem}.csv"]
    if manifest is not None:
        for p in written:
            manifest.add(p, cfg.output_dir)
    return written


def find_frames(cfg: ExperimentConfig) -> list[Path]:
    out = Path(cfg.output_dir) / "frames"
    return sorted(p for p in out.glob("*.msq") if _FRAME_NAME.search(p.name))


def _load_records(paths) -> dict:
    by_seed: dict = {}
    for p in paths:
        try:
            with open(p) as fh:
                r = json.load(fh)
            key = (int(r["seed"]), Fringe(r["fringe"]))
            r["weights_by_mode"] = np.asarray(r["weights_by_mode"], dtype=float)
        except (ValueError, KeyError, TypeError) as exc:
            raise DataFormatError(f"{p}: not a reconstruction record ({exc})") from None
        by_seed.setdefault(key[0], {})[key[1]] = r
    return by_seed


def build_report(record_paths, cfg: ExperimentConfig) -> tuple[SqueezingReport, PhaseScan]:
    by_seed = _load_records(record_paths)
    if not by_seed:
        raise DataFormatError("no reconstruction records found")
    model = build_model(cfg)
    datasets = []
    n_frames = set()
    for seed in sorted(by_seed):
        recs = by_seed[seed]
        missing = [f.value for f in Fringe if f not in recs]
        if missing:
            raise DataFormatError(f"seed {seed}: missing the {', '.join(missing)} reconstruction")
        pops = {f: recs[f]["weights_by_mode"] * recs[f]["total_mean"] for f in Fringe}
        datasets.append(TripleDataset.from_populations(pops, model.g, cfg.modes.keep, {"seed": seed}))
        n_frames |= {recs[f]["n_frames"] for f in Fringe}
    report = aggregate(datasets, cfg.reconstruction.vacuum_floor)
    S_true, AS_true = ground_truth_squeezing(model)
    scan = collinear_scan(cfg)
    meta = dict(report.meta)
    meta.update({
        "seeds": sorted(by_seed),
        "n_frames": sorted(n_frames),
        "config_hash": cfg.config_hash(),
        "collinear_visibility": scan.visibility,
        "collinear_S_dB": scan.squeezing_db,
        "collinear_AS_dB": scan.antisqueezing_db,
    })
    report = SqueezingReport(report.S, report.AS, report.S_err, report.AS_err, S_true[: report.n_modes],
                             AS_true[: report.n_modes], report.unmeasurable, report.row_deficit, meta)
    return report.head(cfg.modes.report), scan


def write_scan(scan: PhaseScan, path) -> None:
    header = (f"visibility={scan.visibility:.6f} min={scan.minimum:.6g} max={scan.maximum:.6g}\n"
              "pump_phase_rad,photons_over_vacuum")
    np.savetxt(path, np.column_stack([scan.phases, scan.trace]), delimiter=",", header=header, fmt="%.17g")


def report(record_paths, cfg: ExperimentConfig, manifest: RunManifest | None = None) -> SqueezingReport:
    rep, scan = build_report(record_paths, cfg)
    out = Path(cfg.output_dir) / "report"
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "squeezing_report.json", out / "squeezing_report.csv", out / "phase_scan.csv"]
    rep.to_json(paths[0])
    rep.to_csv(paths[1])
    write_scan(scan, paths[2])
    if manifest is not None:
        for p in paths:
            manifest.add(p, cfg.output_dir)
    return rep


def find_records(cfg: ExperimentConfig) -> list[Path]:
    return sorted((Path(cfg.output_dir) / "recon").glob("recon_*.json"))


class Timer:
    """Context manager that stores the elapsed wall time under ``name``."""

    def __init__(self, timings: dict, name: str):
        self.timings, self.name = timings, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.timings[self.name] = round(time.perf_counter() - self.t0, 3)
        return False
