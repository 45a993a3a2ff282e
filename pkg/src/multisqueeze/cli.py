"""Command line entry point: ``multisqueeze <command> [options]``.

Commands: simulate, reconstruct, report, full, scan-phase.  Exit codes are
0 on success, 2 for configuration errors, 3 for data/IO errors and 4 for
numerically degenerate data.  Set ``MULTISQUEEZE_WORKERS`` to run seeds and
fringes on several threads.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as config_mod
from . import pipeline
from .config import ExperimentConfig
from .errors import ConfigurationError, DataFormatError, DegenerateDataError, DimensionError, TruncationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4


def _load_config(args) -> ExperimentConfig:
    cfg = config_mod.load(args.config) if args.config else ExperimentConfig()
    if args.seed_override is not None:
        if args.seed_override < 0:
            raise ConfigurationError(f"--seed-override must be >= 0, got {args.seed_override}")
        cfg = cfg.with_seeds([args.seed_override])
    if args.out:
        cfg = cfg.with_output(args.out)
    return cfg


def _finish(cfg, manifest, out=None) -> None:
    out = out or sys.stdout
    path = manifest.write(cfg.output_dir)
    print(f"manifest: {path}", file=out)


def cmd_simulate(cfg: ExperimentConfig, out=None) -> int:
    out = out or sys.stdout
    manifest = pipeline.RunManifest.for_config(cfg)
    with pipeline.Timer(manifest.timings, "simulate"):
        paths = pipeline.simulate(cfg, manifest)
    print(f"wrote {len(paths)} frame files to {Path(cfg.output_dir) / 'frames'}", file=out)
    _finish(cfg, manifest, out)
    return EXIT_OK


def cmd_reconstruct(cfg: ExperimentConfig, files=None, out=None) -> int:
    out = out or sys.stdout
    files = list(files) if files else pipeline.find_frames(cfg)
    if not files:
        raise DataFormatError(f"no frame files given or found under {Path(cfg.output_dir) / 'frames'}")
    manifest = pipeline.RunManifest.for_config(cfg)
    with pipeline.Timer(manifest.timings, "reconstruct"):
        written = pipeline.reconstruct(files, cfg, manifest)
    print(f"reconstructed {len(files)} files (n_keep={cfg.modes.keep}) into {Path(cfg.output_dir) / 'recon'}",
          file=out)
    _finish(cfg, manifest, out)
    return EXIT_OK if written else EXIT_DATA


def cmd_report(cfg: ExperimentConfig, files=None, out=None) -> int:
    out = out or sys.stdout
    files = list(files) if files else pipeline.find_records(cfg)
    manifest = pipeline.RunManifest.for_config(cfg)
    with pipeline.Timer(manifest.timings, "report"):
        rep = pipeline.report(files, cfg, manifest)
    print(rep.format_table(), file=out)
    print(f"collinear visibility: {rep.meta['collinear_visibility']:.3f}", file=out)
    _finish(cfg, manifest, out)
    return EXIT_OK


def cmd_full(cfg: ExperimentConfig, out=None) -> int:
    out = out or sys.stdout
    manifest = pipeline.RunManifest.for_config(cfg)
    stage = "simulate"
    try:
        with pipeline.Timer(manifest.timings, stage):
            frames = pipeline.simulate(cfg, manifest)
        stage = "reconstruct"
        with pipeline.Timer(manifest.timings, stage):
            written = pipeline.reconstruct(frames, cfg, manifest)
        stage = "report"
        with pipeline.Timer(manifest.timings, stage):
            rep = pipeline.report([p for p in written if p.suffix == ".json"], cfg, manifest)
    except Exception as exc:
        exc.args = (f"stage {stage} failed: {exc}",) + exc.args[1:]
        raise
    print(rep.format_table(), file=out)
    print(f"collinear visibility: {rep.meta['collinear_visibility']:.3f}", file=out)
    _finish(cfg, manifest, out)
    return EXIT_OK


def cmd_scan_phase(cfg: ExperimentConfig, out=None) -> int:
    out = out or sys.stdout
    scan = pipeline.collinear_scan(cfg)
    dest = Path(cfg.output_dir) / "report"
    dest.mkdir(parents=True, exist_ok=True)
    pipeline.write_scan(scan, dest / "phase_scan.csv")
    print(f"visibility {scan.visibility:.3f}  S {scan.squeezing_db:.2f} dB  AS {scan.antisqueezing_db:.2f} dB",
          file=out)
    manifest = pipeline.RunManifest.for_config(cfg)
    manifest.add(dest / "phase_scan.csv", cfg.output_dir)
    _finish(cfg, manifest, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config (defaults are used when omitted)")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir in the config)")
    common.add_argument("--seed-override", type=int, help="run a single seed instead of the configured list")
    common.add_argument("--dry-run", action="store_true", help="print the execution plan and exit")

    p = argparse.ArgumentParser(prog="multisqueeze", description="Multimode squeezing reconstruction pipeline")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write frame ensembles for every seed and fringe")
    rec = sub.add_parser("reconstruct", parents=[common], help="decompose frame files into modes and weights")
    rec.add_argument("files", nargs="*", type=Path, help="frame files (default: all under OUT/frames)")
    rep = sub.add_parser("report", parents=[common], help="per-mode squeezing table over seeds")
    rep.add_argument("files", nargs="*", type=Path, help="reconstruction JSON files (default: OUT/recon)")
    sub.add_parser("full", parents=[common], help="simulate, reconstruct and report in one run")
    sub.add_parser("scan-phase", parents=[common], help="collinear phase-scan trace and visibility")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.dry_run:
            print(f"config hash {cfg.config_hash()}")
            for step in pipeline.plan(cfg, args.command):
                print(f"  {step}")
            return EXIT_OK
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg, args.files)
        if args.command == "report":
            return cmd_report(cfg, args.files)
        if args.command == "full":
            return cmd_full(cfg)
        return cmd_scan_phase(cfg)
    except (ConfigurationError, TruncationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateDataError as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DataFormatError, DimensionError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
