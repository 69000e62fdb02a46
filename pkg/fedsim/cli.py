"""
fedsim command line.

    fedsim run [--config SPEC] [--out DIR] [--seed N ...] [--force] [--parallel]
    fedsim sweep-report RUN_DIR [RUN_DIR ...] [--out DIR]
    fedsim score MANIFEST [--out CSV]
    fedsim inspect-checkpoint CKPT

FEDSIM_LOG sets log verbosity (DEBUG, INFO, WARNING, ...). Exit status is 0 on
success, otherwise the ``exit_code`` of the error class printed on stderr.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from fedsim.aggregation.checkpoint import load_checkpoint
from fedsim.data_processing.create_synthetic_task import SyntheticTask, SyntheticTaskCreator
from fedsim.errors import FedSimError, OutputExists
from fedsim.evaluation.evaluate_volumes import score_manifest
from fedsim.evaluation.sweep_report import sweep_report
from fedsim.logging_config import configure_logging
from fedsim.training.federated_trainer import run_federation
from fedsim.training.federation_config import ExperimentSpec, SubRun, federation_to_dict, load_experiment_spec

RUN_MANIFEST = "run_manifest.json"
ROW_ERRORS_EXIT = 8


def _run_one(sub: SubRun, task: SyntheticTask, spec: ExperimentSpec, out_dir: Path) -> Path:
    run_dir = out_dir / sub.dirname
    doc = federation_to_dict(sub.federation, spec.task, label=sub.label, seed=sub.seed, dirname=sub.dirname)
    logger.info("{} seed={} -> {}", sub.label, sub.seed, run_dir)
    run_federation(sub.federation, task.trainer, task.initial_params(), run_dir, doc)
    return run_dir


def cmd_run(spec_path: str | Path | None, out: str | Path | None = None, force: bool = False,
            seeds: list[int] | None = None, parallel: bool = False) -> Path:
    spec = load_experiment_spec(spec_path)
    if seeds:
        spec = spec.with_seeds(tuple(seeds))
    out_dir = Path(out if out is not None else spec.out_dir)
    sub_runs = list(spec.sub_runs())

    taken = [out_dir / sub.dirname for sub in sub_runs if (out_dir / sub.dirname).exists()]
    if taken and not force:
        raise OutputExists(f"{len(taken)} run directories already exist under {out_dir} (first: {taken[0]}); "
                           "pass --force to overwrite them")
    for path in taken:
        shutil.rmtree(path)
    out_dir.mkdir(parents=True, exist_ok=True)

    creator = SyntheticTaskCreator(spec.task)
    tasks = {seed: creator.create(spec.federation.n_collaborators, seed) for seed in spec.seeds}

    if parallel and len(sub_runs) > 1:
        with ThreadPoolExecutor() as pool:
            futures = [pool.submit(_run_one, sub, tasks[sub.seed], spec, out_dir) for sub in sub_runs]
            run_dirs = [f.result() for f in futures]
    else:
        run_dirs = [_run_one(sub, tasks[sub.seed], spec, out_dir) for sub in sub_runs]

    # timestamps live only here; this file is excluded from determinism checks
    manifest = {
        "created_at": datetime.now(timezone.utc).isoformat(),
        "spec": str(spec_path) if spec_path is not None else "<packaged default>",
        "runs": [{"label": s.label, "seed": s.seed, "dir": s.dirname} for s in sub_runs],
    }
    (out_dir / RUN_MANIFEST).write_text(json.dumps(manifest, indent=2, ensure_ascii=False), encoding="utf-8")
    print(f"✅ {len(run_dirs)} runs written to {out_dir}")
    return out_dir


def cmd_sweep_report(run_dirs: list[str], out: str | None = None) -> pd.DataFrame:
    final, convergence = sweep_report(run_dirs, out)
    with pd.option_context("display.float_format", "{:.3f}".format, "display.width", 200):
        print(final.to_string())
    if out is None:
        print()
        convergence.to_csv(sys.stdout, index=False)
    return final


def cmd_score(manifest_path: str, out: str | None = None) -> int:
    table, failures = score_manifest(manifest_path)
    if out is None:
        table.to_csv(sys.stdout, index=False)
    else:
        table.to_csv(out, index=False)
    if failures:
        logger.error("{} case(s) could not be scored", failures)
        return ROW_ERRORS_EXIT
    return 0


def cmd_inspect_checkpoint(path: str) -> pd.DataFrame:
    params = load_checkpoint(path)
    rows = [
        {"group": name, "length": arr.size,
         "min": float(arr.min()) if arr.size else np.nan,
         "max": float(arr.max()) if arr.size else np.nan,
         "mean": float(arr.mean()) if arr.size else np.nan,
         "l2": float(np.linalg.norm(arr))}
        for name, arr in params.items()
    ]
    table = pd.DataFrame(rows, columns=["group", "length", "min", "max", "mean", "l2"])
    print(f"{path}: {len(params)} groups, {params.total_len} values")
    print(table.to_string(index=False))
    return table


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsim", description="SimAgg / DP-SimAgg federated learning simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every configuration of an experiment spec")
    run.add_argument("--config", help="experiment spec (TOML); defaults to the packaged spec")
    run.add_argument("--out", help="output directory (overrides [experiment].out_dir)")
    run.add_argument("--seed", type=int, action="append", help="seed to run; repeat for several")
    run.add_argument("--force", action="store_true", help="overwrite existing run directories")
    run.add_argument("--parallel", action="store_true", help="run sub-runs concurrently")

    report = sub.add_parser("sweep-report", help="tabulate final and per-round metrics of completed runs")
    report.add_argument("run_dirs", nargs="+")
    report.add_argument("--out", help="directory for final_metrics.csv and convergence.csv (default: print the per-round table as CSV)")

    score = sub.add_parser("score", help="score SEGVOL prediction/reference pairs from a manifest CSV")
    score.add_argument("manifest")
    score.add_argument("--out", help="output CSV (default: stdout)")

    inspect = sub.add_parser("inspect-checkpoint", help="summarize a checkpoint file")
    inspect.add_argument("checkpoint")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        match args.command:
            case "run":
                cmd_run(args.config, args.out, args.force, args.seed, args.parallel)
            case "sweep-report":
                cmd_sweep_report(args.run_dirs, args.out)
            case "score":
                return cmd_score(args.manifest, args.out)
            case "inspect-checkpoint":
                cmd_inspect_checkpoint(args.checkpoint)
    except FedSimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
