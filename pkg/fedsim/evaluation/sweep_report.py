#!/usr/bin/env python3
"""
Compare completed federation runs.

Produces a final-metrics table (rows = metrics, columns = configurations,
averaged over seeds) and a long-format per-round table (round, config, metric,
value) for external plotting.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import pandas as pd
from loguru import logger

from fedsim.errors import MissingRunData
from fedsim.evaluation.seg_metrics import table_row_labels
from fedsim.training.federation_config import Aggregator, config_label, read_toml
from fedsim.training.run_store import CONFIG_FILE, ROUNDS_FILE, RunStore

TRAIN_LOSS_ROW = "Training loss"
FINAL_METRICS_FILE = "final_metrics.csv"
CONVERGENCE_FILE = "convergence.csv"

_AGGREGATOR_ORDER = {Aggregator.DP_SIMAGG: 0, Aggregator.SIMAGG: 1, Aggregator.FEDAVG: 2}


@dataclass(frozen=True)
class RunSummary:
    run_dir: Path
    label: str
    order: tuple
    seed: int
    rounds: pd.DataFrame  # long format: round, metric, value


def discover_runs(paths: Iterable[str | Path]) -> list[Path]:
    """Run directories among ``paths`` or anywhere below them."""
    found: set[Path] = set()
    for path in map(Path, paths):
        if not path.is_dir():
            raise MissingRunData(f"not a directory: {path}")
        if (path / ROUNDS_FILE).exists():
            found.add(path)
        found.update(p.parent for p in path.rglob(ROUNDS_FILE))
    if not found:
        raise MissingRunData("no completed run directories found")
    return sorted(found)


def load_run(run_dir: Path) -> RunSummary:
    if not (run_dir / CONFIG_FILE).exists():
        raise MissingRunData(f"{run_dir} has no {CONFIG_FILE}")
    doc = read_toml(run_dir / CONFIG_FILE)
    federation = doc.get("federation", {})
    aggregator = Aggregator(federation.get("aggregator", "simagg"))
    epsilon = doc.get("privacy", {}).get("epsilon")
    label = doc.get("run", {}).get("label") or config_label(aggregator, epsilon)
    seed = int(doc.get("run", {}).get("seed", federation.get("sampling_seed", 0)))

    logs = RunStore(run_dir).read_rounds()
    if not logs:
        raise MissingRunData(f"{run_dir} has no completed rounds")
    records = []
    for log in logs:
        metrics = dict(log.eval_metrics)
        if "train_loss" in metrics:
            metrics[TRAIN_LOSS_ROW] = metrics.pop("train_loss")
        records.extend({"round": log.round, "metric": k, "value": float(v)} for k, v in metrics.items())
    rounds = pd.DataFrame(records, columns=["round", "metric", "value"])
    order = (_AGGREGATOR_ORDER[aggregator], epsilon if epsilon is not None else 0.0, label)
    return RunSummary(run_dir, label, order, seed, rounds)


def _column_order(runs: list[RunSummary]) -> list[str]:
    labels: dict[str, tuple] = {}
    for run in runs:
        labels.setdefault(run.label, run.order)
    return sorted(labels, key=labels.__getitem__)


def convergence_table(runs: list[RunSummary]) -> pd.DataFrame:
    frames = [run.rounds.assign(config=run.label, seed=run.seed) for run in runs if not run.rounds.empty]
    if not frames:
        return pd.DataFrame(columns=["round", "config", "metric", "value"])
    long = pd.concat(frames, ignore_index=True)
    table = long.groupby(["round", "config", "metric"], sort=False)["value"].mean().reset_index()
    config_rank = {label: i for i, label in enumerate(_column_order(runs))}
    table["_rank"] = table["config"].map(config_rank)
    table = table.sort_values(["round", "_rank", "metric"], kind="stable").drop(columns="_rank")
    return table.reset_index(drop=True)[["round", "config", "metric", "value"]]


def final_metrics_table(runs: list[RunSummary]) -> pd.DataFrame:
    finals = []
    for run in runs:
        if run.rounds.empty:
            continue
        last = run.rounds[run.rounds["round"] == run.rounds["round"].max()]
        finals.append(last.assign(config=run.label, seed=run.seed))
    columns = _column_order(runs)
    rows = table_row_labels() + [TRAIN_LOSS_ROW]
    if not finals:
        return pd.DataFrame(index=pd.Index(rows, name="Metrics"), columns=columns, dtype=float)
    final = pd.concat(finals, ignore_index=True)
    table = final.pivot_table(index="metric", columns="config", values="value", aggfunc="mean")
    extra = sorted(m for m in table.index if m not in rows)
    table = table.reindex(index=rows + extra, columns=columns)
    table.index.name = "Metrics"
    table.columns.name = None
    return table


def sweep_report(run_paths: Iterable[str | Path], out_dir: str | Path | None = None) -> tuple[pd.DataFrame, pd.DataFrame]:
    runs = [load_run(d) for d in discover_runs(run_paths)]
    logger.info("sweep report over {} runs, configurations: {}", len(runs), _column_order(runs))
    final, convergence = final_metrics_table(runs), convergence_table(runs)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        final.to_csv(out_dir / FINAL_METRICS_FILE)
        convergence.to_csv(out_dir / CONVERGENCE_FILE, index=False)
    return final, convergence
