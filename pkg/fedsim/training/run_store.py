"""
Run directory layout:

    config.toml                 resolved config
    rounds.jsonl                one RoundLog per line
    checkpoints/round_<r>.ckpt  master after round r
    final.ckpt                  master after the last round
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from loguru import logger

from fedsim.aggregation.checkpoint import load_checkpoint, save_checkpoint
from fedsim.aggregation.param_store import ModelParams
from fedsim.aggregation.simagg import AggregationWeights
from fedsim.errors import MissingRunData
from fedsim.training.federation_config import write_toml

CONFIG_FILE = "config.toml"
ROUNDS_FILE = "rounds.jsonl"
CHECKPOINT_DIR = "checkpoints"
FINAL_CHECKPOINT = "final.ckpt"


@dataclass(frozen=True)
class RoundLog:
    round: int
    cohort: tuple[str, ...]
    weights: AggregationWeights
    noise: Mapping[str, Any] | None = None
    train_metrics: Mapping[str, float] = field(default_factory=dict)
    eval_metrics: Mapping[str, float] = field(default_factory=dict)
    privacy_spent: Mapping[str, Any] | None = None

    def to_json(self) -> str:
        record = {
            "round": self.round,
            "cohort": list(self.cohort),
            "weights": self.weights.to_records(self.round),
            "noise": self.noise,
            "train_metrics": dict(sorted(self.train_metrics.items())),
            "eval_metrics": dict(self.eval_metrics),
            "privacy_spent": self.privacy_spent,
        }
        return json.dumps(record, ensure_ascii=False, allow_nan=False)

    @classmethod
    def from_json(cls, line: str) -> RoundLog:
        record = json.loads(line)
        return cls(
            round=record["round"],
            cohort=tuple(record["cohort"]),
            weights=AggregationWeights.from_records(record["weights"]),
            noise=record.get("noise"),
            train_metrics=record.get("train_metrics", {}),
            eval_metrics=record.get("eval_metrics", {}),
            privacy_spent=record.get("privacy_spent"),
        )


class RunStore:
    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)

    @property
    def config_path(self) -> Path:
        return self.run_dir / CONFIG_FILE

    @property
    def rounds_path(self) -> Path:
        return self.run_dir / ROUNDS_FILE

    @property
    def final_path(self) -> Path:
        return self.run_dir / FINAL_CHECKPOINT

    def checkpoint_path(self, round_num: int) -> Path:
        return self.run_dir / CHECKPOINT_DIR / f"round_{round_num}.ckpt"

    def initialize(self, config_doc: Mapping[str, Any]) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        write_toml(config_doc, self.config_path)
        self.rounds_path.write_text("", encoding="utf-8")

    def record_round(self, log: RoundLog, master: ModelParams) -> None:
        # checkpoint before the log line, so a logged round always has its checkpoint
        save_checkpoint(master, self.checkpoint_path(log.round))
        with self.rounds_path.open("a", encoding="utf-8") as fh:
            fh.write(log.to_json() + "\n")

    def finalize(self, master: ModelParams) -> None:
        save_checkpoint(master, self.final_path)

    def read_rounds(self) -> list[RoundLog]:
        if not self.rounds_path.exists():
            raise MissingRunData(f"{self.run_dir} has no {ROUNDS_FILE}")
        text = self.rounds_path.read_text(encoding="utf-8")
        lines = [line for line in text.split("\n") if line.strip()]
        logs = []
        for i, line in enumerate(lines):
            try:
                logs.append(RoundLog.from_json(line))
            except (ValueError, KeyError) as exc:
                # an interrupted append leaves at most one partial line, at the very end
                if i == len(lines) - 1 and not text.endswith("\n"):
                    logger.warning("{}: dropping partial last line", self.rounds_path)
                    break
                raise MissingRunData(f"{self.rounds_path}: unreadable round log at line {i + 1}: {exc}") from exc
        return logs

    def truncate_rounds(self, logs: list[RoundLog]) -> None:
        self.rounds_path.write_text("".join(log.to_json() + "\n" for log in logs), encoding="utf-8")

    def load_round_checkpoint(self, round_num: int) -> ModelParams:
        return load_checkpoint(self.checkpoint_path(round_num))
