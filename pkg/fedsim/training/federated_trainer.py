"""
Synchronous federation rounds: sample a cohort, train locally, aggregate, log, checkpoint.
"""

from __future__ import annotations

from collections.abc import Collection, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Protocol, runtime_checkable

from loguru import logger
from tqdm import tqdm

from fedsim.aggregation.param_store import CollaboratorUpdate, ModelParams
from fedsim.aggregation.simagg import fedavg_round, fedavg_weights, simagg_round
from fedsim.data_processing.create_synthetic_task import collaborator_ids
from fedsim.errors import CohortsExhausted, FedSimError, MissingRunData, TrainerFailure
from fedsim.privacy.dp_mechanisms import PrivacyLedger, dp_simagg_round
from fedsim.privacy.rng_streams import cohort_stream_for
from fedsim.training.federation_config import Aggregator, FederationConfig, federation_from_dict, read_toml
from fedsim.training.run_store import RoundLog, RunStore

MAX_COHORT_DRAWS = 10_000


@runtime_checkable
class LocalTrainer(Protocol):
    def train(self, initial: ModelParams, shard_id: str, round_num: int) -> CollaboratorUpdate: ...


def sample_cohort(round_num: int, history: Collection[frozenset[str]], cfg: FederationConfig) -> list[str]:
    """Uniform random cohort of ``cfg.cohort_size`` ids, distinct as a set from every cohort in ``history``."""
    ids = collaborator_ids(cfg.n_collaborators)
    k = cfg.cohort_size
    seen = {frozenset(c) for c in history}
    if cfg.unique_cohorts and len(seen) >= cfg.max_unique_cohorts:
        raise CohortsExhausted(f"all {cfg.max_unique_cohorts} cohorts of size {k} from {len(ids)} were used")

    rng = cohort_stream_for(round_num, cfg.sampling_seed)
    for _ in range(MAX_COHORT_DRAWS):
        picks = rng.choice(len(ids), size=k, replace=False)
        cohort = sorted(ids[i] for i in picks)
        if not cfg.unique_cohorts or frozenset(cohort) not in seen:
            return cohort
    raise CohortsExhausted(f"no unseen cohort found for round {round_num} after {MAX_COHORT_DRAWS} draws")


class FederationRunner:
    def __init__(self, cfg: FederationConfig, trainer: LocalTrainer, run_dir: str | Path | None = None,
                 config_doc: dict | None = None):
        self.cfg = cfg
        self.trainer = trainer
        self.store = RunStore(run_dir) if run_dir is not None else None
        self.config_doc = config_doc
        self.ledger = PrivacyLedger()

    def _train_one(self, master: ModelParams, cid: str, round_num: int) -> CollaboratorUpdate:
        try:
            update = self.trainer.train(master, cid, round_num)
        except FedSimError:
            raise
        except Exception as exc:
            raise TrainerFailure(cid, round_num, f"{type(exc).__name__}: {exc}") from exc
        if update.collaborator_id != cid:
            raise TrainerFailure(cid, round_num, f"returned an update for {update.collaborator_id}")
        if not update.params.is_congruent(master):
            raise TrainerFailure(cid, round_num, f"returned params {update.params.layout}, expected {master.layout}")
        return update

    def collect_updates(self, master: ModelParams, cohort: Sequence[str], round_num: int) -> list[CollaboratorUpdate]:
        if self.cfg.parallel_trainers and len(cohort) > 1:
            with ThreadPoolExecutor(max_workers=len(cohort)) as pool:
                futures = [pool.submit(self._train_one, master, cid, round_num) for cid in cohort]
                updates = [f.result() for f in futures]
        else:
            updates = [self._train_one(master, cid, round_num) for cid in cohort]
        return sorted(updates, key=lambda up: up.collaborator_id)

    def aggregate(self, updates: list[CollaboratorUpdate], round_num: int):
        match self.cfg.aggregator:
            case Aggregator.SIMAGG:
                master, weights = simagg_round(updates, self.cfg.aggregation)
                return master, weights, None
            case Aggregator.DP_SIMAGG:
                master, weights, noise = dp_simagg_round(updates, self.cfg.aggregation, self.cfg.privacy, round_num)
                self.ledger.record_round(self.cfg.privacy)
                return master, weights, noise.to_dict()
            case Aggregator.FEDAVG:
                return fedavg_round(updates), fedavg_weights(updates), None

    def run_round(self, master: ModelParams, round_num: int, history: list[frozenset[str]]) -> tuple[ModelParams, RoundLog]:
        cohort = sample_cohort(round_num, history, self.cfg)
        updates = self.collect_updates(master, cohort, round_num)
        new_master, weights, noise = self.aggregate(updates, round_num)

        evaluate = getattr(self.trainer, "evaluate", None)
        log = RoundLog(
            round=round_num,
            cohort=tuple(cohort),
            weights=weights,
            noise=noise,
            train_metrics={up.collaborator_id: up.metrics["loss"] for up in updates if "loss" in up.metrics},
            eval_metrics=evaluate(new_master) if callable(evaluate) else {},
            privacy_spent=self.ledger.spent() if noise is not None else None,
        )
        return new_master, log

    def run(self, init: ModelParams, start_round: int = 1, logs: Iterable[RoundLog] = ()) -> tuple[ModelParams, list[RoundLog]]:
        logs = list(logs)
        history = [frozenset(log.cohort) for log in logs]
        remaining = self.cfg.n_rounds - len(history)
        if self.cfg.unique_cohorts and self.cfg.n_rounds > self.cfg.max_unique_cohorts:
            raise CohortsExhausted(
                f"{self.cfg.n_rounds} rounds need unique cohorts but only {self.cfg.max_unique_cohorts} exist "
                f"for cohort size {self.cfg.cohort_size} out of {self.cfg.n_collaborators}"
            )
        if self.store is not None and start_round == 1:
            self.store.initialize(self.config_doc or {})

        master = init
        rounds = range(start_round, start_round + remaining)
        for round_num in tqdm(rounds, desc=f"{self.cfg.aggregator.value} rounds", disable=None, leave=False):
            master, log = self.run_round(master, round_num, history)
            history.append(frozenset(log.cohort))
            logs.append(log)
            if self.store is not None:
                self.store.record_round(log, master)
            logger.info("round {}/{} cohort={} {}", round_num, self.cfg.n_rounds, ",".join(log.cohort),
                        _headline(log.eval_metrics))

        if self.store is not None:
            self.store.finalize(master)
        return master, logs


def _headline(metrics: dict) -> str:
    keys = [k for k in ("train_loss", "DICE WT") if k in metrics]
    return " ".join(f"{k}={metrics[k]:.6g}" for k in keys)


def run_federation(cfg: FederationConfig, trainer: LocalTrainer, init: ModelParams,
                   run_dir: str | Path | None = None, config_doc: dict | None = None) -> tuple[ModelParams, list[RoundLog]]:
    return FederationRunner(cfg, trainer, run_dir, config_doc).run(init)


def resume_federation(run_dir: str | Path, trainer: LocalTrainer,
                      init: ModelParams) -> tuple[ModelParams, list[RoundLog]]:
    """Continue a run from its last logged round; ``init`` is only used if no round completed."""
    store = RunStore(run_dir)
    if not store.config_path.exists():
        raise MissingRunData(f"{run_dir} has no config.toml")
    doc = read_toml(store.config_path)
    cfg, _ = federation_from_dict(doc)
    logs = store.read_rounds()

    runner = FederationRunner(cfg, trainer, run_dir, doc)
    if not logs:
        return runner.run(init)

    last = logs[-1].round
    master = store.load_round_checkpoint(last)
    store.truncate_rounds(logs)
    for log in logs:
        if log.noise is not None:
            runner.ledger.record_round(cfg.privacy)
    logger.info("resuming {} after round {}", run_dir, last)
    return runner.run(master, start_round=last + 1, logs=logs)
