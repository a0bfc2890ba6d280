"""
Training and evaluation loops.

Each epoch rebuilds the memory from scratch, streams the train partition
(every positive followed by one freshly sampled negative) through the
decoupled scheduler, and takes one Adam step per prediction batch. The
validation partition is then streamed on the same memory without gradients;
its AP drives early stopping and best-parameter selection.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Adam, Tape, bce_loss, save_checkpoint
from .dataset import Dataset, build_query_stream, partition_events, query_mask
from .errors import ConfigurationError
from .metrics import auc_roc, average_precision
from .results import append_jsonl
from .scheduler import DecoupledModel, StreamResult, iter_prediction_batches, run_batch, stream_predictions
from .types import DatasetSplit, DecoupledConfig, Event

logger = logging.getLogger(__name__)

PARTITION_SEEDS = {"train": 0, "val": 1, "test": 2}


class EarlyStopMonitor:
    """Counts epochs without relative improvement beyond `tolerance`."""

    def __init__(self, patience: int = 20, higher_better: bool = True, tolerance: float = 1e-10):
        self.patience = patience
        self.higher_better = higher_better
        self.tolerance = tolerance
        self.num_round = 0
        self.epoch_count = 0
        self.best_epoch = 0
        self.last_best: Optional[float] = None

    def early_stop_check(self, value: float) -> bool:
        if not self.higher_better:
            value = -value
        if self.last_best is None:
            self.last_best = value
            self.best_epoch = self.epoch_count
        elif value - self.last_best > self.tolerance * max(abs(self.last_best), 1e-12):
            self.last_best = value
            self.num_round = 0
            self.best_epoch = self.epoch_count
        else:
            self.num_round += 1
        self.epoch_count += 1
        return self.num_round >= self.patience

    @property
    def improved(self) -> bool:
        """True when the most recent check set a new best."""
        return self.best_epoch == self.epoch_count - 1


@dataclass
class TrainConfig:
    epochs: int = 100
    patience: int = 20
    lr: float = 1e-4
    seed: int = 0
    epoch_log: Optional[Path] = None
    checkpoint: Optional[Path] = None

    def __post_init__(self):
        if self.epochs < 1 or self.patience < 1:
            raise ConfigurationError("epochs and patience must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.lr}")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_ap: float
    val_auc: float


@dataclass
class TrainResult:
    best_epoch: int
    best_val_ap: float
    history: List[EpochMetrics] = field(default_factory=list)
    params: Dict[str, np.ndarray] = field(default_factory=dict)
    wall_seconds: float = 0.0


def score_stream(result: StreamResult) -> Tuple[float, float]:
    return average_precision(result.scores, result.labels), auc_roc(result.scores, result.labels)


class Trainer:
    """Drives one model through epochs of the decoupled engine."""

    def __init__(self, model: DecoupledModel, cfg: DecoupledConfig, train_cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        self.train_cfg = train_cfg
        self.params = model.parameters()
        if not self.params:
            raise ConfigurationError(f"{model.kind.value} has no learnable parameters to train")
        self.optimizer = Adam(self.params, lr=train_cfg.lr)

    def train_epoch(self, stream: Sequence[Event]) -> Tuple[object, float]:
        """One pass over `stream` from an empty memory; returns (store, mean batch loss)."""
        store = self.model.new_store()
        losses = []
        for batch in iter_prediction_batches(stream, self.cfg.prediction_batch_size):
            with Tape() as tape:
                out = run_batch(self.model, store, batch, self.cfg)
                if len(out):
                    loss = bce_loss(out.probs, out.labels)
                    tape.backward(loss)
                    self.optimizer.step()
                    losses.append(loss.item())
                tape.clear()
            self.model.end_batch(store)
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        return store, mean_loss

    def fit(self, train_stream: Callable[[int], Sequence[Event]], val_stream: Sequence[Event]) -> TrainResult:
        """
        Train until validation AP stalls for `patience` epochs or `epochs` run
        out. `train_stream(epoch)` supplies each epoch's stream so negatives
        can be resampled; the best parameters are restored at the end.
        """
        monitor = EarlyStopMonitor(self.train_cfg.patience)
        history: List[EpochMetrics] = []
        best: Dict[str, np.ndarray] = {name: p.values.copy() for name, p in self.params.items()}
        started = time.perf_counter()

        for epoch in range(self.train_cfg.epochs):
            store, loss = self.train_epoch(train_stream(epoch))
            val_ap, val_auc = score_stream(stream_predictions(self.model, store, val_stream, self.cfg))
            metrics = EpochMetrics(epoch, loss, val_ap, val_auc)
            history.append(metrics)
            if self.train_cfg.epoch_log is not None:
                append_jsonl(self.train_cfg.epoch_log, asdict(metrics))
            logger.info(f"epoch {epoch}: loss {loss:.4f}, val AP {val_ap:.4f}, val AUC {val_auc:.4f}")

            stop = monitor.early_stop_check(val_ap)
            if monitor.improved:
                best = {name: p.values.copy() for name, p in self.params.items()}
                if self.train_cfg.checkpoint is not None:
                    save_checkpoint(self.train_cfg.checkpoint, self.params,
                                    {"epoch": epoch, "val_ap": val_ap, "model": self.model.kind.value})
            if stop:
                logger.info(f"No improvement for {monitor.patience} epochs, stopping at epoch {epoch}")
                break

        for name, p in self.params.items():
            p.values[...] = best[name]
        return TrainResult(
            best_epoch=monitor.best_epoch,
            best_val_ap=history[monitor.best_epoch].val_ap,
            history=history,
            params=best,
            wall_seconds=time.perf_counter() - started,
        )


def partition_stream(dataset: Dataset, split: DatasetSplit, part: str, seed: int,
                     epoch: Optional[int] = None) -> List[Event]:
    """
    The query stream of one partition. Train negatives are reseeded per epoch;
    val/test negatives depend only on the run seed.
    """
    events = partition_events(dataset.events, split, part)
    if not events:
        raise ConfigurationError(f"{part} partition of {dataset.name} is empty")
    entropy = [seed, PARTITION_SEEDS[part]] + ([epoch] if epoch is not None else [])
    rng = np.random.default_rng(entropy)
    mask = None if part == "train" else query_mask(events, split)
    return build_query_stream(events, dataset.destination_universe(), rng, mask)


def train(model: DecoupledModel, dataset: Dataset, split: DatasetSplit, cfg: DecoupledConfig,
          train_cfg: TrainConfig) -> TrainResult:
    seed = train_cfg.seed
    val_stream = partition_stream(dataset, split, "val", seed)
    trainer = Trainer(model, cfg, train_cfg)
    logger.info(f"Training {model.kind.value} on {dataset.name} "
                f"({len(split.train)} train / {len(split.val)} val events, seed {seed})")
    return trainer.fit(lambda epoch: partition_stream(dataset, split, "train", seed, epoch), val_stream)


def evaluate_split(model: DecoupledModel, dataset: Dataset, split: DatasetSplit, part: str,
                   cfg: DecoupledConfig, seed: int = 0) -> Tuple[float, float, StreamResult]:
    """Replay everything before `part` without queries, then score `part`."""
    target = split.part(part)
    store = model.new_store()
    history = dataset.events[:target.start]
    if history:
        stream_predictions(model, store, history, cfg)
    result = stream_predictions(model, store, partition_stream(dataset, split, part, seed), cfg)
    ap, auc = score_stream(result)
    logger.info(f"{model.kind.value} {part} AP {ap:.4f} AUC {auc:.4f} over {len(result.scores)} queries")
    return ap, auc, result
