"""
Decoupled batch scheduler.

A prediction batch is cut into memory batches. Before each memory batch a
view of the memory is frozen for the queries that fall inside it; then the
memory batch is applied. Once every memory batch is done, all queries of the
prediction batch are scored in one pass over their views.
"""

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, no_grad
from .errors import ConfigurationError, ContractViolation
from .graph_store import TemporalGraphStore
from .types import DecoupledConfig, Event, EventKind, ModelKind, TimingBreakdown

logger = logging.getLogger(__name__)


class DecoupledModel(ABC):
    """
    What the scheduler needs from a model.

    The store is whatever new_store() returns; the scheduler only hands it
    back to the model. Views must not change when the store does.
    """

    kind: ModelKind
    state_dim: int = 0

    def new_store(self) -> Any:
        return TemporalGraphStore(self.state_dim)

    @abstractmethod
    def extract_view(self, store: Any, queries: Sequence[Event], cfg: DecoupledConfig) -> Any:
        ...

    @abstractmethod
    def process_memory_batch(self, store: Any, updates: Sequence[Event]) -> None:
        ...

    @abstractmethod
    def predict(self, pairs: Sequence[Tuple[Any, Event]]) -> Tensor:
        """Probabilities for (view, query) pairs, in the order given."""

    def parameters(self) -> Dict[str, Tensor]:
        return {}

    def end_batch(self, store: Any) -> None:
        """Called after a prediction batch has been scored."""
        if isinstance(store, TemporalGraphStore):
            store.detach_states()


@dataclass
class BatchPredictions:
    """Scores for the queries of one batch (or stream), in query order."""
    queries: List[Event]
    probs: Tensor

    @property
    def values(self) -> np.ndarray:
        return self.probs.values

    @property
    def labels(self) -> np.ndarray:
        return np.array([q.label for q in self.queries], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.queries)


def _empty_predictions() -> BatchPredictions:
    return BatchPredictions([], Tensor(np.zeros(0)))


def _chunk_by_updates(events: Iterable[Event], size: int) -> Iterator[List[Event]]:
    """Chunks holding `size` updates each; queries stay with the update that follows them."""
    current: List[Event] = []
    updates = 0
    for e in events:
        current.append(e)
        if e.kind.is_update:
            updates += 1
            if updates == size:
                yield current
                current = []
                updates = 0
    if current:
        yield current


def split_into_memory_batches(batch: Sequence[Event], m: int) -> List[List[Event]]:
    if m < 1:
        raise ConfigurationError(f"memory batch size must be >= 1, got {m}")
    return list(_chunk_by_updates(batch, m))


def iter_prediction_batches(stream: Iterable[Event], bs: int) -> Iterator[List[Event]]:
    if bs < 1:
        raise ConfigurationError(f"prediction batch size must be >= 1, got {bs}")
    return _chunk_by_updates(stream, bs)


def run_batch(model: DecoupledModel, store: Any, batch: Sequence[Event], cfg: DecoupledConfig,
              timing: Optional[TimingBreakdown] = None) -> BatchPredictions:
    """
    Score every query of `batch` and apply every update.

    A query in memory batch c reads the view taken when c started, so it sees
    every update of earlier memory batches and none of its own.
    """
    pairs: List[Tuple[Any, Event]] = []
    updates_seen = 0

    started = time.perf_counter()
    for chunk in split_into_memory_batches(batch, cfg.memory_batch_size):
        queries = [e for e in chunk if e.kind is EventKind.PREDICT_EDGE]
        updates = [e for e in chunk if e.kind.is_update]
        if queries:
            view = model.extract_view(store, queries, cfg)
            pairs.extend((view, q) for q in queries)
        if updates:
            model.process_memory_batch(store, updates)
            updates_seen += len(updates)
    memory_done = time.perf_counter()

    result = BatchPredictions([q for _, q in pairs], model.predict(pairs)) if pairs else _empty_predictions()
    finished = time.perf_counter()

    if timing is not None:
        timing.t_memory += memory_done - started
        timing.t_prediction += finished - memory_done
        timing.events_processed += updates_seen
    logger.debug(f"Batch of {len(batch)} events: {len(pairs)} queries, {updates_seen} updates")
    return result


def sequential_oracle(model: DecoupledModel, store: Any, events: Sequence[Event],
                      cfg: Optional[DecoupledConfig] = None) -> BatchPredictions:
    """Predict-then-update one event at a time; nothing is ever missing."""
    cfg = cfg or DecoupledConfig()
    queries: List[Event] = []
    scores: List[float] = []
    for e in events:
        if e.kind is EventKind.PREDICT_EDGE:
            view = model.extract_view(store, [e], cfg)
            scores.append(float(model.predict([(view, e)]).values[0]))
            queries.append(e)
        else:
            model.process_memory_batch(store, [e])
    return BatchPredictions(queries, Tensor(np.array(scores, dtype=np.float64)))


@dataclass
class StreamResult:
    """Concatenated predictions of a whole stream."""
    scores: np.ndarray
    labels: np.ndarray
    queries: List[Event] = field(default_factory=list)
    timing: TimingBreakdown = field(default_factory=TimingBreakdown)


def stream_predictions(model: DecoupledModel, store: Any, stream: Sequence[Event],
                       cfg: DecoupledConfig) -> StreamResult:
    """Drive a stream through run_batch without recording gradients."""
    timing = TimingBreakdown()
    scores: List[np.ndarray] = []
    queries: List[Event] = []
    with no_grad():
        for batch in iter_prediction_batches(stream, cfg.prediction_batch_size):
            out = run_batch(model, store, batch, cfg, timing)
            model.end_batch(store)
            if len(out):
                scores.append(out.values.copy())
                queries.extend(out.queries)
    values = np.concatenate(scores) if scores else np.zeros(0)
    labels = np.array([q.label for q in queries], dtype=np.float64)
    return StreamResult(values, labels, queries, timing)


def speedup_estimate(t: TimingBreakdown, bs_old: int, bs_new: int) -> float:
    """Projected speedup of moving from bs_old to bs_new with the memory batch size kept."""
    if bs_old < 1 or bs_new < 1:
        raise ConfigurationError("batch sizes must be >= 1")
    if t.t_memory < 0 or t.t_prediction < 0:
        raise ContractViolation("timings must be non-negative")
    denominator = bs_old * t.t_prediction + bs_new * t.t_memory
    if denominator <= 0:
        raise ContractViolation("speedup is undefined for zero timings")
    return (bs_new * t.t_prediction + bs_new * t.t_memory) / denominator


def bench_throughput(model: DecoupledModel, events: Sequence[Event], cfg: DecoupledConfig,
                     warmup: int = 0) -> Tuple[float, TimingBreakdown]:
    """
    Edges per second over `events` after the first `warmup` updates.

    Warmup events are processed with the same batching but left out of both
    the clock and the phase timings.
    """
    if not events:
        raise ContractViolation("bench_throughput needs a non-empty stream")
    store = model.new_store()
    timing = TimingBreakdown()
    warm = TimingBreakdown()
    elapsed = 0.0
    with no_grad():
        for batch in iter_prediction_batches(events, cfg.prediction_batch_size):
            measuring = warm.events_processed >= warmup
            started = time.perf_counter()
            run_batch(model, store, batch, cfg, timing if measuring else warm)
            model.end_batch(store)
            if measuring:
                elapsed += time.perf_counter() - started
    if timing.events_processed == 0 or elapsed <= 0:
        raise ContractViolation(f"warmup of {warmup} left nothing to measure")
    edges_per_sec = timing.events_processed / elapsed
    logger.info(f"{model.kind.value} bs={cfg.prediction_batch_size} mbs={cfg.memory_batch_size}: "
                f"{edges_per_sec:.1f} edges/s (memory {timing.t_memory:.3f}s, "
                f"prediction {timing.t_prediction:.3f}s)")
    return edges_per_sec, timing
