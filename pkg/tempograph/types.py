"""
Core types and data structures shared by the tempograph modules.
"""

from dataclasses import dataclass
from enum import Enum
from typing import FrozenSet, Optional, Tuple

import numpy as np

from .errors import ConfigurationError

EdgeKey = Tuple[int, int]

_EMPTY = np.zeros(0, dtype=np.float64)
_EMPTY.setflags(write=False)


class EventKind(Enum):
    """Kinds of items in a CTDG stream."""
    ADD_EDGE = "add_edge"
    REMOVE_EDGE = "remove_edge"
    ADD_NODE = "add_node"
    REMOVE_NODE = "remove_node"
    PREDICT_EDGE = "predict_edge"

    @property
    def is_update(self) -> bool:
        return self is not EventKind.PREDICT_EDGE

    @property
    def is_node_event(self) -> bool:
        return self in (EventKind.ADD_NODE, EventKind.REMOVE_NODE)


class ModelKind(Enum):
    """Model families the engine can run."""
    EDGEBANK = "edgebank"
    LINEAR = "linear"
    LDTGN = "ldtgn"
    LDTGN_MEM = "ldtgn_mem"


class EvalMode(Enum):
    """Evaluation settings for future-edge prediction."""
    TRANSDUCTIVE = "transductive"
    INDUCTIVE = "inductive"


@dataclass(frozen=True, eq=False)
class Event:
    """One timestamped item of a stream: a graph update or a prediction query."""
    kind: EventKind
    src: int
    dst: Optional[int]  # None for node events
    timestamp: float
    seq: int
    features: np.ndarray = _EMPTY
    label: Optional[int] = None  # 1/0 on PredictEdge queries

    @property
    def key(self) -> EdgeKey:
        return edge_key(self.src, self.dst)

    def nodes(self) -> Tuple[int, ...]:
        if self.dst is None:
            return (self.src,)
        return (self.src, self.dst)

    def as_query(self, dst: Optional[int] = None, label: int = 1) -> "Event":
        """A PredictEdge on this event's source at the same instant and seq."""
        return Event(
            kind=EventKind.PREDICT_EDGE,
            src=self.src,
            dst=self.dst if dst is None else dst,
            timestamp=self.timestamp,
            seq=self.seq,
            label=label,
        )


@dataclass(frozen=True)
class DatasetSplit:
    """Chronological train/val/test ranges over an event stream."""
    train: range
    val: range
    test: range
    new_node_set: FrozenSet[int] = frozenset()
    inductive: bool = False

    def part(self, name: str) -> range:
        try:
            return {"train": self.train, "val": self.val, "test": self.test}[name]
        except KeyError:
            raise ConfigurationError(f"unknown split partition: {name}") from None


@dataclass
class MissingUpdateReport:
    """Missing-update statistics for one (stream, batch size, hop)."""
    batch_size: int
    hop: int
    ratio_affected: float
    avg_missing_per_input: float
    inputs_counted: int


@dataclass
class DecoupledConfig:
    """Batching configuration of the decoupled engine."""
    prediction_batch_size: int = 200
    memory_batch_size: int = 1
    hop: int = 1
    k_recent: int = 20

    def __post_init__(self):
        if self.prediction_batch_size < 1 or self.memory_batch_size < 1:
            raise ConfigurationError("batch sizes must be >= 1")
        if self.memory_batch_size > self.prediction_batch_size:
            raise ConfigurationError(
                f"memory_batch_size ({self.memory_batch_size}) exceeds "
                f"prediction_batch_size ({self.prediction_batch_size})"
            )
        if self.hop < 0 or self.k_recent < 0:
            raise ConfigurationError("hop and k_recent must be non-negative")

    @classmethod
    def for_model(cls, kind: ModelKind, **overrides) -> "DecoupledConfig":
        """Defaults per model family: LDTGN-mem batches memory by 50, the rest by 1."""
        memory_batch_size = 50 if kind is ModelKind.LDTGN_MEM else 1
        values = dict(memory_batch_size=memory_batch_size)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class TimingBreakdown:
    """Wall-clock split between the memory and prediction phases."""
    t_memory: float = 0.0
    t_prediction: float = 0.0
    events_processed: int = 0

    @property
    def total(self) -> float:
        return self.t_memory + self.t_prediction

    def merge(self, other: "TimingBreakdown") -> None:
        self.t_memory += other.t_memory
        self.t_prediction += other.t_prediction
        self.events_processed += other.events_processed


def edge_key(i: int, j: int) -> EdgeKey:
    """Unordered edge key: (i, j) and (j, i) share one history."""
    return (i, j) if i <= j else (j, i)


def empty_features() -> np.ndarray:
    return _EMPTY
