"""
EdgeBank memorization baselines and their learnable linear generalization.

EdgeBank remembers every edge it has seen and answers a query with a fixed
rule over that history:

    inf  positive iff the edge was ever seen
    tw   positive iff it was seen within the last T time units
    th   positive iff it was seen within the last T updates (default 1000)
    re   positive iff it was seen at least n times (default 2)

LinearTimeModel replaces the hard threshold with a sigmoid over the
normalized time since the edge (and optionally each endpoint) was last
updated, so it trains under BCE like the neural models.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Dict, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, linear, parameter, reshape, sigmoid
from .errors import ConfigurationError, ContractViolation
from .graph_store import TemporalGraphStore
from .ldtgn import normalize_time
from .memory import MemoryView, extract_view
from .scheduler import DecoupledModel
from .types import DecoupledConfig, EdgeKey, Event, EventKind, ModelKind, edge_key

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD_UPDATES = 1000
DEFAULT_REPEAT_COUNT = 2


class SeenEdge(NamedTuple):
    time: float
    seq: int
    count: int


@dataclass
class EdgeBankMemory:
    """Per-edge history: last time, last ordinal and number of sightings."""
    last_seen_time: Dict[EdgeKey, float] = field(default_factory=dict)
    last_seen_seq: Dict[EdgeKey, int] = field(default_factory=dict)
    seen_count: Dict[EdgeKey, int] = field(default_factory=dict)

    def lookup(self, key: EdgeKey) -> Optional[SeenEdge]:
        if key not in self.seen_count:
            return None
        return SeenEdge(self.last_seen_time[key], self.last_seen_seq[key], self.seen_count[key])

    def __len__(self) -> int:
        return len(self.seen_count)


def edgebank_update(mem: EdgeBankMemory, e: Event) -> None:
    if e.kind is not EventKind.ADD_EDGE:
        raise ContractViolation(f"EdgeBank records AddEdge events, got {e.kind.value}")
    key = e.key
    mem.last_seen_time[key] = e.timestamp
    mem.last_seen_seq[key] = e.seq
    mem.seen_count[key] = mem.seen_count.get(key, 0) + 1


class EdgeBankVariant(Enum):
    INF = "inf"
    TIME_WINDOW = "tw"
    THRESHOLD = "th"
    REPEAT = "re"


@dataclass(frozen=True)
class EdgeBankRule:
    """A variant plus its parameter (T for tw/th, n for re)."""
    variant: EdgeBankVariant
    param: Optional[float] = None

    @classmethod
    def parse(cls, variant: str, param: Optional[float] = None) -> "EdgeBankRule":
        try:
            kind = EdgeBankVariant(variant)
        except ValueError:
            options = ", ".join(v.value for v in EdgeBankVariant)
            raise ConfigurationError(f"unknown EdgeBank variant {variant!r} (expected one of {options})") from None
        if param is None:
            if kind is EdgeBankVariant.TIME_WINDOW:
                raise ConfigurationError("edgebank:tw needs an explicit window length (--param)")
            if kind is EdgeBankVariant.THRESHOLD:
                param = DEFAULT_THRESHOLD_UPDATES
            elif kind is EdgeBankVariant.REPEAT:
                param = DEFAULT_REPEAT_COUNT
        if param is not None and param < 0:
            raise ConfigurationError(f"edgebank:{kind.value} parameter must be non-negative, got {param}")
        return cls(kind, param)

    @property
    def label(self) -> str:
        if self.param is None:
            return f"edgebank:{self.variant.value}"
        return f"edgebank:{self.variant.value}({self.param:g})"


def _decide(rule: EdgeBankRule, seen: Optional[SeenEdge], t: float, seq: int) -> bool:
    if seen is None:
        return False
    if rule.variant is EdgeBankVariant.INF:
        return True
    if rule.variant is EdgeBankVariant.TIME_WINDOW:
        return t - seen.time <= rule.param
    if rule.variant is EdgeBankVariant.THRESHOLD:
        # -(seq - last) + T >= 0
        return seq - seen.seq <= rule.param
    return seen.count >= rule.param


def edgebank_predict(mem: EdgeBankMemory, rule: EdgeBankRule, edge: Tuple[int, int],
                     t: float, seq: int) -> bool:
    """True for positive. Unseen edges are negative under every rule."""
    return _decide(rule, mem.lookup(edge_key(*edge)), t, seq)


class EdgeBankModel(DecoupledModel):
    """EdgeBank run through the decoupled engine; scores are 1.0 or 0.0."""

    kind = ModelKind.EDGEBANK
    pos_prob = 1.0
    neg_prob = 0.0

    def __init__(self, rule: EdgeBankRule):
        self.rule = rule

    def new_store(self) -> EdgeBankMemory:
        return EdgeBankMemory()

    def extract_view(self, store: EdgeBankMemory, queries: Sequence[Event],
                     cfg: DecoupledConfig) -> Mapping[EdgeKey, SeenEdge]:
        view = {}
        for q in queries:
            seen = store.lookup(q.key)
            if seen is not None:
                view[q.key] = seen
        return MappingProxyType(view)

    def process_memory_batch(self, store: EdgeBankMemory, updates: Sequence[Event]) -> None:
        for e in updates:
            if e.kind is EventKind.ADD_EDGE:
                edgebank_update(store, e)

    def predict(self, pairs: Sequence[Tuple[Mapping[EdgeKey, SeenEdge], Event]]) -> Tensor:
        scores = [
            self.pos_prob if _decide(self.rule, view.get(q.key), q.timestamp, q.seq) else self.neg_prob
            for view, q in pairs
        ]
        return Tensor(np.array(scores, dtype=np.float64))

    def end_batch(self, store: EdgeBankMemory) -> None:
        pass


class LinearVariant(Enum):
    EDGE_ONLY = "edge"
    NODE_AWARE = "node"


class LinearTimeModel(DecoupledModel):
    """
    EdgeOnly:  sigmoid(w * n(t - t_ij) + b)
    NodeAware: sigmoid(w1 * n(t - t_ij) + w2 * n(t - t_i) + w3 * n(t - t_j) + b)

    with n the log normalization against the time span C. Parameters start
    at zero.
    """

    kind = ModelKind.LINEAR

    def __init__(self, variant: LinearVariant, time_span: float):
        if time_span <= 0:
            raise ConfigurationError(f"time span must be positive, got {time_span}")
        self.variant = variant
        self.time_span = float(time_span)
        inputs = 1 if variant is LinearVariant.EDGE_ONLY else 3
        self.w = parameter(np.zeros((inputs, 1)), "linear.w")
        self.b = parameter(np.zeros(1), "linear.b")

    @classmethod
    def from_name(cls, variant: str, time_span: float) -> "LinearTimeModel":
        try:
            kind = LinearVariant(variant)
        except ValueError:
            raise ConfigurationError(f"unknown linear variant {variant!r} (expected edge or node)") from None
        return cls(kind, time_span)

    def parameters(self) -> Dict[str, Tensor]:
        return {"linear.w": self.w, "linear.b": self.b}

    def extract_view(self, store: TemporalGraphStore, queries: Sequence[Event],
                     cfg: DecoupledConfig) -> MemoryView:
        nodes = {n for q in queries for n in q.nodes()}
        return extract_view(store, nodes, hop=0, k=0, query_edges=[q.key for q in queries])

    def process_memory_batch(self, store: TemporalGraphStore, updates: Sequence[Event]) -> None:
        for e in updates:
            store.apply_update(e)

    def gaps(self, t: float, t_ij: float, t_i: float = 0.0, t_j: float = 0.0) -> list:
        if self.variant is LinearVariant.EDGE_ONLY:
            return [t - t_ij]
        return [t - t_ij, t - t_i, t - t_j]

    def score_gaps(self, gaps: np.ndarray) -> Tensor:
        """Probabilities for a (n, inputs) matrix of raw time differences."""
        x = normalize_time(np.asarray(gaps, dtype=np.float64), self.time_span)
        return reshape(sigmoid(linear(Tensor(x), self.w, self.b)), (x.shape[0],))

    def predict(self, pairs: Sequence[Tuple[MemoryView, Event]]) -> Tensor:
        rows = [
            self.gaps(q.timestamp, view.edge_time_of(q.src, q.dst),
                      view.node_time_of(q.src), view.node_time_of(q.dst))
            for view, q in pairs
        ]
        return self.score_gaps(np.array(rows, dtype=np.float64).reshape(len(rows), -1))

    def decision_boundary(self) -> float:
        """Normalized gap where the EdgeOnly score crosses 0.5."""
        if self.variant is not LinearVariant.EDGE_ONLY:
            raise ContractViolation("decision boundary is defined for the edge-only variant")
        w = float(self.w.values[0, 0])
        if w == 0.0:
            raise ContractViolation("decision boundary undefined for w = 0")
        return -float(self.b.values[0]) / w


def linear_time_predict(model: LinearTimeModel, t: float, t_ij: float,
                        t_i: float = 0.0, t_j: float = 0.0) -> float:
    return float(model.score_gaps(np.array([model.gaps(t, t_ij, t_i, t_j)])).values[0])
