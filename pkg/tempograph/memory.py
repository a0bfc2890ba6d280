"""
Memory side of the decoupled engine.

LDTGN keeps only timestamps and adjacency. LDTGN-mem additionally keeps a
GRU state per node, fed with the most recent message a node received inside
a memory batch. Before each memory batch the scheduler freezes a MemoryView
of everything the following predictions will read.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .autodiff import (Tensor, concat, linear, parameter, sigmoid, stack, take_rows, tanh,
                       xavier_normal)
from .errors import ContractViolation, DimensionError
from .graph_store import NeighborEntry, TemporalGraphStore
from .types import EdgeKey, Event, EventKind, ModelKind, edge_key

logger = logging.getLogger(__name__)

TimeEncoder = Callable[[np.ndarray], Tensor]


@dataclass(frozen=True)
class Message:
    """A message addressed to one node by one interaction."""
    target: int
    payload: Tensor
    timestamp: float
    seq: int


@dataclass(frozen=True)
class MemoryView:
    """Read-only snapshot of the memory taken at a memory-batch boundary."""
    view_time: float
    node_times: Mapping[int, float]
    edge_times: Mapping[EdgeKey, float]
    node_states: Mapping[int, Tensor]
    frozen_neighbors: Mapping[int, Tuple[NeighborEntry, ...]]
    state_dim: int = 0
    _zero_state: Tensor = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        zero = np.zeros(self.state_dim)
        zero.setflags(write=False)
        object.__setattr__(self, "_zero_state", Tensor(zero))

    def node_time_of(self, i: int) -> float:
        return self.node_times.get(i, 0.0)

    def edge_time_of(self, i: int, j: int) -> float:
        return self.edge_times.get(edge_key(i, j), 0.0)

    def state(self, i: int) -> Tensor:
        return self.node_states.get(i, self._zero_state)

    def neighbors(self, i: int) -> Tuple[NeighborEntry, ...]:
        return self.frozen_neighbors.get(i, ())

    def fingerprint(self) -> str:
        """SHA-256 over a canonical serialisation of the view's contents."""
        h = hashlib.sha256()
        h.update(repr(self.view_time).encode())
        for i in sorted(self.node_times):
            h.update(f"n{i}:{self.node_times[i]!r};".encode())
        for key in sorted(self.edge_times):
            h.update(f"e{key}:{self.edge_times[key]!r};".encode())
        for i in sorted(self.node_states):
            h.update(f"s{i}:".encode())
            h.update(np.ascontiguousarray(self.node_states[i].values).tobytes())
        for i in sorted(self.frozen_neighbors):
            h.update(f"k{i}:".encode())
            for entry in self.frozen_neighbors[i]:
                h.update(f"{entry.neighbor},{entry.time!r},{entry.seq};".encode())
                h.update(np.ascontiguousarray(entry.features).tobytes())
        return h.hexdigest()


def extract_view(store: TemporalGraphStore, query_nodes: Iterable[int], hop: int = 1, k: int = 20,
                 query_edges: Iterable[EdgeKey] = ()) -> MemoryView:
    """
    Freeze timestamps, states and recent-k neighbor lists for the query nodes
    and their neighborhoods up to `hop`. Unknown nodes read as defaults.
    """
    roots = set(query_nodes)
    nodes = set(roots)
    frozen: Dict[int, Tuple[NeighborEntry, ...]] = {}
    frontier = set(roots)
    for _ in range(hop):
        reached = set()
        for u in frontier:
            if u in frozen:
                continue
            entries = tuple(store.recent_neighbors(u, k))
            frozen[u] = entries
            reached.update(entry.neighbor for entry in entries)
        frontier = reached - nodes
        nodes |= reached
        if not frontier:
            break

    edge_times: Dict[EdgeKey, float] = {}
    wanted = {edge_key(u, entry.neighbor) for u, entries in frozen.items() for entry in entries}
    wanted.update(edge_key(i, j) for i, j in query_edges)
    for key in wanted:
        if key in store.edge_time:
            edge_times[key] = store.edge_time[key]

    node_times = {n: store.node_time[n] for n in nodes if n in store.node_time}
    node_states = {n: store.node_state[n] for n in nodes if n in store.node_state}
    return MemoryView(
        view_time=store.clock,
        node_times=MappingProxyType(node_times),
        edge_times=MappingProxyType(edge_times),
        node_states=MappingProxyType(node_states),
        frozen_neighbors=MappingProxyType(frozen),
        state_dim=store.state_dim,
    )


def _message_payload(source, node: int, other: int, t: float, tde: TimeEncoder,
                     features: Optional[np.ndarray] = None) -> List[Tensor]:
    encoded = tde(np.array([[t - source.node_time_of(node)]]))
    parts = [source.state(node), source.state(other), take_rows(encoded, 0)]
    if features is not None:
        parts.append(Tensor(features))
    return parts


def build_messages(source: Union[MemoryView, TemporalGraphStore], e: Event, tde: TimeEncoder,
                   include_edge_features: bool = False) -> Tuple[Message, Message]:
    """Messages for both endpoints, read from states before this event applies."""
    if e.kind is not EventKind.ADD_EDGE:
        raise ContractViolation(f"messages are built from AddEdge events, got {e.kind.value}")
    features = e.features if include_edge_features else None
    src_payload = concat(_message_payload(source, e.src, e.dst, e.timestamp, tde, features))
    dst_payload = concat(_message_payload(source, e.dst, e.src, e.timestamp, tde, features))
    return (Message(e.src, src_payload, e.timestamp, e.seq),
            Message(e.dst, dst_payload, e.timestamp, e.seq))


def aggregate_messages(messages: Sequence[Message]) -> Message:
    """Keep only the most recent message; later seq breaks timestamp ties."""
    if not messages:
        raise ContractViolation("cannot aggregate an empty message list")
    target = messages[0].target
    if any(m.target != target for m in messages):
        raise ContractViolation("aggregate_messages got messages for different nodes")
    return max(messages, key=lambda m: (m.timestamp, m.seq))


class GRUCell:
    """
    GRU memory cell, update gate as the write gate:

        z = sigmoid([m, s] W_z + b_z)
        r = sigmoid([m, s] W_r + b_r)
        h = tanh([m, r * s] W_h + b_h)
        s' = (1 - z) * s + z * h
    """

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        fan_in = input_dim + hidden_dim
        self.W_z = parameter(xavier_normal(rng, fan_in, hidden_dim), "gru.W_z")
        self.b_z = parameter(np.zeros(hidden_dim), "gru.b_z")
        self.W_r = parameter(xavier_normal(rng, fan_in, hidden_dim), "gru.W_r")
        self.b_r = parameter(np.zeros(hidden_dim), "gru.b_r")
        self.W_h = parameter(xavier_normal(rng, fan_in, hidden_dim), "gru.W_h")
        self.b_h = parameter(np.zeros(hidden_dim), "gru.b_h")

    def parameters(self) -> Dict[str, Tensor]:
        return {p.name: p for p in (self.W_z, self.b_z, self.W_r, self.b_r, self.W_h, self.b_h)}

    def __call__(self, m: Tensor, s: Tensor) -> Tensor:
        if m.shape[-1] != self.input_dim or s.shape[-1] != self.hidden_dim:
            raise DimensionError(
                "gru_update",
                f"message {m.shape} / state {s.shape} vs cell ({self.input_dim}, {self.hidden_dim})",
            )
        ms = concat([m, s])
        z = sigmoid(linear(ms, self.W_z, self.b_z))
        r = sigmoid(linear(ms, self.W_r, self.b_r))
        h = tanh(linear(concat([m, r * s]), self.W_h, self.b_h))
        return (1.0 - z) * s + z * h


def gru_update(cell: GRUCell, s_prev: Tensor, payload: Tensor) -> Tensor:
    return cell(payload, s_prev)


def _update_states(store: TemporalGraphStore, batch: Sequence[Event], cell: GRUCell,
                   tde: TimeEncoder, include_edge_features: bool) -> None:
    latest: Dict[int, Tuple[Event, int]] = {}
    for e in batch:
        if e.kind is not EventKind.ADD_EDGE:
            continue
        for node, other in ((e.src, e.dst), (e.dst, e.src)):
            current = latest.get(node)
            if current is None or (e.timestamp, e.seq) >= (current[0].timestamp, current[0].seq):
                latest[node] = (e, other)
    if not latest:
        return

    nodes = list(latest)
    own = stack([store.state(n) for n in nodes])
    other = stack([store.state(latest[n][1]) for n in nodes])
    elapsed = np.array([[latest[n][0].timestamp - store.node_time_of(n)] for n in nodes])
    parts = [own, other, tde(elapsed)]
    if include_edge_features:
        parts.append(Tensor(np.stack([latest[n][0].features for n in nodes])))
    updated = cell(concat(parts), own)
    for row, n in enumerate(nodes):
        store.set_state(n, take_rows(updated, row))


def process_memory_batch(store: TemporalGraphStore, batch: Sequence[Event], model_kind: ModelKind,
                         cell: Optional[GRUCell] = None, tde: Optional[TimeEncoder] = None,
                         include_edge_features: bool = False) -> None:
    """
    Apply one memory batch. LDTGN-mem first advances the GRU state of every
    touched node once, from its latest message, using the states and
    timestamps the batch started with; then the timestamp/adjacency updates
    are applied in order.
    """
    if model_kind is ModelKind.LDTGN_MEM:
        if cell is None or tde is None:
            raise ContractViolation("LDTGN-mem memory batches need a GRU cell and a time encoder")
        _update_states(store, batch, cell, tde, include_edge_features)
    for e in batch:
        store.apply_update(e)
