"""
Temporal graph storage: last-update timestamps, time-ordered adjacency and
node states, maintained by a single writer as the stream is replayed.
"""

import copy
import logging
from typing import Dict, Iterable, List, NamedTuple, Optional, Set

import numpy as np

from .autodiff import Tensor
from .errors import ContractViolation
from .types import EdgeKey, Event, EventKind, edge_key

logger = logging.getLogger(__name__)


class NeighborEntry(NamedTuple):
    """One interaction as seen from one endpoint."""
    neighbor: int
    time: float
    features: np.ndarray
    seq: int


class TemporalGraphStore:
    """
    In-memory temporal graph.

    Entities never seen (or removed) read as timestamp 0 and zero state.
    Adjacency lists are kept in insertion order, which is also (time, seq)
    order because updates arrive with non-decreasing timestamps.
    """

    def __init__(self, state_dim: int = 0):
        self.node_time: Dict[int, float] = {}
        self.edge_time: Dict[EdgeKey, float] = {}
        self.adjacency: Dict[int, List[NeighborEntry]] = {}
        self.node_state: Dict[int, Tensor] = {}
        self.state_dim = state_dim
        self.clock = 0.0
        self.absent_removals = 0
        self._live_states: Set[int] = set()
        self._zero_state = Tensor(np.zeros(state_dim))

    # Lookups

    def node_time_of(self, i: int) -> float:
        return self.node_time.get(i, 0.0)

    def edge_time_of(self, i: int, j: int) -> float:
        return self.edge_time.get(edge_key(i, j), 0.0)

    def state(self, i: int) -> Tensor:
        return self.node_state.get(i, self._zero_state)

    def degree(self, i: int) -> int:
        return len(self.adjacency.get(i, ()))

    def nodes(self) -> Set[int]:
        return set(self.node_time) | set(self.adjacency)

    # Mutation

    def apply_update(self, e: Event) -> None:
        """Apply one graph update; the clock advances to its timestamp."""
        if not e.kind.is_update:
            raise ContractViolation(f"apply_update got a {e.kind.value} event (seq {e.seq})")
        if e.timestamp < self.clock:
            raise ContractViolation(
                f"update at t={e.timestamp} precedes store clock {self.clock} (seq {e.seq})"
            )

        t = e.timestamp
        if e.kind is EventKind.ADD_EDGE:
            self._add_edge(e.src, e.dst, t, e.features, e.seq)
        elif e.kind is EventKind.REMOVE_EDGE:
            self._remove_edge(e.src, e.dst, t)
        elif e.kind is EventKind.ADD_NODE:
            self.node_time[e.src] = t
        elif e.kind is EventKind.REMOVE_NODE:
            self._remove_node(e.src)
        self.clock = t

    def _add_edge(self, i: int, j: int, t: float, features: np.ndarray, seq: int) -> None:
        self.edge_time[edge_key(i, j)] = t
        self.node_time[i] = t
        self.node_time[j] = t
        self.adjacency.setdefault(i, []).append(NeighborEntry(j, t, features, seq))
        if i != j:
            self.adjacency.setdefault(j, []).append(NeighborEntry(i, t, features, seq))

    def _remove_edge(self, i: int, j: int, t: float) -> None:
        key = edge_key(i, j)
        if key not in self.edge_time:
            self.absent_removals += 1
            logger.debug(f"RemoveEdge on absent edge {key}, ignored ({self.absent_removals} so far)")
            return
        del self.edge_time[key]
        self._drop_entries(i, j)
        self._drop_entries(j, i)
        self.node_time[i] = t
        self.node_time[j] = t

    def _remove_node(self, i: int) -> None:
        self.node_time.pop(i, None)
        self.node_state.pop(i, None)
        self._live_states.discard(i)
        for entry in self.adjacency.pop(i, []):
            self.edge_time.pop(edge_key(i, entry.neighbor), None)
            if entry.neighbor != i:
                self._drop_entries(entry.neighbor, i)

    def _drop_entries(self, owner: int, neighbor: int) -> None:
        entries = self.adjacency.get(owner)
        if not entries:
            return
        kept = [entry for entry in entries if entry.neighbor != neighbor]
        if kept:
            self.adjacency[owner] = kept
        else:
            del self.adjacency[owner]

    def set_state(self, i: int, state: Tensor) -> None:
        self.node_state[i] = state
        if state.requires_grad:
            self._live_states.add(i)

    def detach_states(self) -> None:
        """Cut states produced inside the current batch off the gradient tape."""
        for i in self._live_states:
            if i in self.node_state:
                self.node_state[i] = self.node_state[i].detach()
        self._live_states.clear()

    # Sampling

    def recent_neighbors(self, i: int, k: int, t: Optional[float] = None) -> List[NeighborEntry]:
        """The k most recent interactions of i, latest first (later seq wins ties)."""
        entries = self.adjacency.get(i)
        if not entries or k <= 0:
            return []
        if t is None or entries[-1].time <= t:
            return entries[:-k - 1:-1] if k < len(entries) else entries[::-1]
        result = []
        for entry in reversed(entries):
            if entry.time > t:
                continue
            result.append(entry)
            if len(result) == k:
                break
        return result

    def clone(self) -> "TemporalGraphStore":
        return copy.deepcopy(self)


def apply_update(store: TemporalGraphStore, e: Event) -> None:
    store.apply_update(e)


def apply_updates(store: TemporalGraphStore, events: Iterable[Event]) -> None:
    for e in events:
        if e.kind.is_update:
            store.apply_update(e)


def recent_neighbors(store: TemporalGraphStore, i: int, k: int,
                     t: Optional[float] = None) -> List[NeighborEntry]:
    return store.recent_neighbors(i, k, t)
