"""
Dataset ingestion, chronological splitting and negative sampling.

CSV rows are `src,dst,timestamp,label,f1,...,fk`. Node ids are remapped to a
dense 0-based range on ingestion; bipartite datasets remap destinations in
their own namespace after the sources.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, ContractViolation, OrderingError, ParseError, SchemaError
from .types import DatasetSplit, Event, EventKind, empty_features

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)


class IngestResult(NamedTuple):
    events: List[Event]
    feature_dim: int
    node_index: Dict[str, Dict[int, int]]  # "src"/"dst" -> raw id -> dense id
    state_labels: np.ndarray


@dataclass
class Dataset:
    """An ingested event stream plus everything learned while reading it."""
    name: str
    events: List[Event]
    feature_dim: int
    num_nodes: int
    bipartite: bool = False
    num_sources: int = 0
    node_index: Dict[str, Dict[int, int]] = field(default_factory=dict)
    node_features: Optional[np.ndarray] = None
    state_labels: Optional[np.ndarray] = None

    @property
    def num_events(self) -> int:
        return len(self.events)

    @property
    def node_feature_dim(self) -> int:
        return 0 if self.node_features is None else int(self.node_features.shape[1])

    def destination_universe(self) -> np.ndarray:
        if self.bipartite and self.num_sources:
            return np.arange(self.num_sources, self.num_nodes)
        return np.arange(self.num_nodes)

    def time_span(self, indices: Optional[range] = None) -> float:
        events = self.events if indices is None else self.events[indices.start:indices.stop]
        if not events:
            return 0.0
        return events[-1].timestamp - events[0].timestamp


def _parse_id(token: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        pass
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"node id {token!r} is not numeric", line) from None
    if not value.is_integer() or value < 0:
        raise ParseError(f"node id {token!r} is not an unsigned integer", line)
    return int(value)


def _parse_float(token: str, what: str, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{what} {token!r} is not numeric", line) from None
    if not math.isfinite(value):
        raise ParseError(f"{what} {token!r} is not finite", line)
    return value


def ingest_csv(path: Union[str, Path], has_header: bool = False,
               bipartite: bool = False) -> IngestResult:
    """Read a CSV dataset into AddEdge events with dense node ids."""
    path = Path(path)
    raw_src: List[int] = []
    raw_dst: List[int] = []
    times: List[float] = []
    labels: List[float] = []
    features: List[List[float]] = []
    arity: Optional[int] = None
    last_time = -math.inf

    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for line, row in enumerate(reader, start=1):
            if has_header and line == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 4:
                raise ParseError(f"expected at least 4 fields, got {len(row)}", line)
            k = len(row) - 4
            if arity is None:
                arity = k
            elif k != arity:
                raise SchemaError(f"expected {arity} features, got {k}", line)
            src = _parse_id(row[0].strip(), line)
            dst = _parse_id(row[1].strip(), line)
            t = _parse_float(row[2].strip(), "timestamp", line)
            if t < 0:
                raise ParseError(f"negative timestamp {t}", line)
            if t < last_time:
                raise OrderingError(f"timestamp {t} precedes {last_time}", line)
            last_time = t
            labels.append(_parse_float(row[3].strip(), "label", line))
            features.append([_parse_float(cell.strip(), "feature", line) for cell in row[4:]])
            raw_src.append(src)
            raw_dst.append(dst)
            times.append(t)

    feature_dim = arity or 0
    src_index: Dict[int, int] = {}
    for node in raw_src:
        src_index.setdefault(node, len(src_index))
    if bipartite:
        dst_index: Dict[int, int] = {}
        for node in raw_dst:
            dst_index.setdefault(node, len(src_index) + len(dst_index))
    else:
        for node in raw_dst:
            src_index.setdefault(node, len(src_index))
        dst_index = src_index

    feature_matrix = np.asarray(features, dtype=np.float64).reshape(len(times), feature_dim)
    feature_matrix.setflags(write=False)
    events = [
        Event(
            kind=EventKind.ADD_EDGE,
            src=src_index[s],
            dst=dst_index[d],
            timestamp=t,
            seq=seq,
            features=feature_matrix[seq] if feature_dim else empty_features(),
        )
        for seq, (s, d, t) in enumerate(zip(raw_src, raw_dst, times))
    ]
    num_nodes = len(src_index) + (len(dst_index) if bipartite else 0)
    logger.info(f"Ingested {len(events)} events over {num_nodes} nodes from {path.name} "
                f"(feature dim {feature_dim})")
    return IngestResult(events, feature_dim, {"src": src_index, "dst": dst_index},
                        np.asarray(labels, dtype=np.float64))


def dataset_from_csv(path: Union[str, Path], name: Optional[str] = None, has_header: bool = False,
                     bipartite: bool = False,
                     node_features_path: Optional[Union[str, Path]] = None) -> Dataset:
    result = ingest_csv(path, has_header=has_header, bipartite=bipartite)
    src_index, dst_index = result.node_index["src"], result.node_index["dst"]
    num_sources = len(src_index)
    num_nodes = num_sources + (len(dst_index) if bipartite else 0)
    node_features = None
    if node_features_path is not None:
        node_features = np.load(node_features_path, allow_pickle=False).astype(np.float64)
        if node_features.ndim != 2 or node_features.shape[0] < num_nodes:
            raise SchemaError(f"node features {node_features.shape} do not cover {num_nodes} nodes")
    return Dataset(
        name=name or Path(path).stem,
        events=result.events,
        feature_dim=result.feature_dim,
        num_nodes=num_nodes,
        bipartite=bipartite,
        num_sources=num_sources if bipartite else 0,
        node_index=result.node_index,
        node_features=node_features,
        state_labels=result.state_labels,
    )


def load_dataset(name_or_path: Union[str, Path]) -> Dataset:
    """Resolve a dataset name, manifest or CSV path under TEMPOGRAPH_DATA_DIR."""
    from .config import resolve_manifest

    manifest = resolve_manifest(name_or_path)
    dataset = dataset_from_csv(
        manifest.path,
        name=manifest.name,
        has_header=manifest.has_header,
        bipartite=manifest.bipartite,
        node_features_path=manifest.node_features,
    )
    if manifest.feature_dim is not None and manifest.feature_dim != dataset.feature_dim:
        raise SchemaError(
            f"manifest declares feature_dim {manifest.feature_dim}, file has {dataset.feature_dim}"
        )
    return dataset


# Splitting

def _boundary(fraction: float, m: int) -> int:
    return int(math.floor(fraction * m + 1e-9))


def chronological_split(events: Sequence[Event], fractions: Tuple[float, float, float] = DEFAULT_FRACTIONS,
                        inductive: bool = False, new_node_fraction: float = 0.1,
                        rng_seed: int = 0) -> DatasetSplit:
    """Contiguous train/val/test ranges; inductive mode reserves unseen nodes."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions must be three non-negative values summing to 1: {fractions}")
    m = len(events)
    b1 = _boundary(fractions[0], m)
    b2 = _boundary(fractions[0] + fractions[1], m)
    split = DatasetSplit(train=range(0, b1), val=range(b1, b2), test=range(b2, m))
    for part in ("train", "val", "test"):
        if len(split.part(part)) == 0:
            raise ConfigurationError(f"{part} partition is empty for {m} events and fractions {fractions}")
    if not inductive:
        return split

    seen = set()
    for e in events[:b1]:
        seen.update(e.nodes())
    later = sorted({n for e in events[b1:] for n in e.nodes()} - seen)
    if not later:
        raise ConfigurationError("inductive split needs nodes that first appear after the train boundary; "
                                 f"all nodes occur in the first {b1} of {m} events")
    rng = np.random.default_rng(rng_seed)
    count = min(len(later), max(1, int(round(new_node_fraction * len(later)))))
    reserved = frozenset(int(n) for n in rng.choice(later, size=count, replace=False))
    for part in ("val", "test"):
        if not any(touches(e, reserved) for e in events[split.part(part).start:split.part(part).stop]):
            raise ConfigurationError(f"inductive {part} partition has no queries: none of the {count} reserved "
                                     f"nodes appears in it (new_node_fraction={new_node_fraction})")
    logger.info(f"Inductive split reserves {len(reserved)} of {len(later)} post-train nodes")
    return DatasetSplit(train=split.train, val=split.val, test=split.test,
                        new_node_set=reserved, inductive=True)


def touches(e: Event, nodes: frozenset) -> bool:
    return e.src in nodes or (e.dst is not None and e.dst in nodes)


def partition_events(events: Sequence[Event], split: DatasetSplit, part: str) -> List[Event]:
    """Events of one partition; inductive train drops anything touching reserved nodes."""
    selected = list(events[split.part(part).start:split.part(part).stop])
    if split.inductive and part == "train":
        selected = [e for e in selected if not touches(e, split.new_node_set)]
    return selected


def query_mask(part_events: Sequence[Event], split: DatasetSplit) -> np.ndarray:
    """Which updates of an evaluation partition are also queried."""
    if not split.inductive:
        return np.ones(len(part_events), dtype=bool)
    return np.array([touches(e, split.new_node_set) for e in part_events], dtype=bool)


# Negative sampling and query streams

def sample_negative(positive: Event, node_universe: Union[np.ndarray, Sequence[int]],
                    rng: np.random.Generator) -> Event:
    """Same source and instant, destination drawn uniformly; collisions are kept."""
    if len(node_universe) == 0:
        raise ContractViolation("negative sampling needs a non-empty node universe")
    dst = int(node_universe[int(rng.integers(len(node_universe)))])
    return positive.as_query(dst=dst, label=0)


def build_query_stream(events: Sequence[Event], node_universe: Union[np.ndarray, Sequence[int]],
                       rng: np.random.Generator, mask: Optional[np.ndarray] = None) -> List[Event]:
    """Interleave each selected AddEdge with its positive and one negative query."""
    stream: List[Event] = []
    for idx, e in enumerate(events):
        if e.kind is EventKind.ADD_EDGE and (mask is None or mask[idx]):
            stream.append(e.as_query(label=1))
            stream.append(sample_negative(e, node_universe, rng))
        stream.append(e)
    return stream


# Synthetic streams

def random_stream(num_events: int, num_nodes: int, rng: np.random.Generator,
                  feature_dim: int = 0, mean_gap: float = 1.0, start_seq: int = 0) -> List[Event]:
    """Uniformly random edges with exponential inter-arrival times."""
    if num_nodes < 2:
        raise ConfigurationError("random_stream needs at least two nodes")
    times = np.cumsum(rng.exponential(mean_gap, size=num_events))
    events = []
    for n in range(num_events):
        src = int(rng.integers(num_nodes))
        dst = int(rng.integers(num_nodes - 1))
        dst = dst + 1 if dst >= src else dst
        feats = rng.normal(size=feature_dim) if feature_dim else empty_features()
        events.append(Event(EventKind.ADD_EDGE, src, dst, float(times[n]), start_seq + n, feats))
    return events


def star_stream(num_events: int, hub: int = 0) -> List[Event]:
    """Every edge joins the hub to a fresh leaf."""
    return [Event(EventKind.ADD_EDGE, hub, hub + n + 1, float(n + 1), n) for n in range(num_events)]


def planted_threshold_stream(num_pairs: int, span: float, threshold: float,
                             rng: np.random.Generator, low: float = 0.05,
                             high: float = 0.95) -> List[Event]:
    """
    Labelled recurrence stream: each fresh pair is added once and queried
    later after a gap whose normalized value log(1+gap)/log(1+span) is
    uniform on [low, high]. The query is positive iff that value < threshold.
    """
    log_span = math.log1p(span)
    items = []
    start = 0.0
    for p in range(num_pairs):
        x = rng.uniform(low, high)
        gap = math.expm1(x * log_span)
        start += rng.exponential(1.0)
        items.append((start, 0, p, None))
        items.append((start + gap, 1, p, int(x < threshold)))
    items.sort(key=lambda item: (item[0], item[1]))

    events = []
    for seq, (t, is_query, p, label) in enumerate(items):
        src, dst = 2 * p, 2 * p + 1
        if is_query:
            events.append(Event(EventKind.PREDICT_EDGE, src, dst, t, seq, label=label))
        else:
            events.append(Event(EventKind.ADD_EDGE, src, dst, t, seq))
    return events
