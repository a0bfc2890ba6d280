"""
LDTGN prediction module.

Every query (i, j, t) is scored from the view its memory batch froze:

    v_u   = [F_V(u) | TDE(t - t_u) | s_u]          entity vector (s_u for -mem)
    c_k   = [v_i | v_k | f_ik]                       candidate per recent neighbor
    h_k   = W c_k,  e_k = leaky_relu(a . h_k)        single-head additive attention
    z_i   = sum_k softmax(e)_k h_k
    z_ij  = TDE(t - t_ij)
    p     = sigmoid(MLP([z_i | z_j | z_ij]))

A node with no recent neighbors attends over one self-candidate
[v_i | v_i | 0]. All queries of a prediction batch are embedded together.
"""

import logging
import math
from dataclasses import dataclass, fields
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .autodiff import (Tensor, concat, cosine, leaky_relu, linear, parameter, relu, reshape, sigmoid,
                       softmax, stack, take_rows, weighted_sum, xavier_normal)
from .errors import ConfigurationError, ContractViolation, DimensionError, UnsupportedError
from .graph_store import TemporalGraphStore
from .memory import GRUCell, MemoryView, extract_view, process_memory_batch
from .scheduler import DecoupledModel
from .types import DatasetSplit, DecoupledConfig, Event, EventKind, ModelKind

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.2


class TdeKind(Enum):
    MLP = "mlp"
    TIME2VEC = "time2vec"


class SpanMode(Enum):
    """What the normalization constant C measures."""
    TIME = "time"
    EVENTS = "events"


def normalize_time(delta_t: Union[float, np.ndarray], span: float) -> Union[float, np.ndarray]:
    """log(1 + dt) / log(1 + C)."""
    if span <= 0:
        raise ConfigurationError(f"normalization span must be positive, got {span}")
    dt = np.asarray(delta_t, dtype=np.float64)
    if np.any(dt < 0):
        raise ContractViolation(f"negative time difference {dt.min()}")
    out = np.log1p(dt) / math.log1p(span)
    return float(out) if out.ndim == 0 else out


def _as_column(delta_t: Union[float, np.ndarray]) -> np.ndarray:
    dt = np.asarray(delta_t, dtype=np.float64)
    if dt.ndim == 0 or dt.shape[-1] != 1:
        dt = dt[..., None]
    if np.any(dt < 0):
        raise ContractViolation(f"negative time difference {dt.min()}")
    return dt


class MlpTimeEncoder:
    """normalize, then Linear(1, d) -> ReLU -> Linear(d, d) -> ReLU."""

    def __init__(self, out_dim: int, span: float, rng: np.random.Generator):
        self.out_dim = out_dim
        self.span = span
        self.W1 = parameter(xavier_normal(rng, 1, out_dim), "tde.W1")
        self.b1 = parameter(np.zeros(out_dim), "tde.b1")
        self.W2 = parameter(xavier_normal(rng, out_dim, out_dim), "tde.W2")
        self.b2 = parameter(np.zeros(out_dim), "tde.b2")

    def parameters(self) -> Dict[str, Tensor]:
        return {p.name: p for p in (self.W1, self.b1, self.W2, self.b2)}

    def __call__(self, delta_t: Union[float, np.ndarray]) -> Tensor:
        x = Tensor(normalize_time(_as_column(delta_t), self.span))
        return relu(linear(relu(linear(x, self.W1, self.b1)), self.W2, self.b2))


class Time2Vec:
    """[w0 * dt + p0, cos(w * dt + p)] on raw time differences."""

    def __init__(self, out_dim: int, rng: np.random.Generator):
        self.out_dim = out_dim
        self.omega0 = parameter(np.zeros(1), "tde.omega0")
        self.phi0 = parameter(np.zeros(1), "tde.phi0")
        self.omega = parameter(1.0 / 10 ** np.linspace(0, 9, out_dim - 1), "tde.omega")
        self.phi = parameter(np.zeros(out_dim - 1), "tde.phi")

    def parameters(self) -> Dict[str, Tensor]:
        return {p.name: p for p in (self.omega0, self.phi0, self.omega, self.phi)}

    def __call__(self, delta_t: Union[float, np.ndarray]) -> Tensor:
        dt = Tensor(_as_column(delta_t))
        trend = dt * self.omega0 + self.phi0
        if self.out_dim == 1:
            return trend
        return concat([trend, cosine(dt * self.omega + self.phi)])


TimeEncoder = Union[MlpTimeEncoder, Time2Vec]


@dataclass
class TimeEncoderConfig:
    kind: TdeKind = TdeKind.MLP
    out_dim: int = 100
    span: Optional[float] = None

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = TdeKind(self.kind)
        if self.out_dim < 1:
            raise ConfigurationError(f"time encoder width must be >= 1, got {self.out_dim}")
        if self.kind is TdeKind.MLP and (self.span is None or self.span <= 0):
            raise ConfigurationError(f"MLP time encoder needs a positive span C, got {self.span}")

    def build(self, rng: np.random.Generator) -> TimeEncoder:
        if self.kind is TdeKind.MLP:
            return MlpTimeEncoder(self.out_dim, self.span, rng)
        return Time2Vec(self.out_dim, rng)


def tde(delta_t: Union[float, np.ndarray], encoder: TimeEncoder) -> Tensor:
    """Encode one or many time differences; a scalar gives a (d,) vector."""
    out = encoder(delta_t)
    if np.ndim(delta_t) == 0:
        return reshape(out, (encoder.out_dim,))
    return out


class MergeMLP:
    """Linear to `hidden`, then ReLU-separated reductions down to one logit."""

    def __init__(self, in_dim: int, hidden: int, reductions: Sequence[int], rng: np.random.Generator):
        dims = [in_dim, hidden, *reductions, 1]
        self.layers: List[Tuple[Tensor, Tensor]] = []
        for n, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            W = parameter(xavier_normal(rng, fan_in, fan_out), f"merge.{n}.W")
            b = parameter(np.zeros(fan_out), f"merge.{n}.b")
            self.layers.append((W, b))

    def parameters(self) -> Dict[str, Tensor]:
        params = {}
        for W, b in self.layers:
            params[W.name] = W
            params[b.name] = b
        return params

    def __call__(self, x: Tensor) -> Tensor:
        W, b = self.layers[0]
        h = linear(x, W, b)
        for W, b in self.layers[1:-1]:
            h = relu(linear(h, W, b))
        W, b = self.layers[-1]
        return sigmoid(linear(h, W, b))


@dataclass
class LdtgnConfig:
    """Widths and switches of an LDTGN model."""
    tde_kind: TdeKind = TdeKind.MLP
    tde_dim: int = 100
    embed_dim: int = 100
    merge_hidden: int = 100
    merge_reductions: Tuple[int, ...] = (80, 10)
    state_dim: int = 100
    span_mode: SpanMode = SpanMode.TIME
    message_edge_features: bool = False

    def __post_init__(self):
        try:
            self.tde_kind = TdeKind(self.tde_kind)
            self.span_mode = SpanMode(self.span_mode)
        except ValueError as e:
            raise ConfigurationError(str(e)) from None
        self.merge_reductions = tuple(int(d) for d in self.merge_reductions)
        for name in ("tde_dim", "embed_dim", "merge_hidden", "state_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")

    @classmethod
    def for_model(cls, kind: ModelKind, options: Optional[Mapping[str, Any]] = None) -> "LdtgnConfig":
        """LDTGN defaults to the MLP encoder, LDTGN-mem to Time2Vec; options override."""
        options = dict(options or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(options) - known)
        if unknown:
            raise ConfigurationError(f"unknown model options: {unknown}")
        options.setdefault("tde_kind", TdeKind.TIME2VEC if kind is ModelKind.LDTGN_MEM else TdeKind.MLP)
        return cls(**options)


def dataset_span(events: Sequence[Event], split: DatasetSplit, mode: SpanMode) -> float:
    """C: time span of the train partition, or its event count."""
    train = split.train
    if mode is SpanMode.EVENTS:
        span = float(len(train))
    elif len(train) == 0:
        span = 0.0
    else:
        span = events[train.stop - 1].timestamp - events[train.start].timestamp
    if span <= 0:
        logger.warning(f"Train span is {span}; using 1.0 for time normalization")
        span = 1.0
    return span


Center = Tuple[MemoryView, int, float]


class LDTGN(DecoupledModel):
    """LDTGN, or LDTGN-mem when kind is LDTGN_MEM."""

    def __init__(self, kind: ModelKind, config: LdtgnConfig, time_span: float, edge_feature_dim: int = 0,
                 node_features: Optional[np.ndarray] = None, seed: int = 0):
        if kind not in (ModelKind.LDTGN, ModelKind.LDTGN_MEM):
            raise ConfigurationError(f"LDTGN cannot run as {kind.value}")
        self.kind = kind
        self.config = config
        self.edge_feature_dim = edge_feature_dim
        if node_features is not None and node_features.shape[1] == 0:
            node_features = None
        self.node_features = node_features
        node_dim = 0 if node_features is None else node_features.shape[1]

        rng = np.random.default_rng(seed)
        self.time_encoder = TimeEncoderConfig(config.tde_kind, config.tde_dim, time_span).build(rng)
        self.state_dim = config.state_dim if self.is_mem else 0
        entity_dim = node_dim + config.tde_dim + self.state_dim
        candidate_dim = 2 * entity_dim + edge_feature_dim
        self.W_att = parameter(xavier_normal(rng, candidate_dim, config.embed_dim), "att.W")
        self.a_att = parameter(xavier_normal(rng, config.embed_dim, 1), "att.a")
        self.merge = MergeMLP(2 * config.embed_dim + config.tde_dim, config.merge_hidden,
                              config.merge_reductions, rng)
        self.cell: Optional[GRUCell] = None
        if self.is_mem:
            message_dim = 2 * self.state_dim + config.tde_dim
            if config.message_edge_features:
                message_dim += edge_feature_dim
            self.cell = GRUCell(message_dim, self.state_dim, rng)
        logger.debug(f"Built {kind.value}: entity {entity_dim}, candidate {candidate_dim}, "
                     f"{sum(p.size for p in self.parameters().values())} parameters")

    @property
    def is_mem(self) -> bool:
        return self.kind is ModelKind.LDTGN_MEM

    def parameters(self) -> Dict[str, Tensor]:
        params = dict(self.time_encoder.parameters())
        params["att.W"] = self.W_att
        params["att.a"] = self.a_att
        params.update(self.merge.parameters())
        if self.cell is not None:
            params.update(self.cell.parameters())
        return params

    # Memory side

    def extract_view(self, store: TemporalGraphStore, queries: Sequence[Event],
                     cfg: DecoupledConfig) -> MemoryView:
        if cfg.hop > 1:
            raise UnsupportedError("LDTGN embeds 1-hop neighborhoods only")
        nodes = {n for q in queries for n in q.nodes()}
        return extract_view(store, nodes, hop=cfg.hop, k=cfg.k_recent,
                            query_edges=[q.key for q in queries])

    def process_memory_batch(self, store: TemporalGraphStore, updates: Sequence[Event]) -> None:
        process_memory_batch(store, updates, self.kind, cell=self.cell, tde=self.time_encoder,
                             include_edge_features=self.config.message_edge_features)

    # Prediction side

    def _entity_vectors(self, items: Sequence[Center]) -> Tensor:
        parts = []
        if self.node_features is not None:
            index = np.array([node for _, node, _ in items], dtype=np.int64)
            if index.size and index.max() >= self.node_features.shape[0]:
                raise DimensionError("node_embedding", f"node {index.max()} has no feature row")
            parts.append(Tensor(self.node_features[index]))
        parts.append(self.time_encoder(np.array([[t - view.node_time_of(node)] for view, node, t in items])))
        if self.is_mem:
            rows: Dict[Tuple[int, int], int] = {}
            states: List[Tensor] = []
            index = np.empty(len(items), dtype=np.int64)
            for r, (view, node, _) in enumerate(items):
                key = (id(view), node)
                if key not in rows:
                    rows[key] = len(states)
                    states.append(view.state(node))
                index[r] = rows[key]
            parts.append(take_rows(stack(states), index))
        return concat(parts) if len(parts) > 1 else parts[0]

    def _embed(self, centers: Sequence[Center]) -> Tuple[Tensor, Tensor, np.ndarray]:
        """Attention embeddings for every center; returns (z, alpha, mask)."""
        neighbor_lists = [view.neighbors(node) for view, node, _ in centers]
        width = max(1, max(len(entries) for entries in neighbor_lists))
        count = len(centers)
        items = list(centers)
        slots = np.repeat(np.arange(count)[:, None], width, axis=1)
        mask = np.zeros((count, width), dtype=bool)
        features = np.zeros((count, width, self.edge_feature_dim))

        for c, ((view, _, t), entries) in enumerate(zip(centers, neighbor_lists)):
            if not entries:
                mask[c, 0] = True
                continue
            for s, entry in enumerate(entries):
                slots[c, s] = len(items)
                items.append((view, entry.neighbor, t))
                mask[c, s] = True
                if self.edge_feature_dim:
                    if entry.features.shape != (self.edge_feature_dim,):
                        raise DimensionError("node_embedding",
                                             f"edge features {entry.features.shape}, expected "
                                             f"({self.edge_feature_dim},)")
                    features[c, s] = entry.features

        entities = self._entity_vectors(items)
        own = np.repeat(np.arange(count)[:, None], width, axis=1)
        candidate_parts = [take_rows(entities, own), take_rows(entities, slots)]
        if self.edge_feature_dim:
            candidate_parts.append(Tensor(features))
        hidden = linear(concat(candidate_parts), self.W_att)
        logits = reshape(leaky_relu(linear(hidden, self.a_att), LEAKY_SLOPE), (count, width))
        alpha = softmax(logits, mask)
        return weighted_sum(hidden, alpha), alpha, mask

    def predict(self, pairs: Sequence[Tuple[MemoryView, Event]]) -> Tensor:
        n = len(pairs)
        if n == 0:
            return Tensor(np.zeros(0))
        centers = [(view, q.src, q.timestamp) for view, q in pairs]
        centers += [(view, q.dst, q.timestamp) for view, q in pairs]
        z, _, _ = self._embed(centers)
        z_edge = self.time_encoder(np.array([[q.timestamp - view.edge_time_of(q.src, q.dst)]
                                             for view, q in pairs]))
        merged = concat([take_rows(z, np.arange(n)), take_rows(z, np.arange(n, 2 * n)), z_edge])
        return reshape(self.merge(merged), (n,))

    # Single-query helpers

    def node_embedding(self, view: MemoryView, i: int, t: float) -> Tensor:
        z, _, _ = self._embed([(view, i, t)])
        return take_rows(z, 0)

    def attention_weights(self, view: MemoryView, i: int, t: float) -> np.ndarray:
        _, alpha, mask = self._embed([(view, i, t)])
        return alpha.values[0][mask[0]]

    def edge_embedding(self, view: MemoryView, i: int, j: int, t: float) -> Tensor:
        return tde(t - view.edge_time_of(i, j), self.time_encoder)

    def predict_one(self, view: MemoryView, i: int, j: int, t: float) -> float:
        query = Event(EventKind.PREDICT_EDGE, i, j, t, 0)
        return float(self.predict([(view, query)]).values[0])