"""
tempograph - streaming learning on continuous-time dynamic graphs.

This package provides:
- A temporal graph store replayed from timestamped event streams
- Missing-update analysis for batched processing
- A decoupled scheduler separating memory batches from prediction batches
- EdgeBank baselines, a linear time-decay model and LDTGN / LDTGN-mem
- Training, evaluation and throughput benchmarking
"""

from .analyzer import count_missing_updates, sweep
from .autodiff import Tape, Tensor, backward, bce_loss, grad_check, no_grad
from .config import ExperimentConfig
from .dataset import Dataset, build_query_stream, chronological_split, ingest_csv, load_dataset
from .edgebank import (EdgeBankMemory, EdgeBankModel, EdgeBankRule, LinearTimeModel, edgebank_predict,
                       edgebank_update, linear_time_predict)
from .errors import TempographError
from .graph_store import TemporalGraphStore, apply_update, recent_neighbors
from .harness import build_model, count_params
from .ldtgn import LDTGN, LdtgnConfig, normalize_time, tde
from .memory import MemoryView, extract_view, process_memory_batch
from .metrics import auc_roc, average_precision
from .scheduler import (DecoupledModel, bench_throughput, run_batch, sequential_oracle, speedup_estimate,
                        split_into_memory_batches)
from .training import EarlyStopMonitor, Trainer, evaluate_split, train
from .types import DecoupledConfig, Event, EventKind, ModelKind, TimingBreakdown

__version__ = "1.0.0"
__all__ = [
    "count_missing_updates",
    "sweep",
    "Tape",
    "Tensor",
    "backward",
    "bce_loss",
    "grad_check",
    "no_grad",
    "ExperimentConfig",
    "Dataset",
    "build_query_stream",
    "chronological_split",
    "ingest_csv",
    "load_dataset",
    "EdgeBankMemory",
    "EdgeBankModel",
    "EdgeBankRule",
    "LinearTimeModel",
    "edgebank_predict",
    "edgebank_update",
    "linear_time_predict",
    "TempographError",
    "TemporalGraphStore",
    "apply_update",
    "recent_neighbors",
    "build_model",
    "count_params",
    "LDTGN",
    "LdtgnConfig",
    "normalize_time",
    "tde",
    "MemoryView",
    "extract_view",
    "process_memory_batch",
    "auc_roc",
    "average_precision",
    "DecoupledModel",
    "bench_throughput",
    "run_batch",
    "sequential_oracle",
    "speedup_estimate",
    "split_into_memory_batches",
    "EarlyStopMonitor",
    "Trainer",
    "evaluate_split",
    "train",
    "DecoupledConfig",
    "Event",
    "EventKind",
    "ModelKind",
    "TimingBreakdown",
]
