"""
Experiment harness: builds models from an ExperimentConfig and runs the
analyze-missing, train, evaluate, bench and report commands.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .analyzer import sweep, write_report_csv
from .autodiff import Tensor, count_parameters, load_checkpoint
from .config import ExperimentConfig
from .dataset import Dataset, chronological_split, load_dataset
from .edgebank import EdgeBankModel, EdgeBankRule, LinearTimeModel
from .errors import CheckpointError, ConfigurationError
from .ldtgn import LDTGN, LdtgnConfig, SpanMode, dataset_span
from .results import BenchRow, ResultRow, SpeedupRow, format_report, read_results, write_row
from .scheduler import DecoupledModel, bench_throughput, speedup_estimate
from .training import TrainConfig, TrainResult, evaluate_split, partition_stream, train
from .types import DatasetSplit, EvalMode, EventKind, MissingUpdateReport, ModelKind

logger = logging.getLogger(__name__)


def count_params(params: Dict[str, Tensor]) -> int:
    return count_parameters(params)


def model_label(config: ExperimentConfig) -> str:
    if config.model_param is None:
        return config.model
    return f"{config.model}({config.model_param:g})"


def build_model(config: ExperimentConfig, dataset: Dataset, split: DatasetSplit, seed: int) -> DecoupledModel:
    kind, variant = config.model_kind, config.model_variant
    if kind is ModelKind.EDGEBANK:
        return EdgeBankModel(EdgeBankRule.parse(variant, config.model_param))
    if kind is ModelKind.LINEAR:
        unknown = sorted(set(config.model_options) - {"span_mode"})
        if unknown:
            raise ConfigurationError(f"unknown model options for linear: {unknown}")
        mode = SpanMode(config.model_options.get("span_mode", SpanMode.TIME.value))
        return LinearTimeModel.from_name(variant, dataset_span(dataset.events, split, mode))
    if variant is not None:
        raise ConfigurationError(f"{kind.value} takes no variant, got {variant!r}")
    ldtgn_config = LdtgnConfig.for_model(kind, config.model_options)
    span = dataset_span(dataset.events, split, ldtgn_config.span_mode)
    return LDTGN(kind, ldtgn_config, span, edge_feature_dim=dataset.feature_dim,
                 node_features=dataset.node_features, seed=seed)


def split_for(config: ExperimentConfig, dataset: Dataset, mode: EvalMode, seed: int) -> DatasetSplit:
    return chronological_split(dataset.events, inductive=mode is EvalMode.INDUCTIVE,
                               new_node_fraction=config.new_node_fraction, rng_seed=seed)


def run_tag(config: ExperimentConfig, dataset: Dataset, mode: EvalMode, seed: int) -> str:
    model = config.model.replace(":", "-")
    return f"{dataset.name}_{model}_{mode.value}_seed{seed}"


def checkpoint_path(config: ExperimentConfig, dataset: Dataset, mode: EvalMode, seed: int) -> Path:
    return config.checkpoint_dir / f"{run_tag(config, dataset, mode, seed)}.npz"


# Commands

def run_analyze(dataset_name: str, batch_sizes: Sequence[int], hops: Sequence[int] = (1,),
                output: Optional[Union[str, Path]] = None, workers: int = 1) -> List[MissingUpdateReport]:
    dataset = load_dataset(dataset_name)
    updates = [e for e in dataset.events if e.kind is EventKind.ADD_EDGE]
    reports: List[MissingUpdateReport] = []
    for hop in hops:
        reports.extend(sweep(updates, batch_sizes, hop, workers=workers))
    if output is not None:
        write_report_csv(reports, dataset.name, output)
        logger.info(f"Wrote {len(reports)} missing-update rows to {output}")
    return reports


def _train_one(config: ExperimentConfig, dataset: Dataset, mode: EvalMode, seed: int,
               model: DecoupledModel, split: DatasetSplit) -> TrainResult:
    tag = run_tag(config, dataset, mode, seed)
    train_cfg = TrainConfig(
        epochs=config.epochs,
        patience=config.patience,
        lr=config.lr,
        seed=seed,
        epoch_log=config.checkpoint_dir / f"{tag}_epochs.jsonl",
        checkpoint=checkpoint_path(config, dataset, mode, seed),
    )
    return train(model, dataset, split, config.decoupled, train_cfg)


def run_train(config: ExperimentConfig, dataset: Optional[Dataset] = None) -> Dict[int, TrainResult]:
    """Train one model per seed in the configured mode; checkpoints land in checkpoint_dir."""
    dataset = dataset or load_dataset(config.dataset)
    results: Dict[int, TrainResult] = {}
    for seed in config.seeds:
        split = split_for(config, dataset, config.mode, seed)
        model = build_model(config, dataset, split, seed)
        if not model.parameters():
            logger.info(f"{config.model} has no learnable parameters; nothing to train")
            return results
        results[seed] = _train_one(config, dataset, config.mode, seed, model, split)
    return results


@dataclass
class EvaluationSummary:
    rows: List[ResultRow] = field(default_factory=list)
    trained: int = 0


def run_evaluate(config: ExperimentConfig, modes: Optional[Sequence[EvalMode]] = None,
                 fit_missing: bool = False, dataset: Optional[Dataset] = None) -> EvaluationSummary:
    """
    Test metrics for every seed and mode, appended to config.output.

    Learnable models load their checkpoint from checkpoint_dir; with
    fit_missing a missing checkpoint is trained on the spot instead.
    """
    dataset = dataset or load_dataset(config.dataset)
    modes = list(modes) if modes else [EvalMode.TRANSDUCTIVE, EvalMode.INDUCTIVE]
    summary = EvaluationSummary()
    for mode in modes:
        for seed in config.seeds:
            started = time.perf_counter()
            split = split_for(config, dataset, mode, seed)
            model = build_model(config, dataset, split, seed)
            params = model.parameters()
            if params:
                path = checkpoint_path(config, dataset, mode, seed)
                if path.is_file():
                    load_checkpoint(path, params)
                elif fit_missing:
                    _train_one(config, dataset, mode, seed, model, split)
                    summary.trained += 1
                else:
                    raise CheckpointError(f"no checkpoint for {run_tag(config, dataset, mode, seed)} at {path}; "
                                          f"run train first or pass --fit")
            ap, auc, result = evaluate_split(model, dataset, split, "test", config.decoupled, seed)
            timing = result.timing
            edges_per_sec = timing.events_processed / timing.total if timing.total > 0 else 0.0
            row = ResultRow(
                model=model_label(config),
                dataset=dataset.name,
                mode=mode.value,
                seed=seed,
                test_ap=ap,
                test_auc=auc,
                param_count=count_params(params),
                edges_per_sec=edges_per_sec,
                wall_seconds=time.perf_counter() - started,
            )
            write_row(config.output, row)
            summary.rows.append(row)
    return summary


def run_bench(config: ExperimentConfig, batch_sizes: Sequence[int], warmup: int = 0,
              dataset: Optional[Dataset] = None) -> Tuple[List[BenchRow], List[SpeedupRow]]:
    """
    Throughput over the test partition's query stream for each prediction
    batch size, with the configured memory batch size. The first batch size
    is the baseline the speedup rows compare against.
    """
    if not batch_sizes:
        raise ConfigurationError("bench needs at least one batch size")
    dataset = dataset or load_dataset(config.dataset)
    seed = config.seeds[0]
    split = split_for(config, dataset, EvalMode.TRANSDUCTIVE, seed)
    model = build_model(config, dataset, split, seed)
    params = model.parameters()
    path = checkpoint_path(config, dataset, EvalMode.TRANSDUCTIVE, seed)
    if params and path.is_file():
        load_checkpoint(path, params)
    elif params:
        logger.info(f"No checkpoint at {path}; benchmarking freshly initialized weights")
    stream = partition_stream(dataset, split, "test", seed)

    mbs = config.decoupled.memory_batch_size
    bench_rows: List[BenchRow] = []
    timings = {}
    for bs in batch_sizes:
        if bs < mbs:
            logger.warning(f"Skipping bs={bs}: smaller than memory batch size {mbs}")
            continue
        cfg = replace(config.decoupled, prediction_batch_size=bs)
        edges_per_sec, timing = bench_throughput(model, stream, cfg, warmup)
        row = BenchRow(model_label(config), dataset.name, bs, mbs, edges_per_sec,
                       timing.t_memory, timing.t_prediction)
        write_row(config.output, row)
        bench_rows.append(row)
        timings[bs] = timing

    speedup_rows: List[SpeedupRow] = []
    if bench_rows:
        base = bench_rows[0]
        for row in bench_rows[1:]:
            speedup = SpeedupRow(
                model=base.model,
                dataset=base.dataset,
                mbs=mbs,
                bs_old=base.bs,
                bs_new=row.bs,
                measured=row.edges_per_sec / base.edges_per_sec if base.edges_per_sec else 0.0,
                estimated=speedup_estimate(timings[base.bs], base.bs, row.bs),
            )
            write_row(config.output, speedup)
            speedup_rows.append(speedup)
    return bench_rows, speedup_rows


def run_report(path: Union[str, Path], dataset: Optional[str] = None) -> str:
    return format_report(read_results(path), dataset)
