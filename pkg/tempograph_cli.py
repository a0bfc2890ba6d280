#!/usr/bin/env python3
"""
tempograph - Main Entry Point

Missing-update analysis, training, evaluation, throughput benchmarks and
result reports for streaming dynamic-graph models.

Usage:
    python tempograph_cli.py analyze-missing --dataset <name> [--batch-sizes 1,10,25] [--hop 1] [--out CSV]
    python tempograph_cli.py train --dataset <name> --model ldtgn [--seeds 0 1 2]
    python tempograph_cli.py evaluate --dataset <name> --model edgebank:th [--param T] [--mode both]
    python tempograph_cli.py bench --dataset <name> --model ldtgn_mem --batch-sizes 50,100,200,400
    python tempograph_cli.py report results/results.jsonl

Example:
    python tempograph_cli.py analyze-missing --dataset uci --batch-sizes 1,10,25,50,100,200 --hop 1 --out report.csv
    python tempograph_cli.py evaluate --config configs/ldtgn_wikipedia.yaml --fit
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

from tempograph.config import ExperimentConfig
from tempograph.errors import (CheckpointError, ConfigurationError, DatasetNotFoundError, OrderingError,
                               ParseError, SchemaError, TempographError, UnsupportedError)
from tempograph.harness import run_analyze, run_bench, run_evaluate, run_report, run_train
from tempograph.types import EvalMode

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_CHECKPOINT = 4
EXIT_INTERRUPTED = 130

DEFAULT_BATCH_SIZES = [1, 10, 25, 50, 100, 200]


def int_list(text: str) -> List[int]:
    """'1,10,25' -> [1, 10, 25]; argparse type for comma-separated sizes."""
    try:
        values = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', type=Path, help='YAML experiment config')
    parser.add_argument('--dataset', help='Dataset name, manifest or CSV path')
    parser.add_argument('--model', help='edgebank:{inf|tw|th|re}, linear:{edge|node}, ldtgn or ldtgn_mem')
    parser.add_argument('--param', type=float, help='EdgeBank parameter (T for tw/th, n for re)')
    parser.add_argument('--batch-size', type=int, help='Prediction batch size (default: 200)')
    parser.add_argument('--memory-batch-size', type=int, help='Memory batch size (default: 1, 50 for ldtgn_mem)')
    parser.add_argument('--hop', type=int, help='Neighborhood hops read per query (default: 1)')
    parser.add_argument('--k-recent', type=int, help='Recent neighbors per node (default: 20)')
    parser.add_argument('--seeds', type=int, nargs='+', help='Seeds (default: 0 1 2 3 4)')
    parser.add_argument('--out', type=Path, help='Results JSONL (default: results/results.jsonl)')
    parser.add_argument('--checkpoint-dir', type=Path, help='Checkpoint directory (default: checkpoints)')
    parser.add_argument('--epochs', type=int, help='Maximum epochs (default: 100)')
    parser.add_argument('--patience', type=int, help='Early-stopping patience (default: 20)')
    parser.add_argument('--lr', type=float, help='Adam learning rate (default: 1e-4)')


def build_config(args: argparse.Namespace, mode: Optional[str] = None) -> ExperimentConfig:
    if args.config is not None:
        config = ExperimentConfig.from_yaml(args.config)
    elif args.dataset is not None:
        config = ExperimentConfig(dataset=args.dataset)
    else:
        raise ConfigurationError("pass --config or --dataset")
    return config.with_overrides(
        dataset=args.dataset,
        model=args.model,
        model_param=args.param,
        prediction_batch_size=args.batch_size,
        memory_batch_size=args.memory_batch_size,
        hop=args.hop,
        k_recent=args.k_recent,
        seeds=args.seeds,
        mode=mode,
        output=args.out,
        checkpoint_dir=args.checkpoint_dir,
        epochs=args.epochs,
        patience=args.patience,
        lr=args.lr,
    )


def _banner(title: str, config: Optional[ExperimentConfig] = None) -> None:
    print(title)
    print("=" * 50)
    if config is not None:
        d = config.decoupled
        print(f"📁 Dataset: {config.dataset}")
        print(f"🧠 Model: {config.model}" + (f" (param {config.model_param:g})" if config.model_param is not None else ""))
        print(f"📦 Batching: bs={d.prediction_batch_size} mbs={d.memory_batch_size} "
              f"hop={d.hop} k={d.k_recent}")
        print(f"🎲 Seeds: {', '.join(str(s) for s in config.seeds)}")
    print()


def cmd_analyze(args: argparse.Namespace) -> int:
    _banner("🔍 Missing-Update Analysis")
    reports = run_analyze(args.dataset, args.batch_sizes, args.hops, args.out, args.workers)
    print(f"{'hop':>4} {'batch':>7} {'ratio':>8} {'avg':>9}")
    for r in reports:
        print(f"{r.hop:>4} {r.batch_size:>7} {r.ratio_affected:>8.4f} {r.avg_missing_per_input:>9.4f}")
    if args.out:
        print(f"\n✅ Report written to {args.out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = build_config(args, args.mode)
    _banner("🚀 Training", config)
    results = run_train(config)
    if not results:
        print("⚠️ Nothing to train for this model")
        return EXIT_OK
    for seed, result in results.items():
        print(f"✅ Seed {seed}: best epoch {result.best_epoch}, val AP {result.best_val_ap:.4f} "
              f"({len(result.history)} epochs, {result.wall_seconds:.1f}s)")
    print(f"💾 Checkpoints in {config.checkpoint_dir}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    mode = None if args.mode == 'both' else args.mode
    config = build_config(args, mode)
    _banner("📊 Evaluation", config)
    modes: List[EvalMode] = [EvalMode(mode)] if mode else [EvalMode.TRANSDUCTIVE, EvalMode.INDUCTIVE]
    summary = run_evaluate(config, modes, fit_missing=args.fit)
    for row in summary.rows:
        print(f"   {row.mode:<12} seed {row.seed}: AP {row.test_ap:.4f} AUC {row.test_auc:.4f} "
              f"params {row.param_count} {row.edges_per_sec:.0f} edges/s")
    print(f"\n✅ {len(summary.rows)} rows appended to {config.output}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    config = build_config(args)
    _banner("⏱️ Throughput Benchmark", config)
    bench_rows, speedup_rows = run_bench(config, args.batch_sizes, args.warmup)
    for row in bench_rows:
        print(f"   bs={row.bs:<6} {row.edges_per_sec:>10.0f} edges/s "
              f"(memory {row.t_memory:.3f}s, prediction {row.t_prediction:.3f}s)")
    for row in speedup_rows:
        print(f"   {row.bs_old}->{row.bs_new}: measured x{row.measured:.2f}, estimated x{row.estimated:.2f}")
    print(f"\n✅ Rows appended to {config.output}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    if not args.results.is_file():
        print(f"❌ Results file not found: {args.results}")
        return EXIT_DATASET
    print(run_report(args.results, args.dataset))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Streaming dynamic-graph learning: analysis, training, evaluation, benchmarks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python tempograph_cli.py analyze-missing --dataset uci --batch-sizes 1,10,25,50,100,200 --hop 1 --out report.csv
  python tempograph_cli.py evaluate --dataset uci --model edgebank:th --param 1000
  python tempograph_cli.py train --config configs/ldtgn_wikipedia.yaml --seeds 0
        """
    )
    parser.add_argument('--verbose', '-v', action='store_true', help='Verbose output')
    sub = parser.add_subparsers(dest='command', required=True)

    analyze = sub.add_parser('analyze-missing', help='Missing-update statistics per batch size')
    analyze.add_argument('--dataset', required=True, help='Dataset name, manifest or CSV path')
    analyze.add_argument('--batch-sizes', type=int_list, default=DEFAULT_BATCH_SIZES,
                         help='Comma-separated batch sizes (default: 1,10,25,50,100,200)')
    analyze.add_argument('--hop', dest='hops', type=int_list, default=[1],
                         help='Hops, 1 or 2; a comma list runs both (default: 1)')
    analyze.add_argument('--out', type=Path, help='CSV report path')
    analyze.add_argument('--workers', type=int, default=1, help='Processes for the batch-size sweep')
    analyze.set_defaults(handler=cmd_analyze)

    train = sub.add_parser('train', help='Train a model per seed and checkpoint the best epoch')
    _experiment_flags(train)
    train.add_argument('--mode', choices=[m.value for m in EvalMode])
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser('evaluate', aliases=['eval'], help='Test AP/AUC for every seed and mode')
    _experiment_flags(evaluate)
    evaluate.add_argument('--mode', choices=[m.value for m in EvalMode] + ['both'], default='both')
    evaluate.add_argument('--fit', action='store_true', help='Train when a checkpoint is missing')
    evaluate.set_defaults(handler=cmd_evaluate)

    bench = sub.add_parser('bench', help='Edges per second across prediction batch sizes')
    _experiment_flags(bench)
    bench.add_argument('--batch-sizes', type=int_list, default=[50, 100, 200, 400],
                       help='Comma-separated prediction batch sizes; the first is the speedup baseline')
    bench.add_argument('--warmup', type=int, default=0, help='Updates excluded from timing')
    bench.set_defaults(handler=cmd_bench)

    report = sub.add_parser('report', help='Aggregate result rows into mean±std tables')
    report.add_argument('results', type=Path, help='Results JSONL')
    report.add_argument('--dataset', help='Only rows for this dataset')
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        parser.print_help()
        return EXIT_CONFIG

    args = parser.parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    started = time.perf_counter()
    try:
        code = args.handler(args)
    except KeyboardInterrupt:
        print("\n⚠️ Interrupted by user")
        return EXIT_INTERRUPTED
    except (ConfigurationError, UnsupportedError) as e:
        print(f"\n❌ Configuration error: {e}")
        return EXIT_CONFIG
    except (DatasetNotFoundError, ParseError, OrderingError, SchemaError) as e:
        print(f"\n❌ Dataset error: {e}")
        return EXIT_DATASET
    except CheckpointError as e:
        print(f"\n❌ Checkpoint error: {e}")
        return EXIT_CHECKPOINT
    except TempographError as e:
        print(f"\n❌ Error: {e}")
        return EXIT_UNEXPECTED
    except Exception as e:
        print(f"\n❌ Unexpected error: {e}")
        if args.verbose:
            import traceback
            traceback.print_exc()
        return EXIT_UNEXPECTED
    logger.debug(f"{args.command} finished in {time.perf_counter() - started:.1f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
