"""
Missing-updates analysis.

Replays an AddEdge stream in consecutive batches. Inside a batch every event
is first a prediction input and then an update; an earlier update of the
same batch is missing for an input when one of its endpoints lies within
`hop` hops (the endpoints themselves included) of either input endpoint, on
the graph as it stood when the batch started.
"""

import csv
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Set, Union

from .errors import ConfigurationError, ContractViolation, UnsupportedError
from .types import Event, EventKind, MissingUpdateReport

logger = logging.getLogger(__name__)

SUPPORTED_HOPS = (1, 2)
REPORT_COLUMNS = ("dataset", "batch_size", "hop", "ratio", "avg", "inputs")


def _reach(adjacency: Dict[int, Set[int]], node: int, hop: int) -> Set[int]:
    """Nodes within `hop` hops of node, node included."""
    reached = {node}
    frontier = {node}
    for _ in range(hop):
        next_frontier = set()
        for current in frontier:
            next_frontier.update(adjacency.get(current, ()))
        next_frontier -= reached
        if not next_frontier:
            break
        reached |= next_frontier
        frontier = next_frontier
    return reached


def count_missing_updates(events: Sequence[Event], batch_size: int, hop: int) -> MissingUpdateReport:
    if hop not in SUPPORTED_HOPS:
        raise UnsupportedError(f"hop must be one of {SUPPORTED_HOPS}, got {hop}")
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")

    adjacency: Dict[int, Set[int]] = defaultdict(set)
    affected = 0
    missing_total = 0
    inputs = 0

    for start in range(0, len(events), batch_size):
        batch = events[start:start + batch_size]
        reach_cache: Dict[int, Set[int]] = {}
        touched: Dict[int, List[int]] = defaultdict(list)

        for j, e in enumerate(batch):
            if e.kind is not EventKind.ADD_EDGE:
                raise ContractViolation(f"missing-update analysis needs AddEdge events, got {e.kind.value}")
            missing = 0
            if j:
                for node in (e.src, e.dst):
                    if node not in reach_cache:
                        reach_cache[node] = _reach(adjacency, node, hop)
                scope = reach_cache[e.src] | reach_cache[e.dst]
                if len(scope) < j:
                    hits: Set[int] = set()
                    for node in scope:
                        hits.update(touched.get(node, ()))
                    missing = len(hits)
                else:
                    missing = sum(1 for u in batch[:j] if u.src in scope or u.dst in scope)
            touched[e.src].append(j)
            touched[e.dst].append(j)
            inputs += 1
            missing_total += missing
            affected += missing > 0

        for e in batch:
            adjacency[e.src].add(e.dst)
            adjacency[e.dst].add(e.src)

    if inputs == 0:
        return MissingUpdateReport(batch_size, hop, 0.0, 0.0, 0)
    report = MissingUpdateReport(
        batch_size=batch_size,
        hop=hop,
        ratio_affected=affected / inputs,
        avg_missing_per_input=missing_total / inputs,
        inputs_counted=inputs,
    )
    logger.debug(f"batch {batch_size} hop {hop}: ratio {report.ratio_affected:.4f}, "
                 f"avg {report.avg_missing_per_input:.4f}")
    return report


def sweep(events: Sequence[Event], batch_sizes: Iterable[int], hop: int,
          workers: int = 1) -> List[MissingUpdateReport]:
    """One independent report per batch size, in the order given."""
    sizes = list(batch_sizes)
    if not sizes:
        raise ConfigurationError("sweep needs at least one batch size")
    job = partial(count_missing_updates, events, hop=hop)
    if workers <= 1 or len(sizes) == 1:
        reports = [job(size) for size in sizes]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(sizes))) as pool:
            reports = list(pool.map(job, sizes))
    logger.info(f"Swept {len(sizes)} batch sizes at hop {hop} over {len(events)} events")
    return reports


def write_report_csv(reports: Iterable[MissingUpdateReport], dataset: str,
                     path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            writer.writerow([dataset, r.batch_size, r.hop, f"{r.ratio_affected:.6f}",
                             f"{r.avg_missing_per_input:.6f}", r.inputs_counted])
    return path
