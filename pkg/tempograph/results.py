"""
Result rows and their JSONL files.

Files are append-only, one JSON object per line. Reading validates every row
against its schema and reports the offending line.
"""

import json
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Type, Union

import numpy as np

from .errors import SchemaError

logger = logging.getLogger(__name__)


def append_jsonl(path: Union[str, Path], row: Dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a") as fh:
        fh.write(json.dumps(row, sort_keys=True) + "\n")


def iter_jsonl(path: Union[str, Path]) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """(line number, object) for every non-blank line."""
    with Path(path).open() as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"invalid JSON: {e.msg}", line=line_no) from None
            if not isinstance(obj, dict):
                raise SchemaError("row is not a JSON object", line=line_no)
            yield line_no, obj


@dataclass
class ResultRow:
    """Test metrics of one (model, dataset, mode, seed) run."""
    model: str
    dataset: str
    mode: str
    seed: int
    test_ap: float
    test_auc: float
    param_count: int
    edges_per_sec: float
    wall_seconds: float

    kind = "result"

    def validate(self) -> None:
        for name in ("test_ap", "test_auc"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise SchemaError(f"{name} {value} outside [0, 1]")
        if self.param_count < 0:
            raise SchemaError(f"param_count {self.param_count} is negative")
        if self.edges_per_sec < 0 or self.wall_seconds < 0:
            raise SchemaError("timings must be non-negative")

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, **asdict(self)}


@dataclass
class BenchRow:
    """Throughput of one (model, dataset, bs, mbs) configuration."""
    model: str
    dataset: str
    bs: int
    mbs: int
    edges_per_sec: float
    t_memory: float
    t_prediction: float

    kind = "bench"

    def validate(self) -> None:
        if self.bs < 1 or self.mbs < 1:
            raise SchemaError("bs and mbs must be >= 1")
        if self.edges_per_sec < 0 or self.t_memory < 0 or self.t_prediction < 0:
            raise SchemaError("timings must be non-negative")

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, **asdict(self)}


@dataclass
class SpeedupRow:
    """Measured speedup between two batch sizes next to the projected one."""
    model: str
    dataset: str
    mbs: int
    bs_old: int
    bs_new: int
    measured: float
    estimated: float

    kind = "speedup"

    def validate(self) -> None:
        if self.measured < 0 or self.estimated < 0:
            raise SchemaError("speedups must be non-negative")

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, **asdict(self)}


ROW_TYPES: Dict[str, Type] = {cls.kind: cls for cls in (ResultRow, BenchRow, SpeedupRow)}

Row = Union[ResultRow, BenchRow, SpeedupRow]


def _coerce(cls: Type, obj: Dict[str, Any], line_no: int) -> Row:
    expected = {f.name: f.type for f in fields(cls)}
    body = {k: v for k, v in obj.items() if k != "kind"}
    missing = sorted(set(expected) - set(body))
    extra = sorted(set(body) - set(expected))
    if missing or extra:
        raise SchemaError(f"{cls.kind} row fields differ: missing={missing} unexpected={extra}", line=line_no)
    values = {}
    for name, value in body.items():
        kind = expected[name]
        if kind in (int, "int"):
            if isinstance(value, bool) or not isinstance(value, int):
                raise SchemaError(f"{name} must be an integer, got {value!r}", line=line_no)
        elif kind in (float, "float"):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise SchemaError(f"{name} must be a finite number, got {value!r}", line=line_no)
            value = float(value)
        elif not isinstance(value, str):
            raise SchemaError(f"{name} must be a string, got {value!r}", line=line_no)
        values[name] = value
    row = cls(**values)
    try:
        row.validate()
    except SchemaError as e:
        raise SchemaError(str(e), line=line_no) from None
    return row


def write_row(path: Union[str, Path], row: Row) -> None:
    row.validate()
    append_jsonl(path, row.to_dict())


def read_results(path: Union[str, Path]) -> List[Row]:
    """All rows of a results file, validated; unknown kinds are a schema error."""
    rows = []
    for line_no, obj in iter_jsonl(path):
        kind = obj.get("kind", "result")
        cls = ROW_TYPES.get(kind)
        if cls is None:
            raise SchemaError(f"unknown row kind {kind!r}", line=line_no)
        rows.append(_coerce(cls, obj, line_no))
    return rows


def mean_std(values: Sequence[float]) -> str:
    """Percent mean and population std, two decimals: 0.97 -> '97.00±0.00'."""
    arr = np.asarray(values, dtype=np.float64) * 100.0
    return f"{arr.mean():.2f}±{arr.std():.2f}"


REPORT_HEADER = ("model", "dataset", "mode", "AP", "AUC", "params", "edges/s")


def summarize(rows: Iterable[Row]) -> List[Tuple[str, ...]]:
    """One table row per (model, dataset, mode) over its seeds."""
    groups: Dict[Tuple[str, str, str], List[ResultRow]] = defaultdict(list)
    for row in rows:
        if isinstance(row, ResultRow):
            groups[(row.model, row.dataset, row.mode)].append(row)
    table = []
    for (model, dataset, mode), members in sorted(groups.items()):
        table.append((
            model, dataset, mode,
            mean_std([r.test_ap for r in members]),
            mean_std([r.test_auc for r in members]),
            str(members[0].param_count),
            f"{np.mean([r.edges_per_sec for r in members]):.0f}",
        ))
    return table


def format_report(rows: Iterable[Row], dataset: Optional[str] = None) -> str:
    table = [r for r in summarize(rows) if dataset is None or r[1] == dataset]
    lines = [" | ".join(REPORT_HEADER)]
    lines.extend(" | ".join(r) for r in table)
    return "\n".join(lines)
