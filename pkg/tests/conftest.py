"""Shared fixtures: synthetic streams, tiny model configs and temporary CSV datasets."""

import os
from pathlib import Path
from typing import Callable, List

import numpy as np
import pytest

from tempograph.dataset import build_query_stream, random_stream
from tempograph.ldtgn import LdtgnConfig
from tempograph.types import Event, EventKind


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def small_stream(rng) -> List[Event]:
    return random_stream(300, 15, rng)


@pytest.fixture
def query_stream(small_stream) -> List[Event]:
    """small_stream with a positive and a negative query before every update."""
    return build_query_stream(small_stream, np.arange(15), np.random.default_rng(7))


@pytest.fixture
def tiny_ldtgn_config() -> LdtgnConfig:
    return LdtgnConfig(tde_dim=4, embed_dim=4, merge_hidden=5, merge_reductions=(3, 2), state_dim=4)


def add(src: int, dst: int, t: float, seq: int, features=None) -> Event:
    if features is None:
        return Event(EventKind.ADD_EDGE, src, dst, float(t), seq)
    return Event(EventKind.ADD_EDGE, src, dst, float(t), seq, np.asarray(features, dtype=np.float64))


def query(src: int, dst: int, t: float, seq: int, label: int = 1) -> Event:
    return Event(EventKind.PREDICT_EDGE, src, dst, float(t), seq, label=label)


@pytest.fixture
def write_csv(tmp_path) -> Callable[..., Path]:
    def _write(rows, name: str = "data.csv", header: str = None) -> Path:
        path = tmp_path / name
        lines = [header] if header else []
        lines += [",".join(str(v) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n")
        return path
    return _write


@pytest.fixture
def synthetic_csv(write_csv, rng) -> Path:
    """A 400-row recurring-pairs dataset with two edge features."""
    rows = []
    t = 0.0
    pairs = [(int(a), int(b)) for a, b in rng.integers(0, 30, size=(40, 2)) if a != b]
    for n in range(400):
        t += float(rng.exponential(5.0))
        src, dst = pairs[int(rng.integers(len(pairs)))] if rng.random() < 0.8 else (
            int(rng.integers(30)), int(rng.integers(30, 40)))
        rows.append((src, dst, round(t, 3), 0, round(float(rng.normal()), 4), round(float(rng.normal()), 4)))
    return write_csv(rows, name="synthetic.csv")


def real_dataset_dir(name: str) -> Path:
    """Directory of a real dataset under TEMPOGRAPH_DATA_DIR, or skip."""
    root = os.environ.get("TEMPOGRAPH_DATA_DIR")
    if not root:
        pytest.skip("TEMPOGRAPH_DATA_DIR not set")
    path = Path(root) / name
    if not path.exists() and not (Path(root) / f"{name}.csv").exists():
        pytest.skip(f"dataset {name} not available under {root}")
    return path
