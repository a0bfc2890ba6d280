"""
Experiment configuration and dataset manifests.

Configs and manifests are YAML documents; `TEMPOGRAPH_DATA_DIR` (default
./data) is the dataset root, with one directory per dataset holding a
manifest.yaml next to its CSV.
"""

import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml

from .errors import ConfigurationError, DatasetNotFoundError
from .types import DecoupledConfig, EvalMode, ModelKind

logger = logging.getLogger(__name__)

DATA_DIR_ENV = "TEMPOGRAPH_DATA_DIR"
MANIFEST_NAME = "manifest.yaml"


def data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def load_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        with path.open() as fh:
            content = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigurationError(f"invalid YAML in {path}: {e}") from e
    if content is None:
        return {}
    if not isinstance(content, dict):
        raise ConfigurationError(f"{path} must contain a mapping at the top level")
    return content


@dataclass
class DatasetManifest:
    """Where a dataset lives and how to read it."""
    name: str
    path: Path
    feature_dim: Optional[int] = None
    bipartite: bool = False
    has_header: bool = False
    node_features: Optional[Path] = None

    @classmethod
    def from_yaml(cls, manifest_path: Union[str, Path]) -> "DatasetManifest":
        manifest_path = Path(manifest_path)
        raw = load_yaml(manifest_path)
        if "path" not in raw:
            raise ConfigurationError(f"{manifest_path} has no 'path' key")
        base = manifest_path.parent
        node_features = raw.get("node_features")
        return cls(
            name=str(raw.get("name", base.name)),
            path=(base / raw["path"]).resolve(),
            feature_dim=raw.get("feature_dim"),
            bipartite=bool(raw.get("bipartite", False)),
            has_header=bool(raw.get("has_header", False)),
            node_features=(base / node_features).resolve() if node_features else None,
        )


def _sniff_header(csv_path: Path) -> bool:
    with csv_path.open() as fh:
        first = fh.readline().split(",")[0].strip()
    try:
        float(first)
        return False
    except ValueError:
        return True


def resolve_manifest(name_or_path: Union[str, Path]) -> DatasetManifest:
    """Accept a dataset name, a manifest path, a dataset directory or a CSV path."""
    candidate = Path(name_or_path)
    root = data_dir()
    options = [candidate, root / str(name_or_path)]
    for option in options:
        if option.is_file() and option.suffix in (".yaml", ".yml"):
            manifest = DatasetManifest.from_yaml(option)
        elif option.is_dir() and (option / MANIFEST_NAME).is_file():
            manifest = DatasetManifest.from_yaml(option / MANIFEST_NAME)
        elif option.is_file() and option.suffix == ".csv":
            manifest = DatasetManifest(name=option.stem, path=option.resolve(),
                                       has_header=_sniff_header(option))
        else:
            continue
        if not manifest.path.is_file():
            raise DatasetNotFoundError(f"manifest {manifest.name} points at missing file {manifest.path}")
        return manifest
    csv_guess = root / f"{name_or_path}.csv"
    if csv_guess.is_file():
        return DatasetManifest(name=str(name_or_path), path=csv_guess.resolve(),
                               has_header=_sniff_header(csv_guess))
    raise DatasetNotFoundError(
        f"dataset {name_or_path!r} not found (looked in {root.resolve()}; set {DATA_DIR_ENV})"
    )


def parse_model_name(model: str) -> Tuple[ModelKind, Optional[str]]:
    """'edgebank:th' -> (EDGEBANK, 'th'); 'ldtgn' -> (LDTGN, None)."""
    family, _, variant = model.partition(":")
    try:
        kind = ModelKind(family.strip().lower())
    except ValueError:
        raise ConfigurationError(f"unknown model family {family!r}") from None
    variant = variant.strip().lower() or None
    if kind in (ModelKind.EDGEBANK, ModelKind.LINEAR) and variant is None:
        raise ConfigurationError(f"model {model!r} needs a variant, e.g. {family}:"
                                 f"{'th' if kind is ModelKind.EDGEBANK else 'edge'}")
    return kind, variant


@dataclass
class ExperimentConfig:
    """One experiment: which model on which dataset, how it is batched and seeded."""
    dataset: str
    model: str = "ldtgn"
    model_param: Optional[float] = None
    decoupled: Optional[DecoupledConfig] = None
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    mode: EvalMode = EvalMode.TRANSDUCTIVE
    output: Path = Path("results/results.jsonl")
    checkpoint_dir: Path = Path("checkpoints")
    epochs: int = 100
    patience: int = 20
    lr: float = 1e-4
    new_node_fraction: float = 0.1
    model_options: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if isinstance(self.mode, str):
            try:
                self.mode = EvalMode(self.mode)
            except ValueError:
                raise ConfigurationError(f"unknown mode {self.mode!r}") from None
        self.output = Path(self.output)
        self.checkpoint_dir = Path(self.checkpoint_dir)
        kind, _ = parse_model_name(self.model)
        if self.decoupled is None:
            self.decoupled = DecoupledConfig.for_model(kind)
        elif isinstance(self.decoupled, dict):
            self.decoupled = DecoupledConfig.for_model(kind, **self.decoupled)
        if self.epochs < 1 or self.patience < 1:
            raise ConfigurationError("epochs and patience must be >= 1")

    @property
    def model_kind(self) -> ModelKind:
        return parse_model_name(self.model)[0]

    @property
    def model_variant(self) -> Optional[str]:
        return parse_model_name(self.model)[1]

    @classmethod
    def from_mapping(cls, raw: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {unknown}")
        if "dataset" not in raw:
            raise ConfigurationError("config needs a 'dataset' key")
        return cls(**raw)

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "ExperimentConfig":
        return cls.from_mapping(load_yaml(path))

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Apply CLI flags; None means 'not given'. Decoupled keys are accepted flat."""
        decoupled_keys = {f.name for f in fields(DecoupledConfig)}
        top = {k: v for k, v in overrides.items() if v is not None and k not in decoupled_keys}
        batching = {k: v for k, v in overrides.items() if v is not None and k in decoupled_keys}
        updated = replace(self, **top) if top else self
        if "model" in top and "memory_batch_size" not in batching:
            updated.decoupled = DecoupledConfig.for_model(
                updated.model_kind,
                prediction_batch_size=self.decoupled.prediction_batch_size,
                hop=self.decoupled.hop,
                k_recent=self.decoupled.k_recent,
            )
        if batching:
            current = {f.name: getattr(updated.decoupled, f.name) for f in fields(DecoupledConfig)}
            current.update(batching)
            updated.decoupled = DecoupledConfig(**current)
        return updated
