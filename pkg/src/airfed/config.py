"""Experiment configuration, seeded random streams and round-record output."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import IO, Any

import numpy as np
import yaml

POLICIES = ("fedavg", "afl", "ca_afl", "greedy_topk")
DATASETS = ("idx_files", "synthetic")
EVAL_MODES = ("label_matched", "global")


class ConfigError(ValueError):
    """Raised for malformed config documents or constraint violations."""

    def __init__(self, key: str | None, message: str):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


@dataclass(frozen=True)
class SimConfig:
    n_clients: int = 100
    k_selected: int = 40
    rounds: int = 500
    bias_factor: float = 2.0
    policy: str = "ca_afl"
    lr_init: float = 0.1
    lr_decay: float = 0.998
    ascent_lr: float = 8e-3
    batch_size: int = 50
    ascent_batch_size: int = 50
    n_subcarriers: int = 64
    model_dim: int = 7850
    scaling_factor_watts: float = 0.5e-3
    symbol_period_s: float = 1e-3
    channel_floor: float = 0.05
    aircomp_noise_std: float = 0.0
    seed: int = 1
    dataset: str = "synthetic"
    shards_per_client: int = 1
    output_path: str = "rounds.csv"

    # dataset sources
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    synth_train: int = 60000
    synth_test: int = 10000
    synth_features: int = 784
    synth_classes: int = 10
    synth_separation: float = 1.0
    synth_hard_classes: int = 0
    synth_hard_noise: float = 1.0

    # evaluation
    eval_mode: str = "label_matched"
    eval_every: int = 1

    def __post_init__(self):
        _validate(self)

    def replace(self, **changes: Any) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def lr_at(self, t: int) -> float:
        return self.lr_init * self.lr_decay**t


_POSITIVE_INT = (
    "n_clients", "k_selected", "batch_size", "ascent_batch_size", "n_subcarriers",
    "model_dim", "shards_per_client", "synth_train", "synth_test", "synth_features",
    "synth_classes", "eval_every",
)
_POSITIVE_REAL = ("lr_init", "scaling_factor_watts", "symbol_period_s")
_NON_NEGATIVE_REAL = (
    "ascent_lr", "bias_factor", "channel_floor", "aircomp_noise_std", "synth_separation",
    "synth_hard_noise",
)


def _validate(cfg: SimConfig) -> None:
    for name in _POSITIVE_INT:
        if getattr(cfg, name) <= 0:
            raise ConfigError(name, "must be a positive integer")
    if cfg.rounds < 0:
        raise ConfigError("rounds", "must be non-negative")
    for name in _POSITIVE_REAL:
        if not getattr(cfg, name) > 0:
            raise ConfigError(name, "must be positive")
    for name in _NON_NEGATIVE_REAL:
        value = getattr(cfg, name)
        if not (value >= 0 and np.isfinite(value)):
            raise ConfigError(name, "must be a finite non-negative number")
    if not 0 < cfg.lr_decay <= 1:
        raise ConfigError("lr_decay", "must lie in (0, 1]")
    if cfg.k_selected > cfg.n_clients:
        raise ConfigError(
            "k_selected", f"K={cfg.k_selected} exceeds n_clients N={cfg.n_clients}"
        )
    if not 0 <= cfg.synth_hard_classes <= cfg.synth_classes:
        raise ConfigError("synth_hard_classes", "must lie in [0, synth_classes]")
    if cfg.channel_floor >= 1:
        raise ConfigError("channel_floor", "must be below 1")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed", "must fit in an unsigned 64-bit integer")
    for name, allowed in (("policy", POLICIES), ("dataset", DATASETS), ("eval_mode", EVAL_MODES)):
        if getattr(cfg, name) not in allowed:
            raise ConfigError(name, f"must be one of {', '.join(allowed)}")
    if cfg.dataset == "idx_files":
        for name in ("train_images", "train_labels", "test_images", "test_labels"):
            if not getattr(cfg, name):
                raise ConfigError(name, "required when dataset is idx_files")


def _coerce(name: str, kind: type, value: Any) -> Any:
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(name, f"expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            # YAML 1.1 reads "8e-3" as a string
            try:
                return float(value)
            except (TypeError, ValueError):
                raise ConfigError(name, f"expected a number, got {value!r}") from None
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(name, f"expected a string, got {value!r}")
    return value


_FIELD_TYPES = {f.name: {"int": int, "float": float, "str": str}[f.type] for f in fields(SimConfig)}


def config_from_mapping(data: dict[str, Any]) -> SimConfig:
    unknown = sorted(set(data) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    values = {k: _coerce(k, _FIELD_TYPES[k], v) for k, v in data.items()}
    return SimConfig(**values)


def parse_config(source: str) -> SimConfig:
    """Parse a YAML key-value document into a validated SimConfig.

    Absent keys take the SimConfig defaults; an empty document gives all defaults.
    """
    try:
        data = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        raise ConfigError(None, f"malformed configuration document: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(None, "configuration document must be a key-value mapping")
    return config_from_mapping({str(k): v for k, v in data.items()})


def load_config(path: str | Path) -> SimConfig:
    return parse_config(Path(path).read_text())


def seeded_rng(seed: int, stream_label: str) -> np.random.Generator:
    """Independent generator for one named consumer of randomness.

    The label is hashed into the seed sequence, so two labels never share a
    stream and one consumer's draws do not shift another's.
    """
    digest = hashlib.sha256(stream_label.encode("utf-8")).digest()
    label_words = np.frombuffer(digest, dtype="<u4").tolist()
    return np.random.default_rng(np.random.SeedSequence([int(seed), *label_words]))


@dataclass
class RoundRecord:
    round: int
    avg_accuracy: float
    worst_accuracy: float
    accuracy_std: float
    round_energy_j: float
    cumulative_energy_j: float
    selected_clients: list[int] = field(default_factory=list)
    ascent_clients: list[int] = field(default_factory=list)


RECORD_COLUMNS = tuple(f.name for f in fields(RoundRecord))


def _format_value(value: Any) -> str:
    if isinstance(value, list):
        return " ".join(str(int(v)) for v in value)
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


class RoundWriter:
    """Comma-delimited sink for RoundRecords; writes the header once per file.

    Client-id lists are space-separated inside their field.
    """

    def __init__(self, sink: IO[str]):
        self.sink = sink
        self._header_written = sink.tell() > 0 if sink.seekable() else False

    def write_header(self) -> None:
        if not self._header_written:
            self.sink.write(",".join(RECORD_COLUMNS) + "\n")
            self._header_written = True

    def write(self, record: RoundRecord) -> None:
        self.write_header()
        row = dataclasses.astuple(record)
        self.sink.write(",".join(_format_value(v) for v in row) + "\n")


def write_round_record(record: RoundRecord, sink: IO[str]) -> None:
    """Append one record to ``sink``, emitting the header if the sink is empty."""
    RoundWriter(sink).write(record)


def read_round_records(path: str | Path) -> list[RoundRecord]:
    lines = Path(path).read_text().splitlines()
    if not lines or tuple(lines[0].split(",")) != RECORD_COLUMNS:
        raise ValueError(f"{path}: missing or unexpected header")
    records = []
    for line in lines[1:]:
        parts = line.split(",")
        ids = [[int(v) for v in p.split()] for p in parts[6:8]]
        records.append(
            RoundRecord(int(parts[0]), *(float(p) for p in parts[1:6]), *ids)
        )
    return records
