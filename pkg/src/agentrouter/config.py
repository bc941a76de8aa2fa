"""Run configuration: a plain ``key = value`` file plus command-line overrides."""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .dataio import SplitSpec
from .evaluate import TRANSFER_KS
from .train import TrainConfig


class ConfigError(ValueError):
    """Bad configuration: unknown key, unparsable value or inconsistent settings."""


_PATH_KEYS = frozenset({"train_file", "val_file", "cache", "graphs_dir", "agent_entity_map", "embeddings",
                        "transcripts_dir"})


@dataclass
class RunConfig:
    # data
    dataset: str = "dataset"
    train_file: Optional[str] = None
    val_file: Optional[str] = None
    cache: Optional[str] = None
    graphs_dir: Optional[str] = None
    agent_entity_map: Optional[str] = None
    train_range: str = "0:500"
    val_range: str = "0:100"
    test_range: str = "100:200"
    # embedder
    d_text: int = 256
    embed_seed: int = 0
    embeddings: Optional[str] = None
    # training
    lr: float = 1e-4
    weight_decay: float = 1e-4
    clip_norm: float = 1.0
    tau: float = 0.25
    eps: float = 1e-3
    epochs: int = 50
    hidden: int = 256
    layers: int = 2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seeds: tuple = (0, 1, 2)
    # routing and reporting
    k: int = 24
    k_list: tuple = TRANSFER_KS
    trust_cache_f1: bool = False
    drop_mode: str = "relative"
    # online harness
    endpoint: str = ""
    models: str = ""
    judge_model: str = ""
    api_key_env: str = "AGENTROUTER_API_KEY"
    temperature: float = 0.2
    max_tokens: int = 3000
    timeout: float = 60.0
    max_attempts: int = 5
    backoff_base: float = 1.0
    concurrency: int = 4
    sc_samples: int = 5
    max_revisions: int = 2
    judge_top: int = 5
    transcripts_dir: Optional[str] = None

    def __post_init__(self):
        if self.drop_mode not in ("relative", "absolute"):
            raise ConfigError(f"drop_mode must be relative or absolute, not {self.drop_mode!r}")
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")
        if any(k < 1 for k in self.k_list) or self.k < 1:
            raise ConfigError("every k must be at least 1")
        try:
            self.split_spec()
            self.train_config(self.seeds[0])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def split_spec(self) -> SplitSpec:
        return SplitSpec.parse(self.train_range, self.val_range, self.test_range)

    def train_config(self, seed: int) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        values = {n: getattr(self, n) for n in names if n != "seed"}
        return TrainConfig(seed=seed, **values)

    def model_map(self) -> dict[str, str]:
        """``models = backbone=model,...`` as a dict."""
        out = {}
        for item in filter(None, (s.strip() for s in self.models.split(","))):
            backbone, sep, model = item.partition("=")
            if not sep:
                raise ConfigError(f"models entry {item!r} is not backbone=model")
            out[backbone.strip()] = model.strip()
        return out

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = str(v).lower()
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _convert(name: str, hint, raw: str):
    raw = raw.strip()
    try:
        if hint is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        if hint is tuple:
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if hint == Optional[str]:
            return raw or None
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None


def _hints():
    return typing.get_type_hints(RunConfig)


def parse_pairs(lines, base_dir=None, source: str = "config") -> dict:
    """``key = value`` lines to typed values; unknown keys are rejected."""
    hints = _hints()
    out = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source} line {lineno}: expected key = value")
        if key not in hints:
            raise ConfigError(f"{source} line {lineno}: unknown key {key!r}")
        val = _convert(key, hints[key], value)
        if key in _PATH_KEYS and val is not None and base_dir is not None:
            p = Path(val)
            val = str(p if p.is_absolute() else (Path(base_dir) / p).resolve())
        out[key] = val
    return out


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the file (relative paths resolve against its folder), then overrides."""
    values = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        values.update(parse_pairs(path.read_text(encoding="utf-8").splitlines(), path.parent, str(path)))
    values.update(parse_pairs(overrides, Path.cwd(), "override"))
    return RunConfig(**values)


def replace(config: RunConfig, **changes) -> RunConfig:
    return dataclasses.replace(config, **changes)
