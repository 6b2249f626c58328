"""Pipeline configuration: one YAML document with a section per stage.

All per-stage RNG seeds are derived from the single ``master_seed`` via the
documented SHA-256 fan-out (see :mod:`depwalk.seeds`); the config file does
not expose per-stage seeds.  Validation collects every violated constraint
before raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .embedding import EmbeddingConfig
from .errors import ConfigError
from .flows import FlowFormat, SplitMode
from .forest import ForestConfig
from .graph import SamplerConfig
from .oracle import OracleConfig
from .seeds import derive_seed
from .synth import ScenarioConfig
from .walks import WalkConfig


@dataclass(frozen=True)
class IngestSettings:
    format: FlowFormat = FlowFormat.CSV
    biflows: bool = False
    split_mode: SplitMode = SplitMode.SAME_TIMESTAMPS


@dataclass(frozen=True)
class ContextSettings:
    size: int = 4
    include_trailing: bool = False


@dataclass(frozen=True)
class EvalSettings:
    n_splits: int = 15
    fractions: tuple[float, ...] = (0.25, 0.5)
    unordered_pairs: bool = False
    threshold: float = 0.5


@dataclass(frozen=True)
class PipelineConfig:
    master_seed: int = 0
    workdir: str = "out"
    ingest: IngestSettings = field(default_factory=IngestSettings)
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(
        n_internal=100, m_external=20, k_edges=20000, internal_prefixes=("10.0.0.0/16",)))
    walks: WalkConfig = field(default_factory=WalkConfig)
    context: ContextSettings = field(default_factory=ContextSettings)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    evaluation: EvalSettings = field(default_factory=EvalSettings)
    synth: ScenarioConfig = field(default_factory=ScenarioConfig)

    def seed_for(self, stage: str) -> int:
        return derive_seed(self.master_seed, stage)


_SECTIONS = {
    "ingest": IngestSettings,
    "sampler": SamplerConfig,
    "walks": WalkConfig,
    "context": ContextSettings,
    "embedding": EmbeddingConfig,
    "forest": ForestConfig,
    "oracle": OracleConfig,
    "evaluation": EvalSettings,
    "synth": ScenarioConfig,
}

_COERCE = {
    "format": FlowFormat,
    "split_mode": SplitMode,
    "internal_prefixes": tuple,
    "fractions": tuple,
    "latency_ms": tuple,
}


def _build_section(name: str, cls, data: dict, defaults, problems: list[str]):
    allowed = {f.name for f in fields(cls)} - {"rng_seed"}
    unknown = set(data) - allowed
    for key in sorted(unknown):
        problems.append(f"{name}: unknown key {key!r}")
    kwargs = {}
    for key in sorted(set(data) & allowed):
        value = data[key]
        if key in _COERCE:
            try:
                value = _COERCE[key](value)
            except (TypeError, ValueError) as exc:
                problems.append(f"{name}.{key}: {exc}")
                continue
        kwargs[key] = value
    try:
        base = defaults if defaults is not None else cls()
        return replace(base, **kwargs) if kwargs else base
    except (ConfigError, ValueError, TypeError) as exc:
        problems.append(f"{name}: {exc}")
        return defaults if defaults is not None else None


def load_config(path=None, master_seed: int | None = None,
                workdir: str | None = None) -> PipelineConfig:
    """Load and validate the pipeline config; missing sections take their
    defaults.  ``master_seed`` / ``workdir`` arguments override file values.
    """
    raw: dict = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")

    problems: list[str] = []
    known = set(_SECTIONS) | {"master_seed", "workdir"}
    for key in sorted(set(raw) - known):
        problems.append(f"unknown section {key!r}")

    seed = master_seed if master_seed is not None else int(raw.get("master_seed", 0))
    directory = workdir if workdir is not None else str(raw.get("workdir", "out"))

    defaults = PipelineConfig()
    sections = {}
    for name, cls in _SECTIONS.items():
        data = raw.get(name, {})
        if data is None:
            data = {}
        if not isinstance(data, dict):
            problems.append(f"{name}: section must be a mapping")
            data = {}
        sections[name] = _build_section(name, cls, data, getattr(defaults, name), problems)

    cfg = PipelineConfig(master_seed=seed, workdir=directory, **sections)
    cfg = replace(
        cfg,
        sampler=replace(cfg.sampler, rng_seed=cfg.seed_for("sampler")),
        walks=replace(cfg.walks, rng_seed=cfg.seed_for("walks")),
        embedding=replace(cfg.embedding, rng_seed=cfg.seed_for("embedding")),
        forest=replace(cfg.forest, rng_seed=cfg.seed_for("forest")),
        synth=replace(cfg.synth, rng_seed=cfg.seed_for("synth")),
    )

    # cross-field constraints
    if cfg.context.size < 2:
        problems.append("context.size must be >= 2")
    if cfg.context.size > cfg.walks.walk_length:
        problems.append(
            f"context.size ({cfg.context.size}) must not exceed walks.walk_length "
            f"({cfg.walks.walk_length})")
    if cfg.forest.features_per_split is not None and cfg.forest.features_per_split > cfg.embedding.dims:
        problems.append(
            f"forest.features_per_split ({cfg.forest.features_per_split}) must not exceed "
            f"embedding.dims ({cfg.embedding.dims})")
    for fraction in cfg.evaluation.fractions:
        if not 0.0 < fraction < 1.0:
            problems.append(f"evaluation.fractions entry {fraction} must be in (0, 1)")
    if cfg.evaluation.n_splits < 1:
        problems.append("evaluation.n_splits must be >= 1")
    if not 0.0 <= cfg.evaluation.threshold <= 1.0:
        problems.append("evaluation.threshold must be in [0, 1]")

    if problems:
        raise ConfigError("\n".join(problems))
    return cfg


def workdir_path(cfg: PipelineConfig) -> Path:
    return Path(cfg.workdir)
