"""Experiment configuration: a flat key space, YAML files and named presets."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .environments import Mode
from .evolution import EngineConfig
from .grids import MULTITASK_SHAPES, SHAPE_IDS
from .models import REFINEMENTS, Model

OUTPUT_DIR_ENV = "PHENOPOIESIS_OUTPUT_DIR"
BASE_SEEDS = (42, 123, 456)
# settings that change how a run executes but never what it produces
EXECUTION_KEYS = ("workers",)


class ConfigError(ValueError):
    """Invalid configuration; ``fields`` names every offending key."""

    def __init__(self, problems: dict[str, str]):
        self.fields = sorted(problems)
        self.problems = problems
        super().__init__("invalid config: " + "; ".join(f"{k}: {v}" for k, v in sorted(problems.items())))


def parse_model(name: str) -> Model:
    try:
        return Model(str(name).upper().replace("-", "_"))
    except ValueError:
        raise ValueError(f"unknown model {name!r}") from None


def model_label(m: Model) -> str:
    return Model(m).value.replace("_", "-")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    models: list[str] = field(default_factory=lambda: ["GENE", "BALDWIN", "PHENO"])
    schedule: str = "stationary"
    shapes: list[str] = field(default_factory=lambda: list(SHAPE_IDS))
    interval: int = 20
    generations: int = 100
    population_size: int = 50
    trials: int = 20
    mutation_rate: float = 0.01
    explore_prob: float = 0.4
    epigenome_capacity: int = 50
    tournament_k: int = 3
    elitism: int = 1
    flip_count: int = 2
    reinforcement: float = 0.1
    max_placements: int = 4
    temperature: float = 1.0
    refinement: str = "extended"
    base_seeds: list[int] = field(default_factory=lambda: list(BASE_SEEDS))
    replicates_per_seed: int = 10
    recovery_threshold: float = 80.0
    probe_every_generation: bool = False
    traces: bool = False
    workers: int = 1
    shape_file: str | None = None
    output_dir: str = "runs"

    # -- derived ---------------------------------------------------------------

    @property
    def mode(self) -> Mode:
        return Mode(self.schedule)

    @property
    def model_list(self) -> list[Model]:
        return [parse_model(m) for m in self.models]

    @property
    def n_replicates(self) -> int:
        return len(self.base_seeds) * self.replicates_per_seed

    def engine(self) -> EngineConfig:
        names = {f.name for f in dataclasses.fields(EngineConfig)}
        return EngineConfig(**{k: v for k, v in self.to_dict().items() if k in names})

    # -- validation and serialisation -----------------------------------------

    def problems(self) -> dict[str, str]:
        p: dict[str, str] = {}
        for key in ("mutation_rate", "explore_prob"):
            v = getattr(self, key)
            if not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
                p[key] = "must be a probability in [0, 1]"
        for key, lo in (("population_size", 2), ("replicates_per_seed", 1), ("generations", 1),
                        ("trials", 1), ("epigenome_capacity", 1), ("tournament_k", 1),
                        ("interval", 1), ("max_placements", 1), ("workers", 1), ("flip_count", 1)):
            v = getattr(self, key)
            if not isinstance(v, int) or isinstance(v, bool) or v < lo:
                p[key] = f"must be an integer >= {lo}"
        if self.flip_count > 100 and "flip_count" not in p:
            p["flip_count"] = "cannot exceed the 100 grid cells"
        if self.elitism not in (0, 1):
            p["elitism"] = "must be 0 or 1"
        if not 0.0 <= self.reinforcement <= 1.0:
            p["reinforcement"] = "must be in [0, 1]"
        if not 0.0 < self.recovery_threshold <= 100.0:
            p["recovery_threshold"] = "must be in (0, 100]"
        if self.temperature < 0:
            p["temperature"] = "must be >= 0"
        if self.refinement not in REFINEMENTS:
            p["refinement"] = f"must be one of {list(REFINEMENTS)}"
        if not self.base_seeds or not all(isinstance(s, int) and s >= 0 for s in self.base_seeds):
            p["base_seeds"] = "must be a non-empty list of non-negative integers"
        try:
            models = self.model_list
            if not models:
                p["models"] = "at least one model is required"
        except ValueError as e:
            p["models"] = str(e)
            models = []
        try:
            mode = self.mode
        except ValueError:
            p["schedule"] = f"must be one of {[m.value for m in Mode]}"
            mode = None
        if not self.shapes or len(set(self.shapes)) != len(self.shapes):
            p["shapes"] = "must be a non-empty list without duplicates"
        elif mode is Mode.SWITCHING and len(self.shapes) < 2:
            p["shapes"] = "switching needs at least two shapes"
        elif mode is Mode.MULTITASK and len(self.shapes) < 2:
            p["shapes"] = "multi-task needs at least two shapes"
        elif self.shape_file is None and not set(self.shapes) <= set(SHAPE_IDS):
            p["shapes"] = f"unknown shape; expected a subset of {list(SHAPE_IDS)} or a shape_file"
        if Model.GENE_NSGA in models and mode is not Mode.MULTITASK:
            p.setdefault("models", "GENE-NSGA needs the multitask schedule")
        return p

    def validate(self) -> "ExperimentConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def provenance_dict(self) -> dict[str, Any]:
        """Everything that determines the results, i.e. all keys but the execution ones."""
        return {k: v for k, v in self.to_dict().items() if k not in EXECUTION_KEYS}

    def to_json(self) -> str:
        return json.dumps(self.provenance_dict(), sort_keys=True, separators=(",", ":"))

    def to_yaml(self) -> str:
        import yaml

        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError({k: "unknown key" for k in unknown})
        return cls(**data)

    def replace(self, **changes) -> "ExperimentConfig":
        bad = sorted(set(changes) - {f.name for f in dataclasses.fields(self)})
        if bad:
            raise ConfigError({k: "unknown key" for k in bad})
        return dataclasses.replace(self, **changes)


def load_config(path: str | Path) -> ExperimentConfig:
    import yaml

    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError({"<file>": "config must be a mapping of keys to values"})
    return ExperimentConfig.from_dict(data)


# -- presets -----------------------------------------------------------------

_EXPERIMENTS: dict[str, dict[str, Any]] = {
    "single-task": dict(schedule="stationary", generations=100),
    "switching-20": dict(schedule="switching", interval=20, generations=500),
    "switching-50": dict(schedule="switching", interval=50, generations=500),
    "switching-100": dict(schedule="switching", interval=100, generations=500),
    "multitask": dict(
        schedule="multitask",
        generations=300,
        shapes=list(MULTITASK_SHAPES),
        models=["GENE", "BALDWIN", "PHENO", "GENE-NSGA"],
    ),
}

PRESETS: dict[str, tuple[str, ...]] = {
    "table2": ("single-task",),
    "table3": ("switching-20",),
    "table4": ("switching-20",),
    "table5": ("switching-20", "switching-50", "switching-100"),
    "table6": ("multitask",),
    "all": tuple(_EXPERIMENTS),
}
PRESETS.update({name: (name,) for name in _EXPERIMENTS})


def preset(name: str, base: ExperimentConfig | None = None) -> list[ExperimentConfig]:
    """Configs for a named preset; ``base`` supplies everything the preset does not pin."""
    if name not in PRESETS:
        raise ConfigError({"preset": f"unknown preset {name!r}; choose from {sorted(PRESETS)}"})
    start = (base or ExperimentConfig()).to_dict()
    return [ExperimentConfig.from_dict({**start, **_EXPERIMENTS[e], "name": e}) for e in PRESETS[name]]
