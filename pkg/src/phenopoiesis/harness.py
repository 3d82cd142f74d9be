"""Replicated, seeded experiment runs and their on-disk artifacts.

A run directory holds one subdirectory per experiment::

    <output_dir>/<experiment name>/
        generations.csv    one GenerationRecord per model x task x replicate x generation
        summary.json       cross-replicate statistics
        epigenomes.json    final best-organism libraries (PHENO)
        traces.csv         per-trial lifetime log, only with ``traces: true``
        config.yaml        the resolved configuration

CSV files start with ``#`` provenance lines carrying the package version and
the resolved config as JSON.
"""
from __future__ import annotations

import csv
import io
import json
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import yaml

from . import __version__
from .config import ExperimentConfig, model_label
from .environments import Mode, Schedule
from .evolution import best_index, initial_population, step_generation
from .grids import TargetShape, load_shapes, make_target
from .metrics import CSV_COLUMNS, GenerationRecord, all_tasks_probe, epigenome_dynamics, format_float
from .models import EvaluationContext, Model

MASK64 = (1 << 64) - 1
TRACE_COLUMNS = ("replicate_id", "model", "generation", "organism_id", "trial", "action", "fitness", "recorded")


class InvariantViolation(RuntimeError):
    """A run broke one of the model's accounting or ordering guarantees."""


# -- seeds -------------------------------------------------------------------


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(*parts) -> int:
    """Fold ints and strings through splitmix64; strings enter via CRC32."""
    h = 0
    for p in parts:
        v = zlib.crc32(str(p).encode()) if not isinstance(p, int) else p
        h = splitmix64(h ^ (v & MASK64))
    return h


def replicate_seed(base_seed: int, index: int, model: Model | str, task: str = "") -> int:
    return derive_seed(base_seed, index, model_label(Model(model)), task)


def schedule_seed(base_seed: int, index: int) -> int:
    # shared by every model so they all face the same switching order
    return derive_seed(base_seed, index, "schedule")


# -- one replicate -----------------------------------------------------------


@dataclass(frozen=True)
class ReplicateSpec:
    model: Model
    task: str  # the shape for stationary runs, '' otherwise
    base_seed: int
    index: int

    @property
    def replicate_id(self) -> str:
        return f"{self.base_seed}-{self.index}"


@dataclass
class ReplicateResult:
    spec: ReplicateSpec
    records: list[GenerationRecord]
    epigenome: dict | None = None
    traces: list[list[str]] = field(default_factory=list)


def shape_registry(cfg: ExperimentConfig) -> dict[str, TargetShape]:
    if cfg.shape_file:
        shapes = load_shapes(cfg.shape_file)
        missing = [s for s in cfg.shapes if s not in shapes]
        if missing:
            from .config import ConfigError

            raise ConfigError({"shapes": f"not defined in {cfg.shape_file}: {missing}"})
        return {s: shapes[s] for s in cfg.shapes}
    return {s: make_target(s) for s in cfg.shapes}


def build_schedule(cfg: ExperimentConfig, spec: ReplicateSpec) -> Schedule:
    if cfg.mode is Mode.STATIONARY:
        return Schedule.stationary(spec.task, cfg.generations)
    if cfg.mode is Mode.SWITCHING:
        return Schedule.switching(cfg.interval, cfg.generations, schedule_seed(spec.base_seed, spec.index), cfg.shapes)
    return Schedule.multitask(cfg.generations, cfg.shapes)


def expected_evals(model: Model, cfg: ExperimentConfig, n_tasks: int, generation: int) -> int:
    n = cfg.population_size
    if model is Model.GENE:
        return n * n_tasks
    if model is Model.GENE_NSGA:
        return (2 * n if generation == 0 else n) * n_tasks
    if model is Model.BALDWIN:
        return n * cfg.trials * n_tasks
    return n * cfg.trials


def run_replicate(cfg: ExperimentConfig, spec: ReplicateSpec, registry: dict[str, TargetShape] | None = None) -> ReplicateResult:
    registry = registry or shape_registry(cfg)
    engine = cfg.engine()
    model = spec.model
    seed = replicate_seed(spec.base_seed, spec.index, model, spec.task)
    rng = np.random.default_rng(seed)
    schedule = build_schedule(cfg, spec)
    segment_ends = {stop - 1 for _, stop, _ in schedule.segments()}
    probe_targets = list(registry.values())
    pheno_kw = dict(reinforcement=cfg.reinforcement, max_placements=cfg.max_placements, temperature=cfg.temperature,
                    refinement=cfg.refinement)

    pop = initial_population(model, engine, rng)
    records, traces = [], []
    best = None
    for g in range(cfg.generations):
        tasks = schedule.tasks_at(g)
        env = EvaluationContext([registry[t] for t in tasks], generation=g)
        step = step_generation(pop, env, engine, rng)
        dev = step.developed
        if step.evals != expected_evals(model, cfg, len(tasks), g):
            raise InvariantViolation(f"{model_label(model)} generation {g} used {step.evals} evaluations")
        fit = dev.fitnesses
        best = dev.organisms[best_index(dev)]
        if fit.max() < fit.mean() - 1e-9:
            raise InvariantViolation("best fitness below mean fitness")

        all_tasks, probe_evals = None, 0
        if g in segment_ends or cfg.probe_every_generation:
            # own stream, so probing never shifts the selection rng
            probe_rng = np.random.default_rng(derive_seed(seed, "probe", g))
            probe = all_tasks_probe(best, model, probe_targets, probe_rng, trials=cfg.trials,
                                    explore_prob=cfg.explore_prob, flips=cfg.flip_count, **pheno_kw)
            all_tasks, probe_evals = probe.mean, probe.evals

        dyn = epigenome_dynamics(dev.organisms, step.traces, g)
        records.append(GenerationRecord(
            generation=g,
            replicate_id=spec.replicate_id,
            model=model_label(model),
            current_task="+".join(tasks),
            best_fitness=float(fit.max()),
            mean_fitness=float(fit.mean()),
            all_tasks_fitness=all_tasks,
            per_task_fitness=dict(best.task_fitness) if best.task_fitness else None,
            epigenome_size_mean=dyn.library_size_mean,
            patterns_reused_this_gen=dyn.patterns_reused,
            patterns_new_this_gen=dyn.patterns_new,
            inherited_pattern_fraction=dyn.inherited_fraction,
            eval_budget_used=step.evals,
            measurement_evals_used=probe_evals,
        ))
        if cfg.traces:
            traces.extend(_trace_rows(spec, model, g, step.traces))
        pop = step.population

    epi = best.epigenome.to_dict() if model is Model.PHENO else None
    return ReplicateResult(spec, records, epi, traces)


def _trace_rows(spec, model, generation, traces) -> Iterable[list[str]]:
    for oid, tr in enumerate(traces):
        for trial, (f, rec) in enumerate(zip(tr.fitness, tr.recorded)):
            action = tr.actions[trial] if trial < len(tr.actions) else "develop"
            yield [spec.replicate_id, model_label(model), str(generation), str(oid), str(trial),
                   action, format_float(f), str(rec).lower()]


# -- experiments -------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    replicates: list[ReplicateResult]
    duration: float
    path: Path | None = None


def replicate_specs(cfg: ExperimentConfig) -> list[ReplicateSpec]:
    tasks = cfg.shapes if cfg.mode is Mode.STATIONARY else [""]
    return [
        ReplicateSpec(model, task, base, i)
        for model in cfg.model_list
        for task in tasks
        for base in cfg.base_seeds
        for i in range(cfg.replicates_per_seed)
    ]


def _run_one(args):
    cfg, spec = args
    return run_replicate(cfg, spec)


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Run every model x task x replicate of ``cfg`` and persist the artifacts."""
    cfg.validate()
    registry = shape_registry(cfg)
    specs = replicate_specs(cfg)
    start = time.perf_counter()
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            # map keeps submission order, so outputs do not depend on scheduling
            results = list(pool.map(_run_one, [(cfg, s) for s in specs]))
    else:
        results = [run_replicate(cfg, s, registry) for s in specs]
    res = ExperimentResult(cfg, results, time.perf_counter() - start)
    if write:
        res.path = write_experiment(res)
    return res


def provenance(cfg: ExperimentConfig) -> list[str]:
    return [f"# phenopoiesis {__version__}", f"# config: {cfg.to_json()}"]


def generations_csv(res: ExperimentResult) -> str:
    buf = io.StringIO()
    for line in provenance(res.config):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in res.replicates:
        w.writerows(rec.to_row() for rec in r.records)
    return buf.getvalue()


def traces_csv(res: ExperimentResult) -> str:
    buf = io.StringIO()
    for line in provenance(res.config):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in res.replicates:
        w.writerows(r.traces)
    return buf.getvalue()


def write_experiment(res: ExperimentResult) -> Path:
    from .reporting import read_generations, summarize

    cfg = res.config
    out = Path(cfg.output_dir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    (out / "generations.csv").write_text(generations_csv(res))
    (out / "config.yaml").write_text(yaml.safe_dump(cfg.provenance_dict(), sort_keys=False, default_flow_style=None))
    if cfg.traces:
        (out / "traces.csv").write_text(traces_csv(res))
    epis = {
        f"{model_label(r.spec.model)}/{r.spec.task or 'run'}/{r.spec.replicate_id}": r.epigenome
        for r in res.replicates
        if r.epigenome is not None
    }
    meta = {"version": __version__, "config": cfg.provenance_dict()}
    (out / "epigenomes.json").write_text(json.dumps({**meta, "epigenomes": epis}, indent=1))
    summary = summarize(read_generations(out / "generations.csv"))
    summary.update(meta, duration_seconds=round(res.duration, 3))
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return out
