"""Measurement suite: forgetting gap, recovery time, task balance, library dynamics."""
from __future__ import annotations

import dataclasses
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grids import TargetShape
from .models import EvaluationContext, LifetimeTrace, Model, Organism, develop_baldwin, develop_pheno
from .heredity import decode_direct

RECOVERY_THRESHOLD = 80.0
Z_95 = 1.96


def _check_percent(name: str, x: float):
    if not 0.0 <= x <= 100.0:
        raise ValueError(f"{name} must be in [0, 100], got {x}")


def forgetting_gap(current_task_fitness: float, all_tasks_fitness: float) -> float:
    _check_percent("current_task_fitness", current_task_fitness)
    _check_percent("all_tasks_fitness", all_tasks_fitness)
    return float(current_task_fitness) - float(all_tasks_fitness)


@dataclass(frozen=True)
class Recovery:
    generations: int
    censored: bool = False

    def __int__(self):
        return self.generations


def recovery_time(fitness_series: Sequence[float], threshold: float = RECOVERY_THRESHOLD,
                  segment_length: int | None = None) -> Recovery:
    """Generations after a switch until best fitness first reaches ``threshold``.

    The first post-switch generation counts as 1.  A segment that never gets
    there is censored at its length.
    """
    series = np.asarray(fitness_series, dtype=float)
    if series.size == 0:
        raise ValueError("empty fitness series")
    if not 0.0 < threshold <= 100.0:
        raise ValueError("threshold must be in (0, 100]")
    if segment_length is None:
        segment_length = len(series)
    if len(series) != segment_length:
        raise ValueError(f"series has {len(series)} generations, segment has {segment_length}")
    hits = np.flatnonzero(series >= threshold)
    if hits.size == 0:
        return Recovery(segment_length, censored=True)
    return Recovery(int(hits[0]) + 1)


def task_balance(per_task_means: Sequence[float]) -> float:
    """Population standard deviation across tasks (lower is more even)."""
    x = np.asarray(per_task_means, dtype=float)
    if x.size < 2:
        raise ValueError("task balance needs at least two tasks")
    return float(np.sqrt(np.mean((x - x.mean()) ** 2)))


@dataclass(frozen=True)
class Stats:
    mean: float
    sd: float
    n: int

    @property
    def half_width(self) -> float:
        return Z_95 * self.sd / math.sqrt(self.n) if self.n else float("nan")

    @property
    def ci(self) -> tuple[float, float]:
        return self.mean - self.half_width, self.mean + self.half_width

    def to_dict(self) -> dict:
        lo, hi = self.ci
        return {"mean": self.mean, "sd": self.sd, "n": self.n, "ci95": [lo, hi]}


def describe(values: Sequence[float]) -> Stats:
    """Mean, sample sd and a normal-approximation 95% interval."""
    x = np.asarray(list(values), dtype=float)
    if x.size == 0:
        return Stats(float("nan"), float("nan"), 0)
    sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
    return Stats(float(x.mean()), sd, int(x.size))


# -- probes ------------------------------------------------------------------


@dataclass
class Probe:
    """Result of re-expressing one organism on a set of shapes."""

    per_task: dict[str, float]
    evals: int

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.per_task.values())))


def all_tasks_probe(
    o: Organism,
    model: Model,
    targets: Sequence[TargetShape],
    rng: np.random.Generator,
    *,
    trials: int = 20,
    explore_prob: float = 0.4,
    flips: int = 2,
    **pheno_kw,
) -> Probe:
    """Measure how well ``o`` does on each shape without touching it.

    GENE phenotypes are fixed, so they are just scored.  BALDWIN and PHENO
    organisms get a fresh lifetime per shape (PHENO without write-back), which
    is how a library of old patterns can show up in the measurement.
    Evaluations go to a separate meter.
    """
    model = Model(model)
    per_task, evals = {}, 0
    for t in targets:
        env = EvaluationContext([t], measurement=True)
        if model in (Model.GENE, Model.GENE_NSGA):
            per_task[t.id] = env.evaluate(decode_direct(o.genome))
        elif model is Model.BALDWIN:
            per_task[t.id] = develop_baldwin(o, env, trials, rng, flips=flips)[0].fitness
        else:
            d, _ = develop_pheno(o, env, trials, explore_prob, rng, write_back=False, **pheno_kw)
            per_task[t.id] = d.fitness
        evals += env.evals
    return Probe(per_task, evals)


# -- epigenome dynamics ------------------------------------------------------


@dataclass
class EpigenomeDynamics:
    library_size_mean: float = 0.0
    reuse_per_task: dict[str, int] = field(default_factory=dict)
    patterns_new: int = 0
    inherited_fraction: float = 0.0
    cross_task_transfer: int = 0

    @property
    def patterns_reused(self) -> int:
        return sum(self.reuse_per_task.values())


def epigenome_dynamics(organisms: Sequence[Organism], traces: Sequence[LifetimeTrace],
                       generation: int) -> EpigenomeDynamics:
    """Library size, reuse, inheritance and transfer for one developed generation.

    A reused record counts as inherited when it was discovered in an earlier
    generation; cross-task transfer is an exploit of a record tagged with a
    different task than the one being solved.
    """
    sizes = [len(o.epigenome) for o in organisms]
    reuse: Counter[str] = Counter()
    inherited = transfer = 0
    for tr in traces:
        for task, rec_task, rec_gen in tr.reused:
            reuse[task] += 1
            inherited += rec_gen < generation
            transfer += rec_task != task
    total = sum(reuse.values())
    return EpigenomeDynamics(
        library_size_mean=float(np.mean(sizes)) if sizes else 0.0,
        reuse_per_task=dict(sorted(reuse.items())),
        patterns_new=sum(tr.patterns_recorded for tr in traces),
        inherited_fraction=inherited / total if total else 0.0,
        cross_task_transfer=transfer,
    )


# -- per-generation rows -----------------------------------------------------


@dataclass
class GenerationRecord:
    """One CSV row; field order is the column order."""

    generation: int
    replicate_id: str
    model: str
    current_task: str
    best_fitness: float
    mean_fitness: float
    all_tasks_fitness: float | None = None
    per_task_fitness: dict[str, float] | None = None
    epigenome_size_mean: float = 0.0
    patterns_reused_this_gen: int = 0
    patterns_new_this_gen: int = 0
    inherited_pattern_fraction: float = 0.0
    eval_budget_used: int = 0
    measurement_evals_used: int = 0

    def to_row(self) -> list[str]:
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(format_float(v))
            elif isinstance(v, dict):
                out.append(";".join(f"{k}={format_float(x)}" for k, x in v.items()))
            else:
                out.append(str(v))
        return out


CSV_COLUMNS = tuple(f.name for f in dataclasses.fields(GenerationRecord))


def format_float(x: float) -> str:
    return f"{x:.6f}"
