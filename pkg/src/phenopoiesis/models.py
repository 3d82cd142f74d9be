"""Per-organism lifetime procedures for GENE, BALDWIN and PHENO."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .grids import N_CELLS, empty_grid, TargetShape, iou_fitness, iou_fitness_batch
from .heredity import (
    Epigenome,
    Genome,
    PatternRecord,
    decode_direct,
    decode_weights,
    encode_weights,
)
from .primitives import (
    MAX_PLACEMENTS,
    TEMPERATURE,
    Composition,
    PlacedPrimitive,
    _in_bounds,
    compose,
    primitive_slots,
    random_composition,
    slot_probabilities,
    valid_anchors,
)

TRIALS = 20
EXPLORE_PROB = 0.4
REINFORCEMENT = 0.1
FLIP_COUNT = 2
REFINEMENTS = ("extended", "nudge")


class Model(str, Enum):
    GENE = "GENE"
    BALDWIN = "BALDWIN"
    PHENO = "PHENO"
    GENE_NSGA = "GENE_NSGA"

    @property
    def genome_mode(self) -> str:
        return "weights" if self is Model.PHENO else "direct"


class EvaluationContext:
    """Targets for the current generation plus an evaluation meter.

    Every call to ``evaluate``/``evaluate_batch`` is charged to ``evals``.
    Contexts built with ``measurement=True`` are used for probes; their
    counts never feed into a model's selection budget.
    """

    def __init__(self, targets: Sequence[TargetShape], generation: int = 0, measurement: bool = False):
        if not targets:
            raise ValueError("no targets")
        self.targets = {t.id: t for t in targets}
        self.task_ids = [t.id for t in targets]
        self.generation = generation
        self.measurement = measurement
        self.evals = 0
        self._cache: dict[str, dict[bytes, float]] = {t: {} for t in self.task_ids}

    @property
    def multi(self) -> bool:
        return len(self.task_ids) > 1

    @property
    def task(self) -> str:
        return self.task_ids[0]

    def evaluate(self, grid: np.ndarray, task: str | None = None) -> float:
        task = self.task if task is None else task
        self.evals += 1
        key = np.packbits(grid).tobytes()
        cache = self._cache[task]
        f = cache.get(key)
        if f is None:
            f = cache[key] = iou_fitness(grid, self.targets[task])
        return f

    def evaluate_batch(self, grids: np.ndarray, task: str | None = None) -> np.ndarray:
        task = self.task if task is None else task
        self.evals += len(grids)
        return iou_fitness_batch(grids, self.targets[task])


@dataclass
class Organism:
    genome: Genome
    epigenome: Epigenome = field(default_factory=Epigenome)
    phenotype: np.ndarray | None = None
    fitness: float | None = None
    eval_count: int = 0
    task_fitness: dict[str, float] | None = None

    @property
    def developed(self) -> bool:
        return self.fitness is not None


@dataclass
class LifetimeTrace:
    fitness: list[float] = field(default_factory=list)
    actions: list[str] = field(default_factory=list)
    recorded: list[bool] = field(default_factory=list)
    # exploited records as (task being solved, record task, generation discovered)
    reused: list[tuple[str, str, int]] = field(default_factory=list)
    best_trial_index: int = 0

    @property
    def patterns_recorded(self) -> int:
        return sum(self.recorded)


def _developed(o: Organism, phenotype, fitness, evals, task_fitness=None, **changes) -> Organism:
    return dataclasses.replace(
        o, phenotype=phenotype, fitness=float(fitness), eval_count=evals, task_fitness=task_fitness, **changes
    )


def develop_gene(o: Organism, env: EvaluationContext) -> tuple[Organism, LifetimeTrace]:
    phenotype = decode_direct(o.genome)
    start = env.evals
    if env.multi:
        scores = {t: env.evaluate(phenotype, t) for t in env.task_ids}
        fitness = float(np.mean(list(scores.values())))
    else:
        scores = None
        fitness = env.evaluate(phenotype)
    trace = LifetimeTrace(fitness=[fitness], recorded=[False])
    return _developed(o, phenotype, fitness, env.evals - start, scores), trace


def _flip_pairs(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    a = rng.integers(N_CELLS, size=n)
    b = rng.integers(N_CELLS - 1, size=n)
    return a, b + (b >= a)


def phenotype_mutate(base: np.ndarray, rng: np.random.Generator, flips: int = FLIP_COUNT) -> np.ndarray:
    """Copy of ``base`` with exactly ``flips`` distinct cells toggled."""
    out = base.copy().reshape(N_CELLS)
    if flips == 2:
        a, b = _flip_pairs(rng, 1)
        idx = np.array([a[0], b[0]])
    else:
        idx = rng.choice(N_CELLS, size=flips, replace=False)
    out[idx] ^= True
    return out.reshape(base.shape)


def _trial_phenotypes(base: np.ndarray, trials: int, flips: int, rng: np.random.Generator) -> np.ndarray:
    stack = np.repeat(base.reshape(1, N_CELLS), trials, axis=0)
    if flips == 2:
        a, b = _flip_pairs(rng, trials)
        rows = np.arange(trials)
        stack[rows, a] ^= True
        stack[rows, b] ^= True
    else:
        for t in range(trials):
            stack[t, rng.choice(N_CELLS, size=flips, replace=False)] ^= True
    return stack.reshape(trials, *base.shape)


def develop_baldwin(
    o: Organism,
    env: EvaluationContext,
    trials: int = TRIALS,
    rng: np.random.Generator | None = None,
    flips: int = FLIP_COUNT,
) -> tuple[Organism, LifetimeTrace]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    base = decode_direct(o.genome)
    candidates = _trial_phenotypes(base, trials, flips, rng)
    start = env.evals
    if env.multi:
        per_task = np.stack([env.evaluate_batch(candidates, t) for t in env.task_ids])
        scores = per_task.mean(axis=0)
        best_per_task = per_task.max(axis=1)
        task_fitness = dict(zip(env.task_ids, map(float, best_per_task)))
        fitness = float(best_per_task.mean())
        best = int(np.argmax(scores))
    else:
        scores = env.evaluate_batch(candidates)
        task_fitness = None
        best = int(np.argmax(scores))
        fitness = float(scores[best])
    trace = LifetimeTrace(fitness=[float(s) for s in scores], recorded=[False] * trials, best_trial_index=best)
    return _developed(o, candidates[best], fitness, env.evals - start, task_fitness), trace


def _perturb(comp: Composition, rng: np.random.Generator) -> Composition:
    """Move one placement by one cell in a random in-bounds direction."""
    placements = list(comp.placements)
    order = rng.permutation(len(placements))
    for i in order:
        p = placements[i]
        moves = [
            (p.anchor[0] + dr, p.anchor[1] + dc)
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1))
            if _in_bounds(p.primitive, (p.anchor[0] + dr, p.anchor[1] + dc))
        ]
        if moves:
            placements[i] = PlacedPrimitive(p.primitive, moves[int(rng.integers(len(moves)))])
            return Composition(tuple(placements))
    return comp


def _refine(comp: Composition, rng: np.random.Generator, weights, max_placements: int, temperature: float) -> Composition:
    """Nudge, swap, add or drop one placement of a stored recipe."""
    op = int(rng.integers(4))
    placements = list(comp.placements)
    if op == 0 or (op == 2 and len(placements) >= max_placements) or (op == 3 and len(placements) <= 1):
        return _perturb(comp, rng)
    probs = slot_probabilities(weights, temperature)
    prim = primitive_slots()[int(rng.choice(len(probs), p=probs))]
    anchors = valid_anchors(prim)
    if op == 1:
        i = int(rng.integers(len(placements)))
        r, c = placements[i].anchor
        h, w = prim.extent
        placements[i] = PlacedPrimitive(prim, (min(r, 10 - h), min(c, 10 - w)))
    elif op == 2:
        # attach near an existing placement rather than anywhere on the grid
        r, c = placements[int(rng.integers(len(placements)))].anchor
        near = [a for a in anchors if abs(a[0] - r) <= 2 and abs(a[1] - c) <= 2]
        pick = near or anchors
        placements.append(PlacedPrimitive(prim, pick[int(rng.integers(len(pick)))]))
    else:
        del placements[int(rng.integers(len(placements)))]
    return Composition(tuple(placements))


def _fitness_proportional(records: list[PatternRecord], rng: np.random.Generator) -> PatternRecord:
    f = np.array([r.fitness_at_discovery for r in records])
    total = f.sum()
    if total <= 0:
        return records[int(rng.integers(len(records)))]
    i = int(np.searchsorted(np.cumsum(f), rng.random() * total, side="right"))
    return records[min(i, len(records) - 1)]


def develop_pheno(
    o: Organism,
    env: EvaluationContext,
    trials: int = TRIALS,
    explore_prob: float = EXPLORE_PROB,
    rng: np.random.Generator | None = None,
    *,
    reinforcement: float = REINFORCEMENT,
    max_placements: int = MAX_PLACEMENTS,
    temperature: float = TEMPERATURE,
    write_back: bool = True,
    refinement: str = "extended",
) -> tuple[Organism, LifetimeTrace]:
    """Run the explore/exploit trial loop with genome and epigenome write-back.

    In multi-task contexts trials are assigned to tasks round-robin and the
    organism's fitness is the mean of its per-task bests.  The first trial
    for each task replays the best stored record unchanged; later exploits
    sample records by fitness and refine one placement: ``"nudge"`` only
    shifts an anchor by one cell, ``"extended"`` may also swap, add or drop
    a placement.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if refinement not in REFINEMENTS:
        raise ValueError(f"refinement must be one of {REFINEMENTS}")
    rng = np.random.default_rng() if rng is None else rng
    weights = decode_weights(o.genome)
    epigenome = o.epigenome.copy()
    tasks = env.task_ids
    best_fit = {t: 0.0 for t in tasks}
    best_pheno: dict[str, np.ndarray | None] = {t: None for t in tasks}
    best_trial = {t: 0 for t in tasks}
    # exploits draw on what was inherited; discoveries made during this
    # lifetime only become available to offspring
    inherited = list(o.epigenome.records)
    replayed = set()
    trace = LifetimeTrace()
    start = env.evals

    for trial in range(trials):
        task = tasks[trial % len(tasks)]
        pool = [r for r in inherited if r.task_id == task] or inherited
        coin = rng.random()
        first = task not in replayed
        replayed.add(task)
        if pool and (first or coin >= explore_prob):
            action = "exploit"
            if first:
                chosen = max(pool, key=lambda r: r.fitness_at_discovery)
                comp = chosen.composition
            else:
                chosen = _fitness_proportional(pool, rng)
                if refinement == "nudge":
                    comp = _perturb(chosen.composition, rng)
                else:
                    comp = _refine(chosen.composition, rng, weights, max_placements, temperature)
            trace.reused.append((task, chosen.task_id, chosen.generation_discovered))
            if any(r.key == chosen.key for r in epigenome.records):
                epigenome.mark_reused(chosen)
        else:
            action = "explore"
            comp = random_composition(rng, weights, max_placements, temperature)

        pheno = compose(comp)
        f = env.evaluate(pheno, task)
        improved = f > best_fit[task]
        if improved:
            best_fit[task] = f
            best_pheno[task] = pheno
            best_trial[task] = trial
            if write_back:
                for s in set(comp.slots):
                    weights[s] = min(1.0, weights[s] + reinforcement)
                epigenome.record(PatternRecord(comp.canonical(), task, f, 0, env.generation))
        trace.fitness.append(f)
        trace.actions.append(action)
        trace.recorded.append(bool(improved and write_back))

    if len(tasks) > 1:
        fitness = float(np.mean([best_fit[t] for t in tasks]))
        task_fitness = dict(best_fit)
        top = max(tasks, key=lambda t: best_fit[t])
    else:
        top = tasks[0]
        fitness = best_fit[top]
        task_fitness = None
    trace.best_trial_index = best_trial[top]
    phenotype = best_pheno[top]
    if phenotype is None:
        phenotype = empty_grid()
    genome = encode_weights(weights) if write_back else o.genome
    organism = _developed(
        o, phenotype, fitness, env.evals - start, task_fitness, genome=genome, epigenome=epigenome
    )
    return organism, trace

