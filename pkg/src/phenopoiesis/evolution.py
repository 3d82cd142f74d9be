"""Population loop: selection, reproduction and the NSGA-II variant."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .heredity import EPIGENOME_CAPACITY, Epigenome, Genome, inherit
from .models import (
    EXPLORE_PROB,
    FLIP_COUNT,
    REINFORCEMENT,
    TRIALS,
    EvaluationContext,
    LifetimeTrace,
    Model,
    Organism,
    develop_baldwin,
    develop_gene,
    develop_pheno,
)
from .primitives import MAX_PLACEMENTS, TEMPERATURE

POPULATION_SIZE = 50
MUTATION_RATE = 0.01
TOURNAMENT_K = 3


@dataclass
class EngineConfig:
    population_size: int = POPULATION_SIZE
    trials: int = TRIALS
    mutation_rate: float = MUTATION_RATE
    explore_prob: float = EXPLORE_PROB
    epigenome_capacity: int = EPIGENOME_CAPACITY
    tournament_k: int = TOURNAMENT_K
    elitism: int = 1
    flip_count: int = FLIP_COUNT
    reinforcement: float = REINFORCEMENT
    max_placements: int = MAX_PLACEMENTS
    temperature: float = TEMPERATURE
    refinement: str = "extended"


@dataclass
class Population:
    organisms: list[Organism]
    model: Model
    generation: int = 0

    def __len__(self):
        return len(self.organisms)

    @property
    def fitnesses(self) -> np.ndarray:
        return np.array([o.fitness for o in self.organisms], dtype=float)


@dataclass
class GenerationStep:
    """Result of one generation: the developed snapshot and its successor."""

    population: Population
    developed: Population
    traces: list[LifetimeTrace] = field(default_factory=list)
    evals: int = 0
    pool: Population | None = None  # NSGA only: parents plus offspring before truncation


def initial_population(model: Model, cfg: EngineConfig, rng: np.random.Generator) -> Population:
    model = Model(model)
    organisms = [
        Organism(Genome.random(rng, model.genome_mode), Epigenome(capacity=cfg.epigenome_capacity))
        for _ in range(cfg.population_size)
    ]
    return Population(organisms, model, 0)


def develop(
    o: Organism, model: Model, env: EvaluationContext, cfg: EngineConfig, rng: np.random.Generator
) -> tuple[Organism, LifetimeTrace]:
    if model in (Model.GENE, Model.GENE_NSGA):
        return develop_gene(o, env)
    if model is Model.BALDWIN:
        return develop_baldwin(o, env, cfg.trials, rng, flips=cfg.flip_count)
    return develop_pheno(
        o,
        env,
        cfg.trials,
        cfg.explore_prob,
        rng,
        reinforcement=cfg.reinforcement,
        max_placements=cfg.max_placements,
        temperature=cfg.temperature,
        refinement=cfg.refinement,
    )


def organism_streams(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    seeds = rng.integers(0, 2**63 - 1, size=n, dtype=np.int64)
    return [np.random.default_rng(int(s)) for s in seeds]


def develop_population(
    pop: Population, env: EvaluationContext, cfg: EngineConfig, rng: np.random.Generator
) -> tuple[Population, list[LifetimeTrace]]:
    streams = organism_streams(rng, len(pop))
    developed, traces = [], []
    for o, stream in zip(pop.organisms, streams):
        d, t = develop(o, pop.model, env, cfg, stream)
        developed.append(d)
        traces.append(t)
    return Population(developed, pop.model, pop.generation), traces


def tournament_select(pop: Population, k: int, rng: np.random.Generator) -> int:
    """Index of the fittest of ``k`` uniform draws (with replacement)."""
    if k < 1 or len(pop) == 0:
        raise ValueError("need k >= 1 and a non-empty population")
    picks = rng.integers(len(pop), size=k)
    fit = pop.fitnesses[picks]
    best = fit.max()
    return int(picks[fit == best].min())


def best_index(pop: Population) -> int:
    return int(np.argmax(pop.fitnesses))


def reproduce(developed: Population, cfg: EngineConfig, rng: np.random.Generator) -> Population:
    nxt = []
    if cfg.elitism:
        elite = developed.organisms[best_index(developed)]
        nxt.append(Organism(elite.genome, elite.epigenome.copy()))
    while len(nxt) < len(developed):
        parent = developed.organisms[tournament_select(developed, cfg.tournament_k, rng)]
        genome, epigenome = inherit(parent.genome, parent.epigenome, cfg.mutation_rate, rng)
        nxt.append(Organism(genome, epigenome))
    return Population(nxt, developed.model, developed.generation + 1)


def step_generation(
    pop: Population, env: EvaluationContext, cfg: EngineConfig, rng: np.random.Generator
) -> GenerationStep:
    if pop.model is Model.GENE_NSGA:
        return step_generation_nsga(pop, env, cfg, rng)
    start = env.evals
    developed, traces = develop_population(pop, env, cfg, rng)
    evals = env.evals - start
    return GenerationStep(reproduce(developed, cfg, rng), developed, traces, evals)


# -- NSGA-II -----------------------------------------------------------------


@dataclass
class ParetoRanking:
    front_index: np.ndarray
    crowding_distance: np.ndarray
    fronts: list[list[int]]


def dominance_matrix(objectives) -> np.ndarray:
    """``D[a, b]`` is True when ``a`` dominates ``b`` (maximisation)."""
    obj = np.asarray(objectives, dtype=float)
    ge = (obj[:, None, :] >= obj[None, :, :]).all(axis=2)
    gt = (obj[:, None, :] > obj[None, :, :]).any(axis=2)
    return ge & gt


def fast_nondominated_sort(objectives) -> list[list[int]]:
    if len(objectives) == 0:
        return []
    obj = np.asarray(objectives, dtype=float)
    if obj.ndim != 2:
        raise ValueError("objectives must be a list of equal-length vectors")
    n = len(obj)
    dom = dominance_matrix(obj)
    dominated_by = dom.sum(axis=0)
    fronts = []
    current = [i for i in range(n) if dominated_by[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for p in current:
            for q in np.nonzero(dom[p])[0]:
                dominated_by[q] -= 1
                if dominated_by[q] == 0:
                    nxt.append(int(q))
        current = sorted(nxt)
    return fronts


def crowding_distance(front) -> np.ndarray:
    obj = np.asarray(front, dtype=float)
    if obj.ndim != 2 or len(obj) == 0:
        raise ValueError("front must be a non-empty list of objective vectors")
    n, m = obj.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for j in range(m):
        order = np.argsort(obj[:, j], kind="stable")
        vals = obj[order, j]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = vals[-1] - vals[0]
        if span == 0:
            continue
        dist[order[1:-1]] += (vals[2:] - vals[:-2]) / span
    return dist


def pareto_ranking(objectives) -> ParetoRanking:
    obj = np.asarray(objectives, dtype=float)
    fronts = fast_nondominated_sort(obj)
    rank = np.zeros(len(obj), dtype=int)
    crowd = np.zeros(len(obj))
    for k, f in enumerate(fronts):
        rank[f] = k
        crowd[f] = crowding_distance(obj[f])
    return ParetoRanking(rank, crowd, fronts)


def nsga_truncate(objectives, n_keep: int) -> list[int]:
    """Indices of the survivors: whole fronts first, crowding on the split front."""
    ranking = pareto_ranking(objectives)
    keep: list[int] = []
    for front in ranking.fronts:
        if len(keep) + len(front) <= n_keep:
            keep.extend(front)
            continue
        order = sorted(front, key=lambda i: (-ranking.crowding_distance[i], i))
        keep.extend(order[: n_keep - len(keep)])
        break
    return keep


def _objectives(pop: Population, tasks: list[str]) -> np.ndarray:
    return np.array([[o.task_fitness[t] for t in tasks] for o in pop.organisms])


def _crowded_tournament(ranking: ParetoRanking, rng: np.random.Generator) -> int:
    a, b = (int(x) for x in rng.integers(len(ranking.front_index), size=2))
    ka = (ranking.front_index[a], -ranking.crowding_distance[a], a)
    kb = (ranking.front_index[b], -ranking.crowding_distance[b], b)
    return a if ka <= kb else b


def step_generation_nsga(
    pop: Population, env: EvaluationContext, cfg: EngineConfig, rng: np.random.Generator
) -> GenerationStep:
    """One (mu + lambda) NSGA-II generation over the per-task fitnesses."""
    if not env.multi:
        raise ValueError("NSGA requires multiple objectives")
    start = env.evals
    traces: list[LifetimeTrace] = []
    if not all(o.developed for o in pop.organisms):
        pop, traces = develop_population(pop, env, cfg, rng)
    tasks = env.task_ids
    ranking = pareto_ranking(_objectives(pop, tasks))
    children = []
    for _ in range(len(pop)):
        parent = pop.organisms[_crowded_tournament(ranking, rng)]
        genome, epigenome = inherit(parent.genome, parent.epigenome, cfg.mutation_rate, rng)
        children.append(Organism(genome, epigenome))
    offspring, child_traces = develop_population(Population(children, pop.model, pop.generation), env, cfg, rng)
    pooled = pop.organisms + offspring.organisms
    survivors = nsga_truncate(_objectives(Population(pooled, pop.model), tasks), len(pop))
    nxt = Population([pooled[i] for i in sorted(survivors)], pop.model, pop.generation + 1)
    return GenerationStep(nxt, nxt, traces + child_traces, env.evals - start, Population(pooled, pop.model, pop.generation))
