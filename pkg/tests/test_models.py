import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phenopoiesis.grids import canonical_targets, make_target
from phenopoiesis.heredity import Epigenome, Genome, PatternRecord, decode_weights, encode_weights, record_pattern
from phenopoiesis.models import (
    EvaluationContext,
    Organism,
    develop_baldwin,
    develop_gene,
    develop_pheno,
    phenotype_mutate,
)
from phenopoiesis.primitives import Composition, Kind, PlacedPrimitive, Primitive

L_RECIPE = Composition((
    PlacedPrimitive(Primitive(Kind.VSEGMENT, 5), (0, 0)),
    PlacedPrimitive(Primitive(Kind.HSEGMENT, 2), (4, 1)),
)).canonical()


def env(shape="L", **kw):
    return EvaluationContext([make_target(shape)], **kw)


def direct(grid) -> Genome:
    return Genome(np.asarray(grid, dtype=np.uint8).reshape(100))


def pheno_organism(rng, records=(), weights=None):
    w = np.full(12, 0.5) if weights is None else weights
    e = Epigenome()
    for r in records:
        record_pattern(e, r)
    return Organism(encode_weights(w), e)


def running_improvements(fitness):
    best, out = 0.0, []
    for f in fitness:
        out.append(f > best)
        best = max(best, f)
    return out


# -- GENE --------------------------------------------------------------------


def test_gene_perfect_and_empty():
    e = env("L")
    o, trace = develop_gene(Organism(direct(make_target("L").pattern)), e)
    assert o.fitness == 100.0 and o.eval_count == 1 and e.evals == 1
    assert trace.fitness == [100.0]
    o, _ = develop_gene(Organism(Genome(np.zeros(100))), env("T"))
    assert o.fitness == 0.0


def test_gene_multitask_averages():
    e = EvaluationContext(canonical_targets(["L", "T", "Plus"]))
    o, _ = develop_gene(Organism(direct(make_target("L").pattern)), e)
    assert o.task_fitness["L"] == 100.0
    assert o.fitness == pytest.approx(np.mean(list(o.task_fitness.values())))
    assert e.evals == 3


# -- BALDWIN -----------------------------------------------------------------


def test_phenotype_mutate_flips_two():
    rng = np.random.default_rng(0)
    base = make_target("T").pattern
    for _ in range(100):
        out = phenotype_mutate(base, rng)
        assert (out != base).sum() == 2
    assert make_target("T").pattern is base and base.sum() == 9


def test_phenotype_mutate_is_an_involution():
    base = make_target("Plus").pattern
    once = phenotype_mutate(base, np.random.default_rng(11))
    twice = phenotype_mutate(once, np.random.default_rng(11))
    assert np.array_equal(twice, base)


def test_phenotype_mutate_frequencies():
    rng = np.random.default_rng(2)
    base = np.zeros((10, 10), dtype=bool)
    counts = np.zeros(100)
    n = 10_000
    for _ in range(n):
        counts += phenotype_mutate(base, rng).reshape(100)
    p = 2 / 100
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) < 3 * sigma + 1)


def test_baldwin_contract():
    rng = np.random.default_rng(0)
    g = Genome.random(rng)
    o = Organism(g)
    e = env("Square")
    d, trace = develop_baldwin(o, e, 20, rng)
    assert d.eval_count == 20 and e.evals == 20
    assert d.genome == g and len(d.epigenome) == 0
    assert d.fitness == max(trace.fitness) == trace.fitness[trace.best_trial_index]
    assert (d.phenotype != g.bits.reshape(10, 10).astype(bool)).sum() == 2


def test_baldwin_single_trial_can_restore_a_perfect_match():
    target = make_target("L")
    broken = target.pattern.copy()
    broken[2, 2] = False
    broken[0, 9] = True
    g = direct(broken)
    for seed in range(20_000):
        d, _ = develop_baldwin(Organism(g), env("L"), 1, np.random.default_rng(seed))
        if np.array_equal(d.phenotype, target.pattern):
            assert d.fitness == 100.0
            break
    else:
        pytest.fail("no seed restored the pattern")


def test_baldwin_multitask_takes_per_task_maxima():
    rng = np.random.default_rng(4)
    e = EvaluationContext(canonical_targets(["L", "T", "Plus"]))
    d, trace = develop_baldwin(Organism(Genome.random(rng)), e, 20, rng)
    assert e.evals == 60
    assert d.fitness == pytest.approx(np.mean(list(d.task_fitness.values())))


# -- PHENO -------------------------------------------------------------------


def test_generation_zero_only_explores():
    rng = np.random.default_rng(0)
    d, trace = develop_pheno(pheno_organism(rng), env("L"), 20, 0.4, rng)
    assert trace.actions == ["explore"] * 20
    assert d.eval_count == 20


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["L", "T", "Plus", "Cross", "Square"]))
def test_write_back_monotonicity(seed, shape):
    rng = np.random.default_rng(seed)
    o = pheno_organism(rng)
    d, trace = develop_pheno(o, env(shape), 20, 0.4, rng)
    d2, trace2 = develop_pheno(Organism(d.genome, d.epigenome), env(shape), 20, 0.4, rng)
    for dd, tr in ((d, trace), (d2, trace2)):
        improved = running_improvements(tr.fitness)
        assert tr.recorded == improved
        assert tr.patterns_recorded == sum(improved)
        assert dd.fitness == max(tr.fitness)
        w = decode_weights(dd.genome)
        assert np.all((w >= 0) & (w <= 1))


def test_equal_fitness_is_not_recorded():
    rng = np.random.default_rng(3)
    rec = PatternRecord(L_RECIPE, "L", 100.0)
    d, trace = develop_pheno(pheno_organism(rng, [rec]), env("L"), 20, 0.4, rng)
    # the first trial replays the 100-fitness recipe; nothing can beat it
    assert trace.fitness[0] == 100.0
    assert trace.recorded == [True] + [False] * 19
    assert len(d.epigenome) == 1


def test_reinforcement_only_on_improvement():
    rng = np.random.default_rng(5)
    w = np.full(12, 0.2)
    rec = PatternRecord(L_RECIPE, "L", 100.0)
    d, _ = develop_pheno(pheno_organism(rng, [rec], w), env("L"), 20, 0.4, rng)
    after = decode_weights(d.genome)
    # only the replayed recipe improved, so only its two slots moved
    assert np.count_nonzero(np.abs(after - 0.2) > 1 / 255) == 2
    assert after[7] == pytest.approx(0.3, abs=1 / 255) and after[0] == pytest.approx(0.3, abs=1 / 255)


def test_perfect_record_is_retained():
    hits = 0
    rec = PatternRecord(L_RECIPE, "L", 100.0)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        d, trace = develop_pheno(pheno_organism(rng, [rec]), env("L"), 20, 0.0, rng)
        hits += d.fitness >= 95
        assert set(trace.actions) == {"exploit"}
    assert hits >= 99


def test_pheno_does_not_touch_the_input():
    rng = np.random.default_rng(8)
    o = pheno_organism(rng, [PatternRecord(L_RECIPE, "L", 50.0)])
    before = list(o.epigenome.records)
    develop_pheno(o, env("T"), 20, 0.4, rng)
    assert o.epigenome.records == before


def test_multitask_round_robin():
    rng = np.random.default_rng(9)
    e = EvaluationContext(canonical_targets(["L", "T", "Plus"]))
    d, trace = develop_pheno(pheno_organism(rng), e, 20, 0.4, rng)
    assert e.evals == 20
    assert set(d.task_fitness) == {"L", "T", "Plus"}
    assert d.fitness == pytest.approx(np.mean(list(d.task_fitness.values())))
    assert {r.task_id for r in d.epigenome.records} <= {"L", "T", "Plus"}


def test_cross_task_fallback_pool():
    rng = np.random.default_rng(1)
    d, trace = develop_pheno(pheno_organism(rng, [PatternRecord(L_RECIPE, "L", 100.0, 0, 0)]),
                             env("T", generation=5), 20, 0.4, rng)
    assert trace.actions[0] == "exploit"
    assert trace.reused[0] == ("T", "L", 0)


def test_determinism():
    def run():
        rng = np.random.default_rng(123)
        o = pheno_organism(rng, [PatternRecord(L_RECIPE, "L", 80.0)])
        d, tr = develop_pheno(o, env("Square"), 20, 0.4, rng)
        return d.fitness, tr.fitness, tr.actions, d.genome

    assert run() == run()


def test_trials_must_be_positive():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        develop_pheno(pheno_organism(rng), env(), 0, 0.4, rng)
    with pytest.raises(ValueError):
        develop_baldwin(Organism(Genome.random(rng)), env(), 0, rng)


def test_context_meters():
    e = env(measurement=True)
    e.evaluate(make_target("L").pattern)
    e.evaluate_batch(np.zeros((3, 10, 10), dtype=bool))
    assert e.evals == 4 and e.measurement
    with pytest.raises(ValueError, match="no targets"):
        EvaluationContext([])


def test_nudge_moves_one_anchor_by_one_cell():
    from phenopoiesis.models import _perturb

    rng = np.random.default_rng(12)
    for _ in range(200):
        moved = _perturb(L_RECIPE, rng)
        pairs = list(zip(L_RECIPE.placements, moved.placements))
        assert all(a.primitive == b.primitive for a, b in pairs)
        steps = [abs(a.anchor[0] - b.anchor[0]) + abs(a.anchor[1] - b.anchor[1]) for a, b in pairs]
        assert sorted(steps) == [0, 1]


def test_refinement_modes():
    rng = np.random.default_rng(13)
    rec = PatternRecord(L_RECIPE, "L", 70.0)
    d, tr = develop_pheno(pheno_organism(rng, [rec]), env("L"), 20, 0.0, rng, refinement="nudge")
    assert d.eval_count == 20 and set(tr.actions) == {"exploit"}
    with pytest.raises(ValueError, match="refinement"):
        develop_pheno(pheno_organism(rng), env("L"), 20, 0.4, rng, refinement="wild")
