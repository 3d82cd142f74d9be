import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import population_std
from phenopoiesis.evolution import EngineConfig, initial_population, step_generation
from phenopoiesis.grids import SHAPE_IDS, canonical_targets, make_target
from phenopoiesis.heredity import Epigenome, Genome, PatternRecord, encode_weights
from phenopoiesis.metrics import (
    CSV_COLUMNS,
    GenerationRecord,
    Recovery,
    all_tasks_probe,
    describe,
    epigenome_dynamics,
    forgetting_gap,
    recovery_time,
    task_balance,
)
from phenopoiesis.models import EvaluationContext, Model, Organism
from phenopoiesis.primitives import Composition, Kind, PlacedPrimitive, Primitive

pct = st.floats(0, 100)


def test_gap_examples():
    assert forgetting_gap(100.0, 48.9) == pytest.approx(51.1)
    assert forgetting_gap(100.0, 68.9) == pytest.approx(31.1)
    assert forgetting_gap(73.2, 73.2) == 0.0
    with pytest.raises(ValueError):
        forgetting_gap(101.0, 0.0)


@given(pct, pct)
def test_gap_antisymmetric(a, b):
    assert forgetting_gap(a, b) == -forgetting_gap(b, a)


def test_recovery_examples():
    assert recovery_time([40, 60, 79, 81] + [90] * 16, 80, 20) == Recovery(4)
    assert recovery_time([85] * 20, 80, 20) == Recovery(1)
    assert recovery_time([50] * 20, 80, 20) == Recovery(20, censored=True)
    assert int(recovery_time([80.0])) == 1


def test_recovery_errors():
    with pytest.raises(ValueError, match="empty"):
        recovery_time([])
    with pytest.raises(ValueError):
        recovery_time([90] * 5, 80, 20)
    with pytest.raises(ValueError):
        recovery_time([90], 0)


@settings(max_examples=100)
@given(st.lists(pct, min_size=1, max_size=30), st.floats(1, 100), st.floats(1, 100))
def test_recovery_monotone_in_threshold(series, a, b):
    lo, hi = sorted((a, b))
    assert recovery_time(series, lo).generations <= recovery_time(series, hi).generations


def test_balance_examples():
    assert task_balance([83.4, 90.2, 100.0]) == pytest.approx(6.8, abs=0.05)
    assert task_balance([49.5, 81.3, 79.1]) == pytest.approx(14.5, abs=0.1)
    assert task_balance([70.0, 70.0, 70.0]) == 0.0
    with pytest.raises(ValueError):
        task_balance([50.0])


@settings(max_examples=100)
@given(st.lists(pct, min_size=2, max_size=6), st.randoms(), st.floats(-50, 50))
def test_balance_invariances(xs, rnd, c):
    ref = population_std(xs)
    shuffled = list(xs)
    rnd.shuffle(shuffled)
    assert task_balance(shuffled) == pytest.approx(ref, abs=1e-9)
    assert task_balance([x + c for x in xs]) == pytest.approx(ref, abs=1e-7)


def test_describe():
    s = describe([1.0, 2.0, 3.0])
    assert s.mean == 2.0 and s.sd == 1.0 and s.n == 3
    assert s.half_width == pytest.approx(1.96 / math.sqrt(3))
    assert describe([5.0]).sd == 0.0
    assert describe([]).n == 0


def test_gene_probe_is_a_plain_score():
    o = Organism(Genome(make_target("L").pattern.reshape(100).astype(np.uint8)))
    p = all_tasks_probe(o, Model.GENE, canonical_targets(), np.random.default_rng(0))
    assert list(p.per_task) == list(SHAPE_IDS)
    assert p.per_task["L"] == 100.0 and p.evals == 5


def test_pheno_probe_leaves_organism_and_budget_alone():
    rec = PatternRecord(Composition((PlacedPrimitive(Primitive(Kind.HSEGMENT, 3), (0, 0)),)), "T", 40.0)
    o = Organism(encode_weights(np.full(12, 0.5)), Epigenome([rec]))
    before = (o.genome, list(o.epigenome.records))
    p = all_tasks_probe(o, Model.PHENO, canonical_targets(), np.random.default_rng(1), trials=10)
    assert p.evals == 50
    assert (o.genome, o.epigenome.records) == before
    assert 0 <= p.mean <= 100


def test_dynamics_generation_zero():
    cfg = EngineConfig(population_size=10, trials=5)
    rng = np.random.default_rng(0)
    pop = initial_population(Model.PHENO, cfg, rng)
    assert epigenome_dynamics(pop.organisms, [], 0).library_size_mean == 0
    step = step_generation(pop, EvaluationContext([make_target("L")]), cfg, rng)
    dyn = epigenome_dynamics(step.developed.organisms, step.traces, 0)
    assert dyn.patterns_reused == 0 and dyn.cross_task_transfer == 0
    assert dyn.patterns_new == sum(t.patterns_recorded for t in step.traces)
    assert dyn.library_size_mean > 0


def test_cross_task_transfer_after_a_switch():
    cfg = EngineConfig(population_size=10, trials=10)
    rng = np.random.default_rng(2)
    pop = initial_population(Model.PHENO, cfg, rng)
    for g in range(3):
        pop = step_generation(pop, EvaluationContext([make_target("L")], generation=g), cfg, rng).population
    step = step_generation(pop, EvaluationContext([make_target("T")], generation=3), cfg, rng)
    dyn = epigenome_dynamics(step.developed.organisms, step.traces, 3)
    logged = sum(1 for t in step.traces for task, rec_task, _ in t.reused if task == "T" and rec_task == "L")
    assert dyn.cross_task_transfer == logged >= 1
    assert dyn.reuse_per_task["T"] >= 1
    assert dyn.inherited_fraction == 1.0


def test_generation_record_row():
    r = GenerationRecord(3, "42-0", "PHENO", "L", 90.0, 75.5, None, {"L": 80.0, "T": 70.0})
    row = r.to_row()
    assert len(row) == len(CSV_COLUMNS)
    assert row[:6] == ["3", "42-0", "PHENO", "L", "90.000000", "75.500000"]
    assert row[6] == "" and row[7] == "L=80.000000;T=70.000000"
    assert CSV_COLUMNS[0] == "generation" and CSV_COLUMNS[-1] == "measurement_evals_used"
