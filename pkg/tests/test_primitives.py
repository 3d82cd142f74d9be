import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import min_primitives
from phenopoiesis.grids import SHAPE_IDS, make_target
from phenopoiesis.primitives import (
    N_SLOTS,
    Composition,
    Kind,
    Orientation,
    PlacedPrimitive,
    Primitive,
    compose,
    footprint,
    primitive_slots,
    random_composition,
    slot_probabilities,
    valid_anchors,
)

H = lambda n: Primitive(Kind.HSEGMENT, n)  # noqa: E731
V = lambda n: Primitive(Kind.VSEGMENT, n)  # noqa: E731


def test_catalog_order():
    slots = primitive_slots()
    assert len(slots) == N_SLOTS == 12
    assert slots[0] == H(2)
    assert [p.kind for p in slots] == [Kind.HSEGMENT] * 4 + [Kind.VSEGMENT] * 4 + [Kind.CORNER] * 4
    assert primitive_slots() == slots


def test_footprints():
    assert footprint(PlacedPrimitive(H(3), (0, 0))) == {(0, 0), (0, 1), (0, 2)}
    assert footprint(PlacedPrimitive(V(2), (5, 7))) == {(5, 7), (6, 7)}
    se = Primitive(Kind.CORNER, 2, Orientation.SE)
    assert footprint(PlacedPrimitive(se, (2, 2))) == {(2, 2), (3, 2), (3, 3)}


def test_corner_table():
    table = {
        "NE": {(0, 0), (0, 1), (1, 0)},
        "NW": {(0, 0), (0, 1), (1, 1)},
        "SE": {(0, 0), (1, 0), (1, 1)},
        "SW": {(0, 1), (1, 0), (1, 1)},
    }
    for o in Orientation:
        assert footprint(PlacedPrimitive(Primitive(Kind.CORNER, 2, o), (0, 0))) == table[o.value]


def test_footprints_fit_a_5x5_box():
    for p in primitive_slots():
        rows, cols = zip(*p.offsets)
        assert max(rows) < 5 and max(cols) < 5


def test_invalid_primitives_and_placements():
    with pytest.raises(ValueError):
        H(6)
    with pytest.raises(ValueError):
        Primitive(Kind.CORNER, 2)
    with pytest.raises(ValueError, match="invalid placement"):
        PlacedPrimitive(H(5), (0, 6))
    with pytest.raises(ValueError):
        Composition(())


def test_compose_single_and_idempotent():
    g = compose(Composition((PlacedPrimitive(H(3), (0, 0)),)))
    assert set(zip(*np.nonzero(g))) == {(0, 0), (0, 1), (0, 2)}
    p = PlacedPrimitive(V(4), (1, 1))
    assert np.array_equal(compose(Composition((p, p))), compose(Composition((p,))))


def test_compose_builds_l():
    c = Composition((PlacedPrimitive(V(5), (2, 2)), PlacedPrimitive(H(2), (6, 3))))
    assert np.array_equal(compose(c), make_target("L").pattern)


@st.composite
def compositions(draw, max_size=4):
    slots = primitive_slots()
    out = []
    for _ in range(draw(st.integers(1, max_size))):
        p = slots[draw(st.integers(0, N_SLOTS - 1))]
        out.append(PlacedPrimitive(p, draw(st.sampled_from(valid_anchors(p)))))
    return Composition(tuple(out))


@settings(max_examples=100, deadline=None)
@given(compositions(), st.randoms())
def test_compose_order_independent(c, rnd):
    shuffled = list(c.placements)
    rnd.shuffle(shuffled)
    assert np.array_equal(compose(c), compose(Composition(tuple(shuffled))))


@settings(max_examples=100, deadline=None)
@given(compositions())
def test_popcount_bound(c):
    sizes = [len(footprint(p)) for p in c]
    union = set().union(*(footprint(p) for p in c))
    assert compose(c).sum() == len(union) <= sum(sizes)
    assert (len(union) == sum(sizes)) == all(
        not (footprint(a) & footprint(b)) for i, a in enumerate(c) for b in list(c)[i + 1:]
    )


@settings(max_examples=50, deadline=None)
@given(compositions())
def test_canonical_form_keeps_the_shape(c):
    k = c.canonical()
    cells = set().union(*(footprint(p) for p in k))
    assert min(r for r, _ in cells) == 0 and min(col for _, col in cells) == 0
    assert compose(k).sum() == compose(c).sum()
    assert k.canonical() == k


@pytest.mark.parametrize("shape", SHAPE_IDS)
def test_expressibility(shape):
    # exhaustive search over placements inside the shape
    k = min_primitives(make_target(shape).cells, limit=4)
    if shape == "Cross":
        assert k is None
    else:
        assert k is not None and k <= 4


def test_one_hot_zero_temperature():
    w = np.zeros(12)
    w[0] = 1.0
    rng = np.random.default_rng(0)
    for _ in range(50):
        c = random_composition(rng, w, temperature=0.0)
        assert all(p.primitive == H(2) for p in c)
        assert 1 <= len(c) <= 4


def test_uniform_slot_frequencies():
    rng = np.random.default_rng(1)
    counts = np.zeros(12)
    for _ in range(10_000):
        for s in random_composition(rng, np.ones(12), max_placements=1).slots:
            counts[s] += 1
    expected = 10_000 / 12
    sigma = np.sqrt(10_000 * (1 / 12) * (11 / 12))
    assert np.all(np.abs(counts - expected) < 3 * sigma)


def test_random_composition_reproducible():
    w = np.linspace(0.1, 1.0, 12)
    a = [random_composition(np.random.default_rng(7), w) for _ in range(3)]
    b = [random_composition(np.random.default_rng(7), w) for _ in range(3)]
    assert a == b


def test_degenerate_weights():
    with pytest.raises(ValueError, match="degenerate weights"):
        random_composition(np.random.default_rng(0), np.zeros(12))
    with pytest.raises(ValueError):
        slot_probabilities(np.ones(5))


def test_softmax_probabilities():
    p = slot_probabilities(np.ones(12))
    assert np.allclose(p, 1 / 12)
    w = np.zeros(12)
    w[3] = 1.0
    p = slot_probabilities(w, 1.0)
    assert p[3] == pytest.approx(np.e / (np.e + 11))
