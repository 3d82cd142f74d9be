"""Fixed primitive catalog and the composition engine.

The catalog has 12 slots in a fixed order, which is also the index space of
the PHENO weight vector::

    0-3   HSegment, lengths 2..5
    4-7   VSegment, lengths 2..5
    8-11  Corner NE, NW, SE, SW

Corner footprints, relative to the top-left of their 2x2 box::

    NE  (0,0) (0,1) (1,0)      ##   NW  (0,0) (0,1) (1,1)      ##
                               #.                              .#
    SE  (0,0) (1,0) (1,1)      #.   SW  (0,1) (1,0) (1,1)      .#
                               ##                              ##
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .grids import GRID_HEIGHT, GRID_WIDTH

MAX_PLACEMENTS = 4
TEMPERATURE = 1.0
SEGMENT_LENGTHS = (2, 3, 4, 5)


class Kind(str, Enum):
    HSEGMENT = "HSegment"
    VSEGMENT = "VSegment"
    CORNER = "Corner"


class Orientation(str, Enum):
    NE = "NE"
    NW = "NW"
    SE = "SE"
    SW = "SW"


_CORNER_OFFSETS = {
    Orientation.NE: ((0, 0), (0, 1), (1, 0)),
    Orientation.NW: ((0, 0), (0, 1), (1, 1)),
    Orientation.SE: ((0, 0), (1, 0), (1, 1)),
    Orientation.SW: ((0, 1), (1, 0), (1, 1)),
}


@dataclass(frozen=True, order=True)
class Primitive:
    kind: Kind
    length: int = 2
    orientation: Orientation | None = None

    def __post_init__(self):
        if self.kind is Kind.CORNER:
            if self.orientation is None or self.length != 2:
                raise ValueError("corner needs an orientation and arm length 2")
        elif self.length not in SEGMENT_LENGTHS or self.orientation is not None:
            raise ValueError(f"segment length must be in {SEGMENT_LENGTHS}")

    @property
    def offsets(self) -> tuple[tuple[int, int], ...]:
        if self.kind is Kind.HSEGMENT:
            return tuple((0, i) for i in range(self.length))
        if self.kind is Kind.VSEGMENT:
            return tuple((i, 0) for i in range(self.length))
        return _CORNER_OFFSETS[self.orientation]

    @property
    def extent(self) -> tuple[int, int]:
        """(height, width) of the bounding box."""
        if self.kind is Kind.HSEGMENT:
            return 1, self.length
        if self.kind is Kind.VSEGMENT:
            return self.length, 1
        return 2, 2

    def __str__(self):
        if self.kind is Kind.CORNER:
            return f"Corner({self.orientation.value})"
        return f"{self.kind.value}({self.length})"


@lru_cache(maxsize=1)
def primitive_slots() -> tuple[Primitive, ...]:
    return (
        tuple(Primitive(Kind.HSEGMENT, n) for n in SEGMENT_LENGTHS)
        + tuple(Primitive(Kind.VSEGMENT, n) for n in SEGMENT_LENGTHS)
        + tuple(Primitive(Kind.CORNER, 2, o) for o in Orientation)
    )


N_SLOTS = len(primitive_slots())
_SLOT_INDEX = {p: i for i, p in enumerate(primitive_slots())}


def slot_index(p: Primitive) -> int:
    return _SLOT_INDEX[p]


def _in_bounds(p: Primitive, anchor: tuple[int, int]) -> bool:
    h, w = p.extent
    r, c = anchor
    return 0 <= r <= GRID_HEIGHT - h and 0 <= c <= GRID_WIDTH - w


@dataclass(frozen=True, order=True)
class PlacedPrimitive:
    primitive: Primitive
    anchor: tuple[int, int]

    def __post_init__(self):
        if not _in_bounds(self.primitive, self.anchor):
            raise ValueError(f"invalid placement: {self.primitive} at {self.anchor}")

    @property
    def slot(self) -> int:
        return _SLOT_INDEX[self.primitive]

    @property
    def cells(self) -> np.ndarray:
        """Flat (row-major) indices of the footprint."""
        return _flat_cells(self.slot, self.anchor)

    def __str__(self):
        return f"{self.primitive}@{self.anchor[0]},{self.anchor[1]}"


def footprint(p: PlacedPrimitive) -> set[tuple[int, int]]:
    r, c = p.anchor
    return {(r + dr, c + dc) for dr, dc in p.primitive.offsets}


@dataclass(frozen=True)
class Composition:
    placements: tuple[PlacedPrimitive, ...]

    def __post_init__(self):
        if len(self.placements) < 1:
            raise ValueError("composition needs at least one placement")

    def __len__(self):
        return len(self.placements)

    def __iter__(self):
        return iter(self.placements)

    @property
    def slots(self) -> list[int]:
        return [p.slot for p in self.placements]

    def canonical(self) -> "Composition":
        """Sorted placements translated so the footprint touches row 0 and col 0.

        Fitness is translation invariant, so this form identifies recipes that
        differ only by where they were drawn.
        """
        cells = [rc for p in self.placements for rc in footprint(p)]
        r0 = min(r for r, _ in cells)
        c0 = min(c for _, c in cells)
        moved = sorted(
            PlacedPrimitive(p.primitive, (p.anchor[0] - r0, p.anchor[1] - c0))
            for p in self.placements
        )
        return Composition(tuple(moved))

    def __str__(self):
        return " + ".join(str(p) for p in self.placements)


@lru_cache(maxsize=None)
def _flat_cells(slot: int, anchor: tuple[int, int]) -> np.ndarray:
    r, c = anchor
    cells = np.array([(r + dr) * GRID_WIDTH + c + dc for dr, dc in primitive_slots()[slot].offsets])
    cells.setflags(write=False)
    return cells


def compose(c: Composition) -> np.ndarray:
    flat = np.zeros(GRID_HEIGHT * GRID_WIDTH, dtype=bool)
    for p in c.placements:
        flat[p.cells] = True
    return flat.reshape(GRID_HEIGHT, GRID_WIDTH)


@lru_cache(maxsize=1)
def _anchor_tables() -> tuple[tuple[tuple[int, int], ...], ...]:
    tables = []
    for p in primitive_slots():
        h, w = p.extent
        tables.append(tuple((r, c) for r in range(GRID_HEIGHT - h + 1) for c in range(GRID_WIDTH - w + 1)))
    return tuple(tables)


def valid_anchors(p: Primitive) -> tuple[tuple[int, int], ...]:
    return _anchor_tables()[_SLOT_INDEX[p]]


def slot_probabilities(weights, temperature: float = TEMPERATURE) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (N_SLOTS,):
        raise ValueError(f"expected {N_SLOTS} weights, got shape {w.shape}")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("degenerate weights")
    if temperature <= 0:
        # zero-temperature limit: uniform over the argmax slots
        top = w == w.max()
        return top / top.sum()
    z = (w - w.max()) / temperature
    e = np.exp(z)
    return e / e.sum()


def random_composition(
    rng: np.random.Generator,
    weights,
    max_placements: int = MAX_PLACEMENTS,
    temperature: float = TEMPERATURE,
) -> Composition:
    probs = slot_probabilities(weights, temperature)
    k = int(rng.integers(1, max_placements + 1))
    cdf = np.cumsum(probs)
    idx = np.searchsorted(cdf, rng.random(k) * cdf[-1], side="right")
    slots = primitive_slots()
    anchors = _anchor_tables()
    placements = []
    for s in np.minimum(idx, N_SLOTS - 1):
        table = anchors[s]
        a = table[int(rng.integers(len(table)))]
        placements.append(PlacedPrimitive(slots[s], a))
    return Composition(tuple(placements))
