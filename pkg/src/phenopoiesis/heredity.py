"""Genomes, the epigenome pattern library, mutation and inheritance."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .grids import GRID_HEIGHT, GRID_WIDTH, N_CELLS
from .primitives import N_SLOTS, Composition

DIRECT_BITS = N_CELLS
WEIGHT_BITS = N_SLOTS * 8
EPIGENOME_CAPACITY = 50


@dataclass(frozen=True, eq=False)
class Genome:
    """Heritable bit-string; 100 bits (direct cell encoding) or 96 (weights)."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or len(bits) not in (DIRECT_BITS, WEIGHT_BITS):
            raise ValueError(f"genome must have {DIRECT_BITS} or {WEIGHT_BITS} bits, got {bits.shape}")
        if np.any(bits > 1):
            raise ValueError("genome bits must be 0 or 1")
        bits = bits.copy()
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def mode(self) -> str:
        return "direct" if len(self.bits) == DIRECT_BITS else "weights"

    def __len__(self):
        return len(self.bits)

    def __eq__(self, other):
        return isinstance(other, Genome) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    @classmethod
    def random(cls, rng: np.random.Generator, mode: str = "direct") -> "Genome":
        n = DIRECT_BITS if mode == "direct" else WEIGHT_BITS
        return cls(rng.integers(0, 2, size=n, dtype=np.uint8))


def mutate_genome(g: Genome, rate: float, rng: np.random.Generator) -> Genome:
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"mutation rate must be in [0, 1], got {rate}")
    flips = rng.random(len(g.bits)) < rate
    return Genome(g.bits ^ flips.astype(np.uint8))


def decode_direct(g: Genome) -> np.ndarray:
    if g.mode != "direct":
        raise ValueError("wrong encoding mode")
    return g.bits.astype(bool).reshape(GRID_HEIGHT, GRID_WIDTH)


def decode_weights(g: Genome) -> np.ndarray:
    if g.mode != "weights":
        raise ValueError("wrong encoding mode")
    return np.packbits(g.bits).astype(float) / 255.0


def encode_weights(w) -> Genome:
    w = np.asarray(w, dtype=float)
    if w.shape != (N_SLOTS,):
        raise ValueError(f"expected {N_SLOTS} weights, got shape {w.shape}")
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise ValueError("weight out of range")
    # round half up
    quantized = np.floor(w * 255.0 + 0.5).astype(np.uint8)
    return Genome(np.unpackbits(quantized))


@dataclass(frozen=True)
class PatternRecord:
    composition: Composition
    task_id: str
    fitness_at_discovery: float
    reuse_count: int = 0
    generation_discovered: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fitness_at_discovery <= 100.0:
            raise ValueError("fitness_at_discovery must be in [0, 100]")

    @property
    def key(self) -> tuple[Composition, str]:
        return self.composition, self.task_id


@dataclass
class Epigenome:
    """Bounded library of pattern records.

    Records are immutable; bumping a reuse count swaps in a replaced record,
    so ``copy`` only needs a shallow list copy.
    """

    records: list[PatternRecord] = field(default_factory=list)
    capacity: int = EPIGENOME_CAPACITY

    def __len__(self):
        return len(self.records)

    def copy(self) -> "Epigenome":
        return Epigenome(list(self.records), self.capacity)

    def for_task(self, task_id: str) -> list[PatternRecord]:
        return [r for r in self.records if r.task_id == task_id]

    def record(self, p: PatternRecord) -> None:
        """Insert with dedup on (composition, task) and lowest-fitness eviction.

        Over capacity, the lowest ``fitness_at_discovery`` among the existing
        records goes first, then the oldest discovery.  The incoming record is
        spared so a full library can still pick up a new task, unless sparing
        it would cost the library its best record.
        """
        for i, r in enumerate(self.records):
            if r.key == p.key:
                if p.fitness_at_discovery > r.fitness_at_discovery:
                    self.records[i] = dataclasses.replace(p, reuse_count=r.reuse_count)
                return
        self.records.append(p)
        if len(self.records) > self.capacity:
            new = len(self.records) - 1
            worst = min(
                range(new),
                key=lambda i: (self.records[i].fitness_at_discovery, self.records[i].generation_discovered, i),
            )
            top = max(r.fitness_at_discovery for r in self.records[:new])
            others_top = max((r.fitness_at_discovery for i, r in enumerate(self.records[:new]) if i != worst), default=-1.0)
            if p.fitness_at_discovery < top and others_top < top:
                worst = new
            del self.records[worst]

    def mark_reused(self, p: PatternRecord) -> PatternRecord:
        for i, r in enumerate(self.records):
            if r is p or r.key == p.key:
                self.records[i] = dataclasses.replace(r, reuse_count=r.reuse_count + 1)
                return self.records[i]
        raise KeyError("record not in epigenome")

    def to_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "records": [
                {
                    "task": r.task_id,
                    "fitness": round(r.fitness_at_discovery, 4),
                    "generation": r.generation_discovered,
                    "reuse_count": r.reuse_count,
                    "composition": [str(p) for p in r.composition],
                }
                for r in self.records
            ],
        }


def record_pattern(e: Epigenome, p: PatternRecord) -> Epigenome:
    e.record(p)
    return e


def inherit(
    parent_genome: Genome,
    parent_epigenome: Epigenome,
    rate: float,
    rng: np.random.Generator,
) -> tuple[Genome, Epigenome]:
    return mutate_genome(parent_genome, rate, rng), parent_epigenome.copy()
