"""Environment schedules: one fixed shape, seeded switching, or a fixed task set."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .grids import MULTITASK_SHAPES, SHAPE_IDS, TargetShape, make_target

SWITCH_INTERVALS = (20, 50, 100)


class Mode(str, Enum):
    STATIONARY = "stationary"
    SWITCHING = "switching"
    MULTITASK = "multitask"


def switching_order(pool: Sequence[str], n_segments: int, seed: int) -> tuple[str, ...]:
    """Uniform draws from ``pool`` with no shape repeated back to back."""
    if len(pool) < 2:
        raise ValueError("switching needs at least two shapes")
    rng = np.random.default_rng(seed)
    order = [pool[int(rng.integers(len(pool)))]]
    for _ in range(n_segments - 1):
        choices = [s for s in pool if s != order[-1]]
        order.append(choices[int(rng.integers(len(choices)))])
    return tuple(order)


@dataclass(frozen=True)
class Schedule:
    mode: Mode
    total_generations: int
    shapes: tuple[str, ...]
    interval: int | None = None
    seed: int = 0
    order: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "shapes", tuple(self.shapes))
        if self.total_generations < 1:
            raise ValueError("total_generations must be >= 1")
        if not self.shapes:
            raise ValueError("schedule needs at least one shape")
        if self.mode is Mode.STATIONARY and len(self.shapes) != 1:
            raise ValueError("a stationary schedule has exactly one shape")
        if self.mode is Mode.SWITCHING:
            if not self.interval or self.interval < 1:
                raise ValueError("switching needs a positive interval")
            order = switching_order(self.shapes, self.n_segments, self.seed)
            object.__setattr__(self, "order", order)
        elif self.mode is Mode.MULTITASK and len(self.shapes) < 2:
            raise ValueError("multi-task needs at least two shapes")

    @classmethod
    def stationary(cls, shape: str, total_generations: int) -> "Schedule":
        return cls(Mode.STATIONARY, total_generations, (shape,))

    @classmethod
    def switching(
        cls, interval: int, total_generations: int, seed: int, pool: Sequence[str] = SHAPE_IDS
    ) -> "Schedule":
        return cls(Mode.SWITCHING, total_generations, tuple(pool), interval, seed)

    @classmethod
    def multitask(cls, total_generations: int, shapes: Sequence[str] = MULTITASK_SHAPES) -> "Schedule":
        return cls(Mode.MULTITASK, total_generations, tuple(shapes))

    @property
    def n_segments(self) -> int:
        if self.mode is not Mode.SWITCHING:
            return 1
        return -(-self.total_generations // self.interval)

    def segment_of(self, generation: int) -> int:
        self._check(generation)
        return generation // self.interval if self.mode is Mode.SWITCHING else 0

    def tasks_at(self, generation: int) -> tuple[str, ...]:
        """Shape ids active at ``generation``."""
        self._check(generation)
        if self.mode is Mode.SWITCHING:
            return (self.order[generation // self.interval],)
        return self.shapes

    def segments(self) -> list[tuple[int, int, str]]:
        """``(start, stop, task)`` per segment, ``stop`` exclusive."""
        if self.mode is not Mode.SWITCHING:
            return [(0, self.total_generations, "+".join(self.shapes))]
        return [
            (k * self.interval, min((k + 1) * self.interval, self.total_generations), self.order[k])
            for k in range(self.n_segments)
        ]

    @property
    def switch_points(self) -> list[int]:
        return [start for start, _, _ in self.segments()[1:]]

    def _check(self, generation: int):
        if not 0 <= generation < self.total_generations:
            raise ValueError(f"generation {generation} outside [0, {self.total_generations})")


def current_target(
    s: Schedule, generation: int, shapes: Mapping[str, TargetShape] | None = None
) -> TargetShape | list[TargetShape]:
    """The target for ``generation``: one shape, or the full list in multi-task mode."""
    lookup = (lambda i: shapes[i]) if shapes is not None else make_target
    targets = [lookup(i) for i in s.tasks_at(generation)]
    return targets if s.mode is Mode.MULTITASK else targets[0]
