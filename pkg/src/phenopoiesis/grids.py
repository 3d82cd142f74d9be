"""10x10 binary grids, the canonical target shapes and translation-invariant IoU.

A grid is a ``(10, 10)`` boolean numpy array, row 0 at the top.  Fitness is a
percentage in ``[0, 100]``: the best intersection-over-union between the
organism and the target over every integer shift of the organism, where cells
pushed off the grid are discarded.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

GRID_HEIGHT = 10
GRID_WIDTH = 10
N_CELLS = GRID_HEIGHT * GRID_WIDTH
MAX_SHIFT = 9

SHAPE_IDS = ("L", "T", "Plus", "Cross", "Square")
MULTITASK_SHAPES = ("L", "T", "Plus")

_CANONICAL_CELLS: dict[str, tuple[tuple[int, int], ...]] = {
    "L": tuple([(r, 2) for r in range(2, 7)] + [(6, 3), (6, 4)]),
    "T": tuple([(2, c) for c in range(2, 7)] + [(r, 4) for r in range(3, 7)]),
    "Plus": tuple(sorted({(4, c) for c in range(2, 7)} | {(r, 4) for r in range(2, 7)})),
    "Cross": tuple(sorted({(2 + i, 2 + i) for i in range(5)} | {(2 + i, 6 - i) for i in range(5)})),
    "Square": tuple(sorted(
        (r, c) for r in range(3, 7) for c in range(3, 7) if r in (3, 6) or c in (3, 6)
    )),
}


def empty_grid() -> np.ndarray:
    return np.zeros((GRID_HEIGHT, GRID_WIDTH), dtype=bool)


def grid_from_cells(cells: Iterable[tuple[int, int]]) -> np.ndarray:
    grid = empty_grid()
    for r, c in cells:
        if not (0 <= r < GRID_HEIGHT and 0 <= c < GRID_WIDTH):
            raise ValueError(f"cell {(r, c)} outside the {GRID_HEIGHT}x{GRID_WIDTH} grid")
        grid[r, c] = True
    return grid


def as_grid(grid) -> np.ndarray:
    arr = np.asarray(grid, dtype=bool)
    if arr.shape != (GRID_HEIGHT, GRID_WIDTH):
        raise ValueError(f"grid must be {GRID_HEIGHT}x{GRID_WIDTH}, got {arr.shape}")
    return arr


def translate(grid: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Shift occupied cells by (dy, dx); cells leaving the grid are dropped."""
    out = empty_grid()
    rows, cols = np.nonzero(grid)
    rows = rows + dy
    cols = cols + dx
    keep = (rows >= 0) & (rows < GRID_HEIGHT) & (cols >= 0) & (cols < GRID_WIDTH)
    out[rows[keep], cols[keep]] = True
    return out


def to_ascii(grid: np.ndarray, on: str = "#", off: str = ".") -> str:
    return "\n".join("".join(on if v else off for v in row) for row in as_grid(grid))


@dataclass(frozen=True)
class TargetShape:
    id: str
    pattern: np.ndarray = field(compare=False, repr=False)
    cells: tuple[tuple[int, int], ...] = ()

    @property
    def cell_count(self) -> int:
        return len(self.cells)

    @classmethod
    def from_cells(cls, shape_id: str, cells: Iterable[tuple[int, int]]) -> "TargetShape":
        cells = tuple(sorted({(int(r), int(c)) for r, c in cells}))
        if not cells:
            raise ValueError(f"shape {shape_id!r} has no occupied cells")
        pattern = grid_from_cells(cells)
        pattern.setflags(write=False)
        return cls(shape_id, pattern, cells)


@lru_cache(maxsize=None)
def make_target(shape_id: str) -> TargetShape:
    if shape_id not in _CANONICAL_CELLS:
        raise ValueError(f"unknown shape {shape_id!r}; expected one of {SHAPE_IDS}")
    return TargetShape.from_cells(shape_id, _CANONICAL_CELLS[shape_id])


def canonical_targets(ids: Sequence[str] = SHAPE_IDS) -> list[TargetShape]:
    return [make_target(i) for i in ids]


def load_shapes(path: str | Path) -> dict[str, TargetShape]:
    """Read a shape-definition file.

    YAML with one record per shape::

        shapes:
          - name: L
            cells: [[2, 2], [3, 2], ...]
    """
    import yaml

    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    records = doc.get("shapes", doc) if isinstance(doc, dict) else doc
    shapes = {}
    for rec in records:
        name = str(rec["name"])
        shapes[name] = TargetShape.from_cells(name, [tuple(rc) for rc in rec["cells"]])
    return shapes


def dump_shapes(shapes: Iterable[TargetShape]) -> str:
    import yaml

    records = [{"name": s.id, "cells": [list(rc) for rc in s.cells]} for s in shapes]
    return yaml.safe_dump({"shapes": records}, default_flow_style=None, sort_keys=False)


# -- fitness -----------------------------------------------------------------

_SHIFTS = np.array(
    [(dy, dx) for dy in range(-MAX_SHIFT, MAX_SHIFT + 1) for dx in range(-MAX_SHIFT, MAX_SHIFT + 1)]
)


@lru_cache(maxsize=64)
def _shift_tables(cells: tuple[tuple[int, int], ...]) -> tuple[np.ndarray, np.ndarray, int]:
    """Per-cell, per-shift lookup table for one target.

    Row ``i`` is ``[hit | kept]``: ``hit[s]`` is 1 when organism cell ``i``
    lands on a target cell under shift ``s`` and ``kept[s]`` is 1 when it
    stays on the grid at all.
    """
    target = grid_from_cells(cells)
    rr, cc = np.divmod(np.arange(N_CELLS), GRID_WIDTH)
    nr = rr[:, None] + _SHIFTS[None, :, 0]
    nc = cc[:, None] + _SHIFTS[None, :, 1]
    inside = (nr >= 0) & (nr < GRID_HEIGHT) & (nc >= 0) & (nc < GRID_WIDTH)
    hit = np.zeros(inside.shape, dtype=np.int32)
    hit[inside] = target[nr[inside], nc[inside]]
    table = np.concatenate([hit, inside.astype(np.int32)], axis=1)
    table.setflags(write=False)
    return table, table.astype(np.float64), len(cells)


def _best_ratio(inter: np.ndarray, kept: np.ndarray, n_target: int) -> np.ndarray:
    union = kept + n_target - inter
    ratio = np.where(union > 0, 100.0 * inter / np.maximum(union, 1), 0.0)
    return ratio.max(axis=-1)


def iou_fitness(organism: np.ndarray, target: TargetShape) -> float:
    table, _, n_target = _shift_tables(target.cells)
    idx = np.flatnonzero(organism)
    counts = table[idx].sum(axis=0)
    n = len(_SHIFTS)
    return float(_best_ratio(counts[:n], counts[n:], n_target))


def iou_fitness_batch(organisms: np.ndarray, target: TargetShape) -> np.ndarray:
    """Vectorised ``iou_fitness`` over a stack of grids, shape ``(n, 10, 10)``."""
    _, table, n_target = _shift_tables(target.cells)
    flat = np.asarray(organisms, dtype=np.float64).reshape(-1, N_CELLS)
    # small-integer counts are exact in float64
    counts = np.rint(flat @ table).astype(np.int64)
    n = len(_SHIFTS)
    return _best_ratio(counts[:, :n], counts[:, n:], n_target)


def evaluate_multi(organism: np.ndarray, targets: Sequence[TargetShape]) -> tuple[list[float], float]:
    if not targets:
        raise ValueError("no targets")
    scores = [iou_fitness(organism, t) for t in targets]
    return scores, float(np.mean(scores))
