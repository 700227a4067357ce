"""File placements: each file is stored exclusively by one worker subset."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .system import SystemConfig, format_subset, members


class PlacementError(ValueError):
    """Raised when a placement violates the placement or capacity constraints."""


class InfeasibleSplit(PlacementError):
    """Raised when a two-file-group split leaves a popular file unstored."""


@dataclass(frozen=True)
class Placement:
    """``assignment[n]`` is the bitmask of the workers that store file ``n``."""

    assignment: tuple[int, ...]
    num_workers: int

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(s) for s in self.assignment))
        full = (1 << self.num_workers) - 1
        for n, s in enumerate(self.assignment):
            if s <= 0 or s & ~full:
                raise PlacementError(f"file {n + 1} has invalid worker subset {s}")

    @property
    def num_files(self) -> int:
        return len(self.assignment)

    def stored_counts(self) -> list[int]:
        """Number of files stored at each worker."""
        counts = [0] * self.num_workers
        for s in self.assignment:
            for k in members(s):
                counts[k] += 1
        return counts

    def files_at(self, worker: int) -> list[int]:
        return [n for n, s in enumerate(self.assignment) if s >> worker & 1]

    def validate(self, config: SystemConfig) -> "Placement":
        if self.num_workers != config.num_workers or self.num_files != config.num_files:
            raise PlacementError("placement does not match the system dimensions")
        for k, (used, cap) in enumerate(zip(self.stored_counts(), config.mapping_loads)):
            if used > cap:
                raise PlacementError(f"worker {k + 1} stores {used} files, capacity {cap}")
        return self

    def is_feasible(self, config: SystemConfig) -> bool:
        try:
            self.validate(config)
        except PlacementError:
            return False
        return True

    def dumps(self) -> str:
        """One ``n: mask`` line per file (1-based file numbers, decimal masks)."""
        return "".join(f"{n + 1}: {s}\n" for n, s in enumerate(self.assignment))

    @classmethod
    def loads(cls, text: str, num_workers: int) -> "Placement":
        rows = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            n, s = line.split(":")
            rows[int(n) - 1] = int(s)
        if sorted(rows) != list(range(len(rows))):
            raise PlacementError("placement listing must cover files 1..N exactly once")
        return cls(tuple(rows[n] for n in range(len(rows))), num_workers)

    def __str__(self):
        return ", ".join(f"{n + 1}->{format_subset(s)}" for n, s in enumerate(self.assignment))


def _round_robin_singletons(files, capacity: list[int], stored: list[set]):
    # Skips exhausted workers and keeps the cycle position.
    num_workers = len(capacity)
    k = 0
    for n in files:
        for _ in range(num_workers):
            if capacity[k] > 0:
                break
            k = (k + 1) % num_workers
        else:
            raise PlacementError("mapping loads exhausted")
        stored[k].add(n)
        capacity[k] -= 1
        k = (k + 1) % num_workers


def _from_worker_sets(stored: list[set], num_files: int, num_workers: int) -> Placement:
    assignment = [0] * num_files
    for k, files in enumerate(stored):
        for n in files:
            assignment[n] |= 1 << k
    missing = [n + 1 for n, s in enumerate(assignment) if s == 0]
    if missing:
        raise InfeasibleSplit(f"files {missing} receive no copy")
    return Placement(tuple(assignment), num_workers)


def round_robin_placement(config: SystemConfig) -> Placement:
    """Single copy of every file, dealt to workers cyclically."""
    capacity = list(config.mapping_loads)
    stored = [set() for _ in range(config.num_workers)]
    _round_robin_singletons(range(config.num_files), capacity, stored)
    return _from_worker_sets(stored, config.num_files, config.num_workers).validate(config)


def two_file_group_placement(config: SystemConfig, split: int) -> Placement:
    """Two-file-group placement with the ``split`` most popular files in group one.

    Files ``split .. N-1`` get one copy each, dealt round-robin. The
    remaining capacity of every worker is then filled by cycling through
    files ``0 .. split-1``, the cycle position carrying over from one worker
    to the next. A popular file ends up assigned to the set of all workers
    that received a copy.

    Raises
    ------
    InfeasibleSplit
        If some popular file receives no copy at all.
    """
    num_files = config.num_files
    if not 1 <= split <= num_files:
        raise ValueError(f"split must lie in [1, {num_files}]")
    capacity = list(config.mapping_loads)
    stored = [set() for _ in range(config.num_workers)]
    _round_robin_singletons(range(split, num_files), capacity, stored)
    cursor = 0
    for k in range(config.num_workers):
        if capacity[k] > 0:
            for m in range(capacity[k]):
                stored[k].add((cursor + m) % split)
            cursor = (cursor + capacity[k]) % split
    return _from_worker_sets(stored, num_files, config.num_workers).validate(config)


def subset_file_counts(placement: Placement, demand: int) -> np.ndarray:
    """``a[S]`` = number of demanded files stored exclusively at subset ``S``.

    The result is indexed by subset bitmask and has length ``2**K``.
    """
    counts = np.zeros(1 << placement.num_workers, dtype=np.int64)
    n = 0
    d = demand
    while d:
        if d & 1:
            counts[placement.assignment[n]] += 1
        d >>= 1
        n += 1
    return counts


def placement_to_indicators(placement: Placement) -> np.ndarray:
    """Indicator matrix ``t[n, S]`` of shape ``(N, 2**K)``; column 0 is unused."""
    t = np.zeros((placement.num_files, 1 << placement.num_workers), dtype=np.int8)
    t[np.arange(placement.num_files), list(placement.assignment)] = 1
    return t


def indicators_to_placement(indicators: Sequence[Sequence[int]], num_workers: int) -> Placement:
    t = np.asarray(indicators)
    if t.ndim != 2 or t.shape[1] != 1 << num_workers:
        raise PlacementError("indicator matrix has the wrong shape")
    if np.any(t[:, 0] != 0) or np.any((t != 0) & (t != 1)) or np.any(t.sum(axis=1) != 1):
        raise PlacementError("every file needs exactly one non-empty subset indicator")
    return Placement(tuple(int(s) for s in t.argmax(axis=1)), num_workers)
