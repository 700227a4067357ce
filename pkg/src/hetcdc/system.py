"""System model: workers, files, popularity and the job-demand distribution.

Conventions used throughout the package:

* workers are numbered ``0 .. K-1`` and a worker subset is an ``int``
  bitmask (bit ``k`` set means worker ``k`` is a member);
* files are numbered ``0 .. N-1`` in order of non-increasing popularity and
  a job demand is likewise an ``int`` bitmask over files;
* loads are expressed in units of ``T*Q`` bits, so neither ``T`` nor ``Q``
  ever appears in the optimisation code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised for an invalid system configuration."""


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def members(mask: int) -> list[int]:
    """Indices of the set bits of ``mask`` in ascending order."""
    out = []
    k = 0
    while mask:
        if mask & 1:
            out.append(k)
        mask >>= 1
        k += 1
    return out


def mask_of(indices) -> int:
    mask = 0
    for k in indices:
        mask |= 1 << k
    return mask


def format_subset(mask: int) -> str:
    """Human readable, 1-based rendering, e.g. ``{1,3}``."""
    return "{" + ",".join(str(k + 1) for k in members(mask)) + "}"


def enumerate_worker_subsets(num_workers: int, min_size: int = 1) -> list[int]:
    """All worker subsets with at least ``min_size`` members.

    Subsets are returned in ascending bitmask order.

    >>> [format_subset(s) for s in enumerate_worker_subsets(3, 2)]
    ['{1,2}', '{1,3}', '{2,3}', '{1,2,3}']
    """
    if not 0 <= min_size <= num_workers:
        raise ValueError(f"min_size must lie in [0, {num_workers}]")
    return [s for s in range(1 << num_workers) if popcount(s) >= min_size]


def enumerate_demands(num_files: int) -> range:
    """All non-empty job demands, as bitmasks ``1 .. 2**N - 1``."""
    return range(1, 1 << num_files)


def zipf_popularity(num_files: int, theta: float) -> np.ndarray:
    """Zipf file popularity ``p_n = n**-theta / sum_i i**-theta``."""
    if num_files < 1:
        raise ValueError("num_files must be positive")
    if theta < 0:
        raise ValueError("theta must be non-negative")
    weights = np.arange(1, num_files + 1, dtype=float) ** (-float(theta))
    return weights / weights.sum()


def job_probability(demand: int, popularity: Sequence[float]) -> float:
    """Probability that a job accesses exactly the files in ``demand``.

    Files are accessed independently with probabilities ``popularity``,
    conditioned on the job touching at least one file.
    """
    if demand <= 0:
        raise ValueError("demand must be a non-empty file subset")
    p = np.asarray(popularity, dtype=float)
    if demand >> len(p):
        raise ValueError("demand references files beyond the popularity vector")
    denom = 1.0 - float(np.prod(1.0 - p))
    if denom <= 0.0:
        raise ValueError("degenerate popularity: every file has zero probability")
    num = 1.0
    for n, pn in enumerate(p):
        num *= pn if demand >> n & 1 else 1.0 - pn
    return num / denom


def demand_probabilities(popularity: Sequence[float]) -> np.ndarray:
    """Vector of ``p_D`` indexed by demand bitmask (entry 0 is unused, = 0).

    Built by doubling over files so the whole table costs ``O(2**N)``.
    """
    p = np.asarray(popularity, dtype=float)
    table = np.ones(1)
    for pn in p:
        table = np.concatenate([table * (1.0 - pn), table * pn])
    denom = 1.0 - table[0]
    if denom <= 0.0:
        raise ValueError("degenerate popularity: every file has zero probability")
    table = table / denom
    table[0] = 0.0
    return table


def exact_demand_probabilities(popularity: Sequence[float]) -> list[Fraction]:
    """Rational ``p_D`` table; each float ``p_n`` is taken at its exact value."""
    p = [Fraction(float(x)) for x in popularity]
    table = [Fraction(1)]
    for pn in p:
        table = [v * (1 - pn) for v in table] + [v * pn for v in table]
    denom = 1 - table[0]
    if denom == 0:
        raise ValueError("degenerate popularity: every file has zero probability")
    out = [v / denom for v in table]
    out[0] = Fraction(0)
    return out


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        return Fraction(value).limit_denominator(1 << 20)
    return Fraction(value)


@dataclass(frozen=True)
class SystemConfig:
    """Heterogeneous distributed computing system.

    Parameters
    ----------
    mapping_loads : sequence of int
        ``M_k``, the number of files worker ``k`` can store and map.
    reducing_loads : sequence of rationals
        ``W_k``, the fraction of the target functions reduced at worker
        ``k``; strings such as ``"1/8"`` are accepted and the values must
        sum to exactly one.
    popularity : sequence of float
        Access probability of every file, non-increasing in the file index.
    """

    mapping_loads: tuple[int, ...]
    reducing_loads: tuple[Fraction, ...]
    popularity: tuple[float, ...]
    _demand_probs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = tuple(int(x) for x in self.mapping_loads)
        w = tuple(_as_fraction(x) for x in self.reducing_loads)
        p = tuple(float(x) for x in self.popularity)
        object.__setattr__(self, "mapping_loads", m)
        object.__setattr__(self, "reducing_loads", w)
        object.__setattr__(self, "popularity", p)
        if len(m) < 2:
            raise ConfigError("need at least two workers")
        if len(w) != len(m):
            raise ConfigError("reducing_loads must have one entry per worker")
        if not p:
            raise ConfigError("need at least one file")
        if any(x < 1 for x in m):
            raise ConfigError("mapping loads must be positive integers")
        if any(x < 0 for x in w) or sum(w) != 1:
            raise ConfigError(f"reducing loads must be non-negative and sum to 1, got {sum(w)}")
        if any(not 0.0 < x <= 1.0 for x in p):
            raise ConfigError("popularity entries must lie in (0, 1]")
        if any(a < b for a, b in zip(p, p[1:])):
            raise ConfigError("files must be indexed by non-increasing popularity")
        if sum(m) < len(p):
            raise ConfigError(f"total mapping load {sum(m)} cannot hold {len(p)} files")
        object.__setattr__(self, "_demand_probs", demand_probabilities(p))

    @classmethod
    def zipf(cls, mapping_loads, reducing_loads, num_files: int, theta: float) -> "SystemConfig":
        return cls(mapping_loads, reducing_loads, zipf_popularity(num_files, theta))

    @property
    def num_workers(self) -> int:
        return len(self.mapping_loads)

    @property
    def num_files(self) -> int:
        return len(self.popularity)

    @property
    def full_set(self) -> int:
        return (1 << self.num_workers) - 1

    @property
    def demand_probs(self) -> np.ndarray:
        return self._demand_probs

    def exact_demand_probs(self) -> list[Fraction]:
        return exact_demand_probabilities(self.popularity)

    def with_mapping_loads(self, mapping_loads) -> "SystemConfig":
        return SystemConfig(mapping_loads, self.reducing_loads, self.popularity)

    @property
    def function_count(self) -> int:
        """Smallest ``Q`` making every ``W_k * Q`` an integer."""
        return math.lcm(*(w.denominator for w in self.reducing_loads))


def subsets_of_size(num_workers: int, size: int) -> Iterator[int]:
    for combo in combinations(range(num_workers), size):
        yield mask_of(combo)
