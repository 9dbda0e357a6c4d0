"""Shared domain types: parameter points, uniform box priors, and seeded
random streams.

Every stochastic routine in this package draws from a ``numpy`` Generator
that is derived from a :class:`SeedSpec` and a task index.  Derivation is
hash-based (``SeedSequence`` spawn keys), so the stream owned by task ``k``
does not depend on how many workers run, which worker picks the task up, or
in which order tasks complete.  Reruns with the same seed are bit-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, TypeVar

import numpy as np

__all__ = [
    "ParamPoint",
    "UniformBoxPrior",
    "SeedSpec",
    "derive_stream",
    "prior_sample",
    "map_indexed",
]

_UINT64_MAX = 2**64 - 1

# Purpose tags keep independent uses of the same SeedSpec (per-row simulation,
# shuffling, ...) on provably disjoint spawn keys.
PURPOSE_TASK = 0
PURPOSE_SHUFFLE = 1
PURPOSE_INIT = 2
PURPOSE_BATCH = 3


@dataclass(frozen=True)
class ParamPoint:
    """A named point in parameter space."""

    values: tuple[float, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        names = tuple(str(n) for n in self.names)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)
        if len(values) < 1:
            raise ValueError("ParamPoint needs at least one coordinate")
        if len(values) != len(names):
            raise ValueError(
                f"{len(values)} values but {len(names)} names"
            )
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite parameter values: {values}")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def get(self, name: str) -> float:
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None


@dataclass(frozen=True)
class UniformBoxPrior:
    """Independent uniform prior on an axis-aligned box."""

    lows: tuple[float, ...]
    highs: tuple[float, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        lows = tuple(float(v) for v in self.lows)
        highs = tuple(float(v) for v in self.highs)
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)
        if len(lows) != len(highs) or len(lows) < 1:
            raise ValueError("lows and highs must have equal length >= 1")
        for lo, hi in zip(lows, highs):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"invalid box edge [{lo}, {hi})")
        if not self.names:
            object.__setattr__(
                self, "names", tuple(f"theta{i}" for i in range(len(lows)))
            )
        elif len(self.names) != len(lows):
            raise ValueError("names length does not match box dimension")

    @property
    def dim(self) -> int:
        return len(self.lows)

    def contains(self, values: Sequence[float]) -> bool:
        return all(
            lo <= v <= hi for v, lo, hi in zip(values, self.lows, self.highs)
        ) and len(values) == self.dim


@dataclass(frozen=True)
class SeedSpec:
    """Root of a family of reproducible, independent random streams.

    ``derive_stream(spec, k)`` for distinct ``k`` yields statistically
    independent generators; identical inputs always yield the identical
    sequence.
    """

    root_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for label, v in (("root_seed", self.root_seed), ("stream_id", self.stream_id)):
            if not (0 <= int(v) <= _UINT64_MAX):
                raise ValueError(f"{label} must fit in uint64, got {v}")


def _spawn(seed: SeedSpec, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(
        entropy=seed.root_seed, spawn_key=(seed.stream_id, *key)
    )
    return np.random.Generator(np.random.PCG64(ss))


def derive_stream(seed: SeedSpec, task_index: int) -> np.random.Generator:
    """Independent random stream for one task of a parallel job."""
    if task_index < 0:
        raise ValueError("task_index must be nonnegative")
    return _spawn(seed, PURPOSE_TASK, task_index)


def purpose_stream(seed: SeedSpec, purpose: int, index: int = 0) -> np.random.Generator:
    """Stream for internal bookkeeping (shuffles, initializers) that must not
    collide with any task stream."""
    return _spawn(seed, purpose, index)


def prior_sample(prior: UniformBoxPrior, rng: np.random.Generator) -> ParamPoint:
    """One draw from the box prior; each coordinate uniform on [low, high)."""
    u = rng.random(prior.dim)
    vals = tuple(
        lo + (hi - lo) * ui for ui, lo, hi in zip(u, prior.lows, prior.highs)
    )
    return ParamPoint(vals, prior.names)


T = TypeVar("T")


def map_indexed(fn: Callable[[int], T], count: int, workers: int = 1) -> list[T]:
    """Evaluate ``fn(0..count-1)`` and return results in index order.

    ``fn`` must not share mutable state between indices; with that guarantee
    the output is identical for any ``workers`` value.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    if workers <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))
