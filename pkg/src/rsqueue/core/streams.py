"""Counter-based random streams and order-independent estimator merging.

Every Monte Carlo routine in the package draws from a :class:`RandomStream`.
A stream is the pair ``(seed, stream_id)`` used directly as the 128-bit key of
a Philox counter generator, so substreams need no sequential spawning and a
replication block always sees the same numbers regardless of how many worker
processes share the job.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

MASK64 = (1 << 64) - 1
DEFAULT_BLOCK = 1000


@dataclass(frozen=True)
class RandomStream:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array([self.seed & MASK64, self.stream_id & MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, stream_id: int) -> "RandomStream":
        return RandomStream(self.seed, stream_id)


def as_generator(stream) -> np.random.Generator:
    """Accept a RandomStream, a Generator, an int seed or None."""
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, RandomStream):
        return stream.generator()
    if stream is None:
        return RandomStream(0).generator()
    return RandomStream(int(stream)).generator()


@dataclass(frozen=True)
class RunningMoments:
    """Count, mean and centred second moment; merges with Chan's update."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values) -> "RunningMoments":
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        return cls(int(values.size), mean, float(((values - mean) ** 2).sum()))

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return RunningMoments(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def std_err(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 0 else math.inf


def merge_all(parts: Sequence[RunningMoments]) -> RunningMoments:
    out = RunningMoments()
    for part in parts:
        out = out.merge(part)
    return out


def block_sizes(reps: int, block: int = DEFAULT_BLOCK) -> list[int]:
    full, rest = divmod(reps, block)
    return [block] * full + ([rest] if rest else [])


def map_blocks(
    fn: Callable,
    reps: int,
    seed: int,
    *args,
    workers: int = 1,
    block: int = DEFAULT_BLOCK,
    first_stream: int = 0,
) -> list:
    """Run ``fn(count, stream, *args)`` over fixed-size replication blocks.

    Block ``k`` always receives ``RandomStream(seed, first_stream + k)``; the
    returned list is in block order, so results do not depend on ``workers``.
    ``fn`` must be a module-level function when ``workers > 1``.
    """
    sizes = block_sizes(reps, block)
    streams = [RandomStream(seed, first_stream + k) for k in range(len(sizes))]
    if workers <= 1 or len(sizes) <= 1:
        return [fn(size, stream, *args) for size, stream in zip(sizes, streams)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, size, stream, *args) for size, stream in zip(sizes, streams)]
        return [f.result() for f in futures]
