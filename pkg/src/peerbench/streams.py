"""Seeded random streams with exact draw accounting.

Every logical draw (uniform, index, gaussian) consumes exactly one sample
from the underlying generator, so a stream's position is fully described
by its draw count. That makes checkpoint/resume trivial: record the count,
then fast-forward a fresh stream by the same number of draws.
"""
from __future__ import annotations

import hashlib
import random
from statistics import NormalDist
from typing import Iterable, Mapping

_STANDARD_NORMAL = NormalDist()

_SEED_MIN = -(2**63)
_SEED_MAX = 2**63 - 1


def derive_seed(master_seed: int, label: str) -> int:
    """Stable 64-bit sub-seed for a named stream under one master seed.

    Uses a keyed blake2b digest, so the mapping is independent of Python's
    hash randomization and identical across platforms and processes.
    """
    if not _SEED_MIN <= master_seed <= _SEED_MAX:
        raise ValueError("master seed must fit in a signed 64-bit integer")
    digest = hashlib.blake2b(
        label.encode("utf-8"),
        digest_size=8,
        key=master_seed.to_bytes(8, "little", signed=True),
    ).digest()
    return int.from_bytes(digest, "little")


class CountingStream:
    """Uniform random source where every draw costs exactly one sample.

    Derived draws are built from a single ``random()`` call each: integer
    indices by scaling, gaussians through the inverse normal CDF. A zero
    standard deviation still consumes its draw, so draw counts depend only
    on the sequence of calls, never on parameter values.
    """

    def __init__(self, seed: int):
        self._rng = random.Random(seed)
        self.draws = 0

    def uniform(self) -> float:
        """One draw, uniform in [0, 1)."""
        self.draws += 1
        return self._rng.random()

    def index(self, n: int) -> int:
        """One draw, uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return min(int(self.uniform() * n), n - 1)

    def gauss(self, sd: float) -> float:
        """One draw, normal with mean 0 and standard deviation ``sd``."""
        if sd < 0.0:
            raise ValueError("sd must be >= 0")
        u = self.uniform()
        if sd == 0.0:
            return 0.0
        # random() can return exactly 0.0; inv_cdf needs 0 < p < 1.
        if u <= 0.0:
            u = 1e-300
        return _STANDARD_NORMAL.inv_cdf(u) * sd

    def fast_forward(self, count: int) -> None:
        """Advance a fresh stream to a recorded position of ``count`` draws."""
        if self.draws != 0:
            raise ValueError("fast_forward requires an unused stream")
        if count < 0:
            raise ValueError("draw count must be >= 0")
        for _ in range(count):
            self._rng.random()
        self.draws = count


class StreamSet:
    """Named independent streams derived from one master seed.

    Each label gets its own generator seeded by ``derive_seed``, so draws
    on one stream never perturb another and adding a new label leaves
    existing sequences untouched.
    """

    def __init__(self, master_seed: int, labels: Iterable[str] = ()):
        if not _SEED_MIN <= master_seed <= _SEED_MAX:
            raise ValueError("master seed must fit in a signed 64-bit integer")
        self.master_seed = master_seed
        self._streams: dict[str, CountingStream] = {}
        for label in labels:
            self.add(label)

    def add(self, label: str) -> CountingStream:
        if label in self._streams:
            raise ValueError(f"duplicate stream label {label!r}")
        stream = CountingStream(derive_seed(self.master_seed, label))
        self._streams[label] = stream
        return stream

    def __getitem__(self, label: str) -> CountingStream:
        return self._streams[label]

    def __contains__(self, label: str) -> bool:
        return label in self._streams

    def labels(self) -> tuple[str, ...]:
        return tuple(self._streams)

    def draw_counts(self) -> dict[str, int]:
        """Current position of every stream, keyed by label (sorted)."""
        return {label: s.draws for label, s in sorted(self._streams.items())}

    def fast_forward(self, counts: Mapping[str, int]) -> None:
        """Restore recorded positions; all named streams must exist and be fresh."""
        for label, count in counts.items():
            if label not in self._streams:
                raise ValueError(f"unknown stream label {label!r}")
            self._streams[label].fast_forward(count)
