"""Deterministic random substreams for Monte Carlo runs.

All randomness in the package flows through counter-based Philox
generators addressed by a key: a root seed plus a tuple of integer
stream ids.  Two consumers with different stream tuples never share
state, so results do not depend on evaluation order, chunking, or
thread scheduling.  Reserved top-level stream ids are listed below;
per-path substreams append the path index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

# Top-level stream ids.  Keep these stable: they are part of the
# reproducibility contract of every recorded run.
NOISE_STREAM = 0
SMOOTHING_STREAM = 1
INITIAL_DATA_STREAM = 2
TEST_STREAM = 1000

__all__ = [
    "RngKey",
    "NOISE_STREAM",
    "SMOOTHING_STREAM",
    "INITIAL_DATA_STREAM",
    "TEST_STREAM",
]


@dataclass(frozen=True)
class RngKey:
    """Address of one deterministic substream.

    ``seed`` is the user-facing 64-bit seed; ``stream`` is the tuple of
    integer ids that identifies the consumer (for example
    ``(NOISE_STREAM, path_index)``).
    """

    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidArgumentError("seed must be an unsigned 64-bit integer")
        if any(int(s) < 0 for s in self.stream):
            raise InvalidArgumentError("stream ids must be non-negative integers")

    def child(self, *ids: int) -> "RngKey":
        """Derive the substream obtained by appending ``ids``."""
        return RngKey(self.seed, self.stream + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        """Fresh generator for this substream; independent of all others."""
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(ss))
