"""Counter-based random streams: one independent stream per path.

A stream is addressed by ``(master_seed, stream_index)``.  The pair is used
directly as the 2x64-bit Philox key, so the stream — and therefore the path
simulated from it — is a pure function of the pair, independent of execution
order, chunking, or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_index: int

    def __post_init__(self):
        if self.master_seed < 0 or self.stream_index < 0:
            raise DomainError("seed and stream index must be non-negative")

    def generator(self) -> np.random.Generator:
        key = np.array(
            [self.master_seed % 2**64, self.stream_index % 2**64], dtype=np.uint64
        )
        return np.random.Generator(np.random.Philox(key=key))
