"""Counter-based random streams for reproducible parallel ensembles.

Each logical consumer (replica m, bootstrap, mixing, ...) owns a stream
keyed by (seed, stream_id) on top of the Philox counter-based generator,
so identical keys reproduce identical draws no matter which worker or
process consumes them, and independent stream_ids never collide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Reserved stream_id blocks.  Replicas use 0..2^40-1 directly.
STREAM_BOOTSTRAP = 1 << 40
STREAM_SITE_AUX = (1 << 40) + 1
STREAM_SCRATCH = (1 << 40) + 2


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream_id) pair naming one deterministic random sequence."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at counter zero of this stream."""
        key = np.array(
            [self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_id & 0xFFFFFFFFFFFFFFFF],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def replica_stream(seed: int, replica: int) -> RngStream:
    if not 0 <= replica < (1 << 40):
        raise ValueError("replica index out of the reserved stream range")
    return RngStream(seed, replica)
