"""Tripwire arming decisions: slow start, then sampled arming.

The sampler sees one call per short-granule allocation.  During slow start
every call arms.  After `alloc_threshold` allocations it switches to a
sampling phase where gaps between armed allocations are drawn uniformly
from [1, 2 * sampling_rate], giving a mean gap of (1 + 2R) / 2.
"""

from __future__ import annotations

import enum
import random


class Phase(enum.Enum):
    SLOW_START = "slow_start"
    SAMPLING = "sampling"


class TripwireSampler:
    """Decides which short-granule allocations get a tripwire.

    Owned by a single allocator; must be called exactly once per
    short-granule allocation, in allocation order.  The phase transition
    happens once and is never re-entered.
    """

    def __init__(self, rng: random.Random, alloc_threshold: int = 1000,
                 sampling_rate: int = 1000):
        if alloc_threshold < 0:
            raise ValueError("alloc_threshold must be >= 0")
        if sampling_rate < 1:
            raise ValueError("sampling_rate must be >= 1")
        self.rng = rng
        self.alloc_threshold = alloc_threshold
        self.sampling_rate = sampling_rate
        self.phase = Phase.SLOW_START
        self.alloc_count = 0
        self.countdown = 0

    def _enter_sampling(self) -> None:
        self.phase = Phase.SAMPLING
        self.countdown = self.rng.randint(1, 2 * self.sampling_rate)

    def should_arm(self) -> bool:
        if self.phase is Phase.SLOW_START:
            if self.alloc_count < self.alloc_threshold:
                self.alloc_count += 1
                if self.alloc_count >= self.alloc_threshold:
                    self._enter_sampling()
                return True
            # alloc_threshold == 0: no always-armed prefix at all
            self._enter_sampling()
        self.countdown -= 1
        if self.countdown == 0:
            self.countdown = self.rng.randint(1, 2 * self.sampling_rate)
            return True
        return False
