"""Two clock domains: the engine and the fixed-frequency memory."""

from __future__ import annotations

import math
from dataclasses import dataclass

ENGINE_FREQUENCIES = (25, 33, 50)
MEM_FREQ = 100
# one memory cycle is taken as 10 ns when converting to wall-clock timestamps
NS_PER_MEM_CYCLE = 10


@dataclass(frozen=True)
class ClockConfig:
    engine_freq: int = 50
    mem_freq: int = MEM_FREQ
    sync_penalty: int = 2  # memory cycles per engine<->memory transaction

    def __post_init__(self):
        if self.engine_freq <= 0 or self.mem_freq <= 0:
            raise ValueError("frequencies must be positive")
        if self.sync_penalty < 0:
            raise ValueError("sync_penalty must be >= 0")

    @property
    def tick_base(self) -> int:
        return math.lcm(self.engine_freq, self.mem_freq)

    @property
    def ticks_per_mem(self) -> int:
        return self.tick_base // self.mem_freq

    @property
    def ticks_per_engine(self) -> int:
        return self.tick_base // self.engine_freq

    def next_engine_edge(self, tick: int) -> int:
        t = self.ticks_per_engine
        return -(-tick // t) * t

    def next_mem_edge(self, tick: int) -> int:
        t = self.ticks_per_mem
        return -(-tick // t) * t

    def mem_cycles(self, ticks: int) -> float:
        return ticks / self.ticks_per_mem
