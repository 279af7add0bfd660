"""One S3 stage: a session slot with its own message buffer."""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass

from ..codec import NodeId


class StageState(enum.Enum):
    FREE = "Free"
    CHANNEL_BOUND = "ChannelBound"
    SESSION_CREATED = "SessionCreated"
    SESSION_ACTIVE = "SessionActive"


_NEXT = {
    StageState.FREE: StageState.CHANNEL_BOUND,
    StageState.CHANNEL_BOUND: StageState.SESSION_CREATED,
    StageState.SESSION_CREATED: StageState.SESSION_ACTIVE,
}


class IllegalTransition(RuntimeError):
    pass


@dataclass
class S3Stage:
    stage_id: int
    capacity: int = 8192
    state: StageState = StageState.FREE
    channel_id: int = 0
    session_id: NodeId | None = None
    token: NodeId | None = None
    timeout_ms: float = 0.0
    last_activity_ms: float = 0.0
    occupancy: int = 0

    def advance(self, to: StageState) -> None:
        """Move one step along Free -> ChannelBound -> SessionCreated -> SessionActive."""
        if _NEXT.get(self.state) is not to:
            raise IllegalTransition(f"stage {self.stage_id}: {self.state.value} -> {to.value}")
        self.state = to

    def free(self) -> None:
        self.state = StageState.FREE
        self.channel_id = 0
        self.session_id = None
        self.token = None
        self.timeout_ms = 0.0
        self.occupancy = 0

    def expired(self, now_ms: float) -> bool:
        return self.state in (StageState.SESSION_CREATED, StageState.SESSION_ACTIVE) and (
            now_ms - self.last_activity_ms > self.timeout_ms
        )


class BufferPool:
    """Byte budget shared by all message buffers; tracks the peak for assertions."""

    def __init__(self, total: int):
        self.total = total
        self.used = 0
        self.peak = 0
        self._lock = threading.Lock()

    def available(self) -> int:
        return self.total - self.used

    def reserve(self, n: int) -> bool:
        with self._lock:
            if self.used + n > self.total:
                return False
            self.used += n
            self.peak = max(self.peak, self.used)
            return True

    def release(self, n: int) -> None:
        with self._lock:
            if n > self.used:
                raise RuntimeError(f"releasing {n} bytes with only {self.used} reserved")
            self.used -= n
