"""Round-robin arbitration of the shared memory port."""

from __future__ import annotations

from collections.abc import Iterable


class RoundRobinArbiter:
    """Grants one requester per memory cycle in fixed rotation.

    Requester ids are ``0..n-1`` (transport first, then stages by index).
    The pointer moves just past each grantee, so with ``R`` requesters
    continuously active none waits more than ``R - 1`` grants.
    """

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("need at least one requester")
        self.n = n
        self.pointer = 0

    def grant(self, requests: Iterable[int]) -> int | None:
        active = set(requests)
        if not active:
            return None
        unknown = active - set(range(self.n))
        if unknown:
            raise ValueError(f"unknown requesters {sorted(unknown)}")
        for k in range(self.n):
            cand = (self.pointer + k) % self.n
            if cand in active:
                self.pointer = (cand + 1) % self.n
                return cand
        raise AssertionError("unreachable")


def schedule_step(arbiter: RoundRobinArbiter, requests: Iterable[int]) -> int | None:
    return arbiter.grant(requests)


def max_grant_gaps(grants: list[int]) -> dict[int, int]:
    """Largest number of grants to others between two grants of each requester."""
    last: dict[int, int] = {}
    gaps: dict[int, int] = {}
    for i, who in enumerate(grants):
        if who in last:
            gaps[who] = max(gaps.get(who, 0), i - last[who] - 1)
        last[who] = i
    return gaps
